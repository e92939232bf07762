#pragma once

// Command-line front end. `run` is the whole program minus process setup so
// tests can drive it in-process.

#include "vidode/config.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace vidode::cli {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Every known key resolved to its value (user value or built-in default),
/// in canonical form. Unknown keys are rejected.
Config effective_config(const Config& user);

const char* version();

}  // namespace vidode::cli

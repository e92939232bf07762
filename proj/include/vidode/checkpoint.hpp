#pragma once

// Versioned single-file training checkpoints.
//
// Layout (little-endian): magic "VIDODECK", u32 version, i64 step,
// string config, u32 n_params, n_params x array, i64 adam_t,
// n_params x array (first moments), n_params x array (second moments),
// string rng_state, u64 FNV-1a of all preceding bytes.
// string = u64 length + bytes; array = string name, u32 rank, rank x i32
// dims, u64 count, count x f64.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vidode {

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;

  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::int64_t step = 0;
  std::string config;  // Config::dump() text
  std::vector<NamedArray> parameters;
  std::int64_t adam_t = 0;
  std::vector<NamedArray> adam_m;
  std::vector<NamedArray> adam_v;
  std::string rng_state;

  bool operator==(const Checkpoint&) const = default;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError (with byte offset) on any malformed input; never
/// returns a partially filled checkpoint.
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vidode

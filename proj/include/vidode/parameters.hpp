#pragma once

#include "vidode/autodiff.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace vidode {

/// Owns named trainable tensors. Addresses are stable for the set's lifetime,
/// so modules may keep Parameter pointers into it.
class ParameterSet {
 public:
  ad::Parameter& add(const std::string& name, const ad::Shape& shape);
  ad::Parameter& get(const std::string& name);
  const ad::Parameter& get(const std::string& name) const;
  ad::Parameter* find(const std::string& name);
  bool contains(const std::string& name) const;

  const std::vector<std::unique_ptr<ad::Parameter>>& all() const { return params_; }
  std::size_t total_size() const;
  void zero_grad();
  /// Copies every value from a set with identical names and shapes.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::unique_ptr<ad::Parameter>> params_;
};

void init_normal(ad::Parameter& p, double stddev, std::mt19937_64& rng);
void init_zero(ad::Parameter& p);
void init_constant(ad::Parameter& p, double value);

}  // namespace vidode

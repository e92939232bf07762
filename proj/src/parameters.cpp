#include "vidode/parameters.hpp"

#include "vidode/errors.hpp"

#include <algorithm>

namespace vidode {

ad::Parameter& ParameterSet::add(const std::string& name, const ad::Shape& shape) {
  if (contains(name)) throw ValidationError("duplicate parameter '" + name + "'");
  params_.push_back(std::make_unique<ad::Parameter>(name, shape));
  return *params_.back();
}

ad::Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p->name == name; });
}

ad::Parameter& ParameterSet::get(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw ValidationError("unknown parameter '" + name + "'");
}

const ad::Parameter& ParameterSet::get(const std::string& name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

std::size_t ParameterSet::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (other.params_.size() != params_.size()) throw ValidationError("parameter sets differ in size");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i]->name != other.params_[i]->name || params_[i]->shape != other.params_[i]->shape) {
      throw ValidationError("parameter '" + params_[i]->name + "' does not match '" + other.params_[i]->name + "'");
    }
    params_[i]->value = other.params_[i]->value;
  }
}

void init_normal(ad::Parameter& p, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  for (auto& v : p.value) v = d(rng);
}

void init_zero(ad::Parameter& p) { std::fill(p.value.begin(), p.value.end(), 0.0); }

void init_constant(ad::Parameter& p, double value) { std::fill(p.value.begin(), p.value.end(), value); }

}  // namespace vidode

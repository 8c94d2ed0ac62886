#include "menan/params.hpp"

#include <cstring>

#include "menan/error.hpp"

namespace menan::numerics {

Tensor ParamSet::add(const std::string& name, Tensor tensor) {
  if (tensor.kind() != OpKind::Leaf) {
    throw UsageError("parameter '" + name + "' must be a leaf tensor");
  }
  tensor.set_requires_grad(!frozen_);
  params_.push_back({name_.empty() ? name : name_ + "." + name, tensor});
  return tensor;
}

void ParamSet::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& p : params_) p.tensor.set_requires_grad(!frozen);
}

const Tensor& ParamSet::get(const std::string& qualified_name) const {
  for (const auto& p : params_)
    if (p.name == qualified_name) return p.tensor;
  throw UsageError("unknown parameter '" + qualified_name + "'");
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::uint64_t fnv1a(std::span<const double> values, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::uint64_t ParamSet::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params_) h = fnv1a(p.tensor.values(), h);
  return h;
}

}  // namespace menan::numerics

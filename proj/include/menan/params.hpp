#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "menan/tensor.hpp"

namespace menan::numerics {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// A group of learnable tensors that is frozen or unfrozen as a unit.
/// Frozen parameters do not require gradients, so backward never writes to
/// them and the optimizer skips them.
class ParamSet {
 public:
  explicit ParamSet(std::string name = {}) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }

  /// Registers a leaf tensor under `<set>.<name>` and returns the handle.
  Tensor add(const std::string& name, Tensor tensor);

  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }

  std::span<NamedParam> params() { return params_; }
  std::span<const NamedParam> params() const { return params_; }
  const Tensor& get(const std::string& qualified_name) const;

  std::size_t parameter_count() const;
  void zero_grad();

  /// FNV-1a over the raw bytes of every value, in registration order.
  std::uint64_t hash() const;

 private:
  std::string name_;
  bool frozen_ = false;
  std::vector<NamedParam> params_;
};

std::uint64_t fnv1a(std::span<const double> values,
                    std::uint64_t seed = 1469598103934665603ULL);

}  // namespace menan::numerics

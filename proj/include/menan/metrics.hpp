#pragma once

#include <cstddef>
#include <span>

namespace menan::eval {

/// 100 * correct / N. Throws MetricError on empty or unequal inputs.
double weighted_accuracy(std::span<const std::size_t> preds,
                         std::span<const std::size_t> labels);

/// 100 * mean per-class recall over classes 0..num_classes-1. Throws
/// MetricError when a class never occurs in `labels`.
double unweighted_accuracy(std::span<const std::size_t> preds,
                           std::span<const std::size_t> labels, std::size_t num_classes);

}  // namespace menan::eval

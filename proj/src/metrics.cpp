#include "menan/metrics.hpp"

#include <vector>

#include "menan/error.hpp"

namespace menan::eval {

namespace {

void check_inputs(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
  if (labels.empty()) throw MetricError("accuracy of an empty set");
  if (preds.size() != labels.size()) throw MetricError("prediction and label counts differ");
}

}  // namespace

double weighted_accuracy(std::span<const std::size_t> preds,
                         std::span<const std::size_t> labels) {
  check_inputs(preds, labels);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += preds[i] == labels[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

double unweighted_accuracy(std::span<const std::size_t> preds,
                           std::span<const std::size_t> labels, std::size_t num_classes) {
  check_inputs(preds, labels);
  if (num_classes == 0) throw MetricError("no classes");
  std::vector<std::size_t> total(num_classes, 0), hit(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw MetricError("label outside the class range");
    ++total[labels[i]];
    hit[labels[i]] += preds[i] == labels[i];
  }
  double recall = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (total[c] == 0) throw MetricError("class " + std::to_string(c) + " has no samples");
    recall += static_cast<double>(hit[c]) / static_cast<double>(total[c]);
  }
  return 100.0 * recall / static_cast<double>(num_classes);
}

}  // namespace menan::eval

#pragma once

#include <cstdint>
#include <span>

#include "svae/data.hpp"
#include "svae/model.hpp"

namespace svae {

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;
};

/// Binary predictions and targets, both samples x classes. A class with no
/// positives in either predictions or targets scores F1 = 1 in the macro
/// average; micro F1 is 1 when there are no positives at all.
F1Scores f1_scores(std::span<const std::int32_t> predicted, std::span<const std::int32_t> targets,
                   std::size_t classes);

double overall_accuracy(std::span<const std::int32_t> predicted,
                        std::span<const std::int32_t> targets);

struct Metrics {
  Task task = Task::multilabel;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double overall_accuracy = 0.0;

  /// macro F1 for multilabel, overall pixel accuracy for segmentation.
  double primary() const { return task == Task::multilabel ? macro_f1 : overall_accuracy; }
};

/// Thresholds sigmoid probabilities at 0.5 (p >= 0.5 is positive) or takes
/// the per-pixel argmax, then scores against the labels of `data`.
Metrics evaluate(const Model& model, const LabeledData& data, std::size_t chunk = 256);

/// Raw predictions in label layout (0/1 per class, or class id per pixel).
std::vector<std::int32_t> predict(const Model& model, const LabeledData& data,
                                  std::size_t chunk = 256);

}  // namespace svae

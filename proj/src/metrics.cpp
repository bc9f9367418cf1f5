#include "svae/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace svae {

F1Scores f1_scores(std::span<const std::int32_t> predicted, std::span<const std::int32_t> targets,
                   std::size_t classes) {
  if (classes == 0 || predicted.size() != targets.size() || targets.size() % classes != 0) {
    throw std::invalid_argument("f1_scores: prediction and target layouts disagree");
  }
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::size_t c = i % classes;
    const bool p = predicted[i] != 0;
    const bool t = targets[i] != 0;
    tp[c] += p && t;
    fp[c] += p && !t;
    fn[c] += !p && t;
  }
  auto f1 = [](std::size_t tp_, std::size_t fp_, std::size_t fn_) {
    const std::size_t denom = 2 * tp_ + fp_ + fn_;
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp_) / static_cast<double>(denom);
  };
  F1Scores out;
  double macro = 0.0;
  for (std::size_t c = 0; c < classes; ++c) macro += f1(tp[c], fp[c], fn[c]);
  out.macro = macro / static_cast<double>(classes);
  out.micro = f1(std::accumulate(tp.begin(), tp.end(), std::size_t{0}),
                 std::accumulate(fp.begin(), fp.end(), std::size_t{0}),
                 std::accumulate(fn.begin(), fn.end(), std::size_t{0}));
  return out;
}

double overall_accuracy(std::span<const std::int32_t> predicted,
                        std::span<const std::int32_t> targets) {
  if (predicted.size() != targets.size() || targets.empty()) {
    throw std::invalid_argument("overall_accuracy: empty or mismatched inputs");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) hits += predicted[i] == targets[i];
  return static_cast<double>(hits) / static_cast<double>(targets.size());
}

std::vector<std::int32_t> predict(const Model& model, const LabeledData& data, std::size_t chunk) {
  if (chunk == 0) throw std::invalid_argument("predict: chunk must be positive");
  NoGradScope no_grad;
  std::vector<std::int32_t> out;
  out.reserve(data.labels.size());
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    rows.resize(std::min(chunk, data.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const Batch batch = make_batch(data, rows);
    const auto logits = model.forward_main(batch.inputs).logits;
    const auto values = logits.data();
    const std::size_t c = logits.shape().back();
    if (data.task == Task::multilabel) {
      // sigmoid(v) >= 0.5 exactly when v >= 0
      for (double v : values) out.push_back(v >= 0.0 ? 1 : 0);
    } else {
      for (std::size_t r = 0; r < values.size() / c; ++r) {
        const auto row = values.subspan(r * c, c);
        out.push_back(static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) - row.begin()));
      }
    }
  }
  return out;
}

Metrics evaluate(const Model& model, const LabeledData& data, std::size_t chunk) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty split");
  if (model.dims().classes != data.classes || model.dims().input != data.features) {
    throw ShapeError("evaluate: model dimensions do not match the data");
  }
  const auto predicted = predict(model, data, chunk);
  Metrics m;
  m.task = data.task;
  if (data.task == Task::multilabel) {
    const auto f1 = f1_scores(predicted, data.labels, data.classes);
    m.micro_f1 = f1.micro;
    m.macro_f1 = f1.macro;
  } else {
    m.overall_accuracy = overall_accuracy(predicted, data.labels);
  }
  return m;
}

}  // namespace svae

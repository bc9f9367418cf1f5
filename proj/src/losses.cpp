#include "svae/losses.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "svae/ops.hpp"

namespace svae::loss {

namespace {

// +1 for positives, -1 for negatives, so log p_t = log_sigmoid(sign * logit).
Tensor target_signs(const char* op, const Tensor& logits, const Tensor& targets) {
  if (logits.rank() != 2 || logits.shape() != targets.shape()) {
    throw ShapeError(std::string(op) + ": logits " + shape_str(logits.shape()) +
                     " and targets " + shape_str(targets.shape()) + " must both be B x C");
  }
  std::vector<double> signs(targets.numel());
  const auto t = targets.data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != 0.0 && t[i] != 1.0) {
      throw DomainError(std::string(op) + ": target " + std::to_string(t[i]) +
                        " is not in {0,1}");
    }
    signs[i] = t[i] == 1.0 ? 1.0 : -1.0;
  }
  return Tensor(targets.shape(), std::move(signs));
}

Tensor per_sample_mean(const Tensor& x) {
  Tensor out = x;
  while (out.rank() > 1) out = mean(out, out.rank() - 1);
  return out;
}

void require_batch(const char* op, const Tensor& x) {
  if (x.rank() != 1) {
    throw ShapeError(std::string(op) + ": expected a per-sample vector, got " +
                     shape_str(x.shape()));
  }
}

}  // namespace

Tensor bce_multilabel(const Tensor& logits, const Tensor& targets) {
  const Tensor signs = target_signs("bce_multilabel", logits, targets);
  return neg(mean(log_sigmoid(signs * logits), 1));
}

Tensor focal_multilabel(const Tensor& logits, const Tensor& targets, double gamma) {
  if (!(gamma >= 0.0)) {
    throw DomainError("focal_multilabel: gamma must be >= 0, got " + std::to_string(gamma));
  }
  const Tensor signs = target_signs("focal_multilabel", logits, targets);
  const Tensor z = signs * logits;
  const Tensor modulation = exp(scale(log_sigmoid(neg(z)), gamma));
  return neg(mean(modulation * log_sigmoid(z), 1));
}

Tensor ce_pixelwise(const Tensor& logits, std::span<const std::int32_t> targets) {
  if (logits.rank() != 3) {
    throw ShapeError("ce_pixelwise: logits must be B x P x C, got " +
                     shape_str(logits.shape()));
  }
  const std::size_t classes = logits.dim(2);
  const std::size_t cells = logits.dim(0) * logits.dim(1);
  if (targets.size() != cells) {
    throw ShapeError("ce_pixelwise: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(cells) + " pixels");
  }
  std::vector<double> one_hot(cells * classes, 0.0);
  for (std::size_t i = 0; i < cells; ++i) {
    const auto c = targets[i];
    if (c < 0 || static_cast<std::size_t>(c) >= classes) {
      throw DomainError("ce_pixelwise: class index " + std::to_string(c) + " outside [0," +
                        std::to_string(classes) + ")");
    }
    one_hot[i * classes + static_cast<std::size_t>(c)] = 1.0;
  }
  const Tensor picked = sum(log_softmax(logits) * Tensor(logits.shape(), std::move(one_hot)), 2);
  return neg(mean(picked, 1));
}

Tensor mse_features(const Tensor& reconstruction, const Tensor& target) {
  if (reconstruction.shape() != target.shape() || reconstruction.rank() < 2) {
    throw ShapeError("mse_features: shapes " + shape_str(reconstruction.shape()) + " and " +
                     shape_str(target.shape()) + " must match with a batch axis");
  }
  return per_sample_mean(square(reconstruction - stop_gradient(target)));
}

Tensor kl_gaussian(const Tensor& mu, const Tensor& logvar, KlSign sign) {
  if (mu.shape() != logvar.shape() || mu.rank() < 2) {
    throw ShapeError("kl_gaussian: mu " + shape_str(mu.shape()) + " and logvar " +
                     shape_str(logvar.shape()) + " must match with a batch axis");
  }
  for (double v : logvar.data()) {
    if (!std::isfinite(v)) throw NumericError("kl_gaussian: non-finite logvar");
  }
  for (double v : mu.data()) {
    if (!std::isfinite(v)) throw NumericError("kl_gaussian: non-finite mu");
  }
  const Tensor inner = square(mu) + exp(logvar) - logvar - Tensor::scalar(1.0);
  const double factor = sign == KlSign::standard ? 0.5 : -0.5;
  return per_sample_mean(scale(sum(inner, inner.rank() - 1), factor));
}

Tensor svae_loss(const Tensor& reconstruction, const Tensor& task, const Tensor& kl,
                 const SvaeLossWeights& weights) {
  require_batch("svae_loss", reconstruction);
  require_batch("svae_loss", task);
  require_batch("svae_loss", kl);
  if (reconstruction.shape() != task.shape() || task.shape() != kl.shape()) {
    throw ShapeError("svae_loss: term lengths differ");
  }
  return scale(reconstruction, weights.reconstruction) + scale(task, weights.task) +
         scale(kl, weights.kl);
}

}  // namespace svae::loss

#pragma once

#include <cstdint>
#include <span>

#include "svae/tensor.hpp"

// Every loss here returns one value per sample: a rank-1 tensor of extent B.
namespace svae::loss {

/// Mean over classes of binary cross-entropy on logits. targets: B x C in {0,1}.
Tensor bce_multilabel(const Tensor& logits, const Tensor& targets);

/// Focal variant of bce_multilabel, -(1 - p_t)^gamma log p_t per class.
/// gamma == 0 reproduces bce_multilabel exactly.
Tensor focal_multilabel(const Tensor& logits, const Tensor& targets, double gamma);

/// Mean over pixels of -log softmax(logits)[target]. logits: B x P x C,
/// targets: B*P class indices, row-major.
Tensor ce_pixelwise(const Tensor& logits, std::span<const std::int32_t> targets);

/// Mean squared difference over every non-batch axis. The target is detached.
Tensor mse_features(const Tensor& reconstruction, const Tensor& target);

enum class KlSign {
  standard,  // +1/2 sum(mu^2 + sigma^2 - log sigma^2 - 1), always >= 0
  literal,   // the negated form, -1/2 sum(...) above
};

/// Gaussian KL to N(0, I), summed over the latent (last) axis. Rank-3 inputs
/// (B x P x J) are averaged over pixels.
Tensor kl_gaussian(const Tensor& mu, const Tensor& logvar, KlSign sign = KlSign::standard);

struct SvaeLossWeights {
  double reconstruction = 1.0;
  double task = 1.0;
  double kl = 1.0;

  bool operator==(const SvaeLossWeights&) const = default;
};

/// Per-sample composite: reconstruction + task + kl.
Tensor svae_loss(const Tensor& reconstruction, const Tensor& task, const Tensor& kl,
                 const SvaeLossWeights& weights = {});

}  // namespace svae::loss

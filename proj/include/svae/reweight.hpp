#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Batch-relative importance weighting from the gap between the main-task loss
// and the SVAE-head loss of each sample.
namespace svae::reweight {

/// (v - min v) / (max v - min v). A constant vector maps to all zeros.
std::vector<double> minmax_rescale(std::span<const double> values);

/// max(R(main) - R(svae), 0), each side rescaled independently over the batch.
std::vector<double> loss_gap(std::span<const double> main_loss,
                             std::span<const double> svae_loss);

/// 1 - alpha * d / max(d); all ones when max(d) == 0.
std::vector<double> importance_weights(std::span<const double> gap, double alpha);

/// alpha(e) = exp(-k e) with k chosen so that alpha(total_epochs) == floor.
struct AlphaSchedule {
  double floor = 0.01;
  std::size_t total_epochs = 100;

  double decay_rate() const;
  /// Fractional epochs support per-step decay.
  double at(double epoch) const;
};

double alpha_at(std::size_t epoch, const AlphaSchedule& schedule);

struct BatchWeights {
  std::vector<double> main_loss;
  std::vector<double> svae_loss;
  std::vector<double> rescaled_main;
  std::vector<double> rescaled_svae;
  std::vector<double> gap;
  std::vector<double> weight;
  double max_gap = 0.0;
  double alpha = 0.0;
};

BatchWeights compute_batch_weights(std::span<const double> main_loss,
                                   std::span<const double> svae_loss, double alpha);

}  // namespace svae::reweight

#include "svae/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace svae::reweight {

std::vector<double> minmax_rescale(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("minmax_rescale: empty input");
  for (double v : values) {
    if (!std::isfinite(v)) throw std::domain_error("minmax_rescale: non-finite input");
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double low = *lo;
  const double range = *hi - low;
  std::vector<double> out(values.size(), 0.0);
  if (range == 0.0) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - low) / range;
  return out;
}

std::vector<double> loss_gap(std::span<const double> main_loss,
                             std::span<const double> svae_loss) {
  if (main_loss.size() != svae_loss.size()) {
    throw std::invalid_argument("loss_gap: " + std::to_string(main_loss.size()) +
                                " main losses vs " + std::to_string(svae_loss.size()) +
                                " svae losses");
  }
  const auto r_main = minmax_rescale(main_loss);
  const auto r_svae = minmax_rescale(svae_loss);
  std::vector<double> gap(r_main.size());
  for (std::size_t i = 0; i < gap.size(); ++i) gap[i] = std::max(r_main[i] - r_svae[i], 0.0);
  return gap;
}

std::vector<double> importance_weights(std::span<const double> gap, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::domain_error("importance_weights: alpha " + std::to_string(alpha) +
                            " outside [0,1]");
  }
  double max_gap = 0.0;
  for (double d : gap) {
    if (!(d >= 0.0) || !std::isfinite(d)) {
      throw std::domain_error("importance_weights: gap values must be finite and >= 0");
    }
    max_gap = std::max(max_gap, d);
  }
  std::vector<double> w(gap.size(), 1.0);
  if (max_gap == 0.0) return w;
  for (std::size_t i = 0; i < gap.size(); ++i) w[i] = 1.0 - alpha * (gap[i] / max_gap);
  return w;
}

double AlphaSchedule::decay_rate() const {
  if (!(floor > 0.0 && floor <= 1.0)) {
    throw std::domain_error("alpha schedule: floor must lie in (0,1]");
  }
  if (total_epochs == 0) return 0.0;
  return -std::log(floor) / static_cast<double>(total_epochs);
}

double AlphaSchedule::at(double epoch) const {
  if (!(epoch >= 0.0) || epoch > static_cast<double>(total_epochs)) {
    throw std::out_of_range("alpha schedule: epoch " + std::to_string(epoch) +
                            " outside [0," + std::to_string(total_epochs) + "]");
  }
  return std::exp(-decay_rate() * epoch);
}

double alpha_at(std::size_t epoch, const AlphaSchedule& schedule) {
  return schedule.at(static_cast<double>(epoch));
}

BatchWeights compute_batch_weights(std::span<const double> main_loss,
                                   std::span<const double> svae_loss, double alpha) {
  BatchWeights out;
  out.main_loss.assign(main_loss.begin(), main_loss.end());
  out.svae_loss.assign(svae_loss.begin(), svae_loss.end());
  out.gap = loss_gap(main_loss, svae_loss);
  out.rescaled_main = minmax_rescale(main_loss);
  out.rescaled_svae = minmax_rescale(svae_loss);
  out.weight = importance_weights(out.gap, alpha);
  out.max_gap = *std::max_element(out.gap.begin(), out.gap.end());
  out.alpha = alpha;
  return out;
}

}  // namespace svae::reweight

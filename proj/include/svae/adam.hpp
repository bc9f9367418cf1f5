#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "svae/tensor.hpp"

namespace svae {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias-corrected moments. Owns one moment pair per parameter and
/// zeroes the parameters' grads after each update.
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::vector<Tensor> params, AdamOptions options = {});

  void step();
  void zero_grad();

  std::size_t step_count() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::span<const double> first_moment(std::size_t i) const { return first_[i]; }
  std::span<const double> second_moment(std::size_t i) const { return second_[i]; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

}  // namespace svae

#include "svae/adam.hpp"

#include <cmath>
#include <string>

namespace svae {

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.lr > 0.0) || options_.beta1 < 0.0 || options_.beta1 >= 1.0 ||
      options_.beta2 < 0.0 || options_.beta2 >= 1.0 || !(options_.eps > 0.0)) {
    throw std::invalid_argument("adam: invalid hyperparameters");
  }
  for (const auto& p : params_) {
    first_.emplace_back(p.numel(), 0.0);
    second_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw TapeError("adam: parameter " + std::to_string(i) + " has no gradient buffer");
    }
    for (double g : params_[i].grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam: non-finite gradient on parameter " + std::to_string(i));
      }
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correct1 = 1.0 - std::pow(options_.beta1, t);
  const double correct2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto values = params_[i].mutable_data();
    auto grads = params_[i].mutable_grad();
    auto& m = first_[i];
    auto& v = second_[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = grads[k];
      m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g;
      v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g * g;
      const double m_hat = m[k] / correct1;
      const double v_hat = v[k] / correct2;
      values[k] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
      grads[k] = 0.0;
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace svae

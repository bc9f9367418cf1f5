#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "svae/tensor.hpp"

// Central finite differences against the tape. Independent of backward():
// the numeric side only ever evaluates forward values with recording off.
namespace svae::testing {

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor); the floor keeps near-zero
/// gradients on an absolute scale.
GradCheckResult gradcheck(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5,
                          double floor = 1e-3);

/// Central-difference estimate of df/dx for every element of every input.
std::vector<std::vector<double>> numeric_gradient(const ScalarFn& f,
                                                  const std::vector<Tensor>& inputs, double h);

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);
Shape random_shape(std::mt19937_64& rng, std::size_t rank, std::size_t max_extent = 4);

}  // namespace svae::testing

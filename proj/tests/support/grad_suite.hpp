#pragma once

#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gradcheck.hpp"

namespace svae::testing {

struct GradProblem {
  ScalarFn fn;
  std::vector<Tensor> inputs;
};

struct GradCase {
  std::string name;
  std::function<GradProblem(std::mt19937_64&)> make;
};

/// One case per differentiable tensor op; each draws random shapes and values.
std::vector<GradCase> op_grad_cases();

/// Losses and the SVAE composite, including model parameters as leaves.
std::vector<GradCase> loss_grad_cases();

struct GradSuiteRow {
  std::string name;
  std::size_t cases = 0;
  double worst = 0.0;
};

std::vector<GradSuiteRow> run_grad_suite(const std::vector<GradCase>& cases, std::size_t per_case,
                                         std::uint64_t seed, double h = 1e-5);

}  // namespace svae::testing

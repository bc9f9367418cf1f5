#include <cmath>

#include "doctest.h"
#include "svae/adam.hpp"

using namespace svae;

TEST_CASE("first step is lr in magnitude") {
  Tensor p({1}, {0.5}, true);
  Adam opt({p});
  p.mutable_grad()[0] = 1.0;
  opt.step();
  // m_hat = v_hat = 1 at t = 1, so the step is lr / (1 + eps).
  CHECK(p.data()[0] - 0.5 == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(p.grad()[0] == 0.0);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  Tensor p({3}, {1.0, -2.0, 3.0}, true);
  Adam opt({p});
  opt.step();
  CHECK(p.to_vector() == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("two steps follow the moment recurrence") {
  const double g = 0.3, lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Tensor p({1}, {1.0}, true);
  Adam opt({p}, AdamOptions{lr, b1, b2, eps});
  double expected = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    p.mutable_grad()[0] = g;
    opt.step();
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    expected -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    CHECK(opt.first_moment(0)[0] == doctest::Approx(m).epsilon(1e-14));
    CHECK(opt.second_moment(0)[0] == doctest::Approx(v).epsilon(1e-14));
  }
  CHECK(opt.step_count() == 2);
  CHECK(p.data()[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("moment buffers match parameter shapes") {
  Tensor a({2, 3}, std::vector<double>(6, 0.0), true);
  Tensor b({4}, std::vector<double>(4, 0.0), true);
  Adam opt({a, b});
  CHECK(opt.first_moment(0).size() == 6);
  CHECK(opt.second_moment(1).size() == 4);
}

TEST_CASE("missing gradient is an error") {
  Tensor p({1}, {1.0}, false);
  Adam opt({p});
  CHECK_THROWS_AS(opt.step(), TapeError);
  CHECK(opt.step_count() == 0);
}

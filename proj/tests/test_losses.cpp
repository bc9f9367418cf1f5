#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "support/grad_suite.hpp"
#include "svae/losses.hpp"
#include "svae/ops.hpp"

using namespace svae;

namespace {

Tensor random_targets(const Shape& s, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.4);
  std::vector<double> v(shape_numel(s));
  for (double& x : v) x = coin(rng) ? 1.0 : 0.0;
  return Tensor(s, std::move(v));
}

// Direct formula in long double.
long double bce_oracle(long double z, long double y) {
  const long double p = 1.0L / (1.0L + std::exp(-z));
  return -(y * std::log(p) + (1.0L - y) * std::log(1.0L - p));
}

}  // namespace

TEST_CASE("bce closed forms") {
  const Tensor y({1, 1}, {1.0});
  CHECK(loss::bce_multilabel(Tensor({1, 1}, {0.0}), y).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double saturated = loss::bce_multilabel(Tensor({1, 1}, {50.0}), y).item();
  CHECK(std::isfinite(saturated));
  CHECK(saturated < 1e-20);
  const double wrong = loss::bce_multilabel(Tensor({1, 1}, {-800.0}), y).item();
  CHECK(wrong == doctest::Approx(800.0));
}

TEST_CASE("bce matches an extended precision oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor z = testing::random_tensor({3, 4}, rng, -8, 8);
    const Tensor y = random_targets({3, 4}, rng);
    const auto got = loss::bce_multilabel(z, y).to_vector();
    for (std::size_t i = 0; i < 3; ++i) {
      long double expected = 0.0L;
      for (std::size_t c = 0; c < 4; ++c) {
        expected += bce_oracle(z.data()[i * 4 + c], y.data()[i * 4 + c]);
      }
      expected /= 4.0L;
      CHECK(std::abs(static_cast<long double>(got[i]) - expected) < 1e-10L);
    }
  }
}

TEST_CASE("bce rejects non-binary targets and shape mismatch") {
  CHECK_THROWS_AS(loss::bce_multilabel(Tensor({1, 2}, {0, 0}), Tensor({1, 2}, {0.5, 1})), DomainError);
  CHECK_THROWS_AS(loss::bce_multilabel(Tensor({1, 2}, {0, 0}), Tensor({2, 1}, {0, 1})), ShapeError);
}

TEST_CASE("pixelwise cross entropy") {
  SUBCASE("uniform logits give ln C") {
    const Tensor logits({1, 3, 4}, std::vector<double>(12, 0.7));
    const std::vector<std::int32_t> t{0, 3, 2};
    CHECK(loss::ce_pixelwise(logits, t).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  }
  SUBCASE("confident correct pixels approach zero") {
    const Tensor logits({1, 1, 3}, {0.0, 50.0, 0.0});
    const std::vector<std::int32_t> t{1};
    CHECK(loss::ce_pixelwise(logits, t).item() < 1e-20);
  }
  SUBCASE("sample loss is the pixel mean") {
    const Tensor logits({1, 2, 4}, {0, 0, 0, 0, 0, 0, 50, 0});
    const std::vector<std::int32_t> t{1, 2};
    CHECK(loss::ce_pixelwise(logits, t).item() == doctest::Approx(std::log(4.0) / 2).epsilon(1e-12));
  }
  SUBCASE("out of range index") {
    const Tensor logits({1, 1, 3}, {0, 0, 0});
    const std::vector<std::int32_t> t{3};
    CHECK_THROWS_AS(loss::ce_pixelwise(logits, t), DomainError);
  }
}

TEST_CASE("focal loss") {
  const Tensor y({1, 1}, {1.0});
  SUBCASE("hand values") {
    const double p09 = loss::focal_multilabel(Tensor({1, 1}, {std::log(9.0)}), y, 2.0).item();
    CHECK(p09 == doctest::Approx(0.01 * -std::log(0.9)).epsilon(1e-12));
    CHECK(p09 == doctest::Approx(1.0536e-3).epsilon(1e-4));
    const double p05 = loss::focal_multilabel(Tensor({1, 1}, {0.0}), y, 2.0).item();
    CHECK(p05 == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("gamma zero reduces to bce") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor z = testing::random_tensor({4, 5}, rng, -10, 10);
      const Tensor t = random_targets({4, 5}, rng);
      const auto focal = loss::focal_multilabel(z, t, 0.0).to_vector();
      const auto bce = loss::bce_multilabel(z, t).to_vector();
      for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(focal[i] - bce[i]) <= 1e-12);
    }
  }
  SUBCASE("negative gamma") { CHECK_THROWS_AS(loss::focal_multilabel(Tensor({1, 1}, {0.0}), y, -1), DomainError); }
}

TEST_CASE("mse features") {
  const Tensor f({1, 4}, {1, 2, 3, 4});
  CHECK(loss::mse_features(f, f).item() == 0.0);
  CHECK(loss::mse_features(Tensor({1, 4}, {2, 3, 4, 5}), f).item() == 1.0);
  CHECK_THROWS_AS(loss::mse_features(Tensor({1, 3}, {1, 2, 3}), f), ShapeError);

  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor a = testing::random_tensor({3, 6}, rng, -3, 3);
    const Tensor b = testing::random_tensor({3, 6}, rng, -3, 3);
    const auto got = loss::mse_features(a, b).to_vector();
    for (std::size_t i = 0; i < 3; ++i) {
      long double acc = 0.0L;
      for (std::size_t j = 0; j < 6; ++j) {
        const long double d = static_cast<long double>(a.data()[i * 6 + j]) - b.data()[i * 6 + j];
        acc += d * d;
      }
      CHECK(std::abs(static_cast<long double>(got[i]) - acc / 6.0L) < 1e-12L);
    }
  }

  SUBCASE("target is treated as a constant") {
    Tensor recon({1, 2}, {1.0, 2.0}, true);
    Tensor target({1, 2}, {0.0, 0.0}, true);
    Tape tape;
    tape.backward(sum(loss::mse_features(recon, target)));
    CHECK(target.grad()[0] == 0.0);
    CHECK(recon.grad()[1] == doctest::Approx(2.0));
  }
}

TEST_CASE("gaussian kl") {
  CHECK(loss::kl_gaussian(Tensor({1, 2}, {0, 0}), Tensor({1, 2}, {0, 0})).item() == 0.0);
  CHECK(loss::kl_gaussian(Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {0, 0})).item() == 0.5);
  CHECK(loss::kl_gaussian(Tensor({1, 1}, {0}), Tensor({1, 1}, {std::log(4.0)})).item() ==
        doctest::Approx(0.5 * (4.0 - std::log(4.0) - 1.0)).epsilon(1e-14));
  CHECK(loss::kl_gaussian(Tensor({1, 1}, {0}), Tensor({1, 1}, {std::log(4.0)})).item() ==
        doctest::Approx(0.80685).epsilon(1e-5));
  CHECK(loss::kl_gaussian(Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {0, 0}), loss::KlSign::literal).item() == -0.5);

  SUBCASE("non-negative, zero only at the fixed point") {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 200; ++trial) {
      const Tensor mu = testing::random_tensor({4, 3}, rng, -2, 2);
      const Tensor lv = testing::random_tensor({4, 3}, rng, -2, 2);
      for (double v : loss::kl_gaussian(mu, lv).to_vector()) CHECK(v > 1e-12);
    }
  }
  SUBCASE("pixel inputs average over pixels") {
    const Tensor mu({1, 2, 1}, {1, 0});
    const Tensor lv({1, 2, 1}, {0, 0});
    CHECK(loss::kl_gaussian(mu, lv).item() == 0.25);
  }
  SUBCASE("non-finite input") {
    CHECK_THROWS_AS(loss::kl_gaussian(Tensor({1, 1}, {NAN}), Tensor({1, 1}, {0})), NumericError);
  }
}

TEST_CASE("svae composite") {
  CHECK(loss::svae_loss(Tensor({1}, {0}), Tensor({1}, {0}), Tensor({1}, {0})).item() == 0.0);
  CHECK(loss::svae_loss(Tensor({1}, {0.5}), Tensor({1}, {0.7}), Tensor({1}, {0.3})).item() ==
        doctest::Approx(1.5).epsilon(1e-15));
  const loss::SvaeLossWeights w{2.0, 1.0, 0.5};
  CHECK(loss::svae_loss(Tensor({1}, {0.5}), Tensor({1}, {0.7}), Tensor({1}, {0.3}), w).item() ==
        doctest::Approx(1.85));
  CHECK_THROWS_AS(loss::svae_loss(Tensor({2}, {0, 0}), Tensor({1}, {0}), Tensor({1}, {0})), ShapeError);
}

TEST_CASE("per-sample losses are batch-permutation equivariant and non-negative") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 5, c = 3;
    const Tensor z = testing::random_tensor({b, c}, rng, -5, 5);
    const Tensor y = random_targets({b, c}, rng);
    std::vector<std::size_t> perm(b);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> zp, yp;
    for (auto i : perm) {
      for (std::size_t j = 0; j < c; ++j) {
        zp.push_back(z.data()[i * c + j]);
        yp.push_back(y.data()[i * c + j]);
      }
    }
    const auto base = loss::bce_multilabel(z, y).to_vector();
    const auto permuted = loss::bce_multilabel(Tensor({b, c}, zp), Tensor({b, c}, yp)).to_vector();
    const auto focal = loss::focal_multilabel(z, y, 2.0).to_vector();
    for (std::size_t k = 0; k < b; ++k) {
      CHECK(permuted[k] == base[perm[k]]);
      CHECK(base[k] >= 0.0);
      CHECK(focal[k] >= 0.0);
    }
  }
}

TEST_CASE("randomized gradient checks for every loss") {
  const auto rows = testing::run_grad_suite(testing::loss_grad_cases(), 100, 77);
  for (const auto& row : rows) {
    INFO(row.name);
    CHECK(row.worst < 1e-4);
  }
}

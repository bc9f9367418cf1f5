#include "grad_suite.hpp"

#include <algorithm>
#include <cmath>

#include "svae/losses.hpp"
#include "svae/model.hpp"
#include "svae/ops.hpp"

namespace svae::testing {

namespace {

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Keeps relu inputs off the kink so central differences stay one-sided-free.
Tensor away_from_zero(Tensor t, double margin) {
  for (double& v : t.mutable_data()) {
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
  }
  return t;
}

// Scalarizes an op output with a fixed random projection.
GradProblem projected(std::mt19937_64& rng, std::vector<Tensor> inputs,
                      std::function<Tensor(const std::vector<Tensor>&)> op) {
  Shape out_shape;
  {
    NoGradScope no_grad;
    out_shape = op(inputs).shape();
  }
  const Tensor r = random_tensor(out_shape, rng);
  return GradProblem{[op, r](const std::vector<Tensor>& in) { return sum(op(in) * r); },
                     std::move(inputs)};
}

// An operand shape that broadcasts against `full`.
Shape broadcastable(const Shape& full, std::mt19937_64& rng) {
  Shape s = full;
  for (auto& e : s) {
    if (pick(rng, 0, 2) == 0) e = 1;
  }
  const std::size_t drop = pick(rng, 0, s.size());
  s.erase(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(drop));
  return s;
}

GradCase unary_case(std::string name, double lo, double hi, Tensor (*op)(const Tensor&),
                    double margin = 0.0) {
  return GradCase{name, [=](std::mt19937_64& rng) {
                    Tensor x = random_tensor(random_shape(rng, pick(rng, 1, 3)), rng, lo, hi);
                    if (margin > 0) x = away_from_zero(x, margin);
                    return projected(rng, {x}, [op](const std::vector<Tensor>& in) { return op(in[0]); });
                  }};
}

GradCase binary_case(std::string name, Tensor (*op)(const Tensor&, const Tensor&),
                     bool positive_rhs = false) {
  return GradCase{name, [=](std::mt19937_64& rng) {
                    const Shape full = random_shape(rng, pick(rng, 1, 3));
                    const Shape other = broadcastable(full, rng);
                    const bool swap = pick(rng, 0, 1) == 1;
                    Tensor a = random_tensor(swap ? other : full, rng);
                    Tensor b = positive_rhs ? random_tensor(swap ? full : other, rng, 0.5, 2.0)
                                            : random_tensor(swap ? full : other, rng);
                    return projected(rng, {a, b},
                                     [op](const std::vector<Tensor>& in) { return op(in[0], in[1]); });
                  }};
}

Tensor targets01(const Shape& shape, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = coin(rng) ? 1.0 : 0.0;
  return Tensor(shape, std::move(v));
}

ModelDims small_dims(std::mt19937_64& rng) {
  ModelDims dims;
  dims.input = pick(rng, 2, 4);
  dims.hidden = {pick(rng, 2, 4)};
  dims.feature = pick(rng, 2, 5);
  dims.latent = pick(rng, 1, 3);
  dims.classes = pick(rng, 2, 4);
  return dims;
}

}  // namespace

std::vector<GradCase> op_grad_cases() {
  std::vector<GradCase> cases;
  cases.push_back(binary_case("add", add));
  cases.push_back(binary_case("sub", sub));
  cases.push_back(binary_case("mul", mul));
  cases.push_back(binary_case("div", div, true));
  cases.push_back(unary_case("neg", -1, 1, neg));
  cases.push_back(unary_case("exp", -2, 2, exp));
  cases.push_back(unary_case("log", 0.2, 3, log));
  cases.push_back(unary_case("relu", -1, 1, relu, 1e-2));
  cases.push_back(unary_case("sigmoid", -4, 4, sigmoid));
  cases.push_back(unary_case("square", -2, 2, square));
  cases.push_back(unary_case("log_sigmoid", -6, 6, log_sigmoid));
  cases.push_back(unary_case("softmax", -3, 3, softmax));
  cases.push_back(unary_case("log_softmax", -3, 3, log_softmax));
  cases.push_back({"scale", [](std::mt19937_64& rng) {
                     const double factor = std::uniform_real_distribution<double>(-3, 3)(rng);
                     return projected(rng, {random_tensor(random_shape(rng, pick(rng, 1, 3)), rng)},
                                      [factor](const std::vector<Tensor>& in) { return scale(in[0], factor); });
                   }});
  cases.push_back({"matmul", [](std::mt19937_64& rng) {
                     const std::size_t m = pick(rng, 1, 5), k = pick(rng, 1, 5), n = pick(rng, 1, 5);
                     return projected(rng, {random_tensor({m, k}, rng), random_tensor({k, n}, rng)},
                                      [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); });
                   }});
  cases.push_back({"sum", [](std::mt19937_64& rng) {
                     return projected(rng, {random_tensor(random_shape(rng, pick(rng, 1, 3)), rng)},
                                      [](const std::vector<Tensor>& in) { return sum(in[0]); });
                   }});
  cases.push_back({"sum_axis", [](std::mt19937_64& rng) {
                     const Shape s = random_shape(rng, pick(rng, 1, 3));
                     const std::size_t axis = pick(rng, 0, s.size() - 1);
                     return projected(rng, {random_tensor(s, rng)},
                                      [axis](const std::vector<Tensor>& in) { return sum(in[0], axis); });
                   }});
  cases.push_back({"mean", [](std::mt19937_64& rng) {
                     return projected(rng, {random_tensor(random_shape(rng, pick(rng, 1, 3)), rng)},
                                      [](const std::vector<Tensor>& in) { return mean(in[0]); });
                   }});
  cases.push_back({"mean_axis", [](std::mt19937_64& rng) {
                     const Shape s = random_shape(rng, pick(rng, 1, 3));
                     const std::size_t axis = pick(rng, 0, s.size() - 1);
                     return projected(rng, {random_tensor(s, rng)},
                                      [axis](const std::vector<Tensor>& in) { return mean(in[0], axis); });
                   }});
  cases.push_back({"broadcast", [](std::mt19937_64& rng) {
                     const Shape full = random_shape(rng, pick(rng, 1, 3));
                     const Shape small = broadcastable(full, rng);
                     return projected(rng, {random_tensor(small, rng)},
                                      [full](const std::vector<Tensor>& in) { return broadcast_to(in[0], full); });
                   }});
  cases.push_back({"reshape", [](std::mt19937_64& rng) {
                     const Shape s = random_shape(rng, 3);
                     const Shape target = pick(rng, 0, 1) ? Shape{s[0] * s[1], s[2]} : Shape{s[0], s[1] * s[2]};
                     return projected(rng, {random_tensor(s, rng)},
                                      [target](const std::vector<Tensor>& in) { return reshape(in[0], target); });
                   }});
  cases.push_back({"slice", [](std::mt19937_64& rng) {
                     const Shape s = random_shape(rng, pick(rng, 1, 3), 5);
                     const std::size_t axis = pick(rng, 0, s.size() - 1);
                     const std::size_t begin = pick(rng, 0, s[axis] - 1);
                     const std::size_t end = pick(rng, begin + 1, s[axis]);
                     return projected(rng, {random_tensor(s, rng)}, [=](const std::vector<Tensor>& in) {
                       return slice(in[0], axis, begin, end);
                     });
                   }});
  cases.push_back({"concat", [](std::mt19937_64& rng) {
                     const Shape s = random_shape(rng, pick(rng, 1, 3));
                     const std::size_t axis = pick(rng, 0, s.size() - 1);
                     std::vector<Tensor> parts;
                     const std::size_t count = pick(rng, 2, 3);
                     for (std::size_t i = 0; i < count; ++i) {
                       Shape p = s;
                       p[axis] = pick(rng, 1, 3);
                       parts.push_back(random_tensor(p, rng));
                     }
                     return projected(rng, parts, [axis](const std::vector<Tensor>& in) { return concat(in, axis); });
                   }});
  cases.push_back({"composite_mlp", [](std::mt19937_64& rng) {
                     const std::size_t m = pick(rng, 1, 4), k = pick(rng, 1, 4), h = pick(rng, 1, 4),
                                       n = pick(rng, 2, 4);
                     std::vector<Tensor> in{random_tensor({m, k}, rng), random_tensor({k, h}, rng),
                                            random_tensor({h}, rng), random_tensor({h, n}, rng)};
                     // Biases shifted so pre-activations sit away from the relu kink.
                     in[2] = away_from_zero(in[2], 0.2);
                     return projected(rng, in, [](const std::vector<Tensor>& v) {
                       return log_softmax(matmul(sigmoid(matmul(v[0], v[1]) + v[2]), v[3]));
                     });
                   }});
  return cases;
}

std::vector<GradCase> loss_grad_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"bce_multilabel", [](std::mt19937_64& rng) {
                     const Shape s = {pick(rng, 1, 4), pick(rng, 1, 5)};
                     const Tensor y = targets01(s, rng);
                     return projected(rng, {random_tensor(s, rng, -4, 4)}, [y](const std::vector<Tensor>& in) {
                       return loss::bce_multilabel(in[0], y);
                     });
                   }});
  cases.push_back({"focal_multilabel", [](std::mt19937_64& rng) {
                     const Shape s = {pick(rng, 1, 4), pick(rng, 1, 5)};
                     const Tensor y = targets01(s, rng);
                     const double gamma = std::uniform_real_distribution<double>(0, 3)(rng);
                     return projected(rng, {random_tensor(s, rng, -4, 4)}, [y, gamma](const std::vector<Tensor>& in) {
                       return loss::focal_multilabel(in[0], y, gamma);
                     });
                   }});
  cases.push_back({"ce_pixelwise", [](std::mt19937_64& rng) {
                     const std::size_t b = pick(rng, 1, 3), p = pick(rng, 1, 4), c = pick(rng, 2, 5);
                     std::vector<std::int32_t> targets(b * p);
                     for (auto& t : targets) t = static_cast<std::int32_t>(pick(rng, 0, c - 1));
                     return projected(rng, {random_tensor({b, p, c}, rng, -3, 3)},
                                      [targets](const std::vector<Tensor>& in) {
                                        return loss::ce_pixelwise(in[0], targets);
                                      });
                   }});
  cases.push_back({"mse_features", [](std::mt19937_64& rng) {
                     Shape s = random_shape(rng, pick(rng, 2, 3));
                     const Tensor target = random_tensor(s, rng);
                     return projected(rng, {random_tensor(s, rng)}, [target](const std::vector<Tensor>& in) {
                       return loss::mse_features(in[0], target);
                     });
                   }});
  cases.push_back({"kl_gaussian", [](std::mt19937_64& rng) {
                     Shape s = random_shape(rng, pick(rng, 2, 3));
                     const auto sign = pick(rng, 0, 1) ? loss::KlSign::standard : loss::KlSign::literal;
                     return projected(rng, {random_tensor(s, rng, -1.5, 1.5), random_tensor(s, rng, -2, 2)},
                                      [sign](const std::vector<Tensor>& in) {
                                        return loss::kl_gaussian(in[0], in[1], sign);
                                      });
                   }});
  // Full SVAE composite through the branch parameters: mu/logvar come from
  // the variational encoder, z feeds the decoder and the SVAE head.
  cases.push_back({"svae_composite", [](std::mt19937_64& rng) {
                     const ModelDims dims = small_dims(rng);
                     Model model(dims, true, rng());
                     const bool pixels = pick(rng, 0, 1) == 1;
                     const std::size_t b = pick(rng, 1, 3), p = pixels ? pick(rng, 1, 3) : 1;
                     const Shape lead = pixels ? Shape{b, p} : Shape{b};
                     Shape fshape = lead, eshape = lead;
                     fshape.push_back(dims.feature);
                     eshape.push_back(dims.latent);
                     const Tensor features = random_tensor(fshape, rng, 0, 1.5);
                     Tensor eps = random_tensor(eshape, rng, -1.5, 1.5);
                     Tensor y = targets01({b, dims.classes}, rng);
                     std::vector<std::int32_t> pix(b * p);
                     for (auto& t : pix) t = static_cast<std::int32_t>(pick(rng, 0, dims.classes - 1));
                     std::vector<Tensor> leaves = {model.variational().weight, model.variational().bias,
                                                   model.decoder().weight,     model.decoder().bias,
                                                   model.svae_head().weight,   model.svae_head().bias};
                     for (auto& t : leaves) t = Tensor(t.shape(), random_tensor(t.shape(), rng, -0.8, 0.8).to_vector());
                     auto fn = [=](const std::vector<Tensor>& in) mutable {
                       Model m = model;
                       m.variational() = Linear{in[0], in[1]};
                       m.decoder() = Linear{in[2], in[3]};
                       m.svae_head() = Linear{in[4], in[5]};
                       const SvaeForward s = m.forward_svae(features, eps);
                       const Tensor task = pixels ? loss::ce_pixelwise(s.logits, pix)
                                                  : loss::bce_multilabel(s.logits, y);
                       return loss::svae_loss(loss::mse_features(s.reconstruction, features), task,
                                              loss::kl_gaussian(s.mu, s.logvar));
                     };
                     return projected(rng, leaves, fn);
                   }});
  cases.push_back({"main_path", [](std::mt19937_64& rng) {
                     const ModelDims dims = small_dims(rng);
                     Model model(dims, false, rng());
                     const std::size_t b = pick(rng, 1, 4);
                     const Tensor x = random_tensor({b, dims.input}, rng);
                     const Tensor y = targets01({b, dims.classes}, rng);
                     std::vector<Tensor> leaves;
                     for (const auto& t : model.main_parameters()) leaves.push_back(Tensor(t.shape(), t.to_vector()));
                     // Positive biases keep hidden units active and away from the kink.
                     for (std::size_t i = 1; i < leaves.size() - 2; i += 2) {
                       leaves[i] = random_tensor(leaves[i].shape(), rng, 0.3, 0.8);
                     }
                     auto fn = [=](const std::vector<Tensor>& in) mutable {
                       Model m = model;
                       auto& layers = m.encoder_layers();
                       for (std::size_t l = 0; l < layers.size(); ++l) layers[l] = Linear{in[2 * l], in[2 * l + 1]};
                       m.head() = Linear{in[in.size() - 2], in[in.size() - 1]};
                       return loss::bce_multilabel(m.forward_main(x).logits, y);
                     };
                     return projected(rng, leaves, fn);
                   }});
  return cases;
}

std::vector<GradSuiteRow> run_grad_suite(const std::vector<GradCase>& cases, std::size_t per_case,
                                         std::uint64_t seed, double h) {
  std::vector<GradSuiteRow> rows;
  std::mt19937_64 rng(seed);
  for (const auto& c : cases) {
    GradSuiteRow row{c.name, 0, 0.0};
    for (std::size_t i = 0; i < per_case; ++i) {
      const GradProblem problem = c.make(rng);
      const auto result = gradcheck(problem.fn, problem.inputs, h);
      row.worst = std::max(row.worst, result.max_rel_error);
      ++row.cases;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace svae::testing

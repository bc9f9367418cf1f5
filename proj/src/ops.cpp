#include "svae/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace svae {

namespace {

using detail::TensorImpl;
using Inputs = std::span<TensorImpl* const>;

void check_finite(const char* op, const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite output");
    }
  }
}

Tensor finish(const char* op, Shape shape, std::vector<double> values,
              std::initializer_list<const Tensor*> inputs, Tape::BackwardFn fn) {
  check_finite(op, values);
  Tape* tape = Tape::active();
  bool tracked = false;
  if (tape != nullptr) {
    for (const Tensor* in : inputs) tracked = tracked || in->requires_grad();
  }
  Tensor out(std::move(shape), std::move(values), tracked);
  if (tracked) {
    std::vector<std::shared_ptr<TensorImpl>> ins;
    ins.reserve(inputs.size());
    for (const Tensor* in : inputs) ins.push_back(in->impl());
    tape->record(std::move(ins), out.impl(), std::move(fn));
  }
  return out;
}

// Index mapping from an output element to the flat offsets of two broadcast
// operands. Strides are zero along expanded axes.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
  bool b_scalar = false;
};

std::vector<std::size_t> aligned_strides(const Shape& shape, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - shape.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t step = 1;
  for (std::size_t d = shape.size(); d-- > 0;) {
    strides[d + offset] = shape[d] == 1 ? 0 : step;
    step *= shape[d];
  }
  return strides;
}

BroadcastPlan broadcast_plan(const char* op, const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t ea = d + a.size() >= rank ? a[d + a.size() - rank] : 1;
    const std::size_t eb = d + b.size() >= rank ? b[d + b.size() - rank] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast shapes " + shape_str(a) +
                       " and " + shape_str(b));
    }
    plan.out[d] = ea == 1 ? eb : ea;
  }
  plan.stride_a = aligned_strides(a, plan.out);
  plan.stride_b = aligned_strides(b, plan.out);
  plan.b_scalar = shape_numel(b) == 1 && plan.out == a;
  return plan;
}

template <class F>
void for_each_pair(const BroadcastPlan& plan, F&& f) {
  const std::size_t n = shape_numel(plan.out);
  if (plan.same) {
    for (std::size_t o = 0; o < n; ++o) f(o, o, o);
    return;
  }
  if (plan.b_scalar) {
    for (std::size_t o = 0; o < n; ++o) f(o, o, std::size_t{0});
    return;
  }
  const std::size_t rank = plan.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += plan.stride_a[d];
      ib += plan.stride_b[d];
      if (idx[d] < plan.out[d]) break;
      ia -= plan.stride_a[d] * plan.out[d];
      ib -= plan.stride_b[d] * plan.out[d];
      idx[d] = 0;
    }
  }
}

// GradA/GradB map (a, b, out) to the local partial derivative.
template <class Fwd, class GradA, class GradB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, GradA grad_a,
              GradB grad_b) {
  auto plan = broadcast_plan(op, a.shape(), b.shape());
  std::vector<double> out(shape_numel(plan.out));
  const auto ad = a.data();
  const auto bd = b.data();
  for_each_pair(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = fwd(ad[ia], bd[ib]);
  });
  Shape shape = plan.out;
  return finish(op, std::move(shape), std::move(out), {&a, &b},
                [plan = std::move(plan), grad_a, grad_b](const TensorImpl& y, Inputs in) {
                  TensorImpl* ta = in[0];
                  TensorImpl* tb = in[1];
                  for_each_pair(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                    const double g = y.grad[o];
                    if (ta->requires_grad) {
                      ta->grad[ia] += g * grad_a(ta->data[ia], tb->data[ib], y.data[o]);
                    }
                    if (tb->requires_grad) {
                      tb->grad[ib] += g * grad_b(ta->data[ia], tb->data[ib], y.data[o]);
                    }
                  });
                });
}

// Grad maps (x, y) to dy/dx.
template <class Fwd, class Grad>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Grad grad) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  return finish(op, x.shape(), std::move(out), {&x}, [grad](const TensorImpl& y, Inputs in) {
    TensorImpl* tx = in[0];
    if (!tx->requires_grad) return;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      tx->grad[i] += y.grad[i] * grad(tx->data[i], y.data[i]);
    }
  });
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

std::size_t last_extent(const char* op, const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw ShapeError(std::string(op) + ": needs a non-empty last axis, got " +
                     shape_str(x.shape()));
  }
  return x.shape().back();
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.extent = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

Tensor reduce_axis(const char* op, const Tensor& x, std::size_t axis, bool average) {
  const auto s = split_at(op, x.shape(), axis);
  if (average && s.extent == 0) throw ShapeError(std::string(op) + ": empty axis");
  const double factor = average ? 1.0 / static_cast<double>(s.extent) : 1.0;
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.extent; ++k) {
      const double* row = xd.data() + (o * s.extent + k) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += row[i];
    }
  }
  if (average) {
    for (double& v : out) v *= factor;
  }
  return finish(op, std::move(shape), std::move(out), {&x},
                [s, factor](const TensorImpl& y, Inputs in) {
                  TensorImpl* tx = in[0];
                  if (!tx->requires_grad) return;
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t k = 0; k < s.extent; ++k) {
                      double* dst = tx->grad.data() + (o * s.extent + k) * s.inner;
                      const double* g = y.grad.data() + o * s.inner;
                      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i] * factor;
                    }
                  }
                });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor neg(const Tensor& x) {
  return unary(
      "neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor log_sigmoid(const Tensor& x) {
  return unary(
      "log_sigmoid", x,
      [](double v) { return std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return stable_sigmoid(-v); });
}

Tensor softmax(const Tensor& x) {
  const std::size_t n = last_extent("softmax", x);
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xd.data() + r * n;
    double* dst = out.data() + r * n;
    const double peak = *std::max_element(src, src + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += dst[j] = std::exp(src[j] - peak);
    for (std::size_t j = 0; j < n; ++j) dst[j] /= total;
  }
  return finish("softmax", x.shape(), std::move(out), {&x},
                [n, rows](const TensorImpl& y, Inputs in) {
                  TensorImpl* tx = in[0];
                  if (!tx->requires_grad) return;
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* p = y.data.data() + r * n;
                    const double* g = y.grad.data() + r * n;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dot += g[j] * p[j];
                    double* dst = tx->grad.data() + r * n;
                    for (std::size_t j = 0; j < n; ++j) dst[j] += p[j] * (g[j] - dot);
                  }
                });
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t n = last_extent("log_softmax", x);
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xd.data() + r * n;
    double* dst = out.data() + r * n;
    const double peak = *std::max_element(src, src + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(src[j] - peak);
    const double lse = peak + std::log(total);
    for (std::size_t j = 0; j < n; ++j) dst[j] = src[j] - lse;
  }
  return finish("log_softmax", x.shape(), std::move(out), {&x},
                [n, rows](const TensorImpl& y, Inputs in) {
                  TensorImpl* tx = in[0];
                  if (!tx->requires_grad) return;
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* ly = y.data.data() + r * n;
                    const double* g = y.grad.data() + r * n;
                    double total = 0.0;
                    for (std::size_t j = 0; j < n; ++j) total += g[j];
                    double* dst = tx->grad.data() + r * n;
                    for (std::size_t j = 0; j < n; ++j) dst[j] += g[j] - std::exp(ly[j]) * total;
                  }
                });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      const double* brow = bd + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return finish("matmul", Shape{m, n}, std::move(out), {&a, &b},
                [m, k, n](const TensorImpl& y, Inputs in) {
                  TensorImpl* ta = in[0];
                  TensorImpl* tb = in[1];
                  const double* g = y.grad.data();
                  if (ta->requires_grad) {
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t p = 0; p < k; ++p) {
                        const double* brow = tb->data.data() + p * n;
                        const double* grow = g + i * n;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ta->grad[i * k + p] += acc;
                      }
                    }
                  }
                  if (tb->requires_grad) {
                    for (std::size_t i = 0; i < m; ++i) {
                      const double* grow = g + i * n;
                      for (std::size_t p = 0; p < k; ++p) {
                        const double av = ta->data[i * k + p];
                        double* dst = tb->grad.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) dst[j] += av * grow[j];
                      }
                    }
                  }
                });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return finish("sum", Shape{}, {total}, {&x}, [](const TensorImpl& y, Inputs in) {
    TensorImpl* tx = in[0];
    if (!tx->requires_grad) return;
    for (double& g : tx->grad) g += y.grad[0];
  });
}

Tensor sum(const Tensor& x, std::size_t axis) { return reduce_axis("sum", x, axis, false); }

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  const double factor = 1.0 / static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.data()) total += v;
  return finish("mean", Shape{}, {total * factor}, {&x},
                [factor](const TensorImpl& y, Inputs in) {
                  TensorImpl* tx = in[0];
                  if (!tx->requires_grad) return;
                  for (double& g : tx->grad) g += y.grad[0] * factor;
                });
}

Tensor mean(const Tensor& x, std::size_t axis) { return reduce_axis("mean", x, axis, true); }

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  auto plan = broadcast_plan("broadcast", shape, x.shape());
  if (plan.out != shape) {
    throw ShapeError("broadcast: cannot expand " + shape_str(x.shape()) + " to " +
                     shape_str(shape));
  }
  std::vector<double> out(shape_numel(shape));
  const auto xd = x.data();
  for_each_pair(plan, [&](std::size_t o, std::size_t, std::size_t ix) { out[o] = xd[ix]; });
  return finish("broadcast", shape, std::move(out), {&x},
                [plan = std::move(plan)](const TensorImpl& y, Inputs in) {
                  TensorImpl* tx = in[0];
                  if (!tx->requires_grad) return;
                  for_each_pair(plan, [&](std::size_t o, std::size_t, std::size_t ix) {
                    tx->grad[ix] += y.grad[o];
                  });
                });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  }
  return finish("reshape", shape, x.to_vector(), {&x}, [](const TensorImpl& y, Inputs in) {
    TensorImpl* tx = in[0];
    if (!tx->requires_grad) return;
    for (std::size_t i = 0; i < y.grad.size(); ++i) tx->grad[i] += y.grad[i];
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto s = split_at("slice", x.shape(), axis);
  if (begin > end || end > s.extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of " +
                     shape_str(x.shape()));
  }
  const std::size_t len = end - begin;
  Shape shape = x.shape();
  shape[axis] = len;
  std::vector<double> out(s.outer * len * s.inner);
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xd.data() + (o * s.extent + begin) * s.inner, len * s.inner,
                out.data() + o * len * s.inner);
  }
  return finish("slice", std::move(shape), std::move(out), {&x},
                [s, begin, len](const TensorImpl& y, Inputs in) {
                  TensorImpl* tx = in[0];
                  if (!tx->requires_grad) return;
                  for (std::size_t o = 0; o < s.outer; ++o) {
                    const double* g = y.grad.data() + o * len * s.inner;
                    double* dst = tx->grad.data() + (o * s.extent + begin) * s.inner;
                    for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += g[i];
                  }
                });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const auto s0 = split_at("concat", first, axis);
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape();
    Shape b = first;
    if (a.size() != b.size()) {
      throw ShapeError("concat: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
    a[axis] = 0;
    b[axis] = 0;
    if (a != b) {
      throw ShapeError("concat: shapes " + shape_str(p.shape()) + " and " + shape_str(first) +
                       " differ off axis " + std::to_string(axis));
    }
    extents.push_back(p.shape()[axis]);
    total += p.shape()[axis];
  }
  Shape shape = first;
  shape[axis] = total;
  std::vector<double> out(s0.outer * total * s0.inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pd = parts[k].data();
    const std::size_t chunk = extents[k] * s0.inner;
    for (std::size_t o = 0; o < s0.outer; ++o) {
      std::copy_n(pd.data() + o * chunk, chunk, out.data() + (o * total + offset) * s0.inner);
    }
    offset += extents[k];
  }

  check_finite("concat", out);
  Tape* tape = Tape::active();
  bool tracked = false;
  if (tape != nullptr) {
    for (const auto& p : parts) tracked = tracked || p.requires_grad();
  }
  Tensor result(std::move(shape), std::move(out), tracked);
  if (tracked) {
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const auto& p : parts) ins.push_back(p.impl());
    const std::size_t outer = s0.outer;
    const std::size_t inner = s0.inner;
    tape->record(std::move(ins), result.impl(),
                 [extents, total, outer, inner](const TensorImpl& y, Inputs in) {
                   std::size_t offset = 0;
                   for (std::size_t k = 0; k < in.size(); ++k) {
                     const std::size_t chunk = extents[k] * inner;
                     if (in[k]->requires_grad) {
                       for (std::size_t o = 0; o < outer; ++o) {
                         const double* g = y.grad.data() + (o * total + offset) * inner;
                         double* dst = in[k]->grad.data() + o * chunk;
                         for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
                       }
                     }
                     offset += extents[k];
                   }
                 });
  }
  return result;
}

Tensor stop_gradient(const Tensor& x) { return Tensor(x.shape(), x.to_vector(), false); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

}  // namespace svae

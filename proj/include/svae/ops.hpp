#pragma once

#include <vector>

#include "svae/tensor.hpp"

namespace svae {

// Binary elementwise ops broadcast numpy-style: shapes align on the right and
// an axis of extent 1 (or a missing leading axis) expands to the other
// operand's extent.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor square(const Tensor& x);

// log(sigmoid(x)) without overflow: min(x, 0) - log1p(exp(-|x|)).
Tensor log_sigmoid(const Tensor& x);

// Over the last axis, with the row max subtracted first.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

// (m x k) * (k x n)
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis);

Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor reshape(const Tensor& x, const Shape& shape);
// Elements [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

// Value copy that is never recorded; gradients do not flow through it.
Tensor stop_gradient(const Tensor& x);

Tensor scale(const Tensor& x, double factor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

}  // namespace svae

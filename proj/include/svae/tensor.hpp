#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace svae {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Raised whenever a forward op produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // non-empty iff requires_grad
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0 for leaves and untracked values
  std::size_t record = 0;
};

}  // namespace detail

/// Dense row-major float64 array. Copies share storage; use `clone()` for a
/// deep copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Direct value access for leaves (initializers, optimizers, loaders).
  std::span<double> mutable_data();
  std::vector<double> to_vector() const { return impl_->data; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad; }
  void zero_grad();

  bool is_leaf() const { return impl_->tape_id == 0; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  Tensor clone() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl);

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Define-by-run gradient tape. Constructing a Tape makes it the active tape
/// of the current thread until it is destroyed; ops whose inputs require
/// gradients are recorded on the active tape. With no active tape, ops only
/// compute values.
class Tape {
 public:
  using BackwardFn =
      std::function<void(const detail::TensorImpl& out,
                         std::span<detail::TensorImpl* const> inputs)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable
  /// from `loss`. Allowed once per tape.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }
  std::uint64_t id() const { return id_; }

  /// Innermost active tape of this thread, or nullptr.
  static Tape* active();

  // Used by op implementations.
  void record(std::vector<std::shared_ptr<detail::TensorImpl>> inputs,
              const std::shared_ptr<detail::TensorImpl>& output,
              BackwardFn fn);

 private:
  struct Record {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn fn;
  };

  std::uint64_t id_;
  bool consumed_ = false;
  std::vector<Record> records_;
};

/// Suspends recording for its lifetime (evaluation passes).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;
};

}  // namespace svae

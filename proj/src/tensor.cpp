#include "svae/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

namespace svae {

namespace {

std::atomic<std::uint64_t> next_tape_id{1};

// nullptr entries are NoGradScope markers.
thread_local std::vector<Tape*> tape_stack;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : Tensor(Shape{}, {0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  set_requires_grad(requires_grad);
}

Tensor::Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape()));
  }
  return impl_->shape[axis];
}

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw TapeError("tensor: cannot mutate a recorded intermediate");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("tensor: item() on shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (on) {
    impl_->grad.assign(impl_->data.size(), 0.0);
  } else {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

Tensor Tensor::clone() const {
  return Tensor(impl_->shape, impl_->data, impl_->requires_grad);
}

Tape::Tape() : id_(next_tape_id.fetch_add(1)) { tape_stack.push_back(this); }

Tape::~Tape() {
  auto it = std::find(tape_stack.rbegin(), tape_stack.rend(), this);
  if (it != tape_stack.rend()) tape_stack.erase(std::next(it).base());
}

Tape* Tape::active() { return tape_stack.empty() ? nullptr : tape_stack.back(); }

void Tape::record(std::vector<std::shared_ptr<detail::TensorImpl>> inputs,
                  const std::shared_ptr<detail::TensorImpl>& output, BackwardFn fn) {
  if (consumed_) throw TapeError("tape: recording onto a tape after backward()");
  output->tape_id = id_;
  output->record = records_.size();
  records_.push_back(Record{std::move(inputs), output, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw TapeError("backward: tape already consumed; run a new forward pass first");
  }
  if (loss.numel() != 1 || loss.rank() != 0) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  const auto& root = loss.impl();
  if (root->tape_id != id_) {
    throw TapeError("backward: loss was not produced on this tape");
  }
  consumed_ = true;
  root->grad[0] += 1.0;

  std::vector<detail::TensorImpl*> raw;
  for (std::size_t r = root->record + 1; r-- > 0;) {
    auto& rec = records_[r];
    raw.clear();
    for (auto& in : rec.inputs) raw.push_back(in.get());
    rec.fn(*rec.output, raw);
  }
  records_.clear();
}

NoGradScope::NoGradScope() { tape_stack.push_back(nullptr); }

NoGradScope::~NoGradScope() {
  auto it = std::find(tape_stack.rbegin(), tape_stack.rend(), nullptr);
  if (it != tape_stack.rend()) tape_stack.erase(std::next(it).base());
}

}  // namespace svae

#include "tsa/tensor.hpp"

#include <sstream>

#include "tsa/errors.hpp"

namespace tsa {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_data(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
  const std::size_t n = numel(shape);
  if (values.empty()) values.assign(n, 0.0);
  if (values.size() != n) {
    throw DimensionError("tensor data has " + std::to_string(values.size()) +
                         " elements, shape " + shape_str(shape) + " needs " +
                         std::to_string(n));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->values = std::move(values);
  t.impl_->requires_grad = requires_grad;
  if (requires_grad) t.impl_->grad.assign(n, 0.0);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw UsageError("operation on an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::size() const {
  if (!impl_) throw UsageError("operation on an undefined tensor");
  return impl_->values.size();
}

std::vector<double>& Tensor::values() const {
  if (!impl_) throw UsageError("operation on an undefined tensor");
  return impl_->values;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool requires_grad) const {
  if (!impl_) throw UsageError("operation on an undefined tensor");
  impl_->requires_grad = requires_grad;
  if (requires_grad) {
    impl_->grad.assign(impl_->values.size(), 0.0);
  } else {
    impl_->grad.clear();
  }
}

std::vector<double>& Tensor::grad() const {
  if (!impl_) throw UsageError("operation on an undefined tensor");
  if (!impl_->requires_grad) {
    throw UsageError("tensor does not require grad");
  }
  if (impl_->grad.size() != impl_->values.size()) {
    impl_->grad.assign(impl_->values.size(), 0.0);
  }
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (impl_ && impl_->requires_grad) {
    impl_->grad.assign(impl_->values.size(), 0.0);
  }
}

double Tensor::item() const {
  if (size() != 1) {
    throw UsageError("item() requires a single-element tensor, got shape " +
                     shape_str(shape()));
  }
  return values()[0];
}

double Tensor::at(const std::vector<std::size_t>& index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) {
    throw DimensionError("index rank " + std::to_string(index.size()) +
                         " does not match tensor rank " + std::to_string(s.size()));
  }
  std::size_t flat = 0;
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= s[k]) throw DimensionError("index out of bounds");
    flat = flat * s[k] + index[k];
  }
  return values()[flat];
}

void Tape::record(std::function<void()> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
}

void backward(const Tensor& loss, Tape& tape) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward: loss must be a scalar tensor" +
                     (loss.defined() ? ", got shape " + shape_str(loss.shape())
                                     : std::string(", got an undefined tensor")));
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward: loss was not recorded on the tape");
  }
  loss.grad()[0] += 1.0;
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
    (*it)();
  }
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

}  // namespace tsa

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace tsa {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float64 tensor. Tensor is a cheap handle: copies share the
// underlying storage, so parameters can sit both in a parameter map and in a
// recorded graph. A rank-0 tensor holds exactly one element (a scalar).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  // Storage access follows shared_ptr semantics: a const Tensor is a const
  // handle, the elements behind it stay mutable.
  std::vector<double>& values() const;
  bool requires_grad() const;
  void set_requires_grad(bool requires_grad) const;
  std::vector<double>& grad() const;  // valid only when requires_grad
  void zero_grad() const;

  double item() const;  // single-element tensors only
  double at(const std::vector<std::size_t>& index) const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;
  };
  std::shared_ptr<Impl> impl_;
};

// Reverse-mode tape. Forward operations append one node each, in execution
// order, which is already a topological order of the dynamic graph; the
// backward pass replays the nodes once, in reverse. A node's closure holds
// handles to its input and output tensors plus the local backward rule.
class Tape {
 public:
  void record(std::function<void()> backward_fn);
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  friend void backward(const Tensor& loss, Tape& tape);

 private:
  std::vector<std::function<void()>> nodes_;
};

// Fills grad for every requires_grad tensor reachable from `loss`. Gradients
// accumulate across calls; callers zero them between optimizer steps.
void backward(const Tensor& loss, Tape& tape);

// Recording target for the current thread; null means no recording.
Tape* active_tape();

// RAII scope that makes `tape` the active recording target.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

enum class Mode { train, eval };

}  // namespace tsa

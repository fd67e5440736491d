#pragma once

// Dense row-major tensor with a reverse-mode tape.
//
// A Tensor is a cheap handle onto shared storage. Ops in ops.hpp record a
// TapeNode on the thread's active Tape whenever one of their inputs requires
// a gradient; without an active tape they run as plain inference.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dat/errors.hpp"

namespace dat {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MatrixMap = Eigen::Map<Matrix<Scalar>>;
template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const Matrix<Scalar>>;

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename Scalar>
struct TensorStorage {
  Shape shape;
  Vector<Scalar> value;
  Vector<Scalar> grad;  // empty until first touched by backward or zero_grad
  bool requires_grad = false;
};

template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, Vector<Scalar> value, bool requires_grad = false)
      : storage_(std::make_shared<TensorStorage<Scalar>>()) {
    if (numel(shape) != value.size()) {
      throw DimensionError("tensor shape " + to_string(shape) + " does not match " +
                           std::to_string(value.size()) + " values");
    }
    storage_->shape = std::move(shape);
    storage_->value = std::move(value);
    storage_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const Index n = numel(shape);
    return Tensor(std::move(shape), Vector<Scalar>::Zero(n), requires_grad);
  }

  static Tensor scalar(Scalar v) { return Tensor({1}, Vector<Scalar>::Constant(1, v)); }

  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m, bool requires_grad = false) {
    Matrix<Scalar> rm = m.template cast<Scalar>();
    Vector<Scalar> flat = Eigen::Map<const Vector<Scalar>>(rm.data(), rm.size());
    return Tensor({rm.rows(), rm.cols()}, std::move(flat), requires_grad);
  }

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const { return storage_->shape; }
  Index rank() const { return static_cast<Index>(storage_->shape.size()); }
  Index size() const { return storage_->value.size(); }

  /// Extent of `axis`; negative axes count from the back.
  Index dim(Index axis) const { return shape()[static_cast<std::size_t>(normalize_axis(axis))]; }

  Index normalize_axis(Index axis) const {
    const Index r = rank();
    const Index a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
      throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
    }
    return a;
  }

  const Vector<Scalar>& value() const { return storage_->value; }
  /// Mutable values. Only for parameter updates and test setup, never during a taped forward.
  Vector<Scalar>& mutable_value() { return storage_->value; }

  /// Rows = product of leading extents, cols = last extent.
  ConstMatrixMap<Scalar> matrix() const {
    return ConstMatrixMap<Scalar>(storage_->value.data(), rows(), cols());
  }
  MatrixMap<Scalar> mutable_matrix() { return MatrixMap<Scalar>(storage_->value.data(), rows(), cols()); }

  Index cols() const { return rank() == 0 ? 1 : shape().back(); }
  Index rows() const { return cols() == 0 ? 0 : size() / cols(); }

  Scalar item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
    return storage_->value[0];
  }

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool on) const { storage_->requires_grad = on; }

  bool has_grad() const { return storage_->grad.size() == storage_->value.size(); }
  const Vector<Scalar>& grad() const { return storage_->grad; }

  /// Grad buffer, zero-allocated on first access. Gradients live in the shared
  /// storage, so const handles may accumulate into them.
  Vector<Scalar>& mutable_grad() const {
    if (!has_grad()) storage_->grad = Vector<Scalar>::Zero(storage_->value.size());
    return storage_->grad;
  }

  void zero_grad() const {
    if (has_grad()) storage_->grad.setZero();
  }

  /// Adds `g` into this tensor's gradient when it participates in autodiff.
  template <typename Derived>
  void accumulate_grad(const Eigen::MatrixBase<Derived>& g) const {
    if (!requires_grad()) return;
    mutable_grad().noalias() += g;
  }

  /// Deep copy without gradient or tape history.
  Tensor detach() const { return Tensor(shape(), value(), false); }

  const TensorStorage<Scalar>* id() const { return storage_.get(); }

 private:
  std::shared_ptr<TensorStorage<Scalar>> storage_;
};

template <typename Scalar>
struct TapeNode {
  std::string op;
  Tensor<Scalar> output;
  // Reads output.grad() and accumulates into the inputs it captured.
  std::function<void(const Vector<Scalar>&)> backward;
};

template <typename Scalar>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape*& active() {
    thread_local Tape* current = nullptr;
    return current;
  }

  void record(std::string_view op, const Tensor<Scalar>& output,
              std::function<void(const Vector<Scalar>&)> backward) {
    if (consumed_) throw std::logic_error("tape already consumed by backward(); call reset()");
    nodes_.push_back({std::string(op), output, std::move(backward)});
  }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

  /// Seeds d(loss)/d(loss) = 1; `loss` must be a scalar recorded on this tape.
  void backward(const Tensor<Scalar>& loss) {
    if (loss.size() != 1) {
      throw DimensionError("backward() needs a scalar loss, got " + to_string(loss.shape()));
    }
    backward(loss, Vector<Scalar>::Ones(1));
  }

  /// Vector-Jacobian product seeded with `seed` on an arbitrary taped output.
  void backward(Tensor<Scalar> output, const Vector<Scalar>& seed) {
    if (consumed_) throw std::logic_error("backward() called twice without Tape::reset()");
    if (seed.size() != output.size()) throw DimensionError("backward seed size mismatch");
    bool found = false;
    for (const auto& n : nodes_) found = found || n.output.id() == output.id();
    if (!found) throw std::logic_error("backward() target was not produced on this tape");
    consumed_ = true;
    output.mutable_grad() += seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->output.has_grad()) continue;  // not on any path to the seed
      it->backward(it->output.grad());
    }
  }

 private:
  std::vector<TapeNode<Scalar>> nodes_;
  bool consumed_ = false;
};

/// Installs `tape` as the thread's active tape for the scope's lifetime.
template <typename Scalar>
class TapeScope {
 public:
  explicit TapeScope(Tape<Scalar>& tape) : previous_(Tape<Scalar>::active()) { Tape<Scalar>::active() = &tape; }
  ~TapeScope() { Tape<Scalar>::active() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<Scalar>* previous_;
};

/// Runs backward on the active tape.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  auto* tape = Tape<Scalar>::active();
  if (!tape) throw std::logic_error("backward() without an active tape");
  tape->backward(loss);
}

}  // namespace dat

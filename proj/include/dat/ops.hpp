#pragma once

// Differentiable tensor ops. Each op computes its forward value eagerly and,
// when taping, records a closure that maps the output gradient onto its
// inputs' gradients.

#include <cmath>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dat/tensor.hpp"

namespace dat {

namespace detail {

template <typename Scalar>
bool should_record(std::initializer_list<const Tensor<Scalar>*> inputs) {
  if (!Tape<Scalar>::active()) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename Scalar, typename Fn>
void record(std::string_view op, Tensor<Scalar>& out, Fn&& fn) {
  out.set_requires_grad(true);
  Tape<Scalar>::active()->record(op, out, std::forward<Fn>(fn));
}

template <typename Scalar>
void check_finite(std::string_view op, const Tensor<Scalar>& out) {
  if (!out.value().allFinite()) {
    throw NumericalError(std::string(op) + " produced non-finite values (shape " + to_string(out.shape()) + ")");
  }
}

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

inline AxisSplit split_at(const Shape& shape, Index axis) {
  AxisSplit s;
  for (Index i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.extent = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename Scalar>
Tensor<Scalar> binary_broadcast_check(const Tensor<Scalar>& a, const Tensor<Scalar>& b, std::string_view op) {
  if (a.shape() != b.shape() && a.size() != 1 && b.size() != 1) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
  return a.size() >= b.size() ? a : b;
}

}  // namespace detail

/// Batched matrix product over the last two axes. Leading (batch) axes must be
/// equal, or absent on one side, in which case that operand is shared.
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.dim(-1) != b.dim(-2)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const Shape pa(a.shape().begin(), a.shape().end() - 2);
  const Shape pb(b.shape().begin(), b.shape().end() - 2);
  if (!pa.empty() && !pb.empty() && pa != pb) {
    throw DimensionError("matmul: batch dims not broadcastable " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const Index m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  const Index batches = std::max(numel(pa), numel(pb));
  const Index stride_a = pa.empty() ? 0 : m * k;
  const Index stride_b = pb.empty() ? 0 : k * n;

  Shape out_shape = pa.size() >= pb.size() ? pa : pb;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<Scalar> out = Tensor<Scalar>::zeros(out_shape);
  for (Index i = 0; i < batches; ++i) {
    ConstMatrixMap<Scalar> A(a.value().data() + i * stride_a, m, k);
    ConstMatrixMap<Scalar> B(b.value().data() + i * stride_b, k, n);
    MatrixMap<Scalar> C(out.mutable_value().data() + i * m * n, m, n);
    C.noalias() = A * B;
  }
  detail::check_finite("matmul", out);
  if (detail::should_record({&a, &b})) {
    detail::record("matmul", out, [a, b, m, k, n, batches, stride_a, stride_b](const Vector<Scalar>& g) mutable {
      for (Index i = 0; i < batches; ++i) {
        ConstMatrixMap<Scalar> G(g.data() + i * m * n, m, n);
        if (a.requires_grad()) {
          ConstMatrixMap<Scalar> B(b.value().data() + i * stride_b, k, n);
          MatrixMap<Scalar> dA(a.mutable_grad().data() + i * stride_a, m, k);
          dA.noalias() += G * B.transpose();
        }
        if (b.requires_grad()) {
          ConstMatrixMap<Scalar> A(a.value().data() + i * stride_a, m, k);
          MatrixMap<Scalar> dB(b.mutable_grad().data() + i * stride_b, k, n);
          dB.noalias() += A.transpose() * G;
        }
      }
    });
  }
  return out;
}

/// Swaps the last two axes.
template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + to_string(x.shape()));
  const Index m = x.dim(-2), n = x.dim(-1);
  const Index batches = x.size() / std::max<Index>(m * n, 1);
  Shape s = x.shape();
  std::swap(s[s.size() - 1], s[s.size() - 2]);
  Tensor<Scalar> out = Tensor<Scalar>::zeros(s);
  for (Index i = 0; i < batches; ++i) {
    MatrixMap<Scalar>(out.mutable_value().data() + i * m * n, n, m) =
        ConstMatrixMap<Scalar>(x.value().data() + i * m * n, m, n).transpose();
  }
  if (detail::should_record({&x})) {
    detail::record("transpose", out, [x, m, n, batches](const Vector<Scalar>& g) mutable {
      auto& dx = x.mutable_grad();
      for (Index i = 0; i < batches; ++i) {
        MatrixMap<Scalar>(dx.data() + i * m * n, m, n) += ConstMatrixMap<Scalar>(g.data() + i * m * n, n, m).transpose();
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Tensor<Scalar> big = detail::binary_broadcast_check(a, b, "add");
  Tensor<Scalar> out = Tensor<Scalar>::zeros(big.shape());
  if (a.size() == b.size()) {
    out.mutable_value() = a.value() + b.value();
  } else if (b.size() == 1) {
    out.mutable_value() = a.value().array() + b.value()[0];
  } else {
    out.mutable_value() = b.value().array() + a.value()[0];
  }
  detail::check_finite("add", out);
  if (detail::should_record({&a, &b})) {
    detail::record("add", out, [a, b](const Vector<Scalar>& g) mutable {
      for (auto* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        if (t->size() == g.size()) t->accumulate_grad(g);
        else t->mutable_grad()[0] += g.sum();
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Tensor<Scalar> big = detail::binary_broadcast_check(a, b, "sub");
  Tensor<Scalar> out = Tensor<Scalar>::zeros(big.shape());
  if (a.size() == b.size()) {
    out.mutable_value() = a.value() - b.value();
  } else if (b.size() == 1) {
    out.mutable_value() = a.value().array() - b.value()[0];
  } else {
    out.mutable_value() = a.value()[0] - b.value().array();
  }
  detail::check_finite("sub", out);
  if (detail::should_record({&a, &b})) {
    detail::record("sub", out, [a, b](const Vector<Scalar>& g) mutable {
      if (a.requires_grad()) {
        if (a.size() == g.size()) a.accumulate_grad(g);
        else a.mutable_grad()[0] += g.sum();
      }
      if (b.requires_grad()) {
        if (b.size() == g.size()) b.accumulate_grad(-g);
        else b.mutable_grad()[0] -= g.sum();
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Tensor<Scalar> big = detail::binary_broadcast_check(a, b, "mul");
  Tensor<Scalar> out = Tensor<Scalar>::zeros(big.shape());
  if (a.size() == b.size()) {
    out.mutable_value() = a.value().cwiseProduct(b.value());
  } else if (b.size() == 1) {
    out.mutable_value() = a.value() * b.value()[0];
  } else {
    out.mutable_value() = b.value() * a.value()[0];
  }
  detail::check_finite("mul", out);
  if (detail::should_record({&a, &b})) {
    detail::record("mul", out, [a, b](const Vector<Scalar>& g) mutable {
      auto route = [&g](const Tensor<Scalar>& self, const Tensor<Scalar>& other) {
        if (!self.requires_grad()) return;
        if (self.size() == other.size()) self.accumulate_grad(g.cwiseProduct(other.value()));
        else if (self.size() == 1) self.mutable_grad()[0] += g.dot(other.value());
        else self.accumulate_grad(g * other.value()[0]);
      };
      route(a, b);
      route(b, a);
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Tensor<Scalar> big = detail::binary_broadcast_check(a, b, "div");
  Tensor<Scalar> out = Tensor<Scalar>::zeros(big.shape());
  if (a.size() == b.size()) {
    out.mutable_value() = a.value().cwiseQuotient(b.value());
  } else if (b.size() == 1) {
    out.mutable_value() = a.value() / b.value()[0];
  } else {
    out.mutable_value() = a.value()[0] * b.value().array().inverse();
  }
  detail::check_finite("div", out);
  if (detail::should_record({&a, &b})) {
    detail::record("div", out, [a, b, out](const Vector<Scalar>& g) mutable {
      // d(a/b)/da = 1/b, d(a/b)/db = -out/b
      const auto binv = [&](Index i) { return Scalar(1) / b.value()[b.size() == 1 ? 0 : i]; };
      const Index n = g.size();
      if (a.requires_grad()) {
        auto& ga = a.mutable_grad();
        for (Index i = 0; i < n; ++i) ga[a.size() == 1 ? 0 : i] += g[i] * binv(i);
      }
      if (b.requires_grad()) {
        auto& gb = b.mutable_grad();
        for (Index i = 0; i < n; ++i) gb[b.size() == 1 ? 0 : i] -= g[i] * out.value()[i] * binv(i);
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor) {
  Tensor<Scalar> out(x.shape(), x.value() * factor);
  detail::check_finite("scale", out);
  if (detail::should_record({&x})) {
    detail::record("scale", out, [x, factor](const Vector<Scalar>& g) mutable { x.accumulate_grad(g * factor); });
  }
  return out;
}

/// Adds `bias` (shape [n]) to every row of `x` (shape [.., n]).
template <typename Scalar>
Tensor<Scalar> add_bias(const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
  if (bias.size() != x.cols()) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " vs input " + to_string(x.shape()));
  }
  Tensor<Scalar> out(x.shape(), x.value());
  out.mutable_matrix().rowwise() += bias.value().transpose();
  detail::check_finite("add_bias", out);
  if (detail::should_record({&x, &bias})) {
    detail::record("add_bias", out, [x, bias, rows = x.rows(), cols = x.cols()](const Vector<Scalar>& g) mutable {
      x.accumulate_grad(g);
      if (bias.requires_grad()) bias.mutable_grad() += ConstMatrixMap<Scalar>(g.data(), rows, cols).colwise().sum().transpose();
    });
  }
  return out;
}

namespace detail {
template <typename Scalar>
constexpr Scalar gelu_c = Scalar(0.7978845608028654);  // sqrt(2/pi)
template <typename Scalar>
constexpr Scalar gelu_a = Scalar(0.044715);
}  // namespace detail

/// GELU, tanh approximation.
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
  using detail::gelu_a;
  using detail::gelu_c;
  const auto xa = x.value().array();
  const Eigen::Array<Scalar, Eigen::Dynamic, 1> t = (gelu_c<Scalar> * (xa + gelu_a<Scalar> * xa.cube())).tanh();
  Tensor<Scalar> out(x.shape(), (Scalar(0.5) * xa * (Scalar(1) + t)).matrix());
  detail::check_finite("gelu", out);
  if (detail::should_record({&x})) {
    detail::record("gelu", out, [x, t](const Vector<Scalar>& g) mutable {
      const auto xv = x.value().array();
      const auto dt = (Scalar(1) - t.square()) * gelu_c<Scalar> * (Scalar(1) + Scalar(3) * gelu_a<Scalar> * xv.square());
      x.accumulate_grad((g.array() * (Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * xv * dt)).matrix());
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), x.value().cwiseMax(Scalar(0)));
  if (detail::should_record({&x})) {
    detail::record("relu", out, [x](const Vector<Scalar>& g) mutable {
      x.accumulate_grad((x.value().array() > Scalar(0)).select(g, Vector<Scalar>::Zero(g.size())));
    });
  }
  return out;
}

/// Numerically stable softmax along `axis` (max-subtracted).
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, Index axis = -1) {
  const Index ax = x.normalize_axis(axis);
  const auto sp = detail::split_at(x.shape(), ax);
  Tensor<Scalar> out = Tensor<Scalar>::zeros(x.shape());
  if (!x.value().allFinite()) throw NumericalError("softmax: non-finite input");
  if (sp.inner == 1) {
    ConstMatrixMap<Scalar> X(x.value().data(), sp.outer, sp.extent);
    MatrixMap<Scalar> Y(out.mutable_value().data(), sp.outer, sp.extent);
    Y = (X.colwise() - X.rowwise().maxCoeff()).array().exp().matrix();
    Y.array().colwise() /= Y.rowwise().sum().array();
  } else {
    for (Index o = 0; o < sp.outer; ++o) {
      for (Index i = 0; i < sp.inner; ++i) {
        const Index base = o * sp.extent * sp.inner + i;
        Scalar mx = x.value()[base];
        for (Index e = 1; e < sp.extent; ++e) mx = std::max(mx, x.value()[base + e * sp.inner]);
        Scalar total = 0;
        for (Index e = 0; e < sp.extent; ++e) {
          const Scalar v = std::exp(x.value()[base + e * sp.inner] - mx);
          out.mutable_value()[base + e * sp.inner] = v;
          total += v;
        }
        for (Index e = 0; e < sp.extent; ++e) out.mutable_value()[base + e * sp.inner] /= total;
      }
    }
  }
  if (detail::should_record({&x})) {
    detail::record("softmax", out, [x, out, sp](const Vector<Scalar>& g) mutable {
      auto& dx = x.mutable_grad();
      const auto& y = out.value();
      // dx = y * (g - sum(g * y)) along the axis
      if (sp.inner == 1) {
        ConstMatrixMap<Scalar> Y(y.data(), sp.outer, sp.extent);
        ConstMatrixMap<Scalar> G(g.data(), sp.outer, sp.extent);
        const Vector<Scalar> dots = Y.cwiseProduct(G).rowwise().sum();
        MatrixMap<Scalar>(dx.data(), sp.outer, sp.extent).array() +=
            Y.array() * (G.colwise() - dots).array();
        return;
      }
      for (Index o = 0; o < sp.outer; ++o) {
        for (Index i = 0; i < sp.inner; ++i) {
          const Index base = o * sp.extent * sp.inner + i;
          Scalar dot = 0;
          for (Index e = 0; e < sp.extent; ++e) dot += g[base + e * sp.inner] * y[base + e * sp.inner];
          for (Index e = 0; e < sp.extent; ++e) {
            const Index j = base + e * sp.inner;
            dx[j] += y[j] * (g[j] - dot);
          }
        }
      }
    });
  }
  return out;
}

/// Normalizes each last-axis row to zero mean, unit (population) variance,
/// then applies gamma/beta.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                          Scalar eps = Scalar(1e-5)) {
  const Index d = x.cols();
  if (d < 1 || gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: input " + to_string(x.shape()) + " with gamma " + to_string(gamma.shape()) +
                         " and beta " + to_string(beta.shape()));
  }
  if (!(eps > 0)) throw DimensionError("layer_norm: eps must be positive");
  const Index rows = x.rows();
  ConstMatrixMap<Scalar> X(x.value().data(), rows, d);
  const Vector<Scalar> mean = X.rowwise().mean();
  Matrix<Scalar> xhat = X.colwise() - mean;
  const Vector<Scalar> inv_std =
      ((xhat.array().square().rowwise().sum() / Scalar(d)) + eps).rsqrt().matrix();
  xhat.array().colwise() *= inv_std.array();
  Tensor<Scalar> out = Tensor<Scalar>::zeros(x.shape());
  MatrixMap<Scalar> Y(out.mutable_value().data(), rows, d);
  Y = (xhat.array().rowwise() * gamma.value().transpose().array()).rowwise() + beta.value().transpose().array();
  detail::check_finite("layer_norm", out);
  if (detail::should_record({&x, &gamma, &beta})) {
    detail::record("layer_norm", out,
                   [x, gamma, beta, xhat = std::move(xhat), inv_std, rows, d](const Vector<Scalar>& g) mutable {
                     ConstMatrixMap<Scalar> G(g.data(), rows, d);
                     if (gamma.requires_grad()) gamma.mutable_grad() += G.cwiseProduct(xhat).colwise().sum().transpose();
                     if (beta.requires_grad()) beta.mutable_grad() += G.colwise().sum().transpose();
                     if (x.requires_grad()) {
                       const Matrix<Scalar> dxhat = G.array().rowwise() * gamma.value().transpose().array();
                       const Vector<Scalar> m1 = dxhat.rowwise().mean();
                       const Vector<Scalar> m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
                       Matrix<Scalar> dx = dxhat.colwise() - m1;
                       dx -= (xhat.array().colwise() * m2.array()).matrix();
                       dx.array().colwise() *= inv_std.array();
                       MatrixMap<Scalar>(x.mutable_grad().data(), rows, d) += dx;
                     }
                   });
  }
  return out;
}

/// Concatenates along `axis`; all other extents must agree.
template <typename Scalar>
Tensor<Scalar> concat(std::span<const Tensor<Scalar>> parts, Index axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Index ax = parts[0].normalize_axis(axis);
  Shape shape = parts[0].shape();
  Index total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = shape;
    if (a.size() != b.size()) throw DimensionError("concat: rank mismatch " + to_string(a) + " vs " + to_string(b));
    a[static_cast<std::size_t>(ax)] = b[static_cast<std::size_t>(ax)] = 0;
    if (a != b) throw DimensionError("concat: incompatible shapes " + to_string(p.shape()) + " vs " + to_string(shape));
    total += p.dim(ax);
  }
  shape[static_cast<std::size_t>(ax)] = total;
  Tensor<Scalar> out = Tensor<Scalar>::zeros(shape);
  const auto sp = detail::split_at(shape, ax);
  std::vector<Index> widths;
  Index offset = 0;
  for (const auto& p : parts) {
    const Index w = p.dim(ax) * sp.inner;
    for (Index o = 0; o < sp.outer; ++o) {
      out.mutable_value().segment(o * total * sp.inner + offset, w) = p.value().segment(o * w, w);
    }
    widths.push_back(w);
    offset += w;
  }
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (any && Tape<Scalar>::active()) {
    std::vector<Tensor<Scalar>> inputs(parts.begin(), parts.end());
    detail::record("concat", out, [inputs, widths, sp, row = total * sp.inner](const Vector<Scalar>& g) mutable {
      Index off = 0;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Index w = widths[i];
        if (inputs[i].requires_grad()) {
          auto& gi = inputs[i].mutable_grad();
          for (Index o = 0; o < sp.outer; ++o) gi.segment(o * w, w) += g.segment(o * row + off, w);
        }
        off += w;
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat(std::initializer_list<Tensor<Scalar>> parts, Index axis) {
  return concat(std::span<const Tensor<Scalar>>(parts.begin(), parts.size()), axis);
}

/// Contiguous sub-range [start, start+length) along `axis`.
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, Index axis, Index start, Index length) {
  const Index ax = x.normalize_axis(axis);
  if (start < 0 || length < 0 || start + length > x.dim(ax)) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for axis " + std::to_string(ax) + " of " + to_string(x.shape()));
  }
  const auto sp = detail::split_at(x.shape(), ax);
  Shape shape = x.shape();
  shape[static_cast<std::size_t>(ax)] = length;
  Tensor<Scalar> out = Tensor<Scalar>::zeros(shape);
  const Index src_row = sp.extent * sp.inner, w = length * sp.inner, off = start * sp.inner;
  for (Index o = 0; o < sp.outer; ++o) {
    out.mutable_value().segment(o * w, w) = x.value().segment(o * src_row + off, w);
  }
  if (detail::should_record({&x})) {
    detail::record("slice", out, [x, sp, src_row, w, off](const Vector<Scalar>& g) mutable {
      auto& dx = x.mutable_grad();
      for (Index o = 0; o < sp.outer; ++o) dx.segment(o * src_row + off, w) += g.segment(o * w, w);
    });
  }
  return out;
}

/// Selects rows of a matrix-shaped tensor (leading axes flattened).
template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& x, const std::vector<Index>& rows) {
  const Index cols = x.cols();
  Tensor<Scalar> out = Tensor<Scalar>::zeros({static_cast<Index>(rows.size()), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " + to_string(x.shape()));
    }
    out.mutable_value().segment(static_cast<Index>(i) * cols, cols) = x.value().segment(rows[i] * cols, cols);
  }
  if (detail::should_record({&x})) {
    detail::record("gather_rows", out, [x, rows, cols](const Vector<Scalar>& g) mutable {
      auto& dx = x.mutable_grad();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        dx.segment(rows[i] * cols, cols) += g.segment(static_cast<Index>(i) * cols, cols);
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  Tensor<Scalar> out = Tensor<Scalar>::scalar(x.value().sum());
  detail::check_finite("sum", out);
  if (detail::should_record({&x})) {
    detail::record("sum", out, [x](const Vector<Scalar>& g) mutable {
      x.mutable_grad().array() += g[0];
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  if (x.size() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), Scalar(1) / Scalar(x.size()));
}

/// Inverted dropout: in training, zeroes each entry with probability `rate`
/// and scales survivors by 1/(1-rate); identity otherwise.
template <typename Scalar, typename Rng>
Tensor<Scalar> dropout(const Tensor<Scalar>& x, double rate, bool train, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (!train || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const Scalar kept = Scalar(1) / Scalar(1.0 - rate);
  Vector<Scalar> mask(x.size());
  for (Index i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? kept : Scalar(0);
  Tensor<Scalar> out(x.shape(), x.value().cwiseProduct(mask));
  if (detail::should_record({&x})) {
    detail::record("dropout", out, [x, mask = std::move(mask)](const Vector<Scalar>& g) mutable {
      x.accumulate_grad(g.cwiseProduct(mask));
    });
  }
  return out;
}

}  // namespace dat

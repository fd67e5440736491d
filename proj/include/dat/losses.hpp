#pragma once

// Differentiable training losses over a selected subset of prediction rows
// (the supervised core frames).

#include <span>
#include <string>

#include "dat/ops.hpp"

namespace dat {

namespace detail {
template <typename Scalar>
Tensor<Scalar> selected_labels(const Vector<Scalar>& labels, std::span<const Index> rows) {
  Vector<Scalar> y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= labels.size()) throw DimensionError("loss: label row out of range");
    y[static_cast<Index>(i)] = labels[rows[i]];
  }
  return Tensor<Scalar>({static_cast<Index>(rows.size()), 1}, std::move(y));
}
}  // namespace detail

/// Mean squared error over `rows` of `pred` ([n x 1]) against `labels` (length n).
template <typename Scalar>
Tensor<Scalar> mse_loss(const Tensor<Scalar>& pred, const Vector<Scalar>& labels, std::span<const Index> rows) {
  if (pred.size() != labels.size()) {
    throw DimensionError("mse_loss: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (rows.empty()) throw DimensionError("mse_loss: mask selects no frames");
  const Tensor<Scalar> x = gather_rows(pred, std::vector<Index>(rows.begin(), rows.end()));
  const Tensor<Scalar> diff = sub(x, detail::selected_labels(labels, rows));
  return mean(mul(diff, diff));
}

/// 1 - CCC over `rows`, population moments, differentiable through the means
/// and variances of the predictions.
template <typename Scalar>
Tensor<Scalar> ccc_loss(const Tensor<Scalar>& pred, const Vector<Scalar>& labels, std::span<const Index> rows) {
  if (pred.size() != labels.size()) {
    throw DimensionError("ccc_loss: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (rows.size() < 2) throw DimensionError("ccc_loss needs at least two frames");
  const Tensor<Scalar> x = gather_rows(pred, std::vector<Index>(rows.begin(), rows.end()));
  const Tensor<Scalar> y = detail::selected_labels(labels, rows);
  const Scalar my = y.value().mean();
  const Tensor<Scalar> yc(y.shape(), (y.value().array() - my).matrix());
  const Scalar vy = yc.value().squaredNorm() / Scalar(yc.size());

  const Tensor<Scalar> mx = mean(x);
  const Tensor<Scalar> xc = sub(x, mx);
  const Tensor<Scalar> cov = mean(mul(xc, yc));
  const Tensor<Scalar> vx = mean(mul(xc, xc));
  const Tensor<Scalar> gap = sub(mx, Tensor<Scalar>::scalar(my));
  const Tensor<Scalar> denom = add(add(vx, mul(gap, gap)), Tensor<Scalar>::scalar(vy));
  return sub(Tensor<Scalar>::scalar(Scalar(1)), div(scale(cov, Scalar(2)), denom));
}

}  // namespace dat

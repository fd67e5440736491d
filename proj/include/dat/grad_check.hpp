#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dat/tensor.hpp"

namespace dat {

struct GradCheckOptions {
  double step = 1e-3;        // finite-difference step h
  double tolerance = 1e-4;   // pass threshold on max relative error
  Index samples = 0;         // coordinates to probe; 0 checks every coordinate
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  Index coordinates = 0;
  std::string worst;  // "<param>[<flat index>]" of the largest error
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

/// Compares taped gradients of the scalar `loss_fn` against the five-point
/// central difference (8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h. Relative error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// `loss_fn` must be deterministic (dropout off); it is called once under a
/// tape and four times per probed coordinate without one.
template <typename Scalar>
GradCheckResult grad_check(const std::function<Tensor<Scalar>()>& loss_fn, std::vector<Tensor<Scalar>> params,
                           const GradCheckOptions& options = {}, std::vector<std::string> names = {}) {
  names.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (names[i].empty()) names[i] = "param" + std::to_string(i);
    if (!params[i].requires_grad()) throw std::invalid_argument("grad_check: " + names[i] + " does not require grad");
    params[i].zero_grad();
  }

  std::vector<Vector<Scalar>> analytic;
  {
    Tape<Scalar> tape;
    TapeScope<Scalar> scope(tape);
    tape.backward(loss_fn());
  }
  for (auto& p : params) analytic.push_back(p.has_grad() ? p.grad() : Vector<Scalar>::Zero(p.size()));

  std::vector<std::pair<std::size_t, Index>> coords;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (Index j = 0; j < params[i].size(); ++j) coords.emplace_back(i, j);
  if (options.samples > 0 && options.samples < static_cast<Index>(coords.size())) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(options.samples));
  }

  auto evaluate = [&](std::size_t i, Index j) {
    const double v = static_cast<double>(loss_fn().item());
    if (!std::isfinite(v)) {
      throw NumericalError("grad_check: non-finite loss at " + names[i] + "[" + std::to_string(j) + "]");
    }
    return v;
  };

  GradCheckResult result;
  for (const auto& [i, j] : coords) {
    Scalar& slot = params[i].mutable_value()[j];
    const Scalar saved = slot;
    const double h = options.step;
    auto at = [&](double offset) {
      slot = static_cast<Scalar>(saved + offset);
      return evaluate(i, j);
    };
    const double near = at(h) - at(-h);
    const double far = at(2.0 * h) - at(-2.0 * h);
    slot = saved;
    const double numeric = (8.0 * near - far) / (12.0 * h);
    const double exact = static_cast<double>(analytic[i][j]);
    if (!std::isfinite(exact)) {
      throw NumericalError("grad_check: non-finite gradient at " + names[i] + "[" + std::to_string(j) + "]");
    }
    const double rel = std::abs(exact - numeric) / std::max({std::abs(exact), std::abs(numeric), 1e-8});
    if (rel > result.max_rel_err || result.worst.empty()) {
      result.max_rel_err = std::max(result.max_rel_err, rel);
      if (rel >= result.max_rel_err) {
        result.worst = names[i] + "[" + std::to_string(j) + "]";
        result.worst_analytic = exact;
        result.worst_numeric = numeric;
      }
    }
    ++result.coordinates;
  }
  result.passed = result.max_rel_err < options.tolerance;
  return result;
}

}  // namespace dat

#pragma once

#include <cmath>
#include <functional>

#include "a2/error.hpp"
#include "a2/tape.hpp"
#include "a2/tensor.hpp"

namespace a2 {

// Scalar-valued tensor function. Called with a tape for the analytic pass
// and with tape == nullptr for plain value evaluations.
template <typename T>
using ScalarFn = std::function<Tensor<T>(Tape<T>*, Tensor<T>&)>;

// Central finite-difference check of the analytic gradient of f at x.
// Returns max over coordinates of
//   |analytic - (f(x+h e) - f(x-h e)) / 2h| / max(1, |analytic|).
template <typename T>
double finite_diff_check(const ScalarFn<T>& f, const Tensor<T>& x, T step) {
  Tensor<T> xt = x.clone();
  Tape<T> tape;
  tape.watch(xt);
  Tensor<T> loss = f(&tape, xt);
  if (!loss.is_scalar()) {
    throw ContractError("finite_diff_check: f must return a scalar, got " + shape_str(loss.shape()));
  }
  if (!std::isfinite(static_cast<double>(loss.item()))) {
    throw NumericError("finite_diff_check: f(x) is not finite");
  }
  tape.backward(loss);
  const Tensor<T>* analytic = tape.grad(xt);
  Tensor<T> ga = analytic ? *analytic : Tensor<T>(x.shape());  // disconnected -> zero gradient

  double max_err = 0.0;
  Tensor<T> xp = x.clone();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T orig = xp.data()[i];
    xp.data()[i] = orig + step;
    const T fp = f(nullptr, xp).item();
    xp.data()[i] = orig - step;
    const T fm = f(nullptr, xp).item();
    xp.data()[i] = orig;
    if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm))) {
      throw NumericError("finite_diff_check: perturbed evaluation is not finite");
    }
    const double numeric = (static_cast<double>(fp) - static_cast<double>(fm)) /
                           (2.0 * static_cast<double>(step));
    const double a = static_cast<double>(ga.data()[i]);
    const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace a2

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>

#include "stbn/autograd.hpp"

namespace stbn {

inline constexpr float kLogVarMin = -10.0f;
inline constexpr float kLogVarMax = 4.0f;

/// Predicted clean-signal distribution, both (N, C, H, W). log_var is stored clamped.
struct GaussianPrediction {
  Tensor mu;
  Tensor log_var;
};

struct GaussianVars {
  Var mu;
  Var log_var;  // clamped to [kLogVarMin, kLogVarMax]

  GaussianPrediction values() const { return {mu.value(), log_var.value()}; }
};

/// Splits a gaussian_params head output (N, 2C, H, W) into mean and clamped log-variance.
GaussianVars split_gaussian(const Var& head_output, int image_channels);

// Scalar kernels, templated so tests can evaluate them in double precision.
// Per pixel: 0.5 * [(y - mu)^2 / s2 + log s2], s2 = exp(log_var) + sigma^2.

template <class T>
T nll_pixel(T mu, T log_var, T y, T sigma2) {
  const T s2 = std::exp(log_var) + sigma2;
  const T r = y - mu;
  return T(0.5) * (r * r / s2 + std::log(s2));
}

template <class T>
T nll_mean(const T* mu, const T* log_var, const T* y, std::size_t n, T sigma2) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += nll_pixel(mu[i], log_var[i], y[i], sigma2);
  return s / static_cast<T>(n);
}

template <class T>
T l2_mean(const T* pred, const T* target, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s / static_cast<T>(n);
}

/// Mean Gaussian negative log-likelihood of the noisy pixels (constant dropped).
/// `log_var` is used as given (callers clamp it through split_gaussian).
/// Throws on non-finite predictions or shape mismatch.
Var nll_loss(const Var& mu, const Var& log_var, const Tensor& noisy, double sigma);
double nll_loss(const GaussianPrediction& pred, const Tensor& noisy, double sigma);

/// Mean squared error against the noisy target.
Var l2_blind_loss(const Var& pred, const Tensor& noisy_target);

/// Per-pixel conjugate posterior mean (v*y + sigma^2*mu) / (v + sigma^2), v = exp(log_var).
/// Throws if sigma is missing.
Tensor posterior_mean(const GaussianPrediction& pred, const Tensor& noisy, std::optional<double> sigma);

}  // namespace stbn

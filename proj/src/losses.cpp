#include "stbn/losses.hpp"

#include <stdexcept>

namespace stbn {

GaussianVars split_gaussian(const Var& head_output, int image_channels) {
  if (head_output.value().c() != 2 * image_channels)
    throw std::invalid_argument("split_gaussian: expected " + std::to_string(2 * image_channels) + " channels, got " +
                                head_output.value().shape_string());
  return {slice_channels(head_output, 0, image_channels),
          clamp(slice_channels(head_output, image_channels, image_channels), kLogVarMin, kLogVarMax)};
}

namespace {

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw std::runtime_error(std::string(what) + ": non-finite prediction");
}

}  // namespace

Var nll_loss(const Var& mu, const Var& log_var, const Tensor& noisy, double sigma) {
  require_same_shape(mu.value(), noisy, "nll_loss");
  require_same_shape(log_var.value(), noisy, "nll_loss");
  check_finite(mu.value(), "nll_loss");
  check_finite(log_var.value(), "nll_loss");
  if (!(sigma > 0)) throw std::invalid_argument("nll_loss: sigma must be > 0");
  const std::size_t n = noisy.size();
  const double sigma2 = sigma * sigma;
  double value = 0;
  for (std::size_t i = 0; i < n; ++i) value += nll_pixel<double>(mu.value()[i], log_var.value()[i], noisy[i], sigma2);
  value /= static_cast<double>(n);
  Tensor out = Tensor::scalar(static_cast<float>(value));
  return Var::make(std::move(out), {mu, log_var}, [noisy, sigma2](Node& node) {
    const Tensor& m = node.inputs[0]->value;
    const Tensor& lv = node.inputs[1]->value;
    const std::size_t count = m.size();
    const double g = node.grad[0] / static_cast<double>(count);
    const bool want_mu = node.inputs[0]->requires_grad;
    const bool want_lv = node.inputs[1]->requires_grad;
    Tensor* gm = want_mu ? &node.inputs[0]->grad_buffer() : nullptr;
    Tensor* gl = want_lv ? &node.inputs[1]->grad_buffer() : nullptr;
    for (std::size_t i = 0; i < count; ++i) {
      const double v = std::exp(static_cast<double>(lv[i]));
      const double s2 = v + sigma2;
      const double r = noisy[i] - static_cast<double>(m[i]);
      if (gm) (*gm)[i] += static_cast<float>(g * (-r / s2));
      if (gl) (*gl)[i] += static_cast<float>(g * 0.5 * (1.0 / s2 - r * r / (s2 * s2)) * v);
    }
  });
}

double nll_loss(const GaussianPrediction& pred, const Tensor& noisy, double sigma) {
  NoGradGuard no_grad;
  return nll_loss(Var(pred.mu), Var(pred.log_var), noisy, sigma).value()[0];
}

Var l2_blind_loss(const Var& pred, const Tensor& noisy_target) {
  require_same_shape(pred.value(), noisy_target, "l2_blind_loss");
  check_finite(pred.value(), "l2_blind_loss");
  return mean_sq_diff(pred, noisy_target);
}

Tensor posterior_mean(const GaussianPrediction& pred, const Tensor& noisy, std::optional<double> sigma) {
  if (!sigma || !(*sigma >= 0)) throw std::invalid_argument("posterior_mean: noise sigma is required");
  require_same_shape(pred.mu, noisy, "posterior_mean");
  require_same_shape(pred.log_var, noisy, "posterior_mean");
  const double sigma2 = *sigma * *sigma;
  Tensor out = Tensor::zeros_like(noisy);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::exp(static_cast<double>(pred.log_var[i]));
    if (std::isinf(v)) {
      out[i] = noisy[i];
      continue;
    }
    if (v + sigma2 == 0.0) {
      out[i] = pred.mu[i];
      continue;
    }
    const double w = v / (v + sigma2);  // weight on the noisy observation
    out[i] = static_cast<float>(w * noisy[i] + (1.0 - w) * pred.mu[i]);
  }
  return out;
}

}  // namespace stbn

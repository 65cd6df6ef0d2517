#include "stbn/optim.hpp"

#include <cmath>

namespace stbn {

Adam::Adam(ParameterList params, double learning_rate, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros_like(p.var.value()));
    v_.push_back(Tensor::zeros_like(p.var.value()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Var& p = params_[k].var;
    const Tensor& g = p.grad();
    if (g.empty()) continue;
    Tensor& w = p.mutable_value();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
      v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i]);
      w[i] -= static_cast<float>(lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_));
    }
  }
}

}  // namespace stbn

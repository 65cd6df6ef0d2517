#pragma once

#include <vector>

#include "stbn/blindspot.hpp"

namespace stbn {

/// Adam with bias correction and no weight decay. Parameters whose gradient is empty
/// after backward (not reached this step) are left untouched.
class Adam {
 public:
  explicit Adam(ParameterList params, double learning_rate = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void zero_grad();
  void step();
  long steps() const { return t_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  ParameterList params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace stbn

#include "stbn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace stbn {

Tensor::Tensor(int n, int c, int h, int w, float fill) : n_(n), c_(c), h_(h), w_(w) {
  if (n < 0 || c < 0 || h < 0 || w < 0) throw std::invalid_argument("Tensor: negative dimension");
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

std::string Tensor::shape_string() const {
  return "(" + std::to_string(n_) + "," + std::to_string(c_) + "," + std::to_string(h_) + "," +
         std::to_string(w_) + ")";
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
  require_same_shape(*this, o, "Tensor::operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(float s) {
  for (float& v : data_) v *= s;
  return *this;
}

Tensor Tensor::batch_slice(int begin, int count) const {
  if (begin < 0 || count < 0 || begin + count > n_) throw std::out_of_range("Tensor::batch_slice");
  Tensor out(count, c_, h_, w_);
  const std::size_t item = static_cast<std::size_t>(c_) * h_ * w_;
  std::memcpy(out.data(), data() + begin * item, count * item * sizeof(float));
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

float Tensor::max_abs() const {
  float m = 0.0f;
  for (float v : data_) m = std::max(m, std::fabs(v));
  return m;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                                b.shape_string());
  }
}

}  // namespace stbn

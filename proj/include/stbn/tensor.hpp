#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace stbn {

/// Dense float tensor in NCHW order. Frame batches, feature maps, flows
/// (channel 0 = dx, channel 1 = dy) and parameters all use this layout.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, float fill = 0.0f);

  static Tensor scalar(float v) { return Tensor(1, 1, 1, 1, v); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.n(), t.c(), t.h(), t.w()); }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t plane() const { return static_cast<std::size_t>(h_) * w_; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> span() { return data_; }
  std::span<const float> span() const { return data_; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }
  float& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the start of plane (n, c).
  float* plane_ptr(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const float* plane_ptr(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  std::string shape_string() const;

  void fill(float v);
  Tensor& operator+=(const Tensor& o);
  Tensor& operator*=(float s);

  /// Sub-batch [begin, begin + count) along N.
  Tensor batch_slice(int begin, int count) const;

  bool all_finite() const;
  float max_abs() const;

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<float> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace stbn

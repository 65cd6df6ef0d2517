#include "stbn/metrics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace stbn {

double psnr_from_mse(double mse, double peak) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a, b, "psnr");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return psnr_from_mse(s / static_cast<double>(a.size()), peak);
}

double psnr(const VideoSequence& a, const VideoSequence& b, double peak) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: sequences differ in shape");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    s += d * d;
  }
  return psnr_from_mse(s / static_cast<double>(a.size()), peak);
}

namespace {

constexpr int kWin = 11;
constexpr int kRadius = kWin / 2;

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> w{};
  double s = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double x = i - kRadius;
    w[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
    s += w[i];
  }
  for (double& v : w) v /= s;
  return w;
}

std::vector<double> channel_mean(const Tensor& t) {
  std::vector<double> g(t.plane(), 0.0);
  for (int c = 0; c < t.c(); ++c)
    for (std::size_t i = 0; i < t.plane(); ++i) g[i] += t.plane_ptr(0, c)[i];
  for (double& v : g) v /= t.c();
  return g;
}

// Separable valid-mode filtering: (H, W) -> (H - 10, W - 10).
std::vector<double> filter_valid(const std::vector<double>& in, int H, int W) {
  static const auto w = gaussian_window();
  const int Ho = H - 2 * kRadius, Wo = W - 2 * kRadius;
  std::vector<double> rows(static_cast<std::size_t>(H) * Wo);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < Wo; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWin; ++k) s += w[k] * in[static_cast<std::size_t>(y) * W + x + k];
      rows[static_cast<std::size_t>(y) * Wo + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(Ho) * Wo);
  for (int y = 0; y < Ho; ++y)
    for (int x = 0; x < Wo; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWin; ++k) s += w[k] * rows[static_cast<std::size_t>(y + k) * Wo + x];
      out[static_cast<std::size_t>(y) * Wo + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ssim");
  if (a.n() != 1) throw std::invalid_argument("ssim: expects a single image");
  if (a.h() < kWin || a.w() < kWin) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const int H = a.h(), W = a.w();
  const auto x = channel_mean(a);
  const auto y = channel_mean(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, H, W), my = filter_valid(y, H, W);
  const auto mxx = filter_valid(xx, H, W), myy = filter_valid(yy, H, W), mxy = filter_valid(xy, H, W);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cxy = mxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace stbn

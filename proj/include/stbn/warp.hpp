#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stbn/autograd.hpp"
#include "stbn/tensor.hpp"

namespace stbn {

enum class Interpolation { nearest, bilinear };
enum class FlowDirection { forward, backward };

Interpolation parse_interpolation(const std::string& s);
std::string to_string(Interpolation interp);

/// Dense displacement (dx, dy) in pixels for one frame pair, stored (1, 2, H, W).
struct FlowField {
  Tensor vectors;
  FlowDirection direction = FlowDirection::forward;
  int source_frame = 0;
  int target_frame = 0;

  int height() const { return vectors.h(); }
  int width() const { return vectors.w(); }
  /// Finite values with |displacement| <= max(H, W).
  void validate() const;

  static FlowField zeros(int h, int w);
  static FlowField uniform(int h, int w, float dx, float dy);
};

/// Backward warping: out(p) = in(p + flow(p)), sampled with clamp-to-edge borders.
/// Nearest mode rounds each coordinate half away from zero and copies exactly one source value.
/// `flow` is (N, 2, H, W) or (1, 2, H, W) broadcast over the batch.
Tensor warp(const Tensor& image, const Tensor& flow, Interpolation interp);
Tensor warp(const Tensor& image, const FlowField& flow, Interpolation interp);

/// Differentiable in the image only; the flow is a constant (nearest sampling is piecewise constant in it).
Var warp_nearest(const Var& image, const Tensor& flow);
/// Differentiable in both the image and the flow.
Var warp_bilinear(const Var& image, const Var& flow);

struct WarpReport {
  Interpolation interpolation = Interpolation::nearest;
  double lag1_autocorr_x = 0.0;
  double lag1_autocorr_y = 0.0;
  double variance_ratio = 0.0;  // post / pre
  double ks_statistic = 0.0;    // against N(0, reference_sigma^2)
  double histogram_min = 0.0;
  double histogram_max = 0.0;
  std::vector<std::uint64_t> histogram;  // 64 equal bins over [-4 sigma, 4 sigma]
  std::size_t samples = 0;
};

inline constexpr int kHistogramBins = 64;

/// Warps an i.i.d. N(0, reference_sigma^2) noise field and measures how much of
/// its whiteness and marginal distribution survive.
WarpReport audit_noise_statistics(const Tensor& noise, const FlowField& flow, Interpolation interp,
                                  double reference_sigma);

/// Pearson correlation between horizontally (dx=1) or vertically (dy=1) adjacent samples.
double lag1_autocorrelation(const Tensor& x, bool horizontal);
double lag_autocorrelation(const Tensor& x, int lag, bool horizontal);

/// (1, 1, h, w) field of i.i.d. N(0, sigma^2) samples.
Tensor white_noise_field(int h, int w, double sigma, std::uint64_t seed);
/// Two-sided one-sample Kolmogorov-Smirnov distance to N(0, sigma^2).
double ks_statistic_normal(std::vector<double> samples, double sigma);

enum class FlowPattern { zero, fractional, random };
FlowPattern parse_flow_pattern(const std::string& s);
/// zero; uniform (0.5, 0.5); or a smooth random field (a few low-frequency sinusoids, amplitude ~3 px).
FlowField make_flow_pattern(FlowPattern pattern, int h, int w, std::uint64_t seed);

/// "STBNFLO1" magic, int32 H, int32 W, then H*W*2 little-endian float32 (dx, dy interleaved).
void save_flow_file(const FlowField& flow, const std::filesystem::path& path);
FlowField load_flow_file(const std::filesystem::path& path);

}  // namespace stbn

#include "stbn/warp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "stbn/binary_io.hpp"
#include "stbn/rng.hpp"

namespace stbn {

Interpolation parse_interpolation(const std::string& s) {
  if (s == "nearest") return Interpolation::nearest;
  if (s == "bilinear") return Interpolation::bilinear;
  throw std::invalid_argument("unknown interpolation '" + s + "' (expected nearest|bilinear)");
}

std::string to_string(Interpolation interp) { return interp == Interpolation::nearest ? "nearest" : "bilinear"; }

void FlowField::validate() const {
  if (vectors.c() != 2 || vectors.n() != 1) throw std::invalid_argument("FlowField: expected (1,2,H,W)");
  const float bound = static_cast<float>(std::max(vectors.h(), vectors.w()));
  for (float v : vectors.span()) {
    if (!std::isfinite(v)) throw std::invalid_argument("FlowField: non-finite displacement");
    if (std::fabs(v) > bound) throw std::invalid_argument("FlowField: displacement exceeds frame size");
  }
}

FlowField FlowField::zeros(int h, int w) { return FlowField{Tensor(1, 2, h, w)}; }

FlowField FlowField::uniform(int h, int w, float dx, float dy) {
  FlowField f{Tensor(1, 2, h, w)};
  std::fill(f.vectors.plane_ptr(0, 0), f.vectors.plane_ptr(0, 0) + f.vectors.plane(), dx);
  std::fill(f.vectors.plane_ptr(0, 1), f.vectors.plane_ptr(0, 1) + f.vectors.plane(), dy);
  return f;
}

namespace {

void check_flow(const Tensor& image, const Tensor& flow) {
  if (flow.c() != 2 || flow.h() != image.h() || flow.w() != image.w() || (flow.n() != 1 && flow.n() != image.n()))
    throw std::invalid_argument("warp: flow " + flow.shape_string() + " does not match image " +
                                image.shape_string());
  if (!flow.all_finite()) throw std::invalid_argument("warp: non-finite flow");
}

int flow_batch(const Tensor& flow, int b) { return flow.n() == 1 ? 0 : b; }

// Source index for nearest sampling, clamp-to-edge.
inline int nearest_index(int p, float d, int size) {
  const double bound = static_cast<double>(size) + 1.0;
  const long r = std::lround(std::clamp(static_cast<double>(d), -bound, bound));  // half away from zero
  return static_cast<int>(std::clamp<long>(p + r, 0, size - 1));
}

struct Bilerp {
  int x0, x1, y0, y1;
  float fx, fy;
};

inline Bilerp bilinear_taps(int x, int y, float dx, float dy, int W, int H) {
  const float sx = std::clamp(x + dx, -1.0f, static_cast<float>(W)), sy = std::clamp(y + dy, -1.0f, static_cast<float>(H));
  const float flx = std::floor(sx), fly = std::floor(sy);
  const int ix = static_cast<int>(flx), iy = static_cast<int>(fly);
  return {std::clamp(ix, 0, W - 1), std::clamp(ix + 1, 0, W - 1), std::clamp(iy, 0, H - 1),
          std::clamp(iy + 1, 0, H - 1), sx - flx, sy - fly};
}

}  // namespace

Tensor warp(const Tensor& image, const Tensor& flow, Interpolation interp) {
  check_flow(image, flow);
  const int N = image.n(), C = image.c(), H = image.h(), W = image.w();
  Tensor out(N, C, H, W);
  for (int b = 0; b < N; ++b) {
    const int fb = flow_batch(flow, b);
    const float* fx = flow.plane_ptr(fb, 0);
    const float* fy = flow.plane_ptr(fb, 1);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        if (interp == Interpolation::nearest) {
          const int sx = nearest_index(x, fx[p], W), sy = nearest_index(y, fy[p], H);
          for (int c = 0; c < C; ++c) out.at(b, c, y, x) = image.at(b, c, sy, sx);
        } else {
          const Bilerp t = bilinear_taps(x, y, fx[p], fy[p], W, H);
          for (int c = 0; c < C; ++c) {
            const float top = (1 - t.fx) * image.at(b, c, t.y0, t.x0) + t.fx * image.at(b, c, t.y0, t.x1);
            const float bot = (1 - t.fx) * image.at(b, c, t.y1, t.x0) + t.fx * image.at(b, c, t.y1, t.x1);
            out.at(b, c, y, x) = (1 - t.fy) * top + t.fy * bot;
          }
        }
      }
  }
  return out;
}

Tensor warp(const Tensor& image, const FlowField& flow, Interpolation interp) {
  return warp(image, flow.vectors, interp);
}

Var warp_nearest(const Var& image, const Tensor& flow) {
  Tensor out = warp(image.value(), flow, Interpolation::nearest);
  return Var::make(std::move(out), {image}, [flow](Node& n) {
    Tensor& g = n.inputs[0]->grad_buffer();
    const int N = g.n(), C = g.c(), H = g.h(), W = g.w();
    for (int b = 0; b < N; ++b) {
      const int fb = flow_batch(flow, b);
      const float* fx = flow.plane_ptr(fb, 0);
      const float* fy = flow.plane_ptr(fb, 1);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * W + x;
          const int sx = nearest_index(x, fx[p], W), sy = nearest_index(y, fy[p], H);
          for (int c = 0; c < C; ++c) g.at(b, c, sy, sx) += n.grad.at(b, c, y, x);
        }
    }
  });
}

Var warp_bilinear(const Var& image, const Var& flow) {
  Tensor out = warp(image.value(), flow.value(), Interpolation::bilinear);
  return Var::make(std::move(out), {image, flow}, [](Node& n) {
    const Tensor& img = n.inputs[0]->value;
    const Tensor& flw = n.inputs[1]->value;
    const bool need_img = n.inputs[0]->requires_grad;
    const bool need_flow = n.inputs[1]->requires_grad;
    const int N = img.n(), C = img.c(), H = img.h(), W = img.w();
    for (int b = 0; b < N; ++b) {
      const int fb = flow_batch(flw, b);
      const float* fx = flw.plane_ptr(fb, 0);
      const float* fy = flw.plane_ptr(fb, 1);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * W + x;
          const Bilerp t = bilinear_taps(x, y, fx[p], fy[p], W, H);
          float gdx = 0.0f, gdy = 0.0f;
          for (int c = 0; c < C; ++c) {
            const float go = n.grad.at(b, c, y, x);
            if (go == 0.0f) continue;
            const float v00 = img.at(b, c, t.y0, t.x0), v01 = img.at(b, c, t.y0, t.x1);
            const float v10 = img.at(b, c, t.y1, t.x0), v11 = img.at(b, c, t.y1, t.x1);
            if (need_img) {
              Tensor& g = n.inputs[0]->grad_buffer();
              g.at(b, c, t.y0, t.x0) += go * (1 - t.fx) * (1 - t.fy);
              g.at(b, c, t.y0, t.x1) += go * t.fx * (1 - t.fy);
              g.at(b, c, t.y1, t.x0) += go * (1 - t.fx) * t.fy;
              g.at(b, c, t.y1, t.x1) += go * t.fx * t.fy;
            }
            gdx += go * ((1 - t.fy) * (v01 - v00) + t.fy * (v11 - v10));
            gdy += go * ((1 - t.fx) * (v10 - v00) + t.fx * (v11 - v01));
          }
          if (need_flow) {
            Tensor& gf = n.inputs[1]->grad_buffer();
            gf.at(fb, 0, y, x) += gdx;
            gf.at(fb, 1, y, x) += gdy;
          }
        }
    }
  });
}

double lag_autocorrelation(const Tensor& x, int lag, bool horizontal) {
  if (lag < 0) throw std::invalid_argument("lag_autocorrelation: lag must be >= 0");
  const int dy = horizontal ? 0 : lag, dx = horizontal ? lag : 0;
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  std::size_t n = 0;
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y + dy < x.h(); ++y)
        for (int xx = 0; xx + dx < x.w(); ++xx) {
          const double a = x.at(b, c, y, xx);
          const double v = x.at(b, c, y + dy, xx + dx);
          sa += a, sb += v, saa += a * a, sbb += v * v, sab += a * v;
          ++n;
        }
  if (n < 2) return 0.0;
  const double ma = sa / n, mb = sb / n;
  const double cov = sab / n - ma * mb;
  const double va = saa / n - ma * ma, vb = sbb / n - mb * mb;
  if (va <= 0 || vb <= 0) return 0.0;
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

double lag1_autocorrelation(const Tensor& x, bool horizontal) { return lag_autocorrelation(x, 1, horizontal); }

Tensor white_noise_field(int h, int w, double sigma, std::uint64_t seed) {
  if (h < 1 || w < 1 || !(sigma > 0)) throw std::invalid_argument("white_noise_field: bad size or sigma");
  Tensor t(1, 1, h, w);
  const CounterRng rng(seed, CounterRng::hash_name("white_noise"));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(sigma * rng.normal(i));
  return t;
}

double ks_statistic_normal(std::vector<double> samples, double sigma) {
  if (samples.empty()) throw std::invalid_argument("ks_statistic_normal: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-samples[i] / (sigma * std::numbers::sqrt2));
    d = std::max({d, (i + 1) / n - cdf, cdf - i / n});
  }
  return d;
}

WarpReport audit_noise_statistics(const Tensor& noise, const FlowField& flow, Interpolation interp,
                                  double reference_sigma) {
  if (!(reference_sigma > 0)) throw std::invalid_argument("audit_noise_statistics: reference_sigma must be > 0");
  const auto [mn, mx] = std::minmax_element(noise.span().begin(), noise.span().end());
  if (noise.empty() || *mn == *mx) throw std::invalid_argument("audit_noise_statistics: degenerate (constant) input");

  const Tensor warped = warp(noise, flow.vectors, interp);
  auto variance = [](std::span<const float> v) {
    double s = 0, ss = 0;
    for (float f : v) s += f, ss += static_cast<double>(f) * f;
    const double m = s / v.size();
    return ss / v.size() - m * m;
  };

  WarpReport r;
  r.interpolation = interp;
  r.samples = warped.size();
  r.variance_ratio = variance(warped.span()) / variance(noise.span());
  r.lag1_autocorr_x = lag1_autocorrelation(warped, true);
  r.lag1_autocorr_y = lag1_autocorrelation(warped, false);
  r.ks_statistic = ks_statistic_normal(std::vector<double>(warped.span().begin(), warped.span().end()), reference_sigma);
  r.histogram_min = -4.0 * reference_sigma;
  r.histogram_max = 4.0 * reference_sigma;
  r.histogram.assign(kHistogramBins, 0);
  const double width = (r.histogram_max - r.histogram_min) / kHistogramBins;
  for (float v : warped.span()) {
    const int bin = static_cast<int>(std::floor((v - r.histogram_min) / width));
    if (bin >= 0 && bin < kHistogramBins) ++r.histogram[bin];
  }
  return r;
}

FlowPattern parse_flow_pattern(const std::string& s) {
  if (s == "zero") return FlowPattern::zero;
  if (s == "fractional") return FlowPattern::fractional;
  if (s == "random") return FlowPattern::random;
  throw std::invalid_argument("unknown flow pattern '" + s + "' (expected zero|fractional|random)");
}

FlowField make_flow_pattern(FlowPattern pattern, int h, int w, std::uint64_t seed) {
  switch (pattern) {
    case FlowPattern::zero:
      return FlowField::zeros(h, w);
    case FlowPattern::fractional:
      return FlowField::uniform(h, w, 0.5f, 0.5f);
    case FlowPattern::random: {
      const CounterRng rng(seed, CounterRng::hash_name("flow-pattern"));
      FlowField f = FlowField::zeros(h, w);
      std::uint64_t k = 0;
      for (int comp = 0; comp < 2; ++comp)
        for (int term = 0; term < 3; ++term) {
          const double amp = 1.0 * rng.uniform(k++);
          const double kx = 2.0 * std::numbers::pi * (0.5 + 1.5 * rng.uniform(k++)) / w;
          const double ky = 2.0 * std::numbers::pi * (0.5 + 1.5 * rng.uniform(k++)) / h;
          const double ph = 2.0 * std::numbers::pi * rng.uniform(k++);
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) f.vectors.at(0, comp, y, x) += static_cast<float>(amp * std::sin(kx * x + ky * y + ph));
        }
      return f;
    }
  }
  throw std::logic_error("make_flow_pattern: unreachable");
}

namespace {
constexpr char kFlowMagic[8] = {'S', 'T', 'B', 'N', 'F', 'L', 'O', '1'};
}

void save_flow_file(const FlowField& flow, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kFlowMagic, 8);
  const int H = flow.height(), W = flow.width();
  write_i32(os, H);
  write_i32(os, W);
  std::vector<float> interleaved(static_cast<std::size_t>(H) * W * 2);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      interleaved[(static_cast<std::size_t>(y) * W + x) * 2] = flow.vectors.at(0, 0, y, x);
      interleaved[(static_cast<std::size_t>(y) * W + x) * 2 + 1] = flow.vectors.at(0, 1, y, x);
    }
  write_f32_array(os, interleaved);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

FlowField load_flow_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kFlowMagic, 8) != 0) throw std::runtime_error("not an STBNFLO1 file: " + path.string());
  const int H = read_i32(is), W = read_i32(is);
  if (!is || H < 1 || W < 1 || static_cast<long long>(H) * W > (1LL << 28))
    throw std::runtime_error("corrupt STBNFLO1 header: " + path.string());
  std::vector<float> interleaved(static_cast<std::size_t>(H) * W * 2);
  read_f32_array(is, interleaved);
  if (!is) throw std::runtime_error("truncated STBNFLO1 file: " + path.string());
  FlowField f = FlowField::zeros(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      f.vectors.at(0, 0, y, x) = interleaved[(static_cast<std::size_t>(y) * W + x) * 2];
      f.vectors.at(0, 1, y, x) = interleaved[(static_cast<std::size_t>(y) * W + x) * 2 + 1];
    }
  return f;
}

}  // namespace stbn

#include "stbn/flow.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <unistd.h>

#include "stbn/png_io.hpp"

namespace stbn {

FlowBackend parse_flow_backend(const std::string& s) {
  if (s == "tiny_pyramid") return FlowBackend::tiny_pyramid;
  if (s == "classical_lk") return FlowBackend::classical_lk;
  if (s == "external_adapter") return FlowBackend::external_adapter;
  throw std::invalid_argument("unknown flow backend '" + s + "'");
}

std::string to_string(FlowBackend backend) {
  switch (backend) {
    case FlowBackend::tiny_pyramid: return "tiny_pyramid";
    case FlowBackend::classical_lk: return "classical_lk";
    case FlowBackend::external_adapter: return "external_adapter";
  }
  return "?";
}

void FlowEstimatorConfig::validate() const {
  if (pyramid_levels < 1) throw std::invalid_argument("FlowEstimatorConfig: pyramid_levels must be >= 1");
  if (iterations < 1) throw std::invalid_argument("FlowEstimatorConfig: iterations must be >= 1");
  if (window < 3 || window % 2 == 0) throw std::invalid_argument("FlowEstimatorConfig: window must be odd and >= 3");
  if (hidden_channels < 1) throw std::invalid_argument("FlowEstimatorConfig: hidden_channels must be >= 1");
  if (backend == FlowBackend::external_adapter && adapter_command.empty())
    throw std::invalid_argument("FlowEstimatorConfig: external_adapter needs adapter_command");
}

void DistillationConfig::validate() const {
  if (!(alpha > 0)) throw std::invalid_argument("DistillationConfig: alpha must be > 0");
  if (warmup_iterations < 0) throw std::invalid_argument("DistillationConfig: warmup must be >= 0");
  if (weight_decay_gamma < 0) throw std::invalid_argument("DistillationConfig: gamma must be >= 0");
  if (teacher_refresh_interval < 0)
    throw std::invalid_argument("DistillationConfig: teacher_refresh_interval must be >= 0");
}

FlowField estimate_flow(const Tensor& frame_a, const Tensor& frame_b, const FlowEstimator& estimator) {
  require_same_shape(frame_a, frame_b, "estimate_flow");
  if (frame_a.n() != 1) throw std::invalid_argument("estimate_flow: expects a single frame pair");
  return FlowField{estimator.estimate(frame_a, frame_b)};
}

namespace {

std::vector<Tensor> build_pyramid(const Tensor& x, int levels) {
  NoGradGuard no_grad;
  std::vector<Tensor> p{x};
  for (int l = 1; l < levels; ++l) p.push_back(avg_pool2(Var(p.back())).value());
  return p;
}

}  // namespace

// ---- tiny pyramid ---------------------------------------------------------------------

TinyPyramidFlow::TinyPyramidFlow(int image_channels, const FlowEstimatorConfig& config, const CounterRng& rng,
                                 const std::string& name)
    : config_(config), image_channels_(image_channels) {
  config_.validate();
  const int hc = config_.hidden_channels;
  const float g = act_.gain();
  for (int l = 0; l < config_.pyramid_levels; ++l) {
    const std::string p = name + ".level" + std::to_string(l);
    c1_.push_back(ConvLayer(p + ".c1", 2 * image_channels + 2, hc, square_taps(3, 1, false), 1, rng, g));
    c2_.push_back(ConvLayer(p + ".c2", hc, hc, square_taps(3, 1, false), 1, rng, g));
    c3_.push_back(ConvLayer(p + ".c3", hc, 2, square_taps(3, 1, false), 1, rng, 0.1f));
  }
}

Var TinyPyramidFlow::estimate_var(const Tensor& a, const Tensor& b, std::vector<Var>* levels) const {
  require_same_shape(a, b, "tiny_pyramid");
  if (a.c() != image_channels_) throw std::invalid_argument("tiny_pyramid: channel mismatch");
  const int L = config_.pyramid_levels;
  const auto pa = build_pyramid(a, L);
  const auto pb = build_pyramid(b, L);
  Var flow(Tensor(a.n(), 2, pa.back().h(), pa.back().w()));
  for (int l = L - 1; l >= 0; --l) {
    if (l < L - 1) flow = scale(upsample2(flow, pa[l].h(), pa[l].w()), 2.0f);
    const Var warped = warp_bilinear(Var(pb[l]), flow);
    const Var input = concat_channels({Var(pa[l]), warped, flow});
    const Var residual = c3_[l](act_(c2_[l](act_(c1_[l](input)))));
    flow = add(flow, residual);
    if (levels) levels->push_back(flow);
  }
  return flow;
}

Tensor TinyPyramidFlow::estimate(const Tensor& a, const Tensor& b) const {
  NoGradGuard no_grad;
  return estimate_var(a, b).value();
}

Var TinyPyramidFlow::photometric_loss(const Tensor& a, const Tensor& b) const {
  std::vector<Var> levels;
  estimate_var(a, b, &levels);
  const int L = config_.pyramid_levels;
  const auto pa = build_pyramid(a, L);
  const auto pb = build_pyramid(b, L);
  Var total;
  for (int k = 0; k < L; ++k) {
    const int l = L - 1 - k;  // levels are stored coarsest first
    const Var warped = warp_bilinear(Var(pb[l]), levels[k]);
    Var term = add(charbonnier(warped, Var(pa[l]), 0.01f), scale(tv_l1(levels[k]), 0.01f));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

void TinyPyramidFlow::collect(ParameterList& out) const {
  for (int l = 0; l < config_.pyramid_levels; ++l) {
    c1_[l].collect(out);
    c2_[l].collect(out);
    c3_[l].collect(out);
  }
}

std::unique_ptr<TinyPyramidFlow> TinyPyramidFlow::frozen_copy() const {
  auto copy = std::make_unique<TinyPyramidFlow>(*this);
  for (auto* layers : {&copy->c1_, &copy->c2_, &copy->c3_})
    for (ConvLayer& layer : *layers) layer = layer.deep_copy();
  copy->frozen_ = true;
  return copy;
}

std::unique_ptr<FlowEstimator> TinyPyramidFlow::clone() const {
  auto copy = frozen_copy();
  copy->frozen_ = frozen_;
  return copy;
}

// ---- classical Lucas-Kanade -------------------------------------------------------------

ClassicalLkFlow::ClassicalLkFlow(const FlowEstimatorConfig& config) : config_(config) { config_.validate(); }

namespace {

// Windowed sum with zero padding, separable.
void box_sum(const std::vector<float>& in, int H, int W, int radius, std::vector<float>& out) {
  std::vector<float> tmp(in.size());
  for (int y = 0; y < H; ++y) {
    double s = 0.0;
    const float* row = in.data() + static_cast<std::size_t>(y) * W;
    for (int x = 0; x <= std::min(radius, W - 1); ++x) s += row[x];
    for (int x = 0; x < W; ++x) {
      tmp[static_cast<std::size_t>(y) * W + x] = static_cast<float>(s);
      if (x + radius + 1 < W) s += row[x + radius + 1];
      if (x - radius >= 0) s -= row[x - radius];
    }
  }
  out.assign(in.size(), 0.0f);
  for (int x = 0; x < W; ++x) {
    double s = 0.0;
    for (int y = 0; y <= std::min(radius, H - 1); ++y) s += tmp[static_cast<std::size_t>(y) * W + x];
    for (int y = 0; y < H; ++y) {
      out[static_cast<std::size_t>(y) * W + x] = static_cast<float>(s);
      if (y + radius + 1 < H) s += tmp[static_cast<std::size_t>(y + radius + 1) * W + x];
      if (y - radius >= 0) s -= tmp[static_cast<std::size_t>(y - radius) * W + x];
    }
  }
}

void lk_refine(const Tensor& a, const Tensor& b, Tensor& flow, int iterations, int window) {
  const int H = a.h(), W = a.w();
  const std::size_t HW = a.plane();
  const int r = window / 2;
  std::vector<float> ixx(HW), ixy(HW), iyy(HW), ixt(HW), iyt(HW);
  std::vector<float> sxx, sxy, syy, sxt, syt;
  for (int it = 0; it < iterations; ++it) {
    const Tensor wb = warp(b, flow, Interpolation::bilinear);
    auto avg = [&](int y, int x) {
      y = std::clamp(y, 0, H - 1);
      x = std::clamp(x, 0, W - 1);
      return 0.5f * (a.at(0, 0, y, x) + wb.at(0, 0, y, x));
    };
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        const float gx = 0.5f * (avg(y, x + 1) - avg(y, x - 1));
        const float gy = 0.5f * (avg(y + 1, x) - avg(y - 1, x));
        const float gt = wb.at(0, 0, y, x) - a.at(0, 0, y, x);
        ixx[p] = gx * gx, ixy[p] = gx * gy, iyy[p] = gy * gy, ixt[p] = gx * gt, iyt[p] = gy * gt;
      }
    box_sum(ixx, H, W, r, sxx);
    box_sum(ixy, H, W, r, sxy);
    box_sum(iyy, H, W, r, syy);
    box_sum(ixt, H, W, r, sxt);
    box_sum(iyt, H, W, r, syt);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        const double det = static_cast<double>(sxx[p]) * syy[p] - static_cast<double>(sxy[p]) * sxy[p];
        const double trace = static_cast<double>(sxx[p]) + syy[p];
        if (!(det > 1e-4 * trace * trace) || trace < 1e-10) continue;  // aperture problem
        const double du = (-static_cast<double>(syy[p]) * sxt[p] + static_cast<double>(sxy[p]) * syt[p]) / det;
        const double dv = (static_cast<double>(sxy[p]) * sxt[p] - static_cast<double>(sxx[p]) * syt[p]) / det;
        flow.at(0, 0, y, x) += static_cast<float>(std::clamp(du, -2.0, 2.0));
        flow.at(0, 1, y, x) += static_cast<float>(std::clamp(dv, -2.0, 2.0));
      }
  }
}

}  // namespace

Tensor ClassicalLkFlow::estimate(const Tensor& a, const Tensor& b) const {
  require_same_shape(a, b, "classical_lk");
  NoGradGuard no_grad;
  Tensor out(a.n(), 2, a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    const auto pa = build_pyramid(to_grayscale(a.batch_slice(n, 1)), config_.pyramid_levels);
    const auto pb = build_pyramid(to_grayscale(b.batch_slice(n, 1)), config_.pyramid_levels);
    Tensor flow(1, 2, pa.back().h(), pa.back().w());
    for (int l = config_.pyramid_levels - 1; l >= 0; --l) {
      if (l < config_.pyramid_levels - 1) flow = scale(upsample2(Var(flow), pa[l].h(), pa[l].w()), 2.0f).value();
      lk_refine(pa[l], pb[l], flow, config_.iterations, config_.window);
    }
    std::copy(flow.data(), flow.data() + flow.size(), out.plane_ptr(n, 0));
  }
  return out;
}

// ---- external adapter ---------------------------------------------------------------------

ExternalAdapterFlow::ExternalAdapterFlow(const FlowEstimatorConfig& config) : config_(config) {
  if (config_.adapter_command.empty()) throw std::invalid_argument("external_adapter: empty command");
}

namespace {

Image8 to_image8(const Tensor& frame, int n) {
  Image8 img{frame.w(), frame.h(), frame.c(), {}};
  img.pixels.resize(static_cast<std::size_t>(frame.w()) * frame.h() * frame.c());
  for (int y = 0; y < frame.h(); ++y)
    for (int x = 0; x < frame.w(); ++x)
      for (int c = 0; c < frame.c(); ++c) {
        const float v = std::clamp(frame.at(n, c, y, x), 0.0f, 1.0f);
        img.pixels[(static_cast<std::size_t>(y) * frame.w() + x) * frame.c() + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return img;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

}  // namespace

Tensor ExternalAdapterFlow::estimate(const Tensor& a, const Tensor& b) const {
  require_same_shape(a, b, "external_adapter");
  if (a.c() != 1 && a.c() != 3) throw std::invalid_argument("external_adapter: frames must have 1 or 3 channels");
  namespace fs = std::filesystem;
  static std::atomic<unsigned> counter{0};
  const fs::path dir = fs::temp_directory_path() /
                       ("stbn_flow_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::create_directories(dir);
  Tensor out(a.n(), 2, a.h(), a.w());
  try {
    for (int n = 0; n < a.n(); ++n) {
      const fs::path pa = dir / "a.png", pb = dir / "b.png", po = dir / "flow.stbnflo";
      write_png(pa, to_image8(a, n));
      write_png(pb, to_image8(b, n));
      std::string cmd = replace_all(config_.adapter_command, "{a}", pa.string());
      cmd = replace_all(cmd, "{b}", pb.string());
      cmd = replace_all(cmd, "{out}", po.string());
      if (std::system(cmd.c_str()) != 0) throw std::runtime_error("external flow adapter failed: " + cmd);
      const FlowField f = load_flow_file(po);
      if (f.height() != a.h() || f.width() != a.w())
        throw std::runtime_error("external flow adapter returned wrong flow size");
      std::copy(f.vectors.data(), f.vectors.data() + f.vectors.size(), out.plane_ptr(n, 0));
      fs::remove(po);
    }
  } catch (...) {
    fs::remove_all(dir);
    throw;
  }
  fs::remove_all(dir);
  return out;
}

std::unique_ptr<FlowEstimator> make_flow_estimator(const FlowEstimatorConfig& config, int image_channels,
                                                   const CounterRng& rng) {
  switch (config.backend) {
    case FlowBackend::tiny_pyramid: return std::make_unique<TinyPyramidFlow>(image_channels, config, rng);
    case FlowBackend::classical_lk: return std::make_unique<ClassicalLkFlow>(config);
    case FlowBackend::external_adapter: return std::make_unique<ExternalAdapterFlow>(config);
  }
  throw std::logic_error("make_flow_estimator: unreachable");
}

// ---- flow pairs and distillation -------------------------------------------------------------

FlowPairs compute_flow_pairs(const std::vector<Tensor>& frames, const FlowEstimator& estimator) {
  NoGradGuard no_grad;
  FlowPairs pairs;
  const int T = static_cast<int>(frames.size());
  for (int t = 1; t < T; ++t) pairs.forward.push_back(estimator.estimate(frames[t], frames[t - 1]));
  for (int t = 0; t + 1 < T; ++t) pairs.backward.push_back(estimator.estimate(frames[t], frames[t + 1]));
  return pairs;
}

std::vector<Var> student_flow_list(const std::vector<Tensor>& frames, const TinyPyramidFlow& student) {
  std::vector<Var> out;
  const int T = static_cast<int>(frames.size());
  for (int t = 1; t < T; ++t) out.push_back(student.estimate_var(frames[t], frames[t - 1]));
  for (int t = 0; t + 1 < T; ++t) out.push_back(student.estimate_var(frames[t], frames[t + 1]));
  return out;
}

FlowPairs make_teacher_flows(const std::vector<Var>& denoised_frames, const FlowEstimator& frozen_estimator) {
  if (!frozen_estimator.frozen()) throw std::logic_error("make_teacher_flows: estimator is not frozen");
  std::vector<Tensor> values;
  values.reserve(denoised_frames.size());
  for (const Var& v : denoised_frames) values.push_back(v.value());  // stop-gradient
  return compute_flow_pairs(values, frozen_estimator);
}

std::vector<FlowField> make_teacher_flows(const VideoSequence& denoised, const FlowEstimator& frozen_estimator) {
  std::vector<Var> frames;
  for (int t = 0; t < denoised.frames(); ++t) frames.emplace_back(denoised.frame_tensor(t));
  const FlowPairs pairs = make_teacher_flows(frames, frozen_estimator);
  std::vector<FlowField> out;
  for (std::size_t k = 0; k < pairs.forward.size(); ++k)
    out.push_back({pairs.forward[k], FlowDirection::forward, static_cast<int>(k), static_cast<int>(k + 1)});
  for (std::size_t k = 0; k < pairs.backward.size(); ++k)
    out.push_back({pairs.backward[k], FlowDirection::backward, static_cast<int>(k + 1), static_cast<int>(k)});
  return out;
}

Var distillation_loss(const std::vector<Var>& student_flows, const std::vector<Tensor>& teacher_flows,
                      const ParameterList& student_parameters, double weight_decay_gamma) {
  if (student_flows.size() != teacher_flows.size())
    throw std::invalid_argument("distillation_loss: " + std::to_string(student_flows.size()) + " student flows vs " +
                                std::to_string(teacher_flows.size()) + " teacher flows");
  Var total(Tensor::scalar(0.0f));
  for (std::size_t k = 0; k < student_flows.size(); ++k)
    total = add(total, mean_abs_diff(student_flows[k], Var(teacher_flows[k])));
  if (weight_decay_gamma > 0)
    for (const auto& p : student_parameters)
      total = add(total, scale(sum_squares(p.var), static_cast<float>(weight_decay_gamma)));
  return total;
}

namespace {

std::vector<double> endpoint_errors(const Tensor& estimate, const Tensor& truth, int border) {
  require_same_shape(estimate, truth, "endpoint_error");
  std::vector<double> e;
  for (int n = 0; n < estimate.n(); ++n)
    for (int y = border; y < estimate.h() - border; ++y)
      for (int x = border; x < estimate.w() - border; ++x)
        e.push_back(std::hypot(estimate.at(n, 0, y, x) - truth.at(n, 0, y, x),
                               estimate.at(n, 1, y, x) - truth.at(n, 1, y, x)));
  if (e.empty()) throw std::invalid_argument("endpoint_error: border leaves no pixels");
  return e;
}

}  // namespace

double endpoint_error(const Tensor& estimate, const Tensor& truth, int border) {
  const auto e = endpoint_errors(estimate, truth, border);
  double s = 0.0;
  for (double v : e) s += v;
  return s / e.size();
}

double median_endpoint_error(const Tensor& estimate, const Tensor& truth, int border) {
  auto e = endpoint_errors(estimate, truth, border);
  std::nth_element(e.begin(), e.begin() + e.size() / 2, e.end());
  return e[e.size() / 2];
}

}  // namespace stbn

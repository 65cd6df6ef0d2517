// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Usage: acceptance [criterion numbers...]  (default: all)

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "stbn/ablation.hpp"
#include "stbn/eval.hpp"
#include "stbn/losses.hpp"
#include "stbn/metrics.hpp"
#include "stbn/srfe.hpp"
#include "stbn/train.hpp"
#include "stbn/warp.hpp"

#ifndef STBN_FIXTURE_DIR
#error "STBN_FIXTURE_DIR must point at tests/fixtures"
#endif

using namespace stbn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Tensor uniform_tensor(int n, int c, int h, int w, std::uint64_t seed, float lo, float hi) {
  Tensor t(n, c, h, w);
  const CounterRng rng(seed, CounterRng::hash_name("acceptance"));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * static_cast<float>(rng.uniform(i));
  return t;
}

std::vector<Tensor> frames_of(const VideoSequence& seq) {
  std::vector<Tensor> f;
  for (int t = 0; t < seq.frames(); ++t) f.push_back(seq.frame_tensor(t));
  return f;
}

// 1. Blind spot of the assembled default model.
Outcome blind_spot() {
  const auto t0 = Clock::now();
  int probes = 0, failures = 0;
  double worst_fd = 0, min_other = 1e300;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ModelConfig c;
    c.seed = seed;
    const StbnNetwork model(c);
    ToyClipOptions o;
    o.frames = 5;
    o.height = o.width = 24;
    o.seed = seed + 100;
    const std::vector<Tensor> frames = frames_of(add_awgn(make_toy_clip(o), NoiseModel::gaussian(25, seed)));
    const PixelPredictor predictor = model.predictor(model.estimate_flows(frames));
    const CounterRng rng(seed, CounterRng::hash_name("probe_pixels"));
    for (int k = 0; k < 7; ++k) {
      const ProbeLocation p{static_cast<int>(rng.below(3 * k, 5)), 1 + static_cast<int>(rng.below(3 * k + 1, 22)),
                            1 + static_cast<int>(rng.below(3 * k + 2, 22))};
      const auto maps = probe_dependency(predictor, frames, p);
      const double self = maps[p.t].magnitudes.at(0, 0, p.y, p.x);
      const double fd = std::fabs(finite_difference_dependency(predictor, frames, p, p));
      double other = 0;
      for (const auto& m : maps)
        if (m.source_frame != p.t) other += m.total();
      worst_fd = std::max(worst_fd, fd);
      min_other = std::min(min_other, other);
      if (self != 0.0 || fd > 1e-6 || !(other > 0.0)) ++failures;
      ++probes;
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << probes << " probes over 3 seeds, " << failures << " failing; max |FD| at centre " << worst_fd
    << ", min other-frame dependence " << min_other << ", " << secs << " s";
  return {failures == 0 && probes >= 20 && secs < 120, d.str()};
}

// 2. Noise statistics through the warp.
Outcome warp_calibration() {
  const auto t0 = Clock::now();
  const double sigma = 30.0 / 255.0;
  const int n = 1024;
  const Tensor noise = white_noise_field(n, n, sigma, 2024);
  const FlowField half = FlowField::uniform(n, n, 0.5f, 0.5f);
  const WarpReport nn = audit_noise_statistics(noise, half, Interpolation::nearest, sigma);
  const WarpReport bl = audit_noise_statistics(noise, half, Interpolation::bilinear, sigma);
  const double secs = seconds_since(t0);
  const bool nn_ok = nn.variance_ratio >= 0.98 && nn.variance_ratio <= 1.02 && nn.ks_statistic < 0.01 &&
                     std::fabs(nn.lag1_autocorr_x) < 0.02 && std::fabs(nn.lag1_autocorr_y) < 0.02;
  const bool bl_ok = std::fabs(bl.variance_ratio - 0.25) <= 0.02 && bl.lag1_autocorr_x > 0.2 && bl.lag1_autocorr_y > 0.2;
  std::ostringstream d;
  d << "N=" << nn.samples << "; nearest ratio " << nn.variance_ratio << " KS " << nn.ks_statistic << " rho "
    << nn.lag1_autocorr_x << "/" << nn.lag1_autocorr_y << "; bilinear ratio " << bl.variance_ratio << " rho "
    << bl.lag1_autocorr_x << "/" << bl.lag1_autocorr_y << ", " << secs << " s";
  return {nn_ok && bl_ok && nn.samples >= 1000000 && secs < 60, d.str()};
}

// 3. Risk gap equals the noise variance for a blind-spot model, and not for a leaky one.
Outcome risk_gap() {
  const auto t0 = Clock::now();
  const double sigma = 25.0 / 255.0;
  ModelConfig c;
  c.seed = 11;
  const StbnNetwork model(c);
  ToyClipOptions o;
  o.frames = 5;
  o.height = o.width = 64;
  o.seed = 31;
  const VideoSequence clean = make_toy_clip(o);
  RiskGapOptions opt;
  opt.num_noise_draws = 10;
  opt.seed = 5;
  const RiskGapReport r = verify_risk_gap(model, clean, sigma, opt);

  const auto leaky = train_leaky_control(clean, sigma, 150, 9);
  opt.allow_uncertified = true;
  const RiskGapReport ctl = verify_risk_gap(*leaky, clean, sigma, opt);
  const double ctl_shortfall = (r.expected_constant - ctl.gap_estimate) / r.expected_constant;
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << r.pixel_draws << " pixel draws; gap " << r.gap_estimate << " vs sigma^2 " << r.expected_constant
    << " (rel err " << r.relative_error << ", SE " << r.standard_error << "); control gap " << ctl.gap_estimate
    << " (" << 100 * ctl_shortfall << "% below, certified=" << ctl.certified << "), " << secs << " s";
  return {r.certified && r.pixel_draws >= 100000 && r.relative_error < 0.05 && !ctl.certified && ctl_shortfall > 0.2 &&
              secs < 300,
          d.str()};
}

// 4. Roundtrips and limits.
Outcome identities() {
  bool shuffle_ok = true;
  for (int s : {2, 3, 4}) {
    const Tensor x = uniform_tensor(2, 3, 4 * s, 3 * s, 40 + s, -5, 5);
    const Tensor back = patch_shuffle(patch_unshuffle(x, s), s);
    const Tensor y = uniform_tensor(1, 2 * s * s, 5, 7, 50 + s, -5, 5);
    const Tensor back2 = patch_unshuffle(patch_shuffle(y, s), s);
    for (std::size_t i = 0; i < x.size(); ++i) shuffle_ok &= back[i] == x[i];
    for (std::size_t i = 0; i < y.size(); ++i) shuffle_ok &= back2[i] == y[i];
  }

  const double sigma = 25.0 / 255.0;
  const Tensor mu = uniform_tensor(1, 1, 8, 8, 1, 0, 1), y = uniform_tensor(1, 1, 8, 8, 2, -0.2f, 1.2f);
  auto limit_error = [&](float log_var, const std::function<double(std::size_t)>& expect) {
    Tensor lv = Tensor::zeros_like(mu);
    lv.fill(log_var);
    const Tensor post = posterior_mean({mu, lv}, y, sigma);
    double worst = 0;
    for (std::size_t i = 0; i < post.size(); ++i) worst = std::max(worst, std::fabs(post[i] - expect(i)));
    return worst;
  };
  const double certain = limit_error(-60.0f, [&](std::size_t i) { return mu[i]; });
  const double uncertain = limit_error(60.0f, [&](std::size_t i) { return y[i]; });
  const double midpoint =
      limit_error(static_cast<float>(std::log(sigma * sigma)), [&](std::size_t i) { return 0.5 * (mu[i] + y[i]); });

  const Tensor img = uniform_tensor(2, 3, 9, 11, 3, -1, 1);
  const Tensor same = warp(img, Tensor(1, 2, 9, 11), Interpolation::nearest);
  bool identity_ok = true;
  for (std::size_t i = 0; i < img.size(); ++i) identity_ok &= same[i] == img[i];

  std::ostringstream d;
  d << "shuffle roundtrip " << (shuffle_ok ? "exact" : "BROKEN") << "; posterior limits " << certain << " / "
    << uncertain << " / " << midpoint << "; zero-flow nearest " << (identity_ok ? "exact" : "BROKEN");
  return {shuffle_ok && identity_ok && certain <= 1e-7 && uncertain <= 1e-7 && midpoint <= 1e-7, d.str()};
}

// 5. Loss gradients against double-precision central differences of the closed forms.
Outcome gradients() {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Tensor mu = uniform_tensor(1, 1, 2, 5, 10 + seed, 0, 1);
    const Tensor lv = uniform_tensor(1, 1, 2, 5, 20 + seed, -6, 1);
    const Tensor y = uniform_tensor(1, 1, 2, 5, 30 + seed, -0.2f, 1.2f);
    const double sigma = 25.0 / 255.0, s2 = sigma * sigma;
    Var vm(mu, true), vl(lv, true), vp(mu, true);
    backward(nll_loss(vm, vl, y, sigma));
    backward(l2_blind_loss(vp, y));
    std::vector<double> m(mu.span().begin(), mu.span().end()), l(lv.span().begin(), lv.span().end()),
        yy(y.span().begin(), y.span().end());
    const std::size_t n = m.size();
    auto rel = [](double analytic, double numeric) {
      return std::fabs(analytic - numeric) / std::max(std::fabs(numeric), 1e-3);
    };
    for (int which = 0; which < 3; ++which)
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double>& v = which == 1 ? l : m;
        const double h = 1e-6, orig = v[i];
        auto f = [&] { return which == 2 ? l2_mean(m.data(), yy.data(), n) : nll_mean(m.data(), l.data(), yy.data(), n, s2); };
        v[i] = orig + h;
        const double up = f();
        v[i] = orig - h;
        const double down = f();
        v[i] = orig;
        const double analytic = which == 0 ? vm.grad()[i] : which == 1 ? vl.grad()[i] : vp.grad()[i];
        worst = std::max(worst, rel(analytic, (up - down) / (2 * h)));
      }
  }
  std::ostringstream d;
  d << "max relative error " << worst << " over nll (mu, log_var) and l2 on 10-pixel toys";
  return {worst < 1e-4, d.str()};
}

// 6. Desk-scale training on one noisy clip, scored on a held-out clip.
Outcome smoke_training() {
  const auto t0 = Clock::now();
  ToyClipOptions o;
  o.frames = 5;
  o.height = o.width = 64;
  const NoiseModel noise = NoiseModel::gaussian(25, 1);
  const VideoSequence noisy = add_awgn(make_toy_clip(o), noise);
  ToyClipOptions h = o;
  h.seed = 1234;
  const VideoSequence held_clean = make_toy_clip(h);
  const VideoSequence held_noisy = add_awgn(held_clean, NoiseModel::gaussian(25, 99));

  const Preset p = desk_preset();
  const TrainResult r = train({noisy}, noise, p.model, p.train);
  bool finite = r.loss_curve.size() == static_cast<std::size_t>(p.train.iterations);
  for (double l : r.loss_curve) finite &= std::isfinite(l);
  const double before = psnr(held_noisy, held_clean);
  const double after = psnr(denoise(held_noisy, *r.model, noise), held_clean);
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << p.train.iterations << " iterations; held-out PSNR " << before << " -> " << after << " dB (+" << after - before
    << "); loss curve " << (finite ? "finite" : "NOT finite") << ", " << secs << " s";
  return {finite && after >= before + 3.0 && secs < 20 * 60, d.str()};
}

// 7. Component ablation ordering over three seeds.
Outcome ablation() {
  const auto t0 = Clock::now();
  AblationOptions o;
  o.preset.train.distill.warmup_iterations = o.preset.train.iterations / 2;
  const AblationReport r = run_ablation(o);
  std::cout << r.table();
  const double base = r.rows[0].mean_psnr, bsa = r.rows[1].mean_psnr, srfe = r.rows[2].mean_psnr,
               refine = r.rows[3].mean_psnr;
  const double tol = -0.05;
  std::ostringstream d;
  d << "mean PSNR baseline " << base << ", +BSA " << bsa << ", +SRFE " << srfe << ", +flow_refine " << refine
    << " (gaps " << bsa - base << ", " << srfe - bsa << ", " << refine - srfe << "), " << seconds_since(t0) << " s";
  return {bsa - base >= tol && srfe - bsa >= tol && refine - srfe >= tol, d.str()};
}

// 8. Distillation improves the noisy-input flow student.
Outcome distillation() {
  const auto t0 = Clock::now();
  const double sigma8 = 50;
  const NoiseModel noise = NoiseModel::gaussian(sigma8, 8);
  auto clip = [&](std::uint64_t seed, double vx, double vy) {
    ToyClipOptions o;
    o.frames = 5;
    o.height = o.width = 64;
    o.velocity_x = vx;
    o.velocity_y = vy;
    o.seed = seed;
    return make_toy_clip(o);
  };
  std::vector<VideoSequence> train_clips;
  const double train_v[][2] = {{1.5, 0.5}, {-1.0, 1.0}, {0.5, -1.5}, {-1.5, -0.5}};
  for (int k = 0; k < 4; ++k)
    train_clips.push_back(
        add_awgn(clip(200 + k, train_v[k][0], train_v[k][1]), NoiseModel::gaussian(sigma8, 300 + k)));
  struct Held {
    std::vector<Tensor> frames;
    double vx, vy;
  };
  std::vector<Held> held;
  const double held_v[][2] = {{1.0, -0.5}, {-0.5, 1.5}};
  for (int k = 0; k < 2; ++k)
    held.push_back({frames_of(add_awgn(clip(900 + k, held_v[k][0], held_v[k][1]),
                                       NoiseModel::gaussian(sigma8, 950 + k))),
                    held_v[k][0], held_v[k][1]});

  // Mean endpoint error of the student on noisy held-out pairs, both directions.
  // Frames are tex(x - v t), so estimate(y_t, y_{t-1}) should be -v and estimate(y_t, y_{t+1}) +v.
  auto student_epe = [&](const StbnNetwork& model) {
    const FlowEstimator& f = model.flow();
    double sum = 0;
    int count = 0;
    for (const auto& h : held) {
      const int H = h.frames[0].h(), W = h.frames[0].w();
      for (std::size_t t = 1; t < h.frames.size(); ++t) {
        sum += endpoint_error(f.estimate(h.frames[t], h.frames[t - 1]),
                              FlowField::uniform(H, W, -h.vx, -h.vy).vectors, 6);
        sum += endpoint_error(f.estimate(h.frames[t - 1], h.frames[t]),
                              FlowField::uniform(H, W, h.vx, h.vy).vectors, 6);
        count += 2;
      }
    }
    return sum / count;
  };

  Preset p = desk_preset();
  p.train.distill.alpha = 5e-4;
  p.train.distill.warmup_iterations = 1000;
  p.train.iterations = 1500;
  p.train.batch_size = 2;
  p.train.seq_length = 3;
  p.train.checkpoint_interval = 1000;
  p.train.log_interval = 250;
  const fs::path dir = fs::temp_directory_path() / ("stbn_accept_distill_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  TrainIo io;
  io.checkpoint_dir = dir;
  const TrainResult r = train(train_clips, noise, p.model, p.train, io);
  const auto warm = model_from_checkpoint(load_checkpoint(dir / "ckpt_1000.stbn"));
  fs::remove_all(dir);
  const double before = student_epe(*warm);
  const double after = student_epe(*r.model);

  // Stop-gradient: the teacher side of the loss never reaches its inputs.
  bool teacher_grad_zero = true, student_grad_nonzero = false;
  {
    const TinyPyramidFlow& student = *r.model->trainable_flow();
    const auto teacher = student.frozen_copy();
    const std::vector<Tensor>& frames = held[0].frames;
    std::vector<Var> leaves, denoised;
    for (const Tensor& f : frames) {
      leaves.emplace_back(f, true);
      denoised.push_back(scale(leaves.back(), 0.9f));
    }
    const FlowPairs tp = make_teacher_flows(denoised, *teacher);
    std::vector<Tensor> tflows = tp.forward;
    tflows.insert(tflows.end(), tp.backward.begin(), tp.backward.end());
    const ParameterList params = r.model->flow_parameters();
    for (auto q : params) q.var.zero_grad();
    Var loss = distillation_loss(student_flow_list(frames, student), tflows, params, 4e-5);
    backward(loss);
    for (const Var& leaf : leaves)
      for (float g : leaf.grad().span()) teacher_grad_zero &= g == 0.0f;
    for (const auto& q : params)
      for (float g : q.var.grad().span()) student_grad_nonzero |= g != 0.0f;
  }
  std::ostringstream d;
  d << "held-out student EPE " << before << " px after warm-up -> " << after << " px after "
    << p.train.iterations - p.train.distill.warmup_iterations << " distillation steps; teacher-input gradient "
    << (teacher_grad_zero ? "identically zero" : "NONZERO") << ", " << seconds_since(t0) << " s";
  return {after < before && teacher_grad_zero && student_grad_nonzero, d.str()};
}

// 9. Metric fidelity.
Outcome metrics() {
  VideoSequence clean(4, 512, 512, 1);
  for (float& v : clean.data()) v = 0.5f;
  const VideoSequence noisy = add_awgn(clean, NoiseModel::gaussian(30.0, 77));
  const double expected = 20.0 * std::log10(255.0 / 30.0);
  const double got = psnr(noisy, clean);

  std::ifstream in(fs::path(STBN_FIXTURE_DIR) / "ssim_pair.txt");
  int h = 0, w = 0;
  double reference = 0;
  in >> h >> w >> reference;
  Tensor a(1, 1, h, w), b(1, 1, h, w);
  for (auto* t : {&a, &b})
    for (std::size_t i = 0; i < t->size(); ++i) in >> (*t)[i];
  const bool read_ok = static_cast<bool>(in) && h > 0;
  const double s = read_ok ? ssim(a, b) : NAN;
  std::ostringstream d;
  d << "AWGN PSNR " << got << " vs analytic " << expected << " at " << clean.size() << " px; SSIM " << s
    << " vs fixture " << reference;
  return {std::fabs(got - expected) <= 0.05 && clean.size() >= 1000000 && read_ok && std::fabs(s - reference) <= 1e-6,
          d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"blind-spot certification", blind_spot},
      {"warp calibration", warp_calibration},
      {"risk-gap identity", risk_gap},
      {"roundtrip and limit identities", identities},
      {"loss gradients", gradients},
      {"end-to-end smoke training", smoke_training},
      {"ablation direction", ablation},
      {"distillation efficacy", distillation},
      {"metric fidelity", metrics},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[k].first << "): " << o.detail
              << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}

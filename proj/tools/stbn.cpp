// stbn: command-line front end for training, inference and the self-checks.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "stbn/ablation.hpp"
#include "stbn/eval.hpp"
#include "stbn/metrics.hpp"
#include "stbn/png_io.hpp"
#include "stbn/train.hpp"
#include "stbn/warp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stbn;

namespace {

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

struct ToyArgs {
  int frames = 5;
  int size = 64;
  int channels = 1;
  double vx = 1.0;
  double vy = 0.5;

  void add(CLI::App* app) {
    app->add_option("--frames", frames, "Toy clip length")->check(CLI::PositiveNumber);
    app->add_option("--size", size, "Toy clip height and width")->check(CLI::Range(8, 4096));
    app->add_option("--channels", channels, "1 (grey) or 3 (RGB)")->check(CLI::IsMember({1, 3}));
    app->add_option("--vx", vx, "Horizontal velocity in pixels per frame");
    app->add_option("--vy", vy, "Vertical velocity in pixels per frame");
  }
  ToyClipOptions options(std::uint64_t seed) const {
    ToyClipOptions o;
    o.frames = frames;
    o.height = o.width = size;
    o.channels = channels;
    o.velocity_x = vx;
    o.velocity_y = vy;
    o.seed = seed;
    return o;
  }
};

// Model/training knobs shared by train and ablate.
struct ModelArgs {
  std::string preset = "desk";
  int iterations = -1;
  double lr = -1;
  double flow_lr = -1;
  int crop = -1;
  int seq_length = -1;
  int batch = -1;
  int bsa_channels = -1;
  int srfe_channels = -1;
  int shuffle = -1;
  std::string flow_backend;
  double alpha = -1;
  int warmup = -1;
  double gamma = -1;
  int teacher_refresh = -1;

  void add(CLI::App* app) {
    app->add_option("--preset", preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    app->add_option("--iterations", iterations, "Training steps");
    app->add_option("--lr", lr, "Denoiser Adam learning rate");
    app->add_option("--flow-lr", flow_lr, "Flow student Adam learning rate");
    app->add_option("--crop", crop, "Training crop size");
    app->add_option("--seq-length", seq_length, "Frames per training crop");
    app->add_option("--batch", batch, "Crops per step");
    app->add_option("--bsa-channels", bsa_channels, "Propagation feature width");
    app->add_option("--srfe-channels", srfe_channels, "Per-group width in the fusion stage");
    app->add_option("--shuffle", shuffle, "Patch shuffle factor");
    app->add_option("--flow-backend", flow_backend, "tiny_pyramid, classical_lk or external_adapter");
    app->add_option("--alpha", alpha, "Distillation weight");
    app->add_option("--warmup", warmup, "Photometric warm-up steps before distillation");
    app->add_option("--gamma", gamma, "Weight decay on the flow student");
    app->add_option("--teacher-refresh", teacher_refresh, "Re-snapshot the teacher every k steps (0: once)");
  }
  Preset resolve(int channels) const {
    Preset p = preset_by_name(preset, channels);
    if (iterations >= 0) p.train.iterations = iterations;
    if (lr > 0) p.train.learning_rate = lr;
    if (flow_lr > 0) p.train.flow_learning_rate = flow_lr;
    if (crop > 0) p.train.crop_size = crop;
    if (seq_length > 0) p.train.seq_length = seq_length;
    if (batch > 0) p.train.batch_size = batch;
    if (bsa_channels > 0) p.model.bsa.channels = bsa_channels;
    if (srfe_channels > 0) p.model.srfe.channels = srfe_channels;
    if (shuffle > 0) p.model.srfe.shuffle_factor = shuffle;
    if (!flow_backend.empty()) p.model.flow.backend = parse_flow_backend(flow_backend);
    if (alpha > 0) p.train.distill.alpha = alpha;
    if (warmup >= 0) p.train.distill.warmup_iterations = warmup;
    if (gamma >= 0) p.train.distill.weight_decay_gamma = gamma;
    if (teacher_refresh >= 0) p.train.distill.teacher_refresh_interval = teacher_refresh;
    return p;
  }
};

// Config files are INI: keys are the long option names of the verb, either at top level
// or under a [verb] section. Command-line flags override file values.
class VerbConfig : public CLI::ConfigINI {
 public:
  explicit VerbConfig(std::string verb) : verb_(std::move(verb)) {}
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigINI::from_config(input);
    for (auto& item : items)
      if (item.parents.empty() && item.name != "++" && item.name != "--") item.parents = {verb_};
    return items;
  }

 private:
  std::string verb_;
};

NoiseModel noise_from_args(double sigma, bool unknown, std::uint64_t seed) {
  if (unknown) return NoiseModel::unknown_noise();
  if (!(sigma > 0)) throw std::invalid_argument("--sigma is required (or pass --unknown-noise)");
  return NoiseModel::gaussian(sigma, seed);
}

ProbeLocation parse_pixel(const std::string& s) {
  ProbeLocation p;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> p.t >> c1 >> p.y >> c2 >> p.x) || c1 != ',' || c2 != ',')
    throw std::invalid_argument("--pixel expects t,y,x");
  return p;
}

// ---- SVG plots ---------------------------------------------------------------------

std::string histogram_svg(const WarpReport& r, double sigma) {
  const double W = 640, H = 320, pad = 40;
  const std::size_t bins = r.histogram.size();
  const double width = (r.histogram_max - r.histogram_min) / static_cast<double>(bins);
  std::vector<double> density(bins), reference(bins);
  double peak = 0;
  for (std::size_t i = 0; i < bins; ++i) {
    density[i] = static_cast<double>(r.histogram[i]) / (static_cast<double>(r.samples) * width);
    const double x = r.histogram_min + (i + 0.5) * width;
    reference[i] = std::exp(-0.5 * x * x / (sigma * sigma)) / (sigma * std::sqrt(2 * M_PI));
    peak = std::max({peak, density[i], reference[i]});
  }
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double bw = (W - 2 * pad) / bins;
  for (std::size_t i = 0; i < bins; ++i) {
    const double h = (H - 2 * pad) * density[i] / peak;
    s << "<rect x=\"" << pad + i * bw << "\" y=\"" << H - pad - h << "\" width=\"" << bw * 0.9 << "\" height=\"" << h
      << "\" fill=\"steelblue\"/>\n";
  }
  s << "<polyline fill=\"none\" stroke=\"crimson\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < bins; ++i)
    s << pad + (i + 0.5) * bw << ',' << H - pad - (H - 2 * pad) * reference[i] / peak << ' ';
  s << "\"/>\n";
  s << "<text x=\"" << pad << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" << to_string(r.interpolation)
    << " warp: warped noise histogram vs N(0, sigma^2), variance ratio " << r.variance_ratio << ", KS "
    << r.ks_statistic << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string autocorr_svg(const std::vector<double>& ax, const std::vector<double>& ay, Interpolation interp) {
  const double W = 480, H = 320, pad = 40;
  const std::size_t n = ax.size();
  auto ypos = [&](double v) { return pad + (H - 2 * pad) * (1.0 - (v + 0.2) / 1.2); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << pad << "\" x2=\"" << W - pad << "\" y1=\"" << ypos(0) << "\" y2=\"" << ypos(0)
    << "\" stroke=\"grey\"/>\n";
  const double step = (W - 2 * pad) / std::max<std::size_t>(1, n - 1);
  for (const auto* series : {&ax, &ay}) {
    s << "<polyline fill=\"none\" stroke=\"" << (series == &ax ? "steelblue" : "darkorange")
      << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < n; ++k) s << pad + k * step << ',' << ypos((*series)[k]) << ' ';
    s << "\"/>\n";
  }
  s << "<text x=\"" << pad << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" << to_string(interp)
    << " warp: autocorrelation vs lag (blue: x, orange: y)</text>\n";
  s << "</svg>\n";
  return s.str();
}

// ---- verbs -------------------------------------------------------------------------

int run_synth(const std::string& clean_path, const ToyArgs& toy, bool use_toy, double sigma, std::uint64_t seed,
              const std::string& out, const std::string& clean_out) {
  VideoSequence clean;
  if (use_toy) {
    clean = make_toy_clip(toy.options(seed));
  } else {
    if (clean_path.empty()) throw std::invalid_argument("synth needs --clean or --toy");
    clean = load_sequence(clean_path);
  }
  const VideoSequence noisy = add_awgn(clean, NoiseModel::gaussian(sigma, seed));
  save_sequence(noisy, out);
  if (!clean_out.empty()) save_sequence(clean, clean_out);
  std::cout << "wrote " << out << " (" << noisy.frames() << " frames, " << noisy.height() << "x" << noisy.width()
            << ", sigma " << sigma << ", psnr vs clean " << psnr(noisy, clean) << " dB)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised video denoising with a spatiotemporal blind-spot network"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI config file; keys are long option names, flags override");
  app.config_formatter(std::make_shared<VerbConfig>(argc > 1 ? argv[1] : ""));
  app.fallthrough();
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Seed for every random choice"); };

  // synth
  auto* synth = app.add_subcommand("synth", "Add white Gaussian noise to a clip (or a generated toy clip)");
  add_common(synth);
  std::string synth_clean, synth_out, synth_clean_out;
  bool synth_toy = false;
  double synth_sigma = 25;
  ToyArgs synth_toy_args;
  synth->add_option("--clean", synth_clean, "Clean input: PNG directory or .stbnvid");
  synth->add_flag("--toy", synth_toy, "Generate a translating toy clip instead of reading one");
  synth_toy_args.add(synth);
  synth->add_option("--sigma", synth_sigma, "Noise std on the 8-bit scale")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "Noisy output")->required();
  synth->add_option("--clean-out", synth_clean_out, "Also save the clean clip here");

  // train
  auto* train_cmd = app.add_subcommand("train", "Self-supervised training on noisy clips");
  add_common(train_cmd);
  std::vector<std::string> train_inputs;
  std::string train_out = "run", train_metrics, probe_noisy_path, probe_clean_path, train_loss = "nll_gaussian",
              denoised_out;
  double train_sigma = -1;
  bool train_unknown = false, no_bsa = false, no_srfe = false, no_refine = false, on_target = false, quiet = false;
  int log_interval = -1, ckpt_interval = -1;
  ModelArgs train_model;
  train_cmd->add_option("--input", train_inputs, "Noisy training clips")->required();
  train_cmd->add_option("--sigma", train_sigma, "Known noise std on the 8-bit scale");
  train_cmd->add_flag("--unknown-noise", train_unknown, "Noise level unknown (use --loss l2)");
  train_cmd->add_option("--loss", train_loss, "nll_gaussian or l2");
  train_model.add(train_cmd);
  train_cmd->add_flag("--no-bsa", no_bsa, "Plain propagation cell instead of blind-spot alignment");
  train_cmd->add_flag("--no-srfe", no_srfe, "Pointwise head instead of receptive-field expansion");
  train_cmd->add_flag("--no-flow-refine", no_refine, "Freeze the flow student after warm-up");
  train_cmd->add_option("--out", train_out, "Checkpoint directory");
  train_cmd->add_option("--metrics", train_metrics, "JSON-lines metrics log (default <out>/metrics.jsonl)");
  train_cmd->add_option("--probe-noisy", probe_noisy_path, "Held-out noisy clip scored at each log step");
  train_cmd->add_option("--probe-clean", probe_clean_path, "Its clean reference");
  train_cmd->add_option("--log-interval", log_interval, "Steps between metric records");
  train_cmd->add_option("--checkpoint-interval", ckpt_interval, "Steps between intermediate checkpoints");
  train_cmd->add_flag("--on-target", on_target, "Train on the clip to denoise, then denoise it");
  train_cmd->add_option("--denoised-out", denoised_out, "Where --on-target writes the result");
  train_cmd->add_flag("--quiet", quiet, "No progress lines");

  // denoise
  auto* denoise_cmd = app.add_subcommand("denoise", "Denoise a clip with a trained checkpoint");
  add_common(denoise_cmd);
  std::string den_ckpt, den_input, den_out;
  double den_sigma = -1;
  bool den_unknown = false;
  denoise_cmd->add_option("--checkpoint", den_ckpt, "Checkpoint file")->required();
  denoise_cmd->add_option("--input", den_input, "Noisy clip")->required();
  denoise_cmd->add_option("--out", den_out, "Output (PNG directory or .stbnvid)")->required();
  denoise_cmd->add_option("--sigma", den_sigma, "Override the noise level recorded in the checkpoint");
  denoise_cmd->add_flag("--unknown-noise", den_unknown, "Skip the posterior step");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM report against a clean reference");
  add_common(eval_cmd);
  std::string ev_result, ev_clean, ev_ckpt, ev_noisy, ev_out;
  double ev_sigma = -1;
  eval_cmd->add_option("--result", ev_result, "Denoised clip");
  eval_cmd->add_option("--checkpoint", ev_ckpt, "Denoise --noisy with this checkpoint first");
  eval_cmd->add_option("--noisy", ev_noisy, "Noisy clip for --checkpoint");
  eval_cmd->add_option("--sigma", ev_sigma, "Noise level override for --checkpoint");
  eval_cmd->add_option("--clean", ev_clean, "Clean reference")->required();
  eval_cmd->add_option("--out", ev_out, "Report path (default stdout)");

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "Dependency maps of one output pixel");
  add_common(probe_cmd);
  std::string pr_ckpt, pr_input, pr_pixel, pr_out = "probe";
  ToyArgs pr_toy;
  pr_toy.size = 24;
  probe_cmd->add_option("--checkpoint", pr_ckpt, "Checkpoint (default: freshly initialised default model)");
  probe_cmd->add_option("--input", pr_input, "Clip to probe at (default: noisy toy clip)");
  pr_toy.add(probe_cmd);
  probe_cmd->add_option("--pixel", pr_pixel, "Output pixel t,y,x")->required();
  probe_cmd->add_option("--out", pr_out, "Output directory for heatmaps and summary.json");

  // audit-warp
  auto* audit_cmd = app.add_subcommand("audit-warp", "Noise statistics before and after warping");
  add_common(audit_cmd);
  double au_sigma = 30;
  std::string au_interp = "nearest", au_flow = "fractional", au_out = "audit";
  int au_size = 1024, au_lags = 8;
  audit_cmd->add_option("--sigma", au_sigma, "Noise std on the 8-bit scale")->check(CLI::PositiveNumber);
  audit_cmd->add_option("--interp", au_interp, "nearest or bilinear")->check(CLI::IsMember({"nearest", "bilinear"}));
  audit_cmd->add_option("--flow", au_flow, "zero, fractional or random")
      ->check(CLI::IsMember({"zero", "fractional", "random"}));
  audit_cmd->add_option("--size", au_size, "Noise field side length")->check(CLI::Range(16, 8192));
  audit_cmd->add_option("--lags", au_lags, "Autocorrelation lags to plot")->check(CLI::Range(1, 64));
  audit_cmd->add_option("--out", au_out, "Output directory");

  // verify-proof
  auto* verify_cmd = app.add_subcommand("verify-proof", "Monte-Carlo check of the blind-spot risk gap");
  add_common(verify_cmd);
  std::string vp_ckpt, vp_out;
  double vp_sigma = 25;
  int vp_draws = 40, vp_control_iters = 150;
  bool vp_negative = false;
  ToyArgs vp_toy;
  vp_toy.size = 64;
  verify_cmd->add_option("--checkpoint", vp_ckpt, "Model to test (default: freshly initialised default model)");
  verify_cmd->add_option("--sigma", vp_sigma, "Noise std on the 8-bit scale")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--draws", vp_draws, "Full-clip noise draws")->check(CLI::PositiveNumber);
  vp_toy.add(verify_cmd);
  verify_cmd->add_flag("--negative-control", vp_negative, "Test an unmasked model trained briefly with L2");
  verify_cmd->add_option("--control-iterations", vp_control_iters, "Training steps for the negative control");
  verify_cmd->add_option("--out", vp_out, "Report path (default stdout)");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Train the four component configurations and compare");
  add_common(ablate_cmd);
  ModelArgs ab_model;
  std::vector<std::uint64_t> ab_seeds{1, 2, 3};
  int ab_train_clips = 2, ab_eval_clips = 2;
  double ab_sigma = 25;
  std::string ab_out;
  ToyArgs ab_toy;
  ab_model.add(ablate_cmd);
  ab_toy.add(ablate_cmd);
  ablate_cmd->add_option("--seeds", ab_seeds, "Seeds to average over");
  ablate_cmd->add_option("--train-clips", ab_train_clips, "Noisy toy clips per seed");
  ablate_cmd->add_option("--eval-clips", ab_eval_clips, "Held-out toy clips per seed");
  ablate_cmd->add_option("--sigma", ab_sigma, "Noise std on the 8-bit scale");
  ablate_cmd->add_option("--out", ab_out, "JSON report path");

  // flow
  auto* flow_cmd = app.add_subcommand("flow", "Estimate flows between consecutive frames");
  add_common(flow_cmd);
  std::string fl_input, fl_backend = "classical_lk", fl_out = "flows", fl_adapter;
  flow_cmd->add_option("--input", fl_input, "Clip")->required();
  flow_cmd->add_option("--backend", fl_backend, "classical_lk, tiny_pyramid or external_adapter");
  flow_cmd->add_option("--adapter-command", fl_adapter, "Command for external_adapter with {a} {b} {out}");
  flow_cmd->add_option("--out", fl_out, "Output directory of STBNFLO1 files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(synth_clean, synth_toy_args, synth_toy, synth_sigma, seed, synth_out, synth_clean_out);

    if (*train_cmd) {
      std::vector<VideoSequence> clips;
      for (const auto& p : train_inputs) clips.push_back(load_sequence(p));
      const int C = clips.front().channels();
      Preset preset = train_model.resolve(C);
      preset.model.seed = seed;
      preset.train.seed = seed;
      preset.train.loss = parse_loss_kind(train_loss);
      if (preset.train.loss == LossKind::l2) preset.model.srfe.head = HeadKind::regression;
      preset.train.toggles = {!no_bsa, !no_srfe, !no_refine};
      if (log_interval > 0) preset.train.log_interval = log_interval;
      if (ckpt_interval >= 0) preset.train.checkpoint_interval = ckpt_interval;
      const NoiseModel noise = noise_from_args(train_sigma, train_unknown, seed);

      TrainIo io;
      io.checkpoint_dir = fs::path(train_out);
      io.metrics_path = train_metrics.empty() ? fs::path(train_out) / "metrics.jsonl" : fs::path(train_metrics);
      VideoSequence probe_noisy, probe_clean;
      if (!probe_noisy_path.empty() && !probe_clean_path.empty()) {
        probe_noisy = load_sequence(probe_noisy_path);
        probe_clean = load_sequence(probe_clean_path);
        io.probe_noisy = &probe_noisy;
        io.probe_clean = &probe_clean;
      }
      if (!quiet) io.log = &std::cout;
      const TrainResult r = train(clips, noise, preset.model, preset.train, io);
      std::cout << "final checkpoint " << (fs::path(train_out) / "final.stbn").string() << '\n';
      if (on_target) {
        const std::string dest = denoised_out.empty() ? (fs::path(train_out) / "denoised").string() : denoised_out;
        save_sequence(denoise(clips.front(), *r.model, noise), dest);
        std::cout << "denoised target written to " << dest << '\n';
      }
      return 0;
    }

    if (*denoise_cmd) {
      const Checkpoint ck = load_checkpoint(den_ckpt);
      const auto model = model_from_checkpoint(ck);
      NoiseModel noise = noise_from_checkpoint(ck).value_or(NoiseModel::unknown_noise());
      if (den_sigma > 0) noise = NoiseModel::gaussian(den_sigma, seed);
      if (den_unknown) noise = NoiseModel::unknown_noise();
      save_sequence(denoise(load_sequence(den_input), *model, noise), den_out);
      std::cout << "wrote " << den_out << '\n';
      return 0;
    }

    if (*eval_cmd) {
      const VideoSequence clean = load_sequence(ev_clean);
      VideoSequence result;
      json echo;
      if (!ev_ckpt.empty()) {
        if (ev_noisy.empty()) throw std::invalid_argument("eval --checkpoint needs --noisy");
        const Checkpoint ck = load_checkpoint(ev_ckpt);
        const auto model = model_from_checkpoint(ck);
        NoiseModel noise = noise_from_checkpoint(ck).value_or(NoiseModel::unknown_noise());
        if (ev_sigma > 0) noise = NoiseModel::gaussian(ev_sigma, seed);
        result = denoise(load_sequence(ev_noisy), *model, noise);
        echo = ck.config;
        echo["checkpoint"] = ev_ckpt;
        echo["noisy_psnr"] = psnr(load_sequence(ev_noisy), clean);
      } else {
        if (ev_result.empty()) throw std::invalid_argument("eval needs --result or --checkpoint");
        result = load_sequence(ev_result);
        echo = {{"result", ev_result}};
      }
      echo["clean"] = ev_clean;
      write_json(evaluate(result, clean, echo).to_json(), ev_out);
      return 0;
    }

    if (*probe_cmd) {
      std::unique_ptr<StbnNetwork> model;
      if (!pr_ckpt.empty()) {
        model = model_from_checkpoint(load_checkpoint(pr_ckpt));
      } else {
        ModelConfig c;
        c.seed = seed;
        c.image_channels = pr_toy.channels;
        model = std::make_unique<StbnNetwork>(c);
      }
      const VideoSequence input = pr_input.empty()
                                      ? add_awgn(make_toy_clip(pr_toy.options(seed)), NoiseModel::gaussian(25, seed))
                                      : load_sequence(pr_input);
      const ProbeLocation at = parse_pixel(pr_pixel);
      std::vector<Tensor> frames;
      for (int t = 0; t < input.frames(); ++t) frames.push_back(input.frame_tensor(t));
      const FlowPairs flows = model->estimate_flows(frames);
      const PixelPredictor predictor = model->predictor(flows);
      const auto maps = probe_dependency(predictor, frames, at);
      const double fd = finite_difference_dependency(predictor, frames, at, at);

      fs::create_directories(pr_out);
      float peak = 0;
      for (const auto& m : maps)
        for (float v : m.magnitudes.span()) peak = std::max(peak, v);
      json summary = {{"pixel", {at.t, at.y, at.x}}, {"finite_difference_self", fd}, {"frames", json::array()}};
      for (const auto& m : maps) {
        Image8 img{m.magnitudes.w(), m.magnitudes.h(), 1, {}};
        img.pixels.resize(m.magnitudes.size());
        for (std::size_t i = 0; i < m.magnitudes.size(); ++i)
          img.pixels[i] = static_cast<std::uint8_t>(
              std::lround(255.0 * std::sqrt(peak > 0 ? m.magnitudes[i] / peak : 0.0f)));
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03d.png", m.source_frame);
        write_png(fs::path(pr_out) / name, img);
        json f = {{"source_frame", m.source_frame},
                  {"heatmap", name},
                  {"total", m.total()},
                  {"nonzero", m.nonzero_count()},
                  {"value_at_pixel", m.magnitudes.at(0, 0, at.y, at.x)}};
        if (m.source_frame == at.t) f["zero_at_center"] = m.magnitudes.at(0, 0, at.y, at.x) == 0.0f;
        summary["frames"].push_back(f);
      }
      write_json(summary, (fs::path(pr_out) / "summary.json").string());
      std::cout << summary.dump(2) << '\n';
      return 0;
    }

    if (*audit_cmd) {
      const double s = au_sigma / 255.0;
      const Tensor noise = white_noise_field(au_size, au_size, s, seed);
      const FlowField flow = make_flow_pattern(parse_flow_pattern(au_flow), au_size, au_size, seed);
      const Interpolation interp = parse_interpolation(au_interp);
      const WarpReport r = audit_noise_statistics(noise, flow, interp, s);
      const Tensor warped = warp(noise, flow, interp);
      std::vector<double> ax, ay;
      for (int k = 0; k <= au_lags; ++k) {
        ax.push_back(lag_autocorrelation(warped, k, true));
        ay.push_back(lag_autocorrelation(warped, k, false));
      }
      const json j = {{"interpolation", to_string(r.interpolation)},
                      {"flow", au_flow},
                      {"sigma", au_sigma},
                      {"samples", r.samples},
                      {"variance_ratio", r.variance_ratio},
                      {"ks_statistic", r.ks_statistic},
                      {"lag1_autocorr_x", r.lag1_autocorr_x},
                      {"lag1_autocorr_y", r.lag1_autocorr_y},
                      {"autocorr_x", ax},
                      {"autocorr_y", ay},
                      {"histogram_min", r.histogram_min},
                      {"histogram_max", r.histogram_max},
                      {"histogram", r.histogram}};
      fs::create_directories(au_out);
      write_json(j, (fs::path(au_out) / "report.json").string());
      write_text(fs::path(au_out) / "histogram.svg", histogram_svg(r, s));
      write_text(fs::path(au_out) / "autocorr.svg", autocorr_svg(ax, ay, interp));
      std::cout << "variance_ratio " << r.variance_ratio << " ks " << r.ks_statistic << " lag1 x/y "
                << r.lag1_autocorr_x << " / " << r.lag1_autocorr_y << '\n';
      return 0;
    }

    if (*verify_cmd) {
      const VideoSequence clean = make_toy_clip(vp_toy.options(seed));
      const double s = vp_sigma / 255.0;
      std::unique_ptr<StbnNetwork> model;
      RiskGapOptions opt;
      opt.num_noise_draws = vp_draws;
      opt.seed = seed;
      if (vp_negative) {
        model = train_leaky_control(clean, s, vp_control_iters, seed);
        opt.allow_uncertified = true;
      } else if (!vp_ckpt.empty()) {
        model = model_from_checkpoint(load_checkpoint(vp_ckpt));
      } else {
        ModelConfig c;
        c.seed = seed;
        c.image_channels = vp_toy.channels;
        model = std::make_unique<StbnNetwork>(c);
      }
      json j = verify_risk_gap(*model, clean, s, opt).to_json();
      j["negative_control"] = vp_negative;
      write_json(j, vp_out);
      return 0;
    }

    if (*ablate_cmd) {
      AblationOptions o;
      o.preset = ab_model.resolve(ab_toy.channels);
      o.seeds = ab_seeds;
      o.train_clips = ab_train_clips;
      o.eval_clips = ab_eval_clips;
      o.clip = ab_toy.options(seed);
      o.sigma = ab_sigma;
      const AblationReport r = run_ablation(o, &std::cout);
      std::cout << r.table();
      if (!ab_out.empty()) write_json(r.to_json(), ab_out);
      return 0;
    }

    if (*flow_cmd) {
      FlowEstimatorConfig fc;
      fc.backend = parse_flow_backend(fl_backend);
      fc.adapter_command = fl_adapter;
      const VideoSequence clip = load_sequence(fl_input);
      const auto estimator = make_flow_estimator(fc, clip.channels(), CounterRng(seed, 0));
      fs::create_directories(fl_out);
      for (int t = 0; t + 1 < clip.frames(); ++t) {
        FlowField f = estimate_flow(clip.frame_tensor(t), clip.frame_tensor(t + 1), *estimator);
        char name[40];
        std::snprintf(name, sizeof name, "flow_%03d_%03d.flo", t, t + 1);
        save_flow_file(f, fs::path(fl_out) / name);
      }
      std::cout << "wrote " << clip.frames() - 1 << " flow files to " << fl_out << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "stbn: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

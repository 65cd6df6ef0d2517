#include "stbn/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "stbn/eval.hpp"
#include "stbn/losses.hpp"
#include "stbn/metrics.hpp"
#include "stbn/optim.hpp"

namespace stbn {

using nlohmann::json;

LossKind parse_loss_kind(const std::string& s) {
  if (s == "nll_gaussian" || s == "nll") return LossKind::nll_gaussian;
  if (s == "l2") return LossKind::l2;
  throw std::invalid_argument("unknown loss '" + s + "' (expected nll_gaussian or l2)");
}

std::string to_string(LossKind kind) { return kind == LossKind::nll_gaussian ? "nll_gaussian" : "l2"; }

void TrainConfig::validate(const NoiseModel& noise, const ModelConfig& model) const {
  if (!(learning_rate > 0) || !(flow_learning_rate > 0))
    throw std::invalid_argument("TrainConfig: learning rates must be > 0");
  if (crop_size < 8) throw std::invalid_argument("TrainConfig: crop_size must be >= 8");
  if (seq_length < 2) throw std::invalid_argument("TrainConfig: seq_length must be >= 2");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (iterations < 0) throw std::invalid_argument("TrainConfig: iterations must be >= 0");
  if (log_interval < 1) throw std::invalid_argument("TrainConfig: log_interval must be >= 1");
  if (checkpoint_interval < 0) throw std::invalid_argument("TrainConfig: checkpoint_interval must be >= 0");
  distill.validate();
  if (loss == LossKind::nll_gaussian) {
    if (noise.kind != NoiseKind::gaussian_known_sigma || !(noise.sigma > 0))
      throw std::invalid_argument("TrainConfig: nll_gaussian needs a known Gaussian noise sigma");
    if (model.srfe.head != HeadKind::gaussian_params)
      throw std::invalid_argument("TrainConfig: nll_gaussian needs the gaussian_params head");
  }
  if (toggles.flow_refine && model.flow.backend != FlowBackend::tiny_pyramid)
    throw std::invalid_argument("TrainConfig: flow_refine needs the trainable tiny_pyramid flow backend");
}

json TrainConfig::to_json() const {
  return {{"loss", to_string(loss)},
          {"learning_rate", learning_rate},
          {"flow_learning_rate", flow_learning_rate},
          {"crop_size", crop_size},
          {"seq_length", seq_length},
          {"batch_size", batch_size},
          {"iterations", iterations},
          {"distill",
           {{"alpha", distill.alpha},
            {"warmup_iterations", distill.warmup_iterations},
            {"weight_decay_gamma", distill.weight_decay_gamma},
            {"teacher_refresh_interval", distill.teacher_refresh_interval}}},
          {"seed", seed},
          {"toggles", {{"bsa", toggles.bsa}, {"srfe", toggles.srfe}, {"flow_refine", toggles.flow_refine}}},
          {"log_interval", log_interval},
          {"checkpoint_interval", checkpoint_interval}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.loss = parse_loss_kind(j.at("loss").get<std::string>());
  c.learning_rate = j.at("learning_rate").get<double>();
  c.flow_learning_rate = j.at("flow_learning_rate").get<double>();
  c.crop_size = j.at("crop_size").get<int>();
  c.seq_length = j.at("seq_length").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.iterations = j.at("iterations").get<int>();
  const json& d = j.at("distill");
  c.distill = {d.at("alpha").get<double>(), d.at("warmup_iterations").get<int>(),
               d.at("weight_decay_gamma").get<double>(), d.value("teacher_refresh_interval", 0)};
  c.seed = j.at("seed").get<std::uint64_t>();
  const json& t = j.at("toggles");
  c.toggles = {t.at("bsa").get<bool>(), t.at("srfe").get<bool>(), t.at("flow_refine").get<bool>()};
  c.log_interval = j.at("log_interval").get<int>();
  c.checkpoint_interval = j.at("checkpoint_interval").get<int>();
  return c;
}

Preset desk_preset(int image_channels) {
  Preset p;
  p.model.image_channels = image_channels;
  p.model.bsa.channels = 24;
  p.model.bsa.num_dconv_blocks = 3;
  p.model.srfe.channels = 16;
  p.model.srfe.num_residual_blocks = 2;
  p.model.flow.hidden_channels = 16;
  p.train.learning_rate = 5e-4;
  p.train.crop_size = 32;
  p.train.seq_length = 5;
  p.train.batch_size = 4;
  p.train.iterations = 500;
  return p;
}

Preset paper_preset(int image_channels) {
  Preset p;
  p.model.image_channels = image_channels;
  p.train.learning_rate = 1e-4;
  p.train.crop_size = 96;
  p.train.seq_length = 10;
  p.train.batch_size = 4;
  p.train.iterations = 100000;
  p.train.log_interval = 500;
  p.train.checkpoint_interval = 5000;
  return p;
}

Preset preset_by_name(const std::string& name, int image_channels) {
  if (name == "desk") return desk_preset(image_channels);
  if (name == "paper") return paper_preset(image_channels);
  throw std::invalid_argument("unknown preset '" + name + "' (expected desk or paper)");
}

ModelConfig apply_toggles(ModelConfig model, const ComponentToggles& toggles) {
  model.use_bsa = toggles.bsa;
  model.use_srfe = toggles.srfe;
  return model;
}

json MetricsRecord::to_json() const {
  return {{"iter", iter},
          {"loss", loss},
          {"psnr_probe", psnr_probe ? json(*psnr_probe) : json(nullptr)},
          {"alpha_active", alpha_active}};
}

json checkpoint_config(const ModelConfig& model, const TrainConfig& train, const NoiseModel& noise) {
  return {{"model", model.to_json()},
          {"train", train.to_json()},
          {"noise",
           {{"kind", noise.kind == NoiseKind::gaussian_known_sigma ? "gaussian" : "unknown"},
            {"sigma", noise.sigma},
            {"seed", noise.seed}}}};
}

std::unique_ptr<StbnNetwork> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<StbnNetwork>(ModelConfig::from_json(ckpt.config.at("model")));
  ParameterList params = model->all_parameters();
  apply_checkpoint(ckpt, params);
  return model;
}

std::optional<NoiseModel> noise_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.config.contains("noise")) return std::nullopt;
  const json& n = ckpt.config.at("noise");
  if (n.at("kind").get<std::string>() != "gaussian") return NoiseModel::unknown_noise();
  return NoiseModel::gaussian(n.at("sigma").get<double>(), n.at("seed").get<std::uint64_t>());
}

namespace {

Var add_or_init(const Var& total, const Var& term) { return total.defined() ? add(total, term) : term; }

// Denoised frames used to regenerate teacher flows; values only.
std::vector<Var> denoised_for_teacher(const std::vector<Var>& outs, const std::vector<Tensor>& frames,
                                      const NoiseModel& noise, HeadKind head, int C) {
  NoGradGuard no_grad;
  std::vector<Var> den;
  for (std::size_t t = 0; t < outs.size(); ++t) {
    if (head == HeadKind::gaussian_params && noise.kind == NoiseKind::gaussian_known_sigma) {
      den.emplace_back(posterior_mean(split_gaussian(detach(outs[t]), C).values(), frames[t], noise.sigma_unit()));
    } else {
      den.emplace_back(slice_channels(detach(outs[t]), 0, C).value());
    }
  }
  return den;
}

}  // namespace

TrainResult train(const std::vector<VideoSequence>& noisy_clips, const NoiseModel& noise, const ModelConfig& model_cfg,
                  const TrainConfig& config, const TrainIo& io) {
  if (noisy_clips.empty()) throw std::invalid_argument("train: no training clips");
  noise.validate();
  const ModelConfig mcfg = apply_toggles(model_cfg, config.toggles);
  config.validate(noise, mcfg);
  for (const auto& clip : noisy_clips) {
    clip.validate();
    if (clip.channels() != mcfg.image_channels) throw std::invalid_argument("train: clip channel count mismatch");
  }

  TrainResult result;
  result.model = std::make_unique<StbnNetwork>(mcfg);
  StbnNetwork& model = *result.model;
  const int C = mcfg.image_channels;
  const json echo = checkpoint_config(mcfg, config, noise);

  Adam denoiser_opt(model.denoiser_parameters(), config.learning_rate);
  Adam flow_opt(model.flow_parameters(), config.flow_learning_rate);
  TinyPyramidFlow* student = model.trainable_flow();
  std::unique_ptr<TinyPyramidFlow> teacher;

  std::ofstream metrics_out;
  if (io.metrics_path) {
    if (io.metrics_path->has_parent_path()) std::filesystem::create_directories(io.metrics_path->parent_path());
    metrics_out.open(*io.metrics_path);
    if (!metrics_out) throw std::runtime_error("cannot write metrics log " + io.metrics_path->string());
  }
  auto save = [&](const std::string& name, std::uint64_t iter) {
    if (!io.checkpoint_dir) return;
    save_checkpoint(make_checkpoint(model.all_parameters(), echo, iter), *io.checkpoint_dir / name);
  };

  const CounterRng crop_rng(config.seed, CounterRng::hash_name("crops"));
  const int T = config.seq_length;
  for (long it = 0; it < config.iterations; ++it) {
    std::vector<VideoSequence> batch;
    for (int b = 0; b < config.batch_size; ++b) {
      const auto& clip = noisy_clips[(it * config.batch_size + b) % noisy_clips.size()];
      batch.push_back(crop_training_batch(clip, std::min(T, clip.frames()), config.crop_size,
                                          crop_rng.bits(static_cast<std::uint64_t>(it) * config.batch_size + b)));
    }
    const std::vector<Tensor> frames = stack_frames(batch);
    bool distill = false;
    auto step = [&]() -> double {
      const bool warm = it < config.distill.warmup_iterations;
      distill = student && config.toggles.flow_refine && !warm;

      Var photometric;
      std::vector<Var> student_flows;
      FlowPairs flows;
      if (student && warm) {
        const int pairs = 2 * (static_cast<int>(frames.size()) - 1);
        for (std::size_t t = 1; t < frames.size(); ++t) {
          photometric = add_or_init(photometric, student->photometric_loss(frames[t], frames[t - 1]));
          photometric = add_or_init(photometric, student->photometric_loss(frames[t - 1], frames[t]));
        }
        photometric = scale(photometric, 1.0f / pairs);
        flows = model.estimate_flows(frames);
      } else if (distill) {
        const int refresh = config.distill.teacher_refresh_interval;
        const long since = it - config.distill.warmup_iterations;
        if (!teacher || (refresh > 0 && since > 0 && since % refresh == 0)) teacher = student->frozen_copy();
        student_flows = student_flow_list(frames, *student);
        const std::size_t n = frames.size() - 1;
        for (std::size_t k = 0; k < n; ++k) flows.forward.push_back(student_flows[k].value());
        for (std::size_t k = 0; k < n; ++k) flows.backward.push_back(student_flows[n + k].value());
      } else {
        if (student) student->set_frozen(true);
        flows = model.estimate_flows(frames);
      }

      const std::vector<Var> inputs(frames.begin(), frames.end());
      const std::vector<Var> outs = model.forward(inputs, flows);
      Var loss;
      for (std::size_t t = 0; t < outs.size(); ++t) {
        Var term = config.loss == LossKind::nll_gaussian
                       ? [&] {
                           const GaussianVars g = split_gaussian(outs[t], C);
                           return nll_loss(g.mu, g.log_var, frames[t], noise.sigma_unit());
                         }()
                       : l2_blind_loss(slice_channels(outs[t], 0, C), frames[t]);
        loss = add_or_init(loss, term);
      }
      loss = scale(loss, 1.0f / static_cast<float>(outs.size()));
      Var total = loss;
      if (distill) {
        const FlowPairs teacher_pairs = make_teacher_flows(denoised_for_teacher(outs, frames, noise, mcfg.srfe.head, C),
                                                           *teacher);
        std::vector<Tensor> teacher_flows = teacher_pairs.forward;
        teacher_flows.insert(teacher_flows.end(), teacher_pairs.backward.begin(), teacher_pairs.backward.end());
        const Var dis = distillation_loss(student_flows, teacher_flows, model.flow_parameters(),
                                          config.distill.weight_decay_gamma);
        total = add(total, scale(dis, static_cast<float>(config.distill.alpha)));
      }
      const double loss_value = total.value()[0];
      if (!std::isfinite(loss_value) || (photometric.defined() && !std::isfinite(photometric.value()[0])))
        throw std::runtime_error("loss is not finite");
      result.loss_curve.push_back(loss_value);

      denoiser_opt.zero_grad();
      flow_opt.zero_grad();
      backward(photometric.defined() ? add(total, photometric) : total);
      denoiser_opt.step();
      if (photometric.defined() || distill) flow_opt.step();
      return loss_value;
    };
    double loss_value = 0.0;
    try {
      loss_value = step();
    } catch (const std::exception& e) {
      throw std::runtime_error("training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }

    const long done = it + 1;
    if (done % config.log_interval == 0 || done == config.iterations) {
      MetricsRecord rec{done, loss_value, std::nullopt, distill};
      if (io.probe_noisy && io.probe_clean)
        rec.psnr_probe = psnr(denoise(*io.probe_noisy, model, noise), *io.probe_clean);
      if (metrics_out.is_open()) metrics_out << rec.to_json().dump() << '\n' << std::flush;
      if (io.log) {
        *io.log << "iter " << done << " loss " << loss_value;
        if (rec.psnr_probe) *io.log << " psnr_probe " << *rec.psnr_probe;
        *io.log << (distill ? " [distill]" : "") << '\n';
      }
      result.metrics.push_back(rec);
    }
    if (config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0 && done != config.iterations)
      save("ckpt_" + std::to_string(done) + ".stbn", done);
  }

  result.checkpoint = make_checkpoint(model.all_parameters(), echo, static_cast<std::uint64_t>(config.iterations));
  if (io.checkpoint_dir) save_checkpoint(result.checkpoint, *io.checkpoint_dir / "final.stbn");
  return result;
}

json RiskGapReport::to_json() const {
  return {{"gap_estimate", gap_estimate},
          {"expected_constant", expected_constant},
          {"relative_error", relative_error},
          {"self_supervised_risk", self_supervised_risk},
          {"supervised_risk", supervised_risk},
          {"standard_error", standard_error},
          {"pixel_draws", pixel_draws},
          {"certified", certified}};
}

RiskGapReport verify_risk_gap(const StbnNetwork& model, const VideoSequence& clean_toy, double sigma_unit,
                              const RiskGapOptions& options) {
  if (!(sigma_unit > 0)) throw std::invalid_argument("verify_risk_gap: sigma must be > 0");
  if (options.num_noise_draws < 1) throw std::invalid_argument("verify_risk_gap: need at least one noise draw");
  clean_toy.validate();
  RiskGapReport r;
  r.certified = model.config().bsa.mask_center && certify_blind_spot(model, 8, options.seed).certified;
  if (!r.certified && !options.allow_uncertified)
    throw std::logic_error("verify_risk_gap: model fails the blind-spot probe; the risk identity does not apply");

  std::vector<Tensor> clean;
  for (int t = 0; t < clean_toy.frames(); ++t) clean.push_back(clean_toy.frame_tensor(t));
  double sum_self = 0.0, sum_sup = 0.0, mean_gap = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (int d = 0; d < options.num_noise_draws; ++d) {
    const NoiseModel nm = NoiseModel::gaussian(sigma_unit * 255.0, CounterRng::mix(options.seed + 0x9e37u * (d + 1)));
    const VideoSequence noisy = add_awgn(clean_toy, nm);
    std::vector<Tensor> frames;
    for (int t = 0; t < noisy.frames(); ++t) frames.push_back(noisy.frame_tensor(t));
    const std::vector<Tensor> f = predict_means(model, frames);
    for (std::size_t t = 0; t < f.size(); ++t)
      for (std::size_t i = 0; i < f[t].size(); ++i) {
        const double pred = f[t][i], y = frames[t][i], x = clean[t][i];
        const double self = (pred - y) * (pred - y), sup = (pred - x) * (pred - x);
        sum_self += self;
        sum_sup += sup;
        const double g = self - sup;
        ++n;
        const double delta = g - mean_gap;
        mean_gap += delta / static_cast<double>(n);
        m2 += delta * (g - mean_gap);
      }
  }
  r.pixel_draws = n;
  r.self_supervised_risk = sum_self / n;
  r.supervised_risk = sum_sup / n;
  r.gap_estimate = mean_gap;
  r.expected_constant = sigma_unit * sigma_unit;
  r.relative_error = std::fabs(r.gap_estimate - r.expected_constant) / r.expected_constant;
  r.standard_error = n > 1 ? std::sqrt(m2 / (n - 1) / n) : 0.0;
  return r;
}

std::unique_ptr<StbnNetwork> train_leaky_control(const VideoSequence& clean_toy, double sigma_unit, int iterations,
                                                 std::uint64_t seed) {
  Preset p = desk_preset(clean_toy.channels());
  p.model.bsa.mask_center = false;
  p.model.srfe.head = HeadKind::regression;
  p.model.seed = seed;
  p.train.loss = LossKind::l2;
  p.train.learning_rate = 1e-3;
  p.train.iterations = iterations;
  p.train.crop_size = std::min({32, clean_toy.height(), clean_toy.width()});
  p.train.seq_length = std::min(3, clean_toy.frames());
  p.train.batch_size = 2;
  p.train.toggles.flow_refine = false;
  p.train.distill.warmup_iterations = 0;
  p.train.log_interval = std::max(1, iterations);
  p.train.seed = seed;
  const NoiseModel noise = NoiseModel::gaussian(sigma_unit * 255.0, CounterRng::mix(seed ^ 0x1eaf));
  return train({add_awgn(clean_toy, noise)}, NoiseModel::unknown_noise(), p.model, p.train).model;
}

}  // namespace stbn

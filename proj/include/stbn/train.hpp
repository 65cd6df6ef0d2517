#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stbn/checkpoint.hpp"
#include "stbn/model.hpp"
#include "stbn/videodata.hpp"

namespace stbn {

enum class LossKind { nll_gaussian, l2 };

LossKind parse_loss_kind(const std::string& s);
std::string to_string(LossKind kind);

struct ComponentToggles {
  bool bsa = true;
  bool srfe = true;
  bool flow_refine = true;
};

struct TrainConfig {
  LossKind loss = LossKind::nll_gaussian;
  double learning_rate = 1e-4;
  /// Adam rate for the trainable flow student (photometric warm-up and distillation).
  double flow_learning_rate = 1e-3;
  int crop_size = 64;
  int seq_length = 5;
  int batch_size = 4;
  int iterations = 2000;
  DistillationConfig distill{};
  std::uint64_t seed = 0;
  ComponentToggles toggles{};
  int log_interval = 50;
  int checkpoint_interval = 0;  // 0: final checkpoint only

  /// nll_gaussian needs a known Gaussian sigma; flow_refine needs a trainable flow backend.
  void validate(const NoiseModel& noise, const ModelConfig& model) const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Model and training hyper-parameters that belong together.
struct Preset {
  ModelConfig model;
  TrainConfig train;
};

/// CPU-sized: narrow layers, T = 5, 32 px crops, 500 iterations.
Preset desk_preset(int image_channels = 1);
/// Widths at the library defaults, T = 10, 96 px crops.
Preset paper_preset(int image_channels = 1);
Preset preset_by_name(const std::string& name, int image_channels = 1);

/// Toggles decide the propagation cell and the head.
ModelConfig apply_toggles(ModelConfig model, const ComponentToggles& toggles);

struct MetricsRecord {
  long iter = 0;
  double loss = 0.0;
  std::optional<double> psnr_probe;
  bool alpha_active = false;

  nlohmann::json to_json() const;
};

struct TrainIo {
  std::optional<std::filesystem::path> metrics_path;   // JSON lines
  std::optional<std::filesystem::path> checkpoint_dir;  // ckpt_<iter>.stbn and final.stbn
  const VideoSequence* probe_noisy = nullptr;           // held-out clip for psnr_probe
  const VideoSequence* probe_clean = nullptr;
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::unique_ptr<StbnNetwork> model;
  std::vector<MetricsRecord> metrics;
  /// Per-iteration training loss (denoising term plus active distillation term).
  std::vector<double> loss_curve;
  Checkpoint checkpoint;
};

/// Self-supervised training on noisy clips only. Throws std::runtime_error if the loss
/// becomes non-finite.
TrainResult train(const std::vector<VideoSequence>& noisy_clips, const NoiseModel& noise, const ModelConfig& model,
                  const TrainConfig& config, const TrainIo& io = {});

nlohmann::json checkpoint_config(const ModelConfig& model, const TrainConfig& train, const NoiseModel& noise);
std::unique_ptr<StbnNetwork> model_from_checkpoint(const Checkpoint& ckpt);
/// Noise model recorded at training time, if any.
std::optional<NoiseModel> noise_from_checkpoint(const Checkpoint& ckpt);

struct RiskGapReport {
  double gap_estimate = 0.0;
  double expected_constant = 0.0;  // sigma^2
  double relative_error = 0.0;
  double self_supervised_risk = 0.0;
  double supervised_risk = 0.0;
  double standard_error = 0.0;  // of gap_estimate
  std::size_t pixel_draws = 0;
  bool certified = false;

  nlohmann::json to_json() const;
};

struct RiskGapOptions {
  int num_noise_draws = 10;  // full-clip noise realisations; pixel draws = draws x clip size
  std::uint64_t seed = 0;
  /// Controls only: report even when the blind-spot probe fails.
  bool allow_uncertified = false;
};

/// Monte-Carlo estimate of E||f(y) - y||^2 - E||f(y) - x||^2 per pixel, with f the
/// predicted mean and y = x + sigma * n. Refuses (std::logic_error) models that fail
/// the blind-spot probe unless allow_uncertified is set.
RiskGapReport verify_risk_gap(const StbnNetwork& model, const VideoSequence& clean_toy, double sigma_unit,
                              const RiskGapOptions& options = {});

/// Negative control for verify_risk_gap: a model whose entry convolution keeps its centre
/// tap, trained briefly with L2 on a noisy copy of `clean_toy` so it learns to pass the
/// co-located noisy pixel through.
std::unique_ptr<StbnNetwork> train_leaky_control(const VideoSequence& clean_toy, double sigma_unit, int iterations,
                                                 std::uint64_t seed);

}  // namespace stbn

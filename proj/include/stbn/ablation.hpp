#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "stbn/train.hpp"

namespace stbn {

struct AblationVariant {
  std::string name;
  ComponentToggles toggles;
};

/// baseline, +BSA, +SRFE, +flow_refine; each step switches one more component on.
std::vector<AblationVariant> ablation_ladder();

struct AblationOptions {
  Preset preset = desk_preset();
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int train_clips = 2;
  int eval_clips = 2;
  ToyClipOptions clip{};
  double sigma = 25.0;
};

struct AblationRow {
  AblationVariant variant;
  std::vector<double> psnr;  // one per seed, mean over the held-out clips
  std::vector<double> ssim;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  double noisy_psnr = 0.0;
  std::vector<std::uint64_t> seeds;

  nlohmann::json to_json() const;
  /// Plain-text comparison table.
  std::string table() const;
};

/// Trains every ladder variant on the same noisy toy clips per seed and scores each on
/// held-out clips that share no content or noise seed with the training data.
AblationReport run_ablation(const AblationOptions& options, std::ostream* log = nullptr);

}  // namespace stbn

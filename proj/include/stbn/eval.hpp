#pragma once

#include <vector>

#include "json.hpp"
#include "stbn/model.hpp"
#include "stbn/videodata.hpp"

namespace stbn {

/// Full-sequence inference. Uses the posterior mean when the head predicts Gaussian
/// parameters and the noise level is known, the predicted mean / regression output
/// otherwise. The result is not clipped and no clean input is taken.
VideoSequence denoise(const VideoSequence& noisy, const StbnNetwork& model, const NoiseModel& noise);

/// Raw head output split into per-frame predicted means (no posterior step).
std::vector<Tensor> predict_means(const StbnNetwork& model, const std::vector<Tensor>& frames);

struct EvalReport {
  std::vector<double> per_frame_psnr;
  std::vector<double> per_frame_ssim;
  double mean_psnr = 0.0;  // headline: per-frame average
  double mean_ssim = 0.0;  // headline: per-frame average
  double sequence_psnr = 0.0;  // pooled MSE over the whole sequence
  nlohmann::json config_echo;

  nlohmann::json to_json() const;
};

EvalReport evaluate(const VideoSequence& result, const VideoSequence& clean, nlohmann::json config_echo = {});

}  // namespace stbn

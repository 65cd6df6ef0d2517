#include "stbn/eval.hpp"

#include <stdexcept>

#include "stbn/losses.hpp"
#include "stbn/metrics.hpp"

namespace stbn {

namespace {

std::vector<Tensor> sequence_frames(const VideoSequence& seq) {
  std::vector<Tensor> frames;
  for (int t = 0; t < seq.frames(); ++t) frames.push_back(seq.frame_tensor(t));
  return frames;
}

}  // namespace

std::vector<Tensor> predict_means(const StbnNetwork& model, const std::vector<Tensor>& frames) {
  NoGradGuard no_grad;
  const auto outs = model.forward(frames);
  std::vector<Tensor> means;
  const int C = model.config().image_channels;
  for (const Var& o : outs) means.push_back(slice_channels(o, 0, C).value());
  return means;
}

VideoSequence denoise(const VideoSequence& noisy, const StbnNetwork& model, const NoiseModel& noise) {
  noisy.validate();
  const int C = model.config().image_channels;
  if (noisy.channels() != C)
    throw std::invalid_argument("denoise: checkpoint expects " + std::to_string(C) + " channels, input has " +
                                std::to_string(noisy.channels()));
  NoGradGuard no_grad;
  const std::vector<Tensor> frames = sequence_frames(noisy);
  const auto outs = model.forward(frames);
  const bool posterior = model.head() == HeadKind::gaussian_params && noise.kind == NoiseKind::gaussian_known_sigma;
  VideoSequence result(noisy.frames(), noisy.height(), noisy.width(), C, noisy.id);
  result.frame_rate = noisy.frame_rate;
  for (int t = 0; t < noisy.frames(); ++t) {
    Tensor frame;
    if (posterior) {
      frame = posterior_mean(split_gaussian(outs[t], C).values(), frames[t], noise.sigma_unit());
    } else {
      frame = slice_channels(outs[t], 0, C).value();
    }
    result.set_frame(t, frame);
  }
  return result;
}

nlohmann::json EvalReport::to_json() const {
  return {{"per_frame_psnr", per_frame_psnr}, {"per_frame_ssim", per_frame_ssim},
          {"mean_psnr", mean_psnr},           {"mean_ssim", mean_ssim},
          {"sequence_psnr", sequence_psnr},   {"config_echo", config_echo}};
}

EvalReport evaluate(const VideoSequence& result, const VideoSequence& clean, nlohmann::json config_echo) {
  if (!result.same_shape(clean)) throw std::invalid_argument("evaluate: result and reference differ in shape");
  EvalReport r;
  for (int t = 0; t < clean.frames(); ++t) {
    const Tensor a = result.frame_tensor(t), b = clean.frame_tensor(t);
    r.per_frame_psnr.push_back(psnr(a, b));
    r.per_frame_ssim.push_back(ssim(a, b));
  }
  for (double v : r.per_frame_psnr) r.mean_psnr += v / r.per_frame_psnr.size();
  for (double v : r.per_frame_ssim) r.mean_ssim += v / r.per_frame_ssim.size();
  r.sequence_psnr = psnr(result, clean);
  r.config_echo = std::move(config_echo);
  return r;
}

}  // namespace stbn

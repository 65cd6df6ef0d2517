#include <gtest/gtest.h>

#include "stbn/eval.hpp"
#include "stbn/losses.hpp"
#include "stbn/metrics.hpp"

using namespace stbn;

namespace {

ModelConfig small(HeadKind head = HeadKind::gaussian_params) {
  ModelConfig c;
  c.bsa.channels = 6;
  c.bsa.num_dconv_blocks = 1;
  c.srfe.channels = 4;
  c.srfe.num_residual_blocks = 1;
  c.srfe.head = head;
  c.flow.hidden_channels = 4;
  c.flow.pyramid_levels = 2;
  c.seed = 12;
  return c;
}

VideoSequence toy(int channels = 1) {
  ToyClipOptions o;
  o.frames = 3;
  o.height = 20;
  o.width = 20;
  o.channels = channels;
  return make_toy_clip(o);
}

}  // namespace

TEST(Denoise, UntrainedModelGivesFiniteFramesOfTheRightShape) {
  const StbnNetwork model(small());
  const NoiseModel noise = NoiseModel::gaussian(30, 1);
  const VideoSequence noisy = add_awgn(toy(), noise);
  const VideoSequence out = denoise(noisy, model, noise);
  EXPECT_TRUE(out.same_shape(noisy));
  for (float v : out.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Denoise, IsBitIdenticalAcrossRuns) {
  const NoiseModel noise = NoiseModel::gaussian(30, 1);
  const VideoSequence noisy = add_awgn(toy(), noise);
  const VideoSequence a = denoise(noisy, StbnNetwork(small()), noise);
  const VideoSequence b = denoise(noisy, StbnNetwork(small()), noise);
  EXPECT_EQ(a.data(), b.data());
}

TEST(Denoise, UsesThePosteriorMeanWhenSigmaIsKnown) {
  const StbnNetwork model(small());
  const NoiseModel noise = NoiseModel::gaussian(30, 2);
  const VideoSequence noisy = add_awgn(toy(), noise);
  const VideoSequence out = denoise(noisy, model, noise);

  std::vector<Tensor> frames;
  for (int t = 0; t < noisy.frames(); ++t) frames.push_back(noisy.frame_tensor(t));
  NoGradGuard no_grad;
  const auto heads = model.forward(frames);
  const double s2 = noise.sigma_unit() * noise.sigma_unit();
  double worst = 0;
  for (int t = 0; t < noisy.frames(); ++t)
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 20; ++x) {
        const double mu = heads[t].value().at(0, 0, y, x);
        const double lv = std::clamp<double>(heads[t].value().at(0, 1, y, x), kLogVarMin, kLogVarMax);
        const double v = std::exp(lv);
        const double expect = (v * noisy.at(t, y, x, 0) + s2 * mu) / (v + s2);
        worst = std::max(worst, std::fabs(expect - out.at(t, y, x, 0)));
      }
  EXPECT_LT(worst, 1e-5);

  // Unknown noise falls back to the predicted mean.
  const VideoSequence means = denoise(noisy, model, NoiseModel::unknown_noise());
  const auto mu = predict_means(model, frames);
  for (int t = 0; t < noisy.frames(); ++t)
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 20; ++x) EXPECT_EQ(means.at(t, y, x, 0), mu[t].at(0, 0, y, x));
}

TEST(Denoise, RegressionHeadReturnsItsOutput) {
  const StbnNetwork model(small(HeadKind::regression));
  const NoiseModel noise = NoiseModel::gaussian(30, 2);
  const VideoSequence noisy = add_awgn(toy(), noise);
  const VideoSequence out = denoise(noisy, model, noise);
  std::vector<Tensor> frames;
  for (int t = 0; t < noisy.frames(); ++t) frames.push_back(noisy.frame_tensor(t));
  const auto mu = predict_means(model, frames);
  EXPECT_EQ(out.at(1, 4, 5, 0), mu[1].at(0, 0, 4, 5));
}

TEST(Denoise, ChannelMismatchThrows) {
  const StbnNetwork model(small());
  const VideoSequence rgb = toy(3);
  EXPECT_THROW(denoise(rgb, model, NoiseModel::gaussian(25)), std::invalid_argument);
}

TEST(Evaluate, ReportFields) {
  const VideoSequence clean = toy();
  const EvalReport same = evaluate(clean, clean, nlohmann::json{{"tag", "x"}});
  ASSERT_EQ(same.per_frame_psnr.size(), 3u);
  ASSERT_EQ(same.per_frame_ssim.size(), 3u);
  EXPECT_DOUBLE_EQ(same.mean_psnr, kPsnrCap);
  EXPECT_NEAR(same.mean_ssim, 1.0, 1e-9);

  const VideoSequence noisy = add_awgn(clean, NoiseModel::gaussian(20, 4));
  const EvalReport r = evaluate(noisy, clean);
  double mean = 0, mse = 0;
  for (int t = 0; t < 3; ++t) {
    EXPECT_DOUBLE_EQ(r.per_frame_psnr[t], psnr(noisy.frame_tensor(t), clean.frame_tensor(t)));
    mean += r.per_frame_psnr[t] / 3;
  }
  for (std::size_t i = 0; i < clean.size(); ++i) mse += std::pow(double(noisy.data()[i]) - clean.data()[i], 2);
  EXPECT_NEAR(r.mean_psnr, mean, 1e-9);
  EXPECT_NEAR(r.sequence_psnr, psnr_from_mse(mse / clean.size()), 1e-6);
  EXPECT_LT(r.mean_ssim, 1.0);

  const auto j = same.to_json();
  for (const char* key : {"per_frame_psnr", "per_frame_ssim", "mean_psnr", "mean_ssim", "sequence_psnr"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j.at("config_echo").at("tag"), "x");

  VideoSequence shorter(2, 20, 20, 1);
  EXPECT_THROW(evaluate(shorter, clean), std::invalid_argument);
}

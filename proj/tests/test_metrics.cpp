#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "stbn/metrics.hpp"
#include "test_util.hpp"

using namespace stbn;
using stbn::testing::random_tensor;

#ifndef STBN_FIXTURE_DIR
#error "STBN_FIXTURE_DIR must point at tests/fixtures"
#endif

TEST(Psnr, CapAndZeroDecibels) {
  const Tensor a = random_tensor(1, 3, 8, 8, 1, 0, 1);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  Tensor b = a;
  for (float& v : b.span()) v += 1.0f;  // MSE = peak^2
  EXPECT_NEAR(psnr(a, b), 0.0, 1e-6);
  EXPECT_THROW(psnr(a, Tensor(1, 3, 8, 9)), std::invalid_argument);
}

TEST(Psnr, SymmetricAndStrictlyDecreasingInMse) {
  const Tensor a = random_tensor(1, 1, 16, 16, 2, 0, 1);
  const Tensor d = random_tensor(1, 1, 16, 16, 3);
  double previous = kPsnrCap + 1;
  for (int k = 1; k <= 10; ++k) {
    Tensor b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += 0.02f * k * d[i];
    EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
    EXPECT_LT(psnr(a, b), previous);
    previous = psnr(a, b);
  }
}

TEST(Psnr, MatchesTheAnalyticAwgnValue) {
  VideoSequence clean(4, 512, 512, 1);
  for (float& v : clean.data()) v = 0.5f;
  const VideoSequence noisy = add_awgn(clean, NoiseModel::gaussian(30.0, 5));
  EXPECT_NEAR(psnr(noisy, clean), 20.0 * std::log10(255.0 / 30.0), 0.05);
}

TEST(Ssim, IdenticalImagesScoreOne) {
  const Tensor a = random_tensor(1, 3, 20, 24, 4, 0, 1);
  EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
}

TEST(Ssim, AntiCorrelatedImagesScoreBelowZero) {
  const Tensor a = random_tensor(1, 1, 24, 24, 5, 0, 1);
  Tensor b = a;
  for (float& v : b.span()) v = 1.0f - v;
  EXPECT_LT(ssim(a, b), 0.0);
}

TEST(Ssim, SymmetricBoundedAndRejectsSmallImages) {
  const Tensor a = random_tensor(1, 1, 16, 16, 6, 0, 1), b = random_tensor(1, 1, 16, 16, 7, 0, 1);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_LE(std::fabs(ssim(a, b)), 1.0);
  EXPECT_THROW(ssim(Tensor(1, 1, 10, 16), Tensor(1, 1, 10, 16)), std::invalid_argument);
}

TEST(Ssim, MatchesTheFrozenReferenceFixture) {
  std::ifstream in(std::string(STBN_FIXTURE_DIR) + "/ssim_pair.txt");
  ASSERT_TRUE(in) << "missing fixture";
  int h = 0, w = 0;
  double expected = 0;
  in >> h >> w >> expected;
  Tensor a(1, 1, h, w), b(1, 1, h, w);
  for (float& v : a.span()) in >> v;
  for (float& v : b.span()) in >> v;
  ASSERT_TRUE(in);
  EXPECT_NEAR(ssim(a, b), expected, 1e-6);
}

TEST(Ssim, RgbIsReducedByChannelMean) {
  const Tensor rgb = random_tensor(1, 3, 16, 16, 8, 0, 1), other = random_tensor(1, 3, 16, 16, 9, 0, 1);
  EXPECT_NEAR(ssim(rgb, other), ssim(to_grayscale(rgb), to_grayscale(other)), 1e-6);
}

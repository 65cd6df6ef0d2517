#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "stbn/losses.hpp"
#include "test_util.hpp"

using namespace stbn;
using stbn::testing::random_tensor;

namespace {

// Central differences of the double-precision closed form, compared against the
// float reverse-mode gradient of the library loss.
double nll_fd_max_rel_error(const Tensor& mu, const Tensor& lv, const Tensor& y, double sigma) {
  Var vm(mu, true), vl(lv, true);
  backward(nll_loss(vm, vl, y, sigma));
  const std::size_t n = mu.size();
  std::vector<double> m(mu.span().begin(), mu.span().end()), l(lv.span().begin(), lv.span().end()),
      yy(y.span().begin(), y.span().end());
  const double s2 = sigma * sigma;
  double worst = 0.0;
  for (int which = 0; which < 2; ++which)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double>& v = which == 0 ? m : l;
      const double h = 1e-6, orig = v[i];
      v[i] = orig + h;
      const double up = nll_mean(m.data(), l.data(), yy.data(), n, s2);
      v[i] = orig - h;
      const double down = nll_mean(m.data(), l.data(), yy.data(), n, s2);
      v[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = (which == 0 ? vm : vl).grad()[i];
      worst = std::max(worst, std::fabs(analytic - numeric) / std::max(std::fabs(numeric), 1e-3));
    }
  return worst;
}

}  // namespace

TEST(NllLoss, ClosedFormValue) {
  // mu = 0, y = 0, exp(log_var) = sigma^2 = 1: 0.5 * log 2
  const Tensor zero(1, 1, 2, 2);
  EXPECT_NEAR(nll_loss({zero, zero}, zero, 1.0), 0.5 * std::log(2.0), 1e-7);
}

TEST(NllLoss, DegenerateCertaintyApproachesTheNoiseFloor) {
  const Tensor y = random_tensor(1, 1, 3, 3, 1);
  Tensor lv = Tensor::zeros_like(y);
  lv.fill(kLogVarMin);
  const double sigma = 0.1;
  const double floor = 0.5 * std::log(sigma * sigma);
  const double got = nll_loss({y, lv}, y, sigma);
  EXPECT_GT(got, floor);
  EXPECT_NEAR(got, floor, 0.5 * std::exp(kLogVarMin) / (sigma * sigma) + 1e-6);
}

TEST(NllLoss, GradientsMatchFiniteDifferencesOnTenPixels) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor mu = random_tensor(1, 1, 2, 5, seed, 0.0f, 1.0f);
    const Tensor lv = random_tensor(1, 1, 2, 5, seed + 10, -6.0f, 1.0f);
    const Tensor y = random_tensor(1, 1, 2, 5, seed + 20, -0.2f, 1.2f);
    EXPECT_LT(nll_fd_max_rel_error(mu, lv, y, 25.0 / 255.0), 1e-4) << "seed " << seed;
  }
}

TEST(NllLoss, RejectsNonFinitePredictionsAndBadSigma) {
  Tensor mu(1, 1, 2, 2), lv(1, 1, 2, 2), y(1, 1, 2, 2);
  EXPECT_THROW(nll_loss(Var(mu), Var(lv), y, 0.0), std::invalid_argument);
  mu[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(nll_loss(Var(mu), Var(lv), y, 0.1), std::runtime_error);
  EXPECT_THROW(nll_loss(Var(lv), Var(lv), Tensor(1, 1, 2, 3), 0.1), std::invalid_argument);
}

TEST(SplitGaussian, ClampsTheLogVariance) {
  Tensor head(1, 2, 1, 3);
  head.at(0, 1, 0, 0) = -50.0f;
  head.at(0, 1, 0, 1) = 50.0f;
  head.at(0, 1, 0, 2) = 1.5f;
  const GaussianVars g = split_gaussian(Var(head), 1);
  EXPECT_EQ(g.log_var.value()[0], kLogVarMin);
  EXPECT_EQ(g.log_var.value()[1], kLogVarMax);
  EXPECT_EQ(g.log_var.value()[2], 1.5f);
  EXPECT_THROW(split_gaussian(Var(head), 2), std::invalid_argument);
}

TEST(L2Loss, TrivialValuesAndBruteForce) {
  const Tensor t = random_tensor(1, 2, 3, 4, 3);
  EXPECT_EQ(l2_blind_loss(Var(t), t).value()[0], 0.0f);
  Tensor p = t;
  for (float& v : p.span()) v += 1.0f;
  EXPECT_NEAR(l2_blind_loss(Var(p), t).value()[0], 1.0, 1e-6);
  const Tensor q = random_tensor(1, 2, 3, 4, 4);
  double brute = 0;
  for (std::size_t i = 0; i < q.size(); ++i) brute += (q[i] - t[i]) * (q[i] - t[i]);
  EXPECT_NEAR(l2_blind_loss(Var(q), t).value()[0], brute / q.size(), 1e-6);
  EXPECT_THROW(l2_blind_loss(Var(q), Tensor(1, 2, 3, 5)), std::invalid_argument);
}

TEST(L2Loss, GradientsMatchFiniteDifferencesOnTenPixels) {
  const Tensor p = random_tensor(1, 1, 2, 5, 5), y = random_tensor(1, 1, 2, 5, 6);
  Var vp(p, true);
  backward(l2_blind_loss(vp, y));
  std::vector<double> pd(p.span().begin(), p.span().end()), yd(y.span().begin(), y.span().end());
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double h = 1e-6, orig = pd[i];
    pd[i] = orig + h;
    const double up = l2_mean(pd.data(), yd.data(), pd.size());
    pd[i] = orig - h;
    const double down = l2_mean(pd.data(), yd.data(), pd.size());
    pd[i] = orig;
    const double numeric = (up - down) / (2 * h);
    EXPECT_LT(std::fabs(vp.grad()[i] - numeric) / std::max(std::fabs(numeric), 1e-3), 1e-4);
  }
}

TEST(PosteriorMean, Limits) {
  const Tensor mu = random_tensor(1, 1, 2, 3, 7), y = random_tensor(1, 1, 2, 3, 8);
  const double sigma = 0.2;
  Tensor lv = Tensor::zeros_like(mu);
  lv.fill(-200.0f);  // certain network
  Tensor out = posterior_mean({mu, lv}, y, sigma);
  for (std::size_t i = 0; i < mu.size(); ++i) EXPECT_NEAR(out[i], mu[i], 1e-7);
  lv.fill(200.0f);  // uninformative network
  out = posterior_mean({mu, lv}, y, sigma);
  for (std::size_t i = 0; i < mu.size(); ++i) EXPECT_NEAR(out[i], y[i], 1e-7);
  lv.fill(static_cast<float>(std::log(sigma * sigma)));
  out = posterior_mean({mu, lv}, y, sigma);
  for (std::size_t i = 0; i < mu.size(); ++i) EXPECT_NEAR(out[i], 0.5f * (mu[i] + y[i]), 1e-7);
  EXPECT_THROW(posterior_mean({mu, lv}, y, std::nullopt), std::invalid_argument);
}

TEST(PosteriorMean, IsAConvexCombinationPerPixel) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor mu = random_tensor(1, 1, 4, 4, seed), y = random_tensor(1, 1, 4, 4, seed + 50);
    const Tensor lv = random_tensor(1, 1, 4, 4, seed + 100, kLogVarMin, kLogVarMax);
    const double sigma = 0.05 + 0.02 * seed;
    const Tensor out = posterior_mean({mu, lv}, y, sigma);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double v = std::exp(static_cast<double>(lv[i]));
      const double w = v / (v + sigma * sigma);
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
      EXPECT_NEAR(out[i], w * y[i] + (1 - w) * mu[i], 1e-6);
      EXPECT_GE(out[i], std::min(mu[i], y[i]) - 1e-6f);
      EXPECT_LE(out[i], std::max(mu[i], y[i]) + 1e-6f);
    }
  }
}

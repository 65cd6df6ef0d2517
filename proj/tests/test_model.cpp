#include <gtest/gtest.h>

#include "stbn/model.hpp"
#include "test_util.hpp"

using namespace stbn;

namespace {

ModelConfig small_config(std::uint64_t seed = 3) {
  ModelConfig c;
  c.bsa.channels = 8;
  c.bsa.num_dconv_blocks = 1;
  c.srfe.channels = 4;
  c.srfe.num_residual_blocks = 1;
  c.flow.hidden_channels = 4;
  c.flow.pyramid_levels = 2;
  c.seed = seed;
  return c;
}

std::vector<Tensor> clip(int frames, int channels, int h, int w, std::uint64_t seed) {
  std::vector<Tensor> out;
  for (int t = 0; t < frames; ++t) out.push_back(stbn::testing::random_tensor(1, channels, h, w, seed + t, 0.0f, 1.0f));
  return out;
}

bool same_parameters(const StbnNetwork& a, const StbnNetwork& b) {
  const ParameterList pa = a.all_parameters(), pb = b.all_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const Tensor& x = pa[i].var.value();
    const Tensor& y = pb[i].var.value();
    if (x.size() != y.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k)
      if (x[k] != y[k]) return false;
  }
  return true;
}

}  // namespace

TEST(Model, DefaultConfigurationIsCertified) {
  const StbnNetwork model{ModelConfig{}};
  const BlindSpotCertificate cert = certify_blind_spot(model, 6, 11);
  EXPECT_TRUE(cert.certified);
  EXPECT_EQ(cert.probes, 6);
  EXPECT_EQ(cert.worst_self_dependence, 0.0);
  EXPECT_GT(cert.min_other_frame_dependence, 0.0);
}

TEST(Model, EveryToggleCombinationKeepsTheBlindSpot) {
  for (bool bsa : {true, false})
    for (bool srfe : {true, false}) {
      ModelConfig c = small_config();
      c.use_bsa = bsa;
      c.use_srfe = srfe;
      if (!bsa) c.srfe.shuffle_factor = 2;
      const StbnNetwork model(c);
      EXPECT_TRUE(certify_blind_spot(model, 6, 5).certified) << "bsa=" << bsa << " srfe=" << srfe;
      const auto out = model.forward(clip(3, 1, 12, 12, 9));
      ASSERT_EQ(out.size(), 3u);
      for (const Var& o : out) {
        EXPECT_EQ(o.value().c(), 2);
        EXPECT_EQ(o.value().h(), 12);
        EXPECT_EQ(o.value().w(), 12);
      }
    }
}

TEST(Model, UnmaskedEntryIsNotCertified) {
  ModelConfig c = small_config();
  c.bsa.mask_center = false;
  const StbnNetwork model(c);
  const BlindSpotCertificate cert = certify_blind_spot(model, 4, 2);
  EXPECT_FALSE(cert.certified);
  EXPECT_GT(cert.worst_self_dependence, 0.0);
}

TEST(Model, LeakyShuffleFactorsAreRejected) {
  ModelConfig c = small_config();
  c.srfe.shuffle_factor = 3;  // not a multiple of dilation 2
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(StbnNetwork{c}, std::invalid_argument);

  c = small_config();
  c.use_bsa = false;
  c.srfe.shuffle_factor = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);

  c = small_config();
  c.srfe.shuffle_factor = 4;
  EXPECT_NO_THROW(c.validate());
}

TEST(Model, JsonRoundTrip) {
  ModelConfig c = small_config(42);
  c.image_channels = 3;
  c.use_srfe = false;
  c.srfe.head = HeadKind::regression;
  c.bsa.activation = {ActivationKind::relu, 0.0f};
  c.flow.backend = FlowBackend::classical_lk;
  c.flow.window = 7;
  const nlohmann::json j = c.to_json();
  const ModelConfig back = ModelConfig::from_json(j);
  EXPECT_EQ(back.to_json(), j);
  EXPECT_EQ(back.image_channels, 3);
  EXPECT_EQ(back.srfe.head, HeadKind::regression);
  EXPECT_EQ(back.flow.backend, FlowBackend::classical_lk);
  EXPECT_THROW(ModelConfig::from_json(nlohmann::json{{"image_channels", 1}}), nlohmann::json::exception);
}

TEST(Model, SeedDeterminesParameters) {
  const StbnNetwork a(small_config(7)), b(small_config(7)), c(small_config(8));
  EXPECT_TRUE(same_parameters(a, b));
  EXPECT_FALSE(same_parameters(a, c));
}

TEST(Model, ParameterGroups) {
  const StbnNetwork pyramid(small_config());
  EXPECT_FALSE(pyramid.flow_parameters().empty());
  EXPECT_EQ(pyramid.all_parameters().size(),
            pyramid.denoiser_parameters().size() + pyramid.flow_parameters().size());
  ASSERT_NE(pyramid.trainable_flow(), nullptr);

  ModelConfig c = small_config();
  c.flow.backend = FlowBackend::classical_lk;
  const StbnNetwork lk(c);
  EXPECT_TRUE(lk.flow_parameters().empty());
  EXPECT_EQ(lk.trainable_flow(), nullptr);
}

TEST(Model, InitialOutputIsNearMidGrey) {
  const StbnNetwork model(small_config());
  NoGradGuard no_grad;
  const auto out = model.forward(clip(3, 1, 16, 16, 1));
  double mu = 0, lv = 0;
  for (const Var& o : out) {
    const Tensor& v = o.value();
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        mu += v.at(0, 0, y, x);
        lv += v.at(0, 1, y, x);
      }
  }
  mu /= 3 * 256;
  lv /= 3 * 256;
  EXPECT_NEAR(mu, 0.5, 0.25);
  EXPECT_NEAR(lv, std::log(0.01), 1.5);
}

TEST(Model, RgbHeadWidth) {
  ModelConfig c = small_config();
  c.image_channels = 3;
  const StbnNetwork model(c);
  EXPECT_EQ(model.output_channels(), 6);
  const auto out = model.forward(clip(2, 3, 10, 10, 4));
  EXPECT_EQ(out[0].value().c(), 6);
}

TEST(Model, SuppliedFlowsAreUsedAsGiven) {
  const StbnNetwork model(small_config());
  const auto frames = clip(3, 1, 12, 12, 21);
  FlowPairs zero;
  for (int k = 0; k < 2; ++k) {
    zero.forward.push_back(Tensor(1, 2, 12, 12));
    zero.backward.push_back(Tensor(1, 2, 12, 12));
  }
  FlowPairs shifted = zero;
  for (std::size_t i = 0; i < shifted.forward[0].size() / 2; ++i) shifted.forward[0][i] = 3.0f;
  NoGradGuard no_grad;
  const std::vector<Var> in(frames.begin(), frames.end());
  const auto a = model.forward(in, zero);
  const auto b = model.forward(in, shifted);
  // Frame 0 never reads a forward flow; frame 1 does.
  double d0 = 0, d1 = 0;
  for (std::size_t i = 0; i < a[0].value().size(); ++i) {
    d0 += std::fabs(a[0].value()[i] - b[0].value()[i]);
    d1 += std::fabs(a[1].value()[i] - b[1].value()[i]);
  }
  EXPECT_EQ(d0, 0.0);
  EXPECT_GT(d1, 0.0);
}

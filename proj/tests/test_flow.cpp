#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>

#include "stbn/flow.hpp"
#include "test_util.hpp"

using namespace stbn;
using stbn::testing::random_tensor;

namespace {

// Periodic texture so that an integer shift is exact everywhere.
Tensor periodic(int h, int w, double shift_x) {
  Tensor t(1, 1, h, w);
  const double pi = 3.14159265358979323846;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = x - shift_x;
      t.at(0, 0, y, x) = static_cast<float>(0.5 + 0.2 * std::sin(2 * pi * u / 16.0) * std::cos(2 * pi * y / 12.0) +
                                            0.15 * std::sin(2 * pi * (u + 2 * y) / 24.0));
    }
  return t;
}

FlowEstimatorConfig lk_config() {
  FlowEstimatorConfig c;
  c.backend = FlowBackend::classical_lk;
  return c;
}

double median_magnitude(const Tensor& f) {
  return median_endpoint_error(f, Tensor::zeros_like(f));
}

}  // namespace

TEST(ClassicalLk, StaticPairGivesNearZeroFlow) {
  const Tensor a = periodic(48, 48, 0);
  const ClassicalLkFlow lk(lk_config());
  EXPECT_LT(median_magnitude(lk.estimate(a, a)), 0.05);
}

TEST(ClassicalLk, RecoversAnIntegerTranslation) {
  // b(p) = a(p - (3, 0)), so a(p) = b(p + (3, 0)): flow (3, 0)
  const Tensor a = periodic(64, 64, 0);
  const Tensor b = periodic(64, 64, 3);
  const ClassicalLkFlow lk(lk_config());
  const FlowField f = estimate_flow(a, b, lk);
  EXPECT_LT(median_endpoint_error(f.vectors, FlowField::uniform(64, 64, 3.0f, 0.0f).vectors, 8), 0.5);
}

TEST(ClassicalLk, MismatchedShapesThrow) {
  const ClassicalLkFlow lk(lk_config());
  EXPECT_THROW(lk.estimate(Tensor(1, 1, 8, 8), Tensor(1, 1, 8, 9)), std::invalid_argument);
}

TEST(TinyPyramid, UntrainedOutputIsFiniteWithTheRightShape) {
  const TinyPyramidFlow net(3, FlowEstimatorConfig{}, CounterRng(1, 1));
  for (auto [h, w] : {std::pair{32, 32}, std::pair{13, 27}}) {
    const Tensor f = net.estimate(random_tensor(2, 3, h, w, 1, 0, 1), random_tensor(2, 3, h, w, 2, 0, 1));
    EXPECT_EQ(f.n(), 2);
    EXPECT_EQ(f.c(), 2);
    EXPECT_EQ(f.h(), h);
    EXPECT_EQ(f.w(), w);
    EXPECT_TRUE(f.all_finite());
  }
  EXPECT_TRUE(net.trainable());
  EXPECT_FALSE(net.frozen());
}

TEST(TinyPyramid, FrozenCopyOwnsItsParametersAndIsDeterministic) {
  TinyPyramidFlow net(1, FlowEstimatorConfig{}, CounterRng(2, 2));
  const auto frozen = net.frozen_copy();
  EXPECT_TRUE(frozen->frozen());
  const Tensor a = random_tensor(1, 1, 16, 16, 3, 0, 1), b = random_tensor(1, 1, 16, 16, 4, 0, 1);
  const Tensor before = frozen->estimate(a, b);
  ParameterList p;
  net.collect(p);
  for (auto& q : p) q.var.mutable_value() *= 3.0f;  // mutate the student only
  const Tensor after = frozen->estimate(a, b);
  for (std::size_t i = 0; i < before.size(); ++i) ASSERT_EQ(before[i], after[i]);
}

TEST(TinyPyramid, PhotometricTrainingLowersThePhotometricLoss) {
  TinyPyramidFlow net(1, FlowEstimatorConfig{}, CounterRng(3, 3));
  ParameterList p;
  net.collect(p);
  const Tensor a = periodic(32, 32, 0), b = periodic(32, 32, 1.5);
  const double initial = net.photometric_loss(a, b).value()[0];
  // plain gradient steps are enough to see the loss move
  for (int it = 0; it < 30; ++it) {
    for (auto& q : p) q.var.zero_grad();
    backward(net.photometric_loss(a, b));
    for (auto& q : p)
      if (!q.var.grad().empty())
        for (std::size_t i = 0; i < q.var.value().size(); ++i) q.var.mutable_value()[i] -= 0.05f * q.var.grad()[i];
  }
  EXPECT_LT(net.photometric_loss(a, b).value()[0], initial);
}

TEST(Distillation, ZeroResidualLeavesOnlyTheWeightDecay) {
  TinyPyramidFlow net(1, FlowEstimatorConfig{}, CounterRng(4, 4));
  ParameterList p;
  net.collect(p);
  double norm = 0;
  for (auto& q : p)
    for (float v : q.var.value().span()) norm += static_cast<double>(v) * v;
  const std::vector<Tensor> teacher{random_tensor(1, 2, 8, 8, 1), random_tensor(1, 2, 8, 8, 2)};
  const std::vector<Var> student{Var(teacher[0], true), Var(teacher[1], true)};
  EXPECT_NEAR(distillation_loss(student, teacher, p, 4e-5).value()[0], 4e-5 * norm, 1e-4 * 4e-5 * norm);
  EXPECT_EQ(distillation_loss(student, teacher, {}, 4e-5).value()[0], 0.0f);
}

TEST(Distillation, UnitOffsetGivesOnePerPair) {
  std::vector<Tensor> teacher;
  std::vector<Var> student;
  for (int t = 0; t < 4; ++t) {
    Tensor s = random_tensor(1, 2, 6, 7, t);
    Tensor tt = s;
    for (float& v : tt.span()) v += 1.0f;
    teacher.push_back(tt);
    student.emplace_back(s, true);
  }
  EXPECT_NEAR(distillation_loss(student, teacher, {}, 0.0).value()[0], 4.0, 1e-5);
  EXPECT_THROW(distillation_loss(student, {teacher[0]}, {}, 0.0), std::invalid_argument);
}

TEST(Distillation, NoGradientReachesTheTeacherInputs) {
  const TinyPyramidFlow student(1, FlowEstimatorConfig{}, CounterRng(5, 5));
  const auto teacher_net = student.frozen_copy();
  std::vector<Tensor> noisy;
  std::vector<Var> denoised;
  for (int t = 0; t < 3; ++t) {
    noisy.push_back(random_tensor(1, 1, 16, 16, 10 + t, 0, 1));
    denoised.emplace_back(random_tensor(1, 1, 16, 16, 20 + t, 0, 1), true);
  }
  const FlowPairs teacher = make_teacher_flows(denoised, *teacher_net);
  std::vector<Tensor> tflows = teacher.forward;
  tflows.insert(tflows.end(), teacher.backward.begin(), teacher.backward.end());
  ParameterList p;
  student.collect(p);
  const Var loss = distillation_loss(student_flow_list(noisy, student), tflows, p, 4e-5);
  backward(loss);
  for (const Var& d : denoised) EXPECT_TRUE(d.grad().empty());
  bool student_moved = false;
  for (auto& q : p) student_moved = student_moved || !q.var.grad().empty();
  EXPECT_TRUE(student_moved);
}

TEST(Distillation, TeacherMustBeFrozenAndMatchesCleanFlowsOnCleanInput) {
  const TinyPyramidFlow student(1, FlowEstimatorConfig{}, CounterRng(6, 6));
  std::vector<Var> frames{Var(periodic(16, 16, 0)), Var(periodic(16, 16, 1))};
  EXPECT_THROW(make_teacher_flows(frames, student), std::logic_error);
  const ClassicalLkFlow lk(lk_config());
  const FlowPairs t = make_teacher_flows(frames, lk);
  const Tensor direct = lk.estimate(frames[1].value(), frames[0].value());
  for (std::size_t i = 0; i < direct.size(); ++i) ASSERT_EQ(t.forward[0][i], direct[i]);
  const FlowPairs again = make_teacher_flows(frames, lk);
  for (std::size_t i = 0; i < direct.size(); ++i) ASSERT_EQ(again.backward[0][i], t.backward[0][i]);
}

TEST(ExternalAdapter, RunsTheCommandAndReadsItsFlowFile) {
  namespace fs = std::filesystem;
  const fs::path canned = fs::temp_directory_path() / ("stbn_canned_" + std::to_string(::getpid()) + ".flo");
  save_flow_file(FlowField::uniform(12, 10, 1.25f, -0.5f), canned);
  FlowEstimatorConfig c;
  c.backend = FlowBackend::external_adapter;
  c.adapter_command = "test -f {a} && test -f {b} && cp " + canned.string() + " {out}";
  const auto est = make_flow_estimator(c, 1, CounterRng(1, 1));
  const Tensor f = est->estimate(random_tensor(1, 1, 12, 10, 1, 0, 1), random_tensor(1, 1, 12, 10, 2, 0, 1));
  EXPECT_FLOAT_EQ(f.at(0, 0, 3, 3), 1.25f);
  EXPECT_FLOAT_EQ(f.at(0, 1, 3, 3), -0.5f);
  c.adapter_command = "false";
  EXPECT_THROW(make_flow_estimator(c, 1, CounterRng(1, 1))->estimate(Tensor(1, 1, 8, 8), Tensor(1, 1, 8, 8)),
               std::runtime_error);
  fs::remove(canned);
}

TEST(FlowConfig, ValidationAndParsing) {
  FlowEstimatorConfig c;
  c.window = 4;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.backend = FlowBackend::external_adapter;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(parse_flow_backend("classical_lk"), FlowBackend::classical_lk);
  EXPECT_THROW(parse_flow_backend("pwc"), std::invalid_argument);
  DistillationConfig d;
  d.alpha = 0;
  EXPECT_THROW(d.validate(), std::invalid_argument);
}

TEST(EndpointError, AnalyticValues) {
  const Tensor a = FlowField::uniform(6, 6, 3.0f, 4.0f).vectors;
  const Tensor z = Tensor::zeros_like(a);
  EXPECT_NEAR(endpoint_error(a, z), 5.0, 1e-9);
  EXPECT_NEAR(median_endpoint_error(a, z, 2), 5.0, 1e-9);
  EXPECT_THROW(endpoint_error(a, z, 3), std::invalid_argument);
}

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stbn/blindspot.hpp"
#include "stbn/videodata.hpp"
#include "stbn/warp.hpp"

namespace stbn {

enum class FlowBackend { tiny_pyramid, classical_lk, external_adapter };

FlowBackend parse_flow_backend(const std::string& s);
std::string to_string(FlowBackend backend);

struct FlowEstimatorConfig {
  FlowBackend backend = FlowBackend::tiny_pyramid;
  int pyramid_levels = 3;
  int iterations = 5;      // classical_lk refinement steps per level
  int window = 9;          // classical_lk integration window (odd)
  int hidden_channels = 16;  // tiny_pyramid width per level
  /// external_adapter: shell command with {a}, {b} (PNG inputs) and {out} (STBNFLO1 output).
  std::string adapter_command;

  void validate() const;
};

struct DistillationConfig {
  double alpha = 5e-4;
  int warmup_iterations = 1000;
  double weight_decay_gamma = 4e-5;
  /// 0: the teacher is the student as it left warm-up. k > 0: re-snapshot every k steps.
  int teacher_refresh_interval = 0;

  void validate() const;
};

/// Dense flow estimator. estimate(a, b) returns (N, 2, H, W) displacements such that
/// a(p) ~ b(p + flow(p)), i.e. warp(b, flow) aligns b onto a.
class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;
  virtual Tensor estimate(const Tensor& a, const Tensor& b) const = 0;
  virtual FlowBackend backend() const = 0;
  virtual bool trainable() const { return false; }
  /// Parameters may not change while frozen; non-trainable estimators are always frozen.
  virtual bool frozen() const { return true; }
  virtual std::unique_ptr<FlowEstimator> clone() const = 0;
};

FlowField estimate_flow(const Tensor& frame_a, const Tensor& frame_b, const FlowEstimator& estimator);

/// Coarse-to-fine residual CNN. Each level (coarsest first) sees
/// [frame_a, bilinear-warped frame_b, upsampled flow] and predicts a residual through
/// conv3x3 -> act -> conv3x3 -> act -> conv3x3(2); levels are 2x average-pooled.
class TinyPyramidFlow final : public FlowEstimator {
 public:
  TinyPyramidFlow(int image_channels, const FlowEstimatorConfig& config, const CounterRng& rng,
                  const std::string& name = "flow");

  Tensor estimate(const Tensor& a, const Tensor& b) const override;
  FlowBackend backend() const override { return FlowBackend::tiny_pyramid; }
  bool trainable() const override { return true; }
  bool frozen() const override { return frozen_; }
  std::unique_ptr<FlowEstimator> clone() const override;

  /// Differentiable estimate; also returns the per-level flows (coarsest first) when asked.
  Var estimate_var(const Tensor& a, const Tensor& b, std::vector<Var>* levels = nullptr) const;
  /// Multi-scale Charbonnier photometric loss plus a small total-variation prior.
  Var photometric_loss(const Tensor& a, const Tensor& b) const;

  void collect(ParameterList& out) const;
  /// Deep copy of the parameters, marked frozen.
  std::unique_ptr<TinyPyramidFlow> frozen_copy() const;
  void set_frozen(bool f) { frozen_ = f; }

 private:
  FlowEstimatorConfig config_;
  int image_channels_ = 1;
  Activation act_{};
  std::vector<ConvLayer> c1_, c2_, c3_;
  bool frozen_ = false;
};

/// Dense pyramidal Lucas-Kanade on the grayscale frames with iterative refinement.
class ClassicalLkFlow final : public FlowEstimator {
 public:
  explicit ClassicalLkFlow(const FlowEstimatorConfig& config);
  Tensor estimate(const Tensor& a, const Tensor& b) const override;
  FlowBackend backend() const override { return FlowBackend::classical_lk; }
  std::unique_ptr<FlowEstimator> clone() const override { return std::make_unique<ClassicalLkFlow>(config_); }

 private:
  FlowEstimatorConfig config_;
};

/// Runs an external tool per frame pair: writes a.png / b.png, runs the command, reads
/// the STBNFLO1 file it produced.
class ExternalAdapterFlow final : public FlowEstimator {
 public:
  explicit ExternalAdapterFlow(const FlowEstimatorConfig& config);
  Tensor estimate(const Tensor& a, const Tensor& b) const override;
  FlowBackend backend() const override { return FlowBackend::external_adapter; }
  std::unique_ptr<FlowEstimator> clone() const override { return std::make_unique<ExternalAdapterFlow>(config_); }

 private:
  FlowEstimatorConfig config_;
};

std::unique_ptr<FlowEstimator> make_flow_estimator(const FlowEstimatorConfig& config, int image_channels,
                                                   const CounterRng& rng);

/// Flows for every adjacent pair the propagators consume. forward[t-1] aligns frame t-1
/// onto frame t (estimate(y_t, y_{t-1})); backward[t] aligns frame t+1 onto frame t.
struct FlowPairs {
  std::vector<Tensor> forward;
  std::vector<Tensor> backward;
};

FlowPairs compute_flow_pairs(const std::vector<Tensor>& frames, const FlowEstimator& estimator);
/// Differentiable student flows in the same order as FlowPairs (forward then backward).
std::vector<Var> student_flow_list(const std::vector<Tensor>& frames, const TinyPyramidFlow& student);

/// Pseudo ground truth: flows of the denoised frames from a frozen estimator. The result
/// holds plain tensors, so nothing upstream of it can receive gradient.
FlowPairs make_teacher_flows(const std::vector<Var>& denoised_frames, const FlowEstimator& frozen_estimator);
std::vector<FlowField> make_teacher_flows(const VideoSequence& denoised, const FlowEstimator& frozen_estimator);

/// sum over pairs of mean |student - teacher|, plus gamma * sum of squared student parameters.
Var distillation_loss(const std::vector<Var>& student_flows, const std::vector<Tensor>& teacher_flows,
                      const ParameterList& student_parameters, double weight_decay_gamma);

/// Mean per-pixel Euclidean distance between two (N, 2, H, W) flows, ignoring a border.
double endpoint_error(const Tensor& estimate, const Tensor& truth, int border = 0);
double median_endpoint_error(const Tensor& estimate, const Tensor& truth, int border = 0);

}  // namespace stbn

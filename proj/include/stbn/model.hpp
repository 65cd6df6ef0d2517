#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "json.hpp"
#include "stbn/flow.hpp"
#include "stbn/propagation.hpp"
#include "stbn/srfe.hpp"

namespace stbn {

struct ModelConfig {
  int image_channels = 1;
  BlindSpotLayerConfig bsa{};
  SrfeConfig srfe{};
  FlowEstimatorConfig flow{};
  bool use_bsa = true;   // false: PlainPropagationCell
  bool use_srfe = true;  // false: PointwiseHead
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Bidirectional propagation + fusion head + flow estimator.
///
/// The denoiser never differentiates through the flows: they are plain tensors fed to
/// the propagators, so probing and training both treat them as fixed inputs.
class StbnNetwork {
 public:
  /// Runs a dependency probe on a small random clip and throws std::invalid_argument if
  /// the assembled configuration can see the co-located noisy pixel (unless the entry
  /// convolution was deliberately unmasked).
  explicit StbnNetwork(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  int output_channels() const { return head_channels(config_.srfe.head, config_.image_channels); }
  HeadKind head() const { return config_.srfe.head; }

  /// Per-frame head outputs, each (N, output_channels, H, W).
  std::vector<Var> forward(const std::vector<Var>& frames, const FlowPairs& flows) const;
  std::vector<Var> forward(const std::vector<Tensor>& frames) const;
  FlowPairs estimate_flows(const std::vector<Tensor>& frames) const;
  /// Model with the given flows baked in, for probing.
  PixelPredictor predictor(const FlowPairs& flows) const;

  /// Denoiser parameters (propagators and head), excluding the flow estimator.
  ParameterList denoiser_parameters() const;
  /// Trainable flow parameters; empty for non-trainable backends.
  ParameterList flow_parameters() const;
  ParameterList all_parameters() const;

  FlowEstimator& flow() { return *flow_; }
  const FlowEstimator& flow() const { return *flow_; }
  /// Null unless the backend is tiny_pyramid.
  TinyPyramidFlow* trainable_flow();
  const TinyPyramidFlow* trainable_flow() const;
  void set_flow(std::unique_ptr<FlowEstimator> flow);

 private:
  ModelConfig config_;
  std::unique_ptr<Propagator> forward_;
  std::unique_ptr<Propagator> backward_;
  std::unique_ptr<Srfe> srfe_;
  std::unique_ptr<PointwiseHead> pointwise_;
  std::unique_ptr<FlowEstimator> flow_;
};

struct BlindSpotCertificate {
  bool certified = false;
  int probes = 0;
  /// Largest |d out(t,i) / d y(t,i)| seen; 0 for a certified model.
  double worst_self_dependence = 0.0;
  /// Smallest total dependence on the other frames over all probes.
  double min_other_frame_dependence = 0.0;
};

/// Probes `num_probes` random interior pixels of a random clip with random integer flows.
BlindSpotCertificate certify_blind_spot(const StbnNetwork& model, int num_probes, std::uint64_t seed, int frames = 3,
                                        int size = 12);

}  // namespace stbn

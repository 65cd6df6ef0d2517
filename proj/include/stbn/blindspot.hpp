#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stbn/autograd.hpp"
#include "stbn/rng.hpp"
#include "stbn/videodata.hpp"

namespace stbn {

struct NamedParameter {
  std::string name;
  Var var;
};
using ParameterList = std::vector<NamedParameter>;

enum class ActivationKind { relu, leaky_relu };

struct Activation {
  ActivationKind kind = ActivationKind::leaky_relu;
  float slope = 0.1f;

  Var operator()(const Var& x) const { return leaky_relu(x, kind == ActivationKind::relu ? 0.0f : slope); }
  /// He-style init gain matching the nonlinearity.
  float gain() const;
};

/// Trainable convolution over an explicit tap set. A tap that is not in the set has no
/// weight at all, which is how the masked centre is made structural.
class ConvLayer {
 public:
  ConvLayer() = default;
  ConvLayer(std::string name, int in_channels, int out_channels, TapSet taps, int groups, const CounterRng& rng,
            float gain, bool bias = true);

  Var operator()(const Var& x) const { return conv(x, weight_, bias_, taps_, groups_); }
  void collect(ParameterList& out) const;
  /// Copy with its own parameter storage.
  ConvLayer deep_copy() const;

  const TapSet& taps() const { return taps_; }
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  Var& weight() { return weight_; }
  Var& bias() { return bias_; }

 private:
  std::string name_;
  TapSet taps_;
  int groups_ = 1;
  int in_channels_ = 0;
  int out_channels_ = 0;
  Var weight_;
  Var bias_;
};

/// k x k taps without the centre; rejects even or < 3 kernels.
TapSet masked_taps(int kernel);

ConvLayer make_masked_conv(const std::string& name, int cin, int cout, int kernel, const CounterRng& rng, float gain);
ConvLayer make_dilated_conv(const std::string& name, int cin, int cout, int dilation, const CounterRng& rng,
                            float gain, int groups = 1);
ConvLayer make_pointwise(const std::string& name, int cin, int cout, const CounterRng& rng, float gain,
                         int groups = 1);

struct BlindSpotLayerConfig {
  int channels = 48;
  int masked_kernel = 3;
  int dilation = 2;
  int num_dconv_blocks = 3;
  Activation activation{};
  /// false keeps the centre tap of the entry conv; only used to build leaking controls.
  bool mask_center = true;

  /// Dilation must exceed the masked kernel radius, otherwise a dilated tap can land
  /// back on the blind spot.
  void validate() const;
};

/// Recurrent unit applied per frame: (y_t, aligned hidden state) -> new hidden state.
class RecurrentCell {
 public:
  virtual ~RecurrentCell() = default;
  virtual Var operator()(const Var& frame, const Var& h_warped) const = 0;
  virtual void collect(ParameterList& out) const = 0;
  virtual int hidden_channels() const = 0;
};

/// Blind-spot alignment block:
///   concat(y, h) -> masked conv -> act
///   -> blocks x [x + 1x1(act(dilated conv(x)))]
///   -> concat with h -> dilated conv (centre tap kept) -> act -> 1x1 -> act.
/// The current-frame branch only ever reaches pixels off the dilation lattice of the
/// output pixel, so y_t(i) never influences output(i); h(i) does, through the fusion tap.
class BsaBlock final : public RecurrentCell {
 public:
  BsaBlock(const std::string& name, int image_channels, const BlindSpotLayerConfig& config, const CounterRng& rng);
  Var operator()(const Var& frame, const Var& h_warped) const override;
  void collect(ParameterList& out) const override;
  int hidden_channels() const override { return config_.channels; }

 private:
  BlindSpotLayerConfig config_;
  ConvLayer entry_;
  std::vector<ConvLayer> dilated_;
  std::vector<ConvLayer> pointwise_;
  ConvLayer fuse_;
  ConvLayer fuse_pointwise_;
};

/// Ablation baseline: concat(y, h) -> masked conv -> act -> 1x1 -> act.
class PlainPropagationCell final : public RecurrentCell {
 public:
  PlainPropagationCell(const std::string& name, int image_channels, const BlindSpotLayerConfig& config,
                       const CounterRng& rng);
  Var operator()(const Var& frame, const Var& h_warped) const override;
  void collect(ParameterList& out) const override;
  int hidden_channels() const override { return config_.channels; }

 private:
  BlindSpotLayerConfig config_;
  ConvLayer entry_;
  ConvLayer pointwise_;
};

// ---- dependency probing -------------------------------------------------------

/// Maps per-frame inputs, each (1, C, H, W), to per-frame outputs (1, C_out, H, W).
using PixelPredictor = std::function<std::vector<Var>(const std::vector<Var>&)>;

struct ProbeLocation {
  int t = 0;
  int y = 0;
  int x = 0;
};

struct DependencyMap {
  Tensor magnitudes;  // (1, 1, H, W), non-negative
  ProbeLocation probe;
  int source_frame = 0;

  float at(int y, int x) const { return magnitudes.at(0, 0, y, x); }
  std::size_t nonzero_count() const;
  double total() const;
};

/// Backpropagates each output channel at the probe pixel and records, per input frame,
/// max over output channels of the channel-summed |d out / d in|.
std::vector<DependencyMap> probe_dependency(const PixelPredictor& model, const std::vector<Tensor>& frames,
                                            const ProbeLocation& probe);
std::vector<DependencyMap> probe_dependency(const PixelPredictor& model, const VideoSequence& input,
                                            const ProbeLocation& probe);

/// Central finite difference of every output channel at `probe` with respect to every
/// channel of input pixel (source_t, source_y, source_x); returns the largest magnitude.
double finite_difference_dependency(const PixelPredictor& model, const std::vector<Tensor>& frames,
                                    const ProbeLocation& probe, const ProbeLocation& source, float step = 1e-3f);

}  // namespace stbn

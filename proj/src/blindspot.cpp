#include "stbn/blindspot.hpp"

#include <cmath>
#include <stdexcept>

namespace stbn {

float Activation::gain() const {
  const float a = kind == ActivationKind::relu ? 0.0f : slope;
  return std::sqrt(2.0f / (1.0f + a * a));
}

ConvLayer::ConvLayer(std::string name, int in_channels, int out_channels, TapSet taps, int groups,
                     const CounterRng& rng, float gain, bool bias)
    : name_(std::move(name)), taps_(std::move(taps)), groups_(groups), in_channels_(in_channels),
      out_channels_(out_channels) {
  if (in_channels < 1 || out_channels < 1) throw std::invalid_argument(name_ + ": channels must be >= 1");
  if (groups < 1 || in_channels % groups || out_channels % groups)
    throw std::invalid_argument(name_ + ": channels not divisible by groups");
  if (taps_.empty()) throw std::invalid_argument(name_ + ": empty tap set");
  const int cin_g = in_channels / groups;
  const int nt = static_cast<int>(taps_.size());
  Tensor w(out_channels, cin_g, 1, nt);
  const float stddev = gain / std::sqrt(static_cast<float>(cin_g * nt));
  const CounterRng stream = rng.substream(CounterRng::hash_name(name_));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(stddev * stream.normal(i));
  weight_ = Var(std::move(w), true);
  if (bias) bias_ = Var(Tensor(1, out_channels, 1, 1), true);
}

void ConvLayer::collect(ParameterList& out) const {
  out.push_back({name_ + ".weight", weight_});
  if (bias_.defined()) out.push_back({name_ + ".bias", bias_});
}

ConvLayer ConvLayer::deep_copy() const {
  ConvLayer c = *this;
  c.weight_ = Var(weight_.value(), true);
  if (bias_.defined()) c.bias_ = Var(bias_.value(), true);
  return c;
}

TapSet masked_taps(int kernel) {
  if (kernel < 3 || kernel % 2 == 0) throw std::invalid_argument("masked conv: kernel must be odd and >= 3");
  return square_taps(kernel, 1, /*drop_center=*/true);
}

ConvLayer make_masked_conv(const std::string& name, int cin, int cout, int kernel, const CounterRng& rng, float gain) {
  return ConvLayer(name, cin, cout, masked_taps(kernel), 1, rng, gain);
}

ConvLayer make_dilated_conv(const std::string& name, int cin, int cout, int dilation, const CounterRng& rng,
                            float gain, int groups) {
  return ConvLayer(name, cin, cout, square_taps(3, dilation, false), groups, rng, gain);
}

ConvLayer make_pointwise(const std::string& name, int cin, int cout, const CounterRng& rng, float gain, int groups) {
  return ConvLayer(name, cin, cout, TapSet{{0, 0}}, groups, rng, gain);
}

namespace {

ConvLayer make_entry_conv(const std::string& name, int cin, int cout, const BlindSpotLayerConfig& config,
                          const CounterRng& rng) {
  const float g = config.activation.gain();
  if (config.mask_center) return make_masked_conv(name, cin, cout, config.masked_kernel, rng, g);
  return ConvLayer(name, cin, cout, square_taps(config.masked_kernel, 1, false), 1, rng, g);
}

}  // namespace

void BlindSpotLayerConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("BlindSpotLayerConfig: channels must be >= 1");
  if (masked_kernel < 3 || masked_kernel % 2 == 0)
    throw std::invalid_argument("BlindSpotLayerConfig: masked_kernel must be odd and >= 3");
  if (dilation < 2) throw std::invalid_argument("BlindSpotLayerConfig: dilation must be >= 2");
  if (dilation <= masked_kernel / 2)
    throw std::invalid_argument("BlindSpotLayerConfig: dilation must exceed the masked kernel radius");
  if (num_dconv_blocks < 0) throw std::invalid_argument("BlindSpotLayerConfig: num_dconv_blocks must be >= 0");
}

BsaBlock::BsaBlock(const std::string& name, int image_channels, const BlindSpotLayerConfig& config,
                   const CounterRng& rng)
    : config_(config) {
  config_.validate();
  const int F = config_.channels;
  const float g = config_.activation.gain();
  entry_ = make_entry_conv(name + ".entry", image_channels + F, F, config_, rng);
  for (int k = 0; k < config_.num_dconv_blocks; ++k) {
    const std::string p = name + ".block" + std::to_string(k);
    dilated_.push_back(make_dilated_conv(p + ".dconv", F, F, config_.dilation, rng, g));
    // residual branch starts small so deep stacks stay near identity at init
    pointwise_.push_back(make_pointwise(p + ".pw", F, F, rng, 0.5f));
  }
  fuse_ = make_dilated_conv(name + ".fuse", 2 * F, F, config_.dilation, rng, g);
  fuse_pointwise_ = make_pointwise(name + ".fuse_pw", F, F, rng, g);
}

Var BsaBlock::operator()(const Var& frame, const Var& h_warped) const {
  const Tensor& y = frame.value();
  const Tensor& h = h_warped.value();
  if (y.h() != h.h() || y.w() != h.w() || y.n() != h.n())
    throw std::invalid_argument("bsa_block: frame " + y.shape_string() + " and hidden state " + h.shape_string() +
                                " are not aligned");
  const Activation& act = config_.activation;
  Var x = act(entry_(concat_channels({frame, h_warped})));
  for (std::size_t k = 0; k < dilated_.size(); ++k) x = add(x, pointwise_[k](act(dilated_[k](x))));
  Var z = act(fuse_(concat_channels({x, h_warped})));
  return act(fuse_pointwise_(z));
}

void BsaBlock::collect(ParameterList& out) const {
  entry_.collect(out);
  for (std::size_t k = 0; k < dilated_.size(); ++k) {
    dilated_[k].collect(out);
    pointwise_[k].collect(out);
  }
  fuse_.collect(out);
  fuse_pointwise_.collect(out);
}

PlainPropagationCell::PlainPropagationCell(const std::string& name, int image_channels,
                                           const BlindSpotLayerConfig& config, const CounterRng& rng)
    : config_(config) {
  config_.validate();
  const int F = config_.channels;
  const float g = config_.activation.gain();
  entry_ = make_entry_conv(name + ".entry", image_channels + F, F, config_, rng);
  pointwise_ = make_pointwise(name + ".pw", F, F, rng, g);
}

Var PlainPropagationCell::operator()(const Var& frame, const Var& h_warped) const {
  const Tensor& y = frame.value();
  const Tensor& h = h_warped.value();
  if (y.h() != h.h() || y.w() != h.w() || y.n() != h.n())
    throw std::invalid_argument("propagation cell: frame and hidden state are not aligned");
  const Activation& act = config_.activation;
  return act(pointwise_(act(entry_(concat_channels({frame, h_warped})))));
}

void PlainPropagationCell::collect(ParameterList& out) const {
  entry_.collect(out);
  pointwise_.collect(out);
}

// ---- probing ----------------------------------------------------------------------

std::size_t DependencyMap::nonzero_count() const {
  std::size_t n = 0;
  for (float v : magnitudes.span()) n += v != 0.0f;
  return n;
}

double DependencyMap::total() const {
  double s = 0.0;
  for (float v : magnitudes.span()) s += v;
  return s;
}

std::vector<DependencyMap> probe_dependency(const PixelPredictor& model, const std::vector<Tensor>& frames,
                                            const ProbeLocation& probe) {
  if (frames.empty()) throw std::invalid_argument("probe_dependency: no frames");
  const Tensor& f0 = frames.front();
  if (probe.t < 0 || probe.t >= static_cast<int>(frames.size()) || probe.y < 0 || probe.y >= f0.h() || probe.x < 0 ||
      probe.x >= f0.w())
    throw std::out_of_range("probe_dependency: probe location out of bounds");

  std::vector<Var> inputs;
  for (const Tensor& f : frames) {
    if (f.n() != 1) throw std::invalid_argument("probe_dependency: frames must have batch size 1");
    inputs.emplace_back(f, true);
  }
  const std::vector<Var> outputs = model(inputs);
  if (outputs.size() != frames.size()) throw std::invalid_argument("probe_dependency: model must return one output per frame");
  const Var& out = outputs[probe.t];
  if (!out.requires_grad()) throw std::invalid_argument("probe_dependency: model output is not differentiable");

  std::vector<DependencyMap> maps(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    maps[k].magnitudes = Tensor(1, 1, f0.h(), f0.w());
    maps[k].probe = probe;
    maps[k].source_frame = static_cast<int>(k);
  }
  for (int c = 0; c < out.value().c(); ++c) {
    for (Var& v : inputs) v.zero_grad();
    Tensor seed = Tensor::zeros_like(out.value());
    seed.at(0, c, probe.y, probe.x) = 1.0f;
    backward(out, seed);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const Tensor& g = inputs[k].grad();
      if (g.empty()) continue;
      Tensor& m = maps[k].magnitudes;
      for (int y = 0; y < g.h(); ++y)
        for (int x = 0; x < g.w(); ++x) {
          float s = 0.0f;
          for (int ci = 0; ci < g.c(); ++ci) s += std::fabs(g.at(0, ci, y, x));
          m.at(0, 0, y, x) = std::max(m.at(0, 0, y, x), s);
        }
    }
  }
  return maps;
}

std::vector<DependencyMap> probe_dependency(const PixelPredictor& model, const VideoSequence& input,
                                            const ProbeLocation& probe) {
  std::vector<Tensor> frames;
  for (int t = 0; t < input.frames(); ++t) frames.push_back(input.frame_tensor(t));
  return probe_dependency(model, frames, probe);
}

double finite_difference_dependency(const PixelPredictor& model, const std::vector<Tensor>& frames,
                                    const ProbeLocation& probe, const ProbeLocation& source, float step) {
  NoGradGuard no_grad;
  auto evaluate = [&](const std::vector<Tensor>& fs) {
    std::vector<Var> in(fs.begin(), fs.end());
    const Tensor& o = model(in)[probe.t].value();
    std::vector<double> v(o.c());
    for (int c = 0; c < o.c(); ++c) v[c] = o.at(0, c, probe.y, probe.x);
    return v;
  };
  double worst = 0.0;
  for (int ci = 0; ci < frames[source.t].c(); ++ci) {
    std::vector<Tensor> plus = frames, minus = frames;
    plus[source.t].at(0, ci, source.y, source.x) += step;
    minus[source.t].at(0, ci, source.y, source.x) -= step;
    const auto a = evaluate(plus);
    const auto b = evaluate(minus);
    for (std::size_t c = 0; c < a.size(); ++c) worst = std::max(worst, std::fabs(a[c] - b[c]) / (2.0 * step));
  }
  return worst;
}

}  // namespace stbn

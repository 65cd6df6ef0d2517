#include "stbn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stbn {

using nlohmann::json;

namespace {

std::string activation_name(ActivationKind k) { return k == ActivationKind::relu ? "relu" : "leaky_relu"; }

ActivationKind parse_activation(const std::string& s) {
  if (s == "relu") return ActivationKind::relu;
  if (s == "leaky_relu") return ActivationKind::leaky_relu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

std::string head_name(HeadKind h) { return h == HeadKind::gaussian_params ? "gaussian_params" : "regression"; }

HeadKind parse_head(const std::string& s) {
  if (s == "gaussian_params") return HeadKind::gaussian_params;
  if (s == "regression") return HeadKind::regression;
  throw std::invalid_argument("unknown head '" + s + "'");
}

}  // namespace

void ModelConfig::validate() const {
  if (image_channels != 1 && image_channels != 3)
    throw std::invalid_argument("ModelConfig: image_channels must be 1 or 3");
  bsa.validate();
  srfe.validate();
  flow.validate();
  if (use_srfe) {
    const int s = srfe.shuffle_factor;
    // Within a sub-lattice group every offset is a multiple of s; it must never cancel an
    // offset the propagation cell can already reach.
    if (use_bsa && s % bsa.dilation != 0)
      throw std::invalid_argument("ModelConfig: shuffle_factor must be a multiple of the BSA dilation");
    if (!use_bsa && s <= bsa.masked_kernel / 2)
      throw std::invalid_argument("ModelConfig: shuffle_factor must exceed the masked kernel radius");
  }
}

json ModelConfig::to_json() const {
  return json{
      {"image_channels", image_channels},
      {"use_bsa", use_bsa},
      {"use_srfe", use_srfe},
      {"seed", seed},
      {"bsa",
       {{"channels", bsa.channels},
        {"masked_kernel", bsa.masked_kernel},
        {"dilation", bsa.dilation},
        {"num_dconv_blocks", bsa.num_dconv_blocks},
        {"activation", activation_name(bsa.activation.kind)},
        {"slope", bsa.activation.slope},
        {"mask_center", bsa.mask_center}}},
      {"srfe",
       {{"shuffle_factor", srfe.shuffle_factor},
        {"num_residual_blocks", srfe.num_residual_blocks},
        {"channels", srfe.channels},
        {"head", head_name(srfe.head)},
        {"activation", activation_name(srfe.activation.kind)},
        {"slope", srfe.activation.slope}}},
      {"flow",
       {{"backend", to_string(flow.backend)},
        {"pyramid_levels", flow.pyramid_levels},
        {"iterations", flow.iterations},
        {"window", flow.window},
        {"hidden_channels", flow.hidden_channels},
        {"adapter_command", flow.adapter_command}}},
  };
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.image_channels = j.at("image_channels").get<int>();
  c.use_bsa = j.at("use_bsa").get<bool>();
  c.use_srfe = j.at("use_srfe").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const json& b = j.at("bsa");
  c.bsa.channels = b.at("channels").get<int>();
  c.bsa.masked_kernel = b.at("masked_kernel").get<int>();
  c.bsa.dilation = b.at("dilation").get<int>();
  c.bsa.num_dconv_blocks = b.at("num_dconv_blocks").get<int>();
  c.bsa.activation = {parse_activation(b.at("activation").get<std::string>()), b.at("slope").get<float>()};
  c.bsa.mask_center = b.value("mask_center", true);
  const json& s = j.at("srfe");
  c.srfe.shuffle_factor = s.at("shuffle_factor").get<int>();
  c.srfe.num_residual_blocks = s.at("num_residual_blocks").get<int>();
  c.srfe.channels = s.at("channels").get<int>();
  c.srfe.head = parse_head(s.at("head").get<std::string>());
  c.srfe.activation = {parse_activation(s.at("activation").get<std::string>()), s.at("slope").get<float>()};
  const json& f = j.at("flow");
  c.flow.backend = parse_flow_backend(f.at("backend").get<std::string>());
  c.flow.pyramid_levels = f.at("pyramid_levels").get<int>();
  c.flow.iterations = f.at("iterations").get<int>();
  c.flow.window = f.at("window").get<int>();
  c.flow.hidden_channels = f.at("hidden_channels").get<int>();
  c.flow.adapter_command = f.value("adapter_command", std::string());
  return c;
}

namespace {

std::unique_ptr<RecurrentCell> make_cell(const std::string& name, const ModelConfig& c, const CounterRng& rng) {
  if (c.use_bsa) return std::make_unique<BsaBlock>(name, c.image_channels, c.bsa, rng);
  return std::make_unique<PlainPropagationCell>(name, c.image_channels, c.bsa, rng);
}

void init_output_bias(ConvLayer& out, HeadKind head, int image_channels) {
  Tensor& b = out.bias().mutable_value();
  for (int c = 0; c < image_channels; ++c) b[c] = 0.5f;
  if (head == HeadKind::gaussian_params)
    for (int c = 0; c < image_channels; ++c) b[image_channels + c] = std::log(0.01f);
}

}  // namespace

StbnNetwork::StbnNetwork(const ModelConfig& config) : config_(config) {
  config_.validate();
  const CounterRng rng(config_.seed, CounterRng::hash_name("stbn"));
  forward_ = std::make_unique<Propagator>(FlowDirection::forward, make_cell("prop_fwd", config_, rng));
  backward_ = std::make_unique<Propagator>(FlowDirection::backward, make_cell("prop_bwd", config_, rng));
  const int F = config_.bsa.channels;
  if (config_.use_srfe) {
    srfe_ = std::make_unique<Srfe>("srfe", F, config_.image_channels, config_.srfe, rng);
    init_output_bias(srfe_->output_layer(), config_.srfe.head, config_.image_channels);
  } else {
    pointwise_ = std::make_unique<PointwiseHead>("head", F, output_channels(), config_.srfe.activation, rng);
    init_output_bias(pointwise_->output_layer(), config_.srfe.head, config_.image_channels);
  }
  flow_ = make_flow_estimator(config_.flow, config_.image_channels, rng);

  if (config_.bsa.mask_center) {
    const BlindSpotCertificate cert = certify_blind_spot(*this, 4, config_.seed);
    if (!cert.certified)
      throw std::invalid_argument("StbnNetwork: configuration lets the output see its own noisy input pixel");
  }
}

std::vector<Var> StbnNetwork::forward(const std::vector<Var>& frames, const FlowPairs& flows) const {
  const auto fwd = forward_->run(frames, flows.forward);
  const auto bwd = backward_->run(frames, flows.backward);
  std::vector<Var> out;
  out.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t)
    out.push_back(srfe_ ? (*srfe_)(fwd[t].features, bwd[t].features)
                        : (*pointwise_)(fwd[t].features, bwd[t].features));
  return out;
}

std::vector<Var> StbnNetwork::forward(const std::vector<Tensor>& frames) const {
  const FlowPairs flows = estimate_flows(frames);
  return forward(std::vector<Var>(frames.begin(), frames.end()), flows);
}

FlowPairs StbnNetwork::estimate_flows(const std::vector<Tensor>& frames) const {
  return compute_flow_pairs(frames, *flow_);
}

PixelPredictor StbnNetwork::predictor(const FlowPairs& flows) const {
  return [this, flows](const std::vector<Var>& frames) { return forward(frames, flows); };
}

ParameterList StbnNetwork::denoiser_parameters() const {
  ParameterList p;
  forward_->collect(p);
  backward_->collect(p);
  if (srfe_) srfe_->collect(p);
  if (pointwise_) pointwise_->collect(p);
  return p;
}

ParameterList StbnNetwork::flow_parameters() const {
  ParameterList p;
  if (const TinyPyramidFlow* f = trainable_flow()) f->collect(p);
  return p;
}

ParameterList StbnNetwork::all_parameters() const {
  ParameterList p = denoiser_parameters();
  for (auto& q : flow_parameters()) p.push_back(q);
  return p;
}

TinyPyramidFlow* StbnNetwork::trainable_flow() { return dynamic_cast<TinyPyramidFlow*>(flow_.get()); }
const TinyPyramidFlow* StbnNetwork::trainable_flow() const { return dynamic_cast<const TinyPyramidFlow*>(flow_.get()); }

void StbnNetwork::set_flow(std::unique_ptr<FlowEstimator> flow) {
  if (!flow) throw std::invalid_argument("set_flow: null estimator");
  flow_ = std::move(flow);
}

BlindSpotCertificate certify_blind_spot(const StbnNetwork& model, int num_probes, std::uint64_t seed, int frames,
                                        int size) {
  if (num_probes < 1 || frames < 2 || size < 6) throw std::invalid_argument("certify_blind_spot: bad probe setup");
  const CounterRng rng(seed, CounterRng::hash_name("certify"));
  const int C = model.config().image_channels;
  std::vector<Tensor> clip;
  for (int t = 0; t < frames; ++t) {
    Tensor f(1, C, size, size);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(rng.uniform(t * f.size() + i));
    clip.push_back(std::move(f));
  }
  FlowPairs flows;
  std::uint64_t counter = 1u << 30;
  auto random_flow = [&] {
    Tensor f(1, 2, size, size);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(4.0 * rng.uniform(counter++) - 2.0);
    return f;
  };
  for (int t = 0; t + 1 < frames; ++t) {
    flows.forward.push_back(random_flow());
    flows.backward.push_back(random_flow());
  }
  const PixelPredictor predictor = model.predictor(flows);

  BlindSpotCertificate cert;
  cert.certified = true;
  cert.min_other_frame_dependence = std::numeric_limits<double>::infinity();
  for (int k = 0; k < num_probes; ++k) {
    const ProbeLocation p{static_cast<int>(rng.below(counter++, frames)), 1 + static_cast<int>(rng.below(counter++, size - 2)),
                          1 + static_cast<int>(rng.below(counter++, size - 2))};
    const auto maps = probe_dependency(predictor, clip, p);
    const double self = maps[p.t].at(p.y, p.x);
    double others = 0.0;
    for (const auto& m : maps)
      if (m.source_frame != p.t) others += m.total();
    cert.worst_self_dependence = std::max(cert.worst_self_dependence, self);
    cert.min_other_frame_dependence = std::min(cert.min_other_frame_dependence, others);
    if (self != 0.0) cert.certified = false;
    ++cert.probes;
  }
  return cert;
}

}  // namespace stbn

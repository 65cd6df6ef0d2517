#pragma once

#include <string>
#include <vector>

#include "stbn/blindspot.hpp"

namespace stbn {

/// Space-to-channel rearrangement. Output channel c*s*s + (a*s + b) at cell (u, v)
/// holds input channel c at pixel (u*s + a, v*s + b): row-major within each s x s cell.
Var patch_unshuffle(const Var& x, int s);
/// Exact inverse of patch_unshuffle.
Var patch_shuffle(const Var& x, int s);
Tensor patch_unshuffle(const Tensor& x, int s);
Tensor patch_shuffle(const Tensor& x, int s);

enum class HeadKind { regression, gaussian_params };

struct SrfeConfig {
  int shuffle_factor = 2;
  int num_residual_blocks = 4;
  int channels = 32;  // per sub-lattice group on the unshuffled grid
  HeadKind head = HeadKind::gaussian_params;
  Activation activation{};

  void validate() const;
};

int head_channels(HeadKind head, int image_channels);

/// Fuses forward/backward states on the unshuffled grid. Convolutions there are grouped
/// by sub-pixel position, so every group only ever sees pixels congruent to the output
/// pixel modulo the shuffle factor, which keeps the upstream blind spot intact.
/// Odd sizes are reflect-padded before unshuffling and cropped after shuffling back.
class Srfe {
 public:
  Srfe(const std::string& name, int hidden_channels, int image_channels, const SrfeConfig& config,
       const CounterRng& rng);

  Var operator()(const Var& h_forward, const Var& h_backward) const;
  void collect(ParameterList& out) const;
  const SrfeConfig& config() const { return config_; }
  ConvLayer& output_layer() { return out_; }

 private:
  SrfeConfig config_;
  int hidden_ = 0;
  ConvLayer entry_;
  std::vector<ConvLayer> res_a_;
  std::vector<ConvLayer> res_b_;
  ConvLayer proj_;
  ConvLayer out_;
};

/// Output head used when SRFE is disabled: concat(h_f, h_b) -> 1x1 -> act -> 1x1.
class PointwiseHead {
 public:
  PointwiseHead(const std::string& name, int hidden_channels, int out_channels, const Activation& act,
                const CounterRng& rng);
  Var operator()(const Var& h_forward, const Var& h_backward) const;
  void collect(ParameterList& out) const;
  ConvLayer& output_layer() { return out_; }

 private:
  Activation act_;
  ConvLayer hidden_;
  ConvLayer out_;
};

}  // namespace stbn

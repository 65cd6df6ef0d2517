#pragma once

#include <memory>
#include <vector>

#include "stbn/blindspot.hpp"
#include "stbn/warp.hpp"

namespace stbn {

/// Hidden features for one frame in one propagation direction, (N, F, H, W).
struct BlindSpotState {
  Var features;
  FlowDirection direction = FlowDirection::forward;
  int frame_index = 0;
};

/// One recurrent direction. Forward: h_t = cell(y_t, warp(h_{t-1}, flows[t-1])), where
/// flows[t-1] aligns frame t-1 onto frame t. Backward mirrors this with flows[t]
/// aligning frame t+1 onto frame t. Boundary states start at zero. Hidden states are
/// only ever aligned with nearest-neighbour sampling.
class Propagator {
 public:
  Propagator(FlowDirection direction, std::unique_ptr<RecurrentCell> cell);

  std::vector<BlindSpotState> run(const std::vector<Var>& frames, const std::vector<Tensor>& flows) const;

  FlowDirection direction() const { return direction_; }
  const RecurrentCell& cell() const { return *cell_; }
  void collect(ParameterList& out) const { cell_->collect(out); }

 private:
  FlowDirection direction_;
  std::unique_ptr<RecurrentCell> cell_;
};

/// Aligns a hidden state onto the current frame. Bilinear resampling would mix noise
/// across pixels and is refused.
Var align_state(const Var& state, const Tensor& flow, Interpolation interp = Interpolation::nearest);

std::vector<BlindSpotState> propagate_forward(const Propagator& p, const std::vector<Var>& frames,
                                              const std::vector<Tensor>& flows_fwd);
std::vector<BlindSpotState> propagate_backward(const Propagator& p, const std::vector<Var>& frames,
                                               const std::vector<Tensor>& flows_bwd);

}  // namespace stbn

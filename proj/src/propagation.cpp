#include "stbn/propagation.hpp"

#include <stdexcept>

namespace stbn {

Propagator::Propagator(FlowDirection direction, std::unique_ptr<RecurrentCell> cell)
    : direction_(direction), cell_(std::move(cell)) {
  if (!cell_) throw std::invalid_argument("Propagator: null cell");
}

Var align_state(const Var& state, const Tensor& flow, Interpolation interp) {
  if (interp != Interpolation::nearest)
    throw std::logic_error("align_state: hidden states must be aligned with nearest-neighbour warping");
  return warp_nearest(state, flow);
}

std::vector<BlindSpotState> Propagator::run(const std::vector<Var>& frames, const std::vector<Tensor>& flows) const {
  const int T = static_cast<int>(frames.size());
  if (T == 0) throw std::invalid_argument("Propagator: no frames");
  if (static_cast<int>(flows.size()) != T - 1)
    throw std::invalid_argument("Propagator: expected " + std::to_string(T - 1) + " flows, got " +
                                std::to_string(flows.size()));
  const Tensor& f0 = frames.front().value();
  const Var zero_state(Tensor(f0.n(), cell_->hidden_channels(), f0.h(), f0.w()));

  std::vector<BlindSpotState> states(T);
  const bool fwd = direction_ == FlowDirection::forward;
  Var prev;
  for (int step = 0; step < T; ++step) {
    const int t = fwd ? step : T - 1 - step;
    Var aligned = zero_state;
    if (step > 0) aligned = align_state(prev, flows[fwd ? t - 1 : t]);
    prev = (*cell_)(frames[t], aligned);
    states[t] = {prev, direction_, t};
  }
  return states;
}

std::vector<BlindSpotState> propagate_forward(const Propagator& p, const std::vector<Var>& frames,
                                              const std::vector<Tensor>& flows_fwd) {
  if (p.direction() != FlowDirection::forward) throw std::invalid_argument("propagate_forward: backward propagator");
  return p.run(frames, flows_fwd);
}

std::vector<BlindSpotState> propagate_backward(const Propagator& p, const std::vector<Var>& frames,
                                               const std::vector<Tensor>& flows_bwd) {
  if (p.direction() != FlowDirection::backward) throw std::invalid_argument("propagate_backward: forward propagator");
  return p.run(frames, flows_bwd);
}

}  // namespace stbn

#include "stbn/srfe.hpp"

#include <stdexcept>

namespace stbn {

namespace {

// Moves values between the full-resolution and unshuffled layouts; `to_unshuffled`
// selects the direction, and the same index map serves as the adjoint of the other.
void shuffle_copy(const Tensor& src, Tensor& dst, int s, bool to_unshuffled, bool accumulate) {
  const Tensor& full = to_unshuffled ? src : dst;
  const int N = full.n(), C = full.c(), H = full.h(), W = full.w();
  const int Ho = H / s, Wo = W / s;
  for (int b = 0; b < N; ++b)
    for (int c = 0; c < C; ++c)
      for (int a = 0; a < s; ++a)
        for (int e = 0; e < s; ++e) {
          const int oc = c * s * s + a * s + e;
          for (int u = 0; u < Ho; ++u)
            for (int v = 0; v < Wo; ++v) {
              if (to_unshuffled) {
                float& d = dst.at(b, oc, u, v);
                const float val = src.at(b, c, u * s + a, v * s + e);
                d = accumulate ? d + val : val;
              } else {
                float& d = dst.at(b, c, u * s + a, v * s + e);
                const float val = src.at(b, oc, u, v);
                d = accumulate ? d + val : val;
              }
            }
        }
}

}  // namespace

Tensor patch_unshuffle(const Tensor& x, int s) {
  if (s < 1) throw std::invalid_argument("patch_unshuffle: factor must be >= 1");
  if (x.h() % s || x.w() % s)
    throw std::invalid_argument("patch_unshuffle: " + x.shape_string() + " not divisible by " + std::to_string(s));
  Tensor out(x.n(), x.c() * s * s, x.h() / s, x.w() / s);
  shuffle_copy(x, out, s, true, false);
  return out;
}

Tensor patch_shuffle(const Tensor& x, int s) {
  if (s < 1) throw std::invalid_argument("patch_shuffle: factor must be >= 1");
  if (x.c() % (s * s)) throw std::invalid_argument("patch_shuffle: channels not divisible by s^2");
  Tensor out(x.n(), x.c() / (s * s), x.h() * s, x.w() * s);
  shuffle_copy(x, out, s, false, false);
  return out;
}

Var patch_unshuffle(const Var& x, int s) {
  return Var::make(patch_unshuffle(x.value(), s), {x}, [s](Node& n) {
    shuffle_copy(n.grad, n.inputs[0]->grad_buffer(), s, false, true);
  });
}

Var patch_shuffle(const Var& x, int s) {
  return Var::make(patch_shuffle(x.value(), s), {x}, [s](Node& n) {
    shuffle_copy(n.grad, n.inputs[0]->grad_buffer(), s, true, true);
  });
}

void SrfeConfig::validate() const {
  if (shuffle_factor < 1) throw std::invalid_argument("SrfeConfig: shuffle_factor must be >= 1");
  if (num_residual_blocks < 0) throw std::invalid_argument("SrfeConfig: num_residual_blocks must be >= 0");
  if (channels < 1) throw std::invalid_argument("SrfeConfig: channels must be >= 1");
}

int head_channels(HeadKind head, int image_channels) {
  return head == HeadKind::gaussian_params ? 2 * image_channels : image_channels;
}

Srfe::Srfe(const std::string& name, int hidden_channels, int image_channels, const SrfeConfig& config,
           const CounterRng& rng)
    : config_(config), hidden_(hidden_channels) {
  config_.validate();
  const int groups = config_.shuffle_factor * config_.shuffle_factor;
  const int cs = config_.channels;
  const float g = config_.activation.gain();
  entry_ = make_dilated_conv(name + ".entry", 2 * hidden_channels * groups, cs * groups, 1, rng, g, groups);
  for (int r = 0; r < config_.num_residual_blocks; ++r) {
    const std::string p = name + ".res" + std::to_string(r);
    res_a_.push_back(make_dilated_conv(p + ".a", cs * groups, cs * groups, 1, rng, g, groups));
    res_b_.push_back(make_dilated_conv(p + ".b", cs * groups, cs * groups, 1, rng, 0.5f, groups));
  }
  proj_ = make_pointwise(name + ".proj", cs, cs, rng, g);
  out_ = make_pointwise(name + ".out", cs, head_channels(config_.head, image_channels), rng, 0.5f);
}

Var Srfe::operator()(const Var& h_forward, const Var& h_backward) const {
  const Tensor& a = h_forward.value();
  const Tensor& b = h_backward.value();
  if (!a.same_shape(b)) throw std::invalid_argument("srfe: state shapes differ " + a.shape_string() + " vs " + b.shape_string());
  const int s = config_.shuffle_factor, groups = s * s;
  const int H = a.h(), W = a.w(), F = a.c(), cs = config_.channels;
  if (F != hidden_) throw std::invalid_argument("srfe: unexpected hidden width");
  const int pad_h = (s - H % s) % s, pad_w = (s - W % s) % s;
  const Activation& act = config_.activation;

  const Var uf = patch_unshuffle(reflect_pad(h_forward, pad_h, pad_w), s);
  const Var ub = patch_unshuffle(reflect_pad(h_backward, pad_h, pad_w), s);
  // concat index: src*F*s^2 + c*s^2 + g  ->  group-major g*2F + src*F + c
  std::vector<int> to_groups(2 * F * groups);
  for (int g = 0; g < groups; ++g)
    for (int src = 0; src < 2; ++src)
      for (int c = 0; c < F; ++c) to_groups[g * 2 * F + src * F + c] = src * F * groups + c * groups + g;
  Var x = act(entry_(permute_channels(concat_channels({uf, ub}), to_groups)));
  for (std::size_t r = 0; r < res_a_.size(); ++r) x = add(x, res_b_[r](act(res_a_[r](x))));
  std::vector<int> from_groups(cs * groups);
  for (int c = 0; c < cs; ++c)
    for (int g = 0; g < groups; ++g) from_groups[c * groups + g] = g * cs + c;
  Var full = crop(patch_shuffle(permute_channels(x, from_groups), s), H, W);
  return out_(act(proj_(full)));
}

void Srfe::collect(ParameterList& out) const {
  entry_.collect(out);
  for (std::size_t r = 0; r < res_a_.size(); ++r) {
    res_a_[r].collect(out);
    res_b_[r].collect(out);
  }
  proj_.collect(out);
  out_.collect(out);
}

PointwiseHead::PointwiseHead(const std::string& name, int hidden_channels, int out_channels, const Activation& act,
                             const CounterRng& rng)
    : act_(act) {
  hidden_ = make_pointwise(name + ".hidden", 2 * hidden_channels, hidden_channels, rng, act.gain());
  out_ = make_pointwise(name + ".out", hidden_channels, out_channels, rng, 0.5f);
}

Var PointwiseHead::operator()(const Var& h_forward, const Var& h_backward) const {
  return out_(act_(hidden_(concat_channels({h_forward, h_backward}))));
}

void PointwiseHead::collect(ParameterList& out) const {
  hidden_.collect(out);
  out_.collect(out);
}

}  // namespace stbn

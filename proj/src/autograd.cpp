#include "stbn/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

namespace stbn {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void accumulate(const std::shared_ptr<Node>& input, const Tensor& g) {
  if (!input->requires_grad) return;
  input->grad_buffer() += g;
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor::zeros_like(value);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  Var out(std::move(value));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Var& v : inputs) any = any || v.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs.reserve(inputs.size());
  for (Var& v : inputs) out.node_->inputs.push_back(v.node_);
  out.node_->backward = std::move(backward);
  return out;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& root, const Tensor& seed) {
  if (!root.requires_grad()) throw std::logic_error("backward: root does not require grad");
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  // iterative post-order DFS
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // interior gradients from an earlier sweep over the same graph are stale; leaves accumulate
  for (Node* node : order)
    if (node->backward) node->grad = Tensor();
  Node* r = root.node().get();
  if (seed.empty()) {
    r->grad = Tensor::zeros_like(r->value);
    r->grad.fill(1.0f);
  } else {
    require_same_shape(seed, r->value, "backward seed");
    r->grad = seed;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

Var detach(const Var& x) { return Var(x.value()); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    accumulate(n.inputs[0], n.grad);
    accumulate(n.inputs[1], n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return Var::make(std::move(out), {a, b}, [](Node& n) {
    accumulate(n.inputs[0], n.grad);
    if (n.inputs[1]->requires_grad) {
      Tensor& g = n.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Var scale(const Var& a, float s) {
  Tensor out = a.value();
  out *= s;
  return Var::make(std::move(out), {a}, [s](Node& n) {
    Tensor& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
  });
}

Var leaky_relu(const Var& x, float slope) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0f) out[i] *= slope;
  return Var::make(std::move(out), {x}, [slope](Node& n) {
    const Tensor& in = n.inputs[0]->value;
    Tensor& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += in[i] < 0.0f ? slope * n.grad[i] : n.grad[i];
  });
}

Var clamp(const Var& x, float lo, float hi) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], lo, hi);
  return Var::make(std::move(out), {x}, [lo, hi](Node& n) {
    const Tensor& in = n.inputs[0]->value;
    Tensor& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in[i] >= lo && in[i] <= hi) g[i] += n.grad[i];
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty input");
  const Tensor& f = xs.front().value();
  int total = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    if (t.n() != f.n() || t.h() != f.h() || t.w() != f.w())
      throw std::invalid_argument("concat_channels: spatial/batch mismatch " + f.shape_string() + " vs " +
                                  t.shape_string());
    total += t.c();
  }
  Tensor out(f.n(), total, f.h(), f.w());
  const std::size_t plane = f.plane();
  for (int b = 0; b < f.n(); ++b) {
    int offset = 0;
    for (const Var& v : xs) {
      const Tensor& t = v.value();
      std::memcpy(out.plane_ptr(b, offset), t.plane_ptr(b, 0), plane * t.c() * sizeof(float));
      offset += t.c();
    }
  }
  return Var::make(std::move(out), xs, [](Node& n) {
    const std::size_t plane = n.value.plane();
    int offset = 0;
    for (auto& in : n.inputs) {
      const int c = in->value.c();
      if (in->requires_grad) {
        Tensor& g = in->grad_buffer();
        for (int b = 0; b < n.value.n(); ++b) {
          const float* src = n.grad.plane_ptr(b, offset);
          float* dst = g.plane_ptr(b, 0);
          for (std::size_t i = 0; i < plane * c; ++i) dst[i] += src[i];
        }
      }
      offset += c;
    }
  });
}

Var slice_channels(const Var& x, int begin, int count) {
  const Tensor& in = x.value();
  if (begin < 0 || count <= 0 || begin + count > in.c()) throw std::out_of_range("slice_channels");
  Tensor out(in.n(), count, in.h(), in.w());
  const std::size_t plane = in.plane();
  for (int b = 0; b < in.n(); ++b)
    std::memcpy(out.plane_ptr(b, 0), in.plane_ptr(b, begin), plane * count * sizeof(float));
  return Var::make(std::move(out), {x}, [begin, count](Node& n) {
    Tensor& g = n.inputs[0]->grad_buffer();
    const std::size_t plane = n.value.plane();
    for (int b = 0; b < n.value.n(); ++b) {
      const float* src = n.grad.plane_ptr(b, 0);
      float* dst = g.plane_ptr(b, begin);
      for (std::size_t i = 0; i < plane * count; ++i) dst[i] += src[i];
    }
  });
}

Var permute_channels(const Var& x, const std::vector<int>& order) {
  const Tensor& in = x.value();
  if (static_cast<int>(order.size()) != in.c()) throw std::invalid_argument("permute_channels: size");
  Tensor out(in.n(), in.c(), in.h(), in.w());
  const std::size_t plane = in.plane();
  for (int b = 0; b < in.n(); ++b)
    for (int k = 0; k < in.c(); ++k)
      std::memcpy(out.plane_ptr(b, k), in.plane_ptr(b, order[k]), plane * sizeof(float));
  return Var::make(std::move(out), {x}, [order](Node& n) {
    Tensor& g = n.inputs[0]->grad_buffer();
    const std::size_t plane = n.value.plane();
    for (int b = 0; b < n.value.n(); ++b)
      for (int k = 0; k < n.value.c(); ++k) {
        const float* src = n.grad.plane_ptr(b, k);
        float* dst = g.plane_ptr(b, order[k]);
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
  });
}

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

}  // namespace

Var reflect_pad(const Var& x, int bottom, int right) {
  const Tensor& in = x.value();
  if (bottom == 0 && right == 0) return x;
  const int H = in.h(), W = in.w(), Ho = H + bottom, Wo = W + right;
  Tensor out(in.n(), in.c(), Ho, Wo);
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx)
          out.at(b, c, y, xx) = in.at(b, c, reflect_index(y, H), reflect_index(xx, W));
  return Var::make(std::move(out), {x}, [H, W](Node& n) {
    Tensor& g = n.inputs[0]->grad_buffer();
    for (int b = 0; b < n.value.n(); ++b)
      for (int c = 0; c < n.value.c(); ++c)
        for (int y = 0; y < n.value.h(); ++y)
          for (int xx = 0; xx < n.value.w(); ++xx)
            g.at(b, c, reflect_index(y, H), reflect_index(xx, W)) += n.grad.at(b, c, y, xx);
  });
}

Var crop(const Var& x, int h, int w) {
  const Tensor& in = x.value();
  if (h == in.h() && w == in.w()) return x;
  if (h > in.h() || w > in.w()) throw std::invalid_argument("crop: larger than input");
  Tensor out(in.n(), in.c(), h, w);
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < h; ++y) std::memcpy(&out.at(b, c, y, 0), in.data() + in.index(b, c, y, 0), w * sizeof(float));
  return Var::make(std::move(out), {x}, [](Node& n) {
    Tensor& g = n.inputs[0]->grad_buffer();
    for (int b = 0; b < n.value.n(); ++b)
      for (int c = 0; c < n.value.c(); ++c)
        for (int y = 0; y < n.value.h(); ++y)
          for (int xx = 0; xx < n.value.w(); ++xx) g.at(b, c, y, xx) += n.grad.at(b, c, y, xx);
  });
}

Var avg_pool2(const Var& x) {
  const Tensor& in = x.value();
  const int H = in.h(), W = in.w(), Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  Tensor out(in.n(), in.c(), Ho, Wo);
  auto cell = [H, W](int y, int xx, auto&& visit) {
    int count = 0;
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx)
        if (2 * y + dy < H && 2 * xx + dx < W) ++count;
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx)
        if (2 * y + dy < H && 2 * xx + dx < W) visit(2 * y + dy, 2 * xx + dx, 1.0f / count);
  };
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx) {
          float s = 0.0f;
          cell(y, xx, [&](int sy, int sx, float wgt) { s += wgt * in.at(b, c, sy, sx); });
          out.at(b, c, y, xx) = s;
        }
  return Var::make(std::move(out), {x}, [cell](Node& n) {
    Tensor& g = n.inputs[0]->grad_buffer();
    for (int b = 0; b < n.value.n(); ++b)
      for (int c = 0; c < n.value.c(); ++c)
        for (int y = 0; y < n.value.h(); ++y)
          for (int xx = 0; xx < n.value.w(); ++xx) {
            const float go = n.grad.at(b, c, y, xx);
            cell(y, xx, [&](int sy, int sx, float wgt) { g.at(b, c, sy, sx) += wgt * go; });
          }
  });
}

namespace {

struct Lerp {
  int i0, i1;
  float w1;
};

std::vector<Lerp> upsample_axis(int in, int out) {
  std::vector<Lerp> r(out);
  const float scale = static_cast<float>(in) / out;
  for (int o = 0; o < out; ++o) {
    float s = std::max(0.0f, (o + 0.5f) * scale - 0.5f);
    int i0 = std::min(static_cast<int>(s), in - 1);
    int i1 = std::min(i0 + 1, in - 1);
    r[o] = {i0, i1, s - i0};
  }
  return r;
}

}  // namespace

Var upsample2(const Var& x, int out_h, int out_w) {
  const Tensor& in = x.value();
  const auto ly = upsample_axis(in.h(), out_h);
  const auto lx = upsample_axis(in.w(), out_w);
  Tensor out(in.n(), in.c(), out_h, out_w);
  for (int b = 0; b < in.n(); ++b)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < out_h; ++y)
        for (int xx = 0; xx < out_w; ++xx) {
          const Lerp& a = ly[y];
          const Lerp& e = lx[xx];
          out.at(b, c, y, xx) = (1 - a.w1) * ((1 - e.w1) * in.at(b, c, a.i0, e.i0) + e.w1 * in.at(b, c, a.i0, e.i1)) +
                                a.w1 * ((1 - e.w1) * in.at(b, c, a.i1, e.i0) + e.w1 * in.at(b, c, a.i1, e.i1));
        }
  return Var::make(std::move(out), {x}, [ly, lx](Node& n) {
    Tensor& g = n.inputs[0]->grad_buffer();
    for (int b = 0; b < n.value.n(); ++b)
      for (int c = 0; c < n.value.c(); ++c)
        for (int y = 0; y < n.value.h(); ++y)
          for (int xx = 0; xx < n.value.w(); ++xx) {
            const Lerp& a = ly[y];
            const Lerp& e = lx[xx];
            const float go = n.grad.at(b, c, y, xx);
            g.at(b, c, a.i0, e.i0) += go * (1 - a.w1) * (1 - e.w1);
            g.at(b, c, a.i0, e.i1) += go * (1 - a.w1) * e.w1;
            g.at(b, c, a.i1, e.i0) += go * a.w1 * (1 - e.w1);
            g.at(b, c, a.i1, e.i1) += go * a.w1 * e.w1;
          }
  });
}

// ---- convolution ----------------------------------------------------------------

TapSet square_taps(int kernel, int dilation, bool drop_center) {
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("square_taps: kernel must be odd");
  if (dilation < 1) throw std::invalid_argument("square_taps: dilation must be >= 1");
  TapSet taps;
  const int r = kernel / 2;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      if (drop_center && dy == 0 && dx == 0) continue;
      taps.push_back({dy * dilation, dx * dilation});
    }
  return taps;
}

namespace {

// cols row (ci * ntaps + k) holds channel ci shifted by tap k, zero outside.
void im2col(const float* src, int cin, int H, int W, const TapSet& taps, float* cols) {
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const int nt = static_cast<int>(taps.size());
  for (int ci = 0; ci < cin; ++ci) {
    const float* s = src + ci * plane;
    for (int k = 0; k < nt; ++k) {
      float* row = cols + (static_cast<std::size_t>(ci) * nt + k) * plane;
      const int dy = taps[k].dy, dx = taps[k].dx;
      const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
      for (int y = 0; y < H; ++y) {
        float* r = row + static_cast<std::size_t>(y) * W;
        const int ys = y + dy;
        if (ys < 0 || ys >= H || x0 >= x1) {
          std::fill(r, r + W, 0.0f);
          continue;
        }
        std::fill(r, r + x0, 0.0f);
        std::memcpy(r + x0, s + static_cast<std::size_t>(ys) * W + x0 + dx, (x1 - x0) * sizeof(float));
        std::fill(r + x1, r + W, 0.0f);
      }
    }
  }
}

void col2im(const float* cols, int cin, int H, int W, const TapSet& taps, float* dst) {
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const int nt = static_cast<int>(taps.size());
  for (int ci = 0; ci < cin; ++ci) {
    float* d = dst + ci * plane;
    for (int k = 0; k < nt; ++k) {
      const float* row = cols + (static_cast<std::size_t>(ci) * nt + k) * plane;
      const int dy = taps[k].dy, dx = taps[k].dx;
      const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
      for (int y = 0; y < H; ++y) {
        const int ys = y + dy;
        if (ys < 0 || ys >= H) continue;
        const float* r = row + static_cast<std::size_t>(y) * W;
        float* o = d + static_cast<std::size_t>(ys) * W + dx;
        for (int xx = x0; xx < x1; ++xx) o[xx] += r[xx];
      }
    }
  }
}

bool is_pointwise(const TapSet& taps) { return taps.size() == 1 && taps[0].dy == 0 && taps[0].dx == 0; }

}  // namespace

Var conv(const Var& x, const Var& weight, const Var& bias, const TapSet& taps, int groups) {
  const Tensor& in = x.value();
  const Tensor& wt = weight.value();
  const int N = in.n(), Cin = in.c(), H = in.h(), W = in.w();
  const int Cout = wt.n(), nt = static_cast<int>(taps.size());
  if (groups < 1 || Cin % groups != 0 || Cout % groups != 0)
    throw std::invalid_argument("conv: channels not divisible by groups");
  const int cin_g = Cin / groups, cout_g = Cout / groups, K = cin_g * nt;
  if (wt.c() != cin_g || wt.h() != 1 || wt.w() != nt)
    throw std::invalid_argument("conv: weight shape " + wt.shape_string() + " does not match input " +
                                in.shape_string());
  if (bias.defined() && (bias.value().c() != Cout || bias.value().size() != static_cast<std::size_t>(Cout)))
    throw std::invalid_argument("conv: bias shape");
  const int HW = H * W;
  const bool pointwise = is_pointwise(taps);

  Tensor out(N, Cout, H, W);
  std::vector<float> cols(pointwise ? 0 : static_cast<std::size_t>(K) * HW);
  for (int b = 0; b < N; ++b) {
    for (int g = 0; g < groups; ++g) {
      const float* src = in.plane_ptr(b, g * cin_g);
      const float* colp = src;
      if (!pointwise) {
        im2col(src, cin_g, H, W, taps, cols.data());
        colp = cols.data();
      }
      Eigen::Map<const RowMat> Wg(wt.data() + static_cast<std::size_t>(g) * cout_g * K, cout_g, K);
      Eigen::Map<const RowMat> C(colp, K, HW);
      Eigen::Map<RowMat> O(out.plane_ptr(b, g * cout_g), cout_g, HW);
      O.noalias() = Wg * C;
    }
    if (bias.defined()) {
      const Tensor& bv = bias.value();
      for (int c = 0; c < Cout; ++c) {
        float* o = out.plane_ptr(b, c);
        const float bc = bv[c];
        for (int i = 0; i < HW; ++i) o[i] += bc;
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Var::make(std::move(out), inputs, [taps, groups, pointwise](Node& n) {
    const Tensor& in = n.inputs[0]->value;
    const Tensor& wt = n.inputs[1]->value;
    const int N = in.n(), Cin = in.c(), H = in.h(), W = in.w(), HW = H * W;
    const int Cout = wt.n(), nt = static_cast<int>(taps.size());
    const int cin_g = Cin / groups, cout_g = Cout / groups, K = cin_g * nt;
    const bool need_x = n.inputs[0]->requires_grad;
    const bool need_w = n.inputs[1]->requires_grad;
    std::vector<float> cols(pointwise ? 0 : static_cast<std::size_t>(K) * HW);
    std::vector<float> dcols(pointwise || !need_x ? 0 : static_cast<std::size_t>(K) * HW);
    for (int b = 0; b < N; ++b) {
      for (int g = 0; g < groups; ++g) {
        Eigen::Map<const RowMat> dO(n.grad.plane_ptr(b, g * cout_g), cout_g, HW);
        Eigen::Map<const RowMat> Wg(wt.data() + static_cast<std::size_t>(g) * cout_g * K, cout_g, K);
        if (need_w) {
          const float* src = in.plane_ptr(b, g * cin_g);
          const float* colp = src;
          if (!pointwise) {
            im2col(src, cin_g, H, W, taps, cols.data());
            colp = cols.data();
          }
          Eigen::Map<const RowMat> C(colp, K, HW);
          Tensor& gw = n.inputs[1]->grad_buffer();
          Eigen::Map<RowMat> dW(gw.data() + static_cast<std::size_t>(g) * cout_g * K, cout_g, K);
          dW.noalias() += dO * C.transpose();
        }
        if (need_x) {
          Tensor& gx = n.inputs[0]->grad_buffer();
          if (pointwise) {
            Eigen::Map<RowMat> dX(gx.plane_ptr(b, g * cin_g), K, HW);
            dX.noalias() += Wg.transpose() * dO;
          } else {
            Eigen::Map<RowMat> dC(dcols.data(), K, HW);
            dC.noalias() = Wg.transpose() * dO;
            col2im(dcols.data(), cin_g, H, W, taps, gx.plane_ptr(b, g * cin_g));
          }
        }
      }
      if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
        Tensor& gb = n.inputs[2]->grad_buffer();
        for (int c = 0; c < Cout; ++c) {
          const float* go = n.grad.plane_ptr(b, c);
          double s = 0.0;
          for (int i = 0; i < HW; ++i) s += go[i];
          gb[c] += static_cast<float>(s);
        }
      }
    }
  });
}

// ---- reductions -------------------------------------------------------------------

Var sum_all(const Var& x) {
  double s = 0.0;
  for (float v : x.value().span()) s += v;
  return Var::make(Tensor::scalar(static_cast<float>(s)), {x}, [](Node& n) {
    Tensor& g = n.inputs[0]->grad_buffer();
    const float go = n.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go;
  });
}

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0f / static_cast<float>(x.value().size())); }

Var sum_squares(const Var& x) {
  double s = 0.0;
  for (float v : x.value().span()) s += static_cast<double>(v) * v;
  return Var::make(Tensor::scalar(static_cast<float>(s)), {x}, [](Node& n) {
    const Tensor& in = n.inputs[0]->value;
    Tensor& g = n.inputs[0]->grad_buffer();
    const float go = n.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0f * go * in[i];
  });
}

Var mean_abs_diff(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mean_abs_diff");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::fabs(static_cast<double>(av[i]) - bv[i]);
  const float inv = 1.0f / static_cast<float>(av.size());
  return Var::make(Tensor::scalar(static_cast<float>(s) * inv), {a, b}, [inv](Node& n) {
    const Tensor& av = n.inputs[0]->value;
    const Tensor& bv = n.inputs[1]->value;
    const float go = n.grad[0] * inv;
    for (int k = 0; k < 2; ++k) {
      if (!n.inputs[k]->requires_grad) continue;
      Tensor& g = n.inputs[k]->grad_buffer();
      const float sign_k = k == 0 ? 1.0f : -1.0f;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const float d = av[i] - bv[i];
        const float sg = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
        g[i] += sign_k * sg * go;
      }
    }
  });
}

Var mean_sq_diff(const Var& pred, const Tensor& target) {
  require_same_shape(pred.value(), target, "mean_sq_diff");
  const Tensor& p = pred.value();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - target[i];
    s += d * d;
  }
  const float inv = 1.0f / static_cast<float>(p.size());
  return Var::make(Tensor::scalar(static_cast<float>(s * inv)), {pred}, [target, inv](Node& n) {
    const Tensor& p = n.inputs[0]->value;
    Tensor& g = n.inputs[0]->grad_buffer();
    const float go = 2.0f * n.grad[0] * inv;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * (p[i] - target[i]);
  });
}

Var charbonnier(const Var& a, const Var& b, float eps) {
  require_same_shape(a.value(), b.value(), "charbonnier");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - bv[i];
    s += std::sqrt(d * d + static_cast<double>(eps) * eps);
  }
  const float inv = 1.0f / static_cast<float>(av.size());
  return Var::make(Tensor::scalar(static_cast<float>(s * inv)), {a, b}, [eps, inv](Node& n) {
    const Tensor& av = n.inputs[0]->value;
    const Tensor& bv = n.inputs[1]->value;
    const float go = n.grad[0] * inv;
    for (int k = 0; k < 2; ++k) {
      if (!n.inputs[k]->requires_grad) continue;
      Tensor& g = n.inputs[k]->grad_buffer();
      const float sign_k = k == 0 ? 1.0f : -1.0f;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const float d = av[i] - bv[i];
        g[i] += sign_k * go * d / std::sqrt(d * d + eps * eps);
      }
    }
  });
}

Var tv_l1(const Var& x) {
  const Tensor& in = x.value();
  const int N = in.n(), C = in.c(), H = in.h(), W = in.w();
  double s = 0.0;
  std::size_t count = 0;
  for (int b = 0; b < N; ++b)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          if (xx + 1 < W) {
            s += std::fabs(in.at(b, c, y, xx + 1) - in.at(b, c, y, xx));
            ++count;
          }
          if (y + 1 < H) {
            s += std::fabs(in.at(b, c, y + 1, xx) - in.at(b, c, y, xx));
            ++count;
          }
        }
  const float inv = count ? 1.0f / static_cast<float>(count) : 0.0f;
  return Var::make(Tensor::scalar(static_cast<float>(s) * inv), {x}, [inv](Node& n) {
    const Tensor& in = n.inputs[0]->value;
    Tensor& g = n.inputs[0]->grad_buffer();
    const float go = n.grad[0] * inv;
    auto sgn = [](float d) { return d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f); };
    for (int b = 0; b < in.n(); ++b)
      for (int c = 0; c < in.c(); ++c)
        for (int y = 0; y < in.h(); ++y)
          for (int xx = 0; xx < in.w(); ++xx) {
            if (xx + 1 < in.w()) {
              const float s = sgn(in.at(b, c, y, xx + 1) - in.at(b, c, y, xx)) * go;
              g.at(b, c, y, xx + 1) += s;
              g.at(b, c, y, xx) -= s;
            }
            if (y + 1 < in.h()) {
              const float s = sgn(in.at(b, c, y + 1, xx) - in.at(b, c, y, xx)) * go;
              g.at(b, c, y + 1, xx) += s;
              g.at(b, c, y, xx) -= s;
            }
          }
  });
}

}  // namespace stbn

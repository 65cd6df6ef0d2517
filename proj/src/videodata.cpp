#include "stbn/videodata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "stbn/binary_io.hpp"
#include "stbn/png_io.hpp"
#include "stbn/rng.hpp"

namespace stbn {

VideoSequence::VideoSequence(int t, int h, int w, int c, std::string id_)
    : id(std::move(id_)), t_(t), h_(h), w_(w), c_(c) {
  if (t < 0 || h < 0 || w < 0 || c < 0) throw std::invalid_argument("VideoSequence: negative dimension");
  data_.assign(static_cast<std::size_t>(t) * h * w * c, 0.0f);
}

void VideoSequence::validate() const {
  if (t_ < 1) throw std::invalid_argument("VideoSequence: needs at least one frame");
  if (h_ < 8 || w_ < 8) throw std::invalid_argument("VideoSequence: frames must be at least 8x8");
  if (c_ != 1 && c_ != 3) throw std::invalid_argument("VideoSequence: channels must be 1 or 3");
  for (float v : data_)
    if (!std::isfinite(v)) throw std::invalid_argument("VideoSequence: non-finite value");
}

Tensor VideoSequence::frame_tensor(int t) const {
  if (t < 0 || t >= t_) throw std::out_of_range("VideoSequence::frame_tensor");
  Tensor out(1, c_, h_, w_);
  for (int y = 0; y < h_; ++y)
    for (int x = 0; x < w_; ++x)
      for (int c = 0; c < c_; ++c) out.at(0, c, y, x) = at(t, y, x, c);
  return out;
}

void VideoSequence::set_frame(int t, const Tensor& frame, int batch_index) {
  if (frame.c() != c_ || frame.h() != h_ || frame.w() != w_)
    throw std::invalid_argument("VideoSequence::set_frame: shape mismatch " + frame.shape_string());
  for (int y = 0; y < h_; ++y)
    for (int x = 0; x < w_; ++x)
      for (int c = 0; c < c_; ++c) at(t, y, x, c) = frame.at(batch_index, c, y, x);
}

std::vector<Tensor> stack_frames(const std::vector<VideoSequence>& batch) {
  if (batch.empty()) throw std::invalid_argument("stack_frames: empty batch");
  const VideoSequence& f = batch.front();
  for (const auto& s : batch)
    if (!s.same_shape(f)) throw std::invalid_argument("stack_frames: sequences differ in shape");
  std::vector<Tensor> out;
  out.reserve(f.frames());
  const int N = static_cast<int>(batch.size());
  for (int t = 0; t < f.frames(); ++t) {
    Tensor frame(N, f.channels(), f.height(), f.width());
    for (int b = 0; b < N; ++b)
      for (int y = 0; y < f.height(); ++y)
        for (int x = 0; x < f.width(); ++x)
          for (int c = 0; c < f.channels(); ++c) frame.at(b, c, y, x) = batch[b].at(t, y, x, c);
    out.push_back(std::move(frame));
  }
  return out;
}

void NoiseModel::validate() const {
  if (kind == NoiseKind::gaussian_known_sigma && !(sigma > 0.0 && std::isfinite(sigma)))
    throw std::invalid_argument("NoiseModel: sigma must be > 0");
}

VideoSequence add_awgn(const VideoSequence& clean, const NoiseModel& model) {
  if (model.kind != NoiseKind::gaussian_known_sigma)
    throw std::invalid_argument("add_awgn: noise model must be gaussian_known_sigma");
  model.validate();
  for (float v : clean.data())
    if (!std::isfinite(v)) throw std::invalid_argument("add_awgn: non-finite input");
  VideoSequence noisy = clean;
  const CounterRng rng(model.seed, CounterRng::hash_name("awgn"));
  const double s = model.sigma_unit();
  // counter = flat (t, i, c) index, so draws are keyed by position
  auto& d = noisy.data();
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<float>(d[k] + s * rng.normal(k));
  return noisy;
}

VideoSequence crop_training_batch(const VideoSequence& seq, int length, int size, std::uint64_t seed) {
  if (length < 1 || size < 1) throw std::invalid_argument("crop_training_batch: length and size must be positive");
  if (length > seq.frames() || size > std::min(seq.height(), seq.width()))
    throw std::invalid_argument("crop_training_batch: crop larger than source");
  const CounterRng rng(seed, CounterRng::hash_name("crop"));
  const int t0 = static_cast<int>(rng.below(0, seq.frames() - length + 1));
  const int y0 = static_cast<int>(rng.below(1, seq.height() - size + 1));
  const int x0 = static_cast<int>(rng.below(2, seq.width() - size + 1));
  VideoSequence out(length, size, size, seq.channels(), seq.id);
  out.frame_rate = seq.frame_rate;
  for (int t = 0; t < length; ++t)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int c = 0; c < seq.channels(); ++c) out.at(t, y, x, c) = seq.at(t0 + t, y0 + y, x0 + x, c);
  return out;
}

namespace {

constexpr char kVideoMagic[8] = {'S', 'T', 'B', 'N', 'V', 'I', 'D', '1'};

bool has_raw_extension(const std::filesystem::path& p) { return p.extension() == ".stbnvid"; }

}  // namespace

void save_raw_container(const VideoSequence& seq, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kVideoMagic, 8);
  for (int v : {seq.frames(), seq.height(), seq.width(), seq.channels()}) write_i32(os, v);
  write_f32_array(os, seq.data());
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

VideoSequence load_raw_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kVideoMagic, 8) != 0)
    throw std::runtime_error("not an STBNVID1 container: " + path.string());
  const int T = read_i32(is), H = read_i32(is), W = read_i32(is), C = read_i32(is);
  if (T < 1 || H < 1 || W < 1 || (C != 1 && C != 3)) throw std::runtime_error("corrupt STBNVID1 header");
  VideoSequence seq(T, H, W, C, path.stem().string());
  read_f32_array(is, seq.data());
  if (!is) throw std::runtime_error("truncated STBNVID1 container: " + path.string());
  return seq;
}

VideoSequence load_sequence(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw std::runtime_error("no such file or directory: " + path.string());
  if (!fs::is_directory(path)) return load_raw_container(path);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (e.is_regular_file() && ext == ".png") files.push_back(e.path());
  }
  if (files.empty()) throw std::runtime_error("no frames found in " + path.string());
  std::sort(files.begin(), files.end());

  std::vector<Image8> images;
  images.reserve(files.size());
  for (const auto& f : files) {
    images.push_back(read_png(f));
    const Image8& a = images.front();
    const Image8& b = images.back();
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
      throw std::runtime_error("mixed frame shapes in " + path.string() + " at " + f.filename().string());
  }
  const Image8& f0 = images.front();
  VideoSequence seq(static_cast<int>(images.size()), f0.height, f0.width, f0.channels,
                    path.filename().string());
  auto& d = seq.data();
  for (std::size_t t = 0; t < images.size(); ++t)
    for (std::size_t k = 0; k < images[t].pixels.size(); ++k)
      d[t * seq.frame_size() + k] = images[t].pixels[k] / 255.0f;
  return seq;
}

void save_sequence(const VideoSequence& seq, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (has_raw_extension(path)) {
    save_raw_container(seq, path);
    return;
  }
  fs::create_directories(path);
  for (int t = 0; t < seq.frames(); ++t) {
    Image8 img{seq.width(), seq.height(), seq.channels(), {}};
    img.pixels.resize(seq.frame_size());
    for (std::size_t k = 0; k < seq.frame_size(); ++k) {
      const float v = std::clamp(seq.data()[t * seq.frame_size() + k], 0.0f, 1.0f);
      img.pixels[k] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    char name[32];
    std::snprintf(name, sizeof(name), "%04d.png", t + 1);
    write_png(path / name, img);
  }
}

VideoSequence make_toy_clip(const ToyClipOptions& o) {
  const CounterRng rng(o.seed, CounterRng::hash_name("toy"));
  struct Wave {
    double fx, fy, phase, amp[3];
  };
  struct Blob {
    double cx, cy, r, contrast[3];
  };
  std::vector<Wave> waves(6);
  std::uint64_t k = 0;
  for (auto& w : waves) {
    const double freq = 0.02 + 0.07 * rng.uniform(k++);
    const double angle = 2.0 * std::numbers::pi * rng.uniform(k++);
    w.fx = freq * std::cos(angle);
    w.fy = freq * std::sin(angle);
    w.phase = 2.0 * std::numbers::pi * rng.uniform(k++);
    for (double& a : w.amp) a = 0.04 + 0.06 * rng.uniform(k++);
  }
  std::vector<Blob> blobs(5);
  for (auto& b : blobs) {
    b.cx = o.width * rng.uniform(k++);
    b.cy = o.height * rng.uniform(k++);
    b.r = 4.0 + 0.15 * std::min(o.width, o.height) * rng.uniform(k++);
    for (double& c : b.contrast) c = (rng.uniform(k++) - 0.5) * 0.5;
  }
  VideoSequence seq(o.frames, o.height, o.width, o.channels, "toy");
  for (int t = 0; t < o.frames; ++t)
    for (int y = 0; y < o.height; ++y)
      for (int x = 0; x < o.width; ++x) {
        const double u = x - o.velocity_x * t;
        const double v = y - o.velocity_y * t;
        for (int c = 0; c < o.channels; ++c) {
          double val = 0.5;
          for (const auto& w : waves) val += w.amp[c] * std::sin(2.0 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
          for (const auto& b : blobs) {
            const double d = std::hypot(u - b.cx, v - b.cy) - b.r;
            val += b.contrast[c] / (1.0 + std::exp(d / 0.7));
          }
          seq.at(t, y, x, c) = static_cast<float>(std::clamp(val, 0.0, 1.0));
        }
      }
  return seq;
}

Tensor to_grayscale(const Tensor& frame) {
  Tensor out(frame.n(), 1, frame.h(), frame.w());
  const float inv = 1.0f / frame.c();
  for (int b = 0; b < frame.n(); ++b)
    for (int c = 0; c < frame.c(); ++c) {
      const float* s = frame.plane_ptr(b, c);
      float* d = out.plane_ptr(b, 0);
      for (std::size_t i = 0; i < frame.plane(); ++i) d[i] += inv * s[i];
    }
  return out;
}

}  // namespace stbn

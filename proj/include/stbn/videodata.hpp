#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stbn/tensor.hpp"

namespace stbn {

/// T x H x W x C frames, channel-interleaved, intensities on a [0,1] scale.
/// Noisy sequences may leave that range and are never clipped.
class VideoSequence {
 public:
  VideoSequence() = default;
  VideoSequence(int t, int h, int w, int c, std::string id = {});

  int frames() const { return t_; }
  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  std::size_t size() const { return data_.size(); }
  std::size_t frame_size() const { return static_cast<std::size_t>(h_) * w_ * c_; }

  float& at(int t, int y, int x, int c) { return data_[index(t, y, x, c)]; }
  float at(int t, int y, int x, int c) const { return data_[index(t, y, x, c)]; }
  std::size_t index(int t, int y, int x, int c) const {
    return ((static_cast<std::size_t>(t) * h_ + y) * w_ + x) * c_ + c;
  }
  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  std::string id;
  std::optional<double> frame_rate;

  /// Throws unless T>=1, H,W>=8, C in {1,3} and every value is finite.
  void validate() const;
  bool same_shape(const VideoSequence& o) const {
    return t_ == o.t_ && h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
  }

  /// Frame t as a (1, C, H, W) tensor.
  Tensor frame_tensor(int t) const;
  void set_frame(int t, const Tensor& frame, int batch_index = 0);

 private:
  int t_ = 0, h_ = 0, w_ = 0, c_ = 0;
  std::vector<float> data_;
};

/// Stacks frame t of each sequence into one (N, C, H, W) tensor.
std::vector<Tensor> stack_frames(const std::vector<VideoSequence>& batch);

enum class NoiseKind { gaussian_known_sigma, unknown };

struct NoiseModel {
  NoiseKind kind = NoiseKind::gaussian_known_sigma;
  double sigma = 25.0;  // 8-bit units; divided by 255 internally
  std::uint64_t seed = 0;

  static NoiseModel gaussian(double sigma8, std::uint64_t seed = 0) {
    return {NoiseKind::gaussian_known_sigma, sigma8, seed};
  }
  static NoiseModel unknown_noise() { return {NoiseKind::unknown, 0.0, 0}; }

  /// sigma on the internal [0,1] scale
  double sigma_unit() const { return sigma / 255.0; }
  void validate() const;
};

/// clean + N(0, (sigma/255)^2) drawn per (seed, t, pixel, channel); never clipped.
VideoSequence add_awgn(const VideoSequence& clean, const NoiseModel& model);

/// Contiguous frames and one spatial window shared by all of them.
VideoSequence crop_training_batch(const VideoSequence& seq, int length, int size, std::uint64_t seed);

/// Directory of 8-bit PNG frames (lexicographic order) or an STBNVID1 raw container.
VideoSequence load_sequence(const std::filesystem::path& path);

/// Paths ending in ".stbnvid" get the lossless raw container; anything else becomes a
/// directory of 8-bit PNG frames 0001.png... (values clipped to [0,1] and rounded).
void save_sequence(const VideoSequence& seq, const std::filesystem::path& path);

void save_raw_container(const VideoSequence& seq, const std::filesystem::path& path);
VideoSequence load_raw_container(const std::filesystem::path& path);

struct ToyClipOptions {
  int frames = 5;
  int height = 64;
  int width = 64;
  int channels = 1;
  double velocity_x = 1.0;  // pixels per frame
  double velocity_y = 0.5;
  std::uint64_t seed = 7;
};

/// Smooth band-limited texture with a few soft-edged shapes, translating at constant velocity.
VideoSequence make_toy_clip(const ToyClipOptions& options);

/// Channel mean, (1, 1, H, W).
Tensor to_grayscale(const Tensor& frame);

}  // namespace stbn

#include "stbn/ablation.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

#include "stbn/eval.hpp"
#include "stbn/metrics.hpp"

namespace stbn {

std::vector<AblationVariant> ablation_ladder() {
  return {{"baseline", {false, false, false}},
          {"+BSA", {true, false, false}},
          {"+SRFE", {true, true, false}},
          {"+flow_refine", {true, true, true}}};
}

namespace {

struct ToyPair {
  VideoSequence clean;
  VideoSequence noisy;
};

ToyPair make_pair(const ToyClipOptions& base, double sigma, std::uint64_t seed, std::uint64_t stream) {
  const CounterRng rng(seed, stream);
  ToyClipOptions o = base;
  o.seed = rng.bits(0);
  o.velocity_x = 3.0 * rng.uniform(1) - 1.5;
  o.velocity_y = 3.0 * rng.uniform(2) - 1.5;
  ToyPair p;
  p.clean = make_toy_clip(o);
  p.noisy = add_awgn(p.clean, NoiseModel::gaussian(sigma, rng.bits(3)));
  return p;
}

double mean_ssim(const VideoSequence& a, const VideoSequence& b) {
  double s = 0;
  for (int t = 0; t < a.frames(); ++t) s += ssim(a.frame_tensor(t), b.frame_tensor(t));
  return s / a.frames();
}

}  // namespace

AblationReport run_ablation(const AblationOptions& options, std::ostream* log) {
  if (options.seeds.empty()) throw std::invalid_argument("run_ablation: no seeds");
  if (options.train_clips < 1 || options.eval_clips < 1) throw std::invalid_argument("run_ablation: need clips");
  AblationReport report;
  report.seeds = options.seeds;
  for (const auto& v : ablation_ladder()) report.rows.push_back({v, {}, {}, 0.0, 0.0});

  const NoiseModel noise = NoiseModel::gaussian(options.sigma);
  double noisy_sum = 0;
  int noisy_count = 0;
  for (std::uint64_t seed : options.seeds) {
    std::vector<VideoSequence> train_noisy;
    for (int k = 0; k < options.train_clips; ++k)
      train_noisy.push_back(make_pair(options.clip, options.sigma, seed, CounterRng::hash_name("train") + k).noisy);
    std::vector<ToyPair> held_out;
    for (int k = 0; k < options.eval_clips; ++k) {
      held_out.push_back(make_pair(options.clip, options.sigma, seed, CounterRng::hash_name("held_out") + k));
      noisy_sum += psnr(held_out.back().noisy, held_out.back().clean);
      ++noisy_count;
    }
    for (auto& row : report.rows) {
      ModelConfig model = options.preset.model;
      model.seed = seed;
      TrainConfig train = options.preset.train;
      train.seed = seed;
      train.toggles = row.variant.toggles;
      const TrainResult r = stbn::train(train_noisy, noise, model, train);
      double p = 0, s = 0;
      for (const auto& h : held_out) {
        const VideoSequence den = denoise(h.noisy, *r.model, noise);
        p += psnr(den, h.clean);
        s += mean_ssim(den, h.clean);
      }
      row.psnr.push_back(p / held_out.size());
      row.ssim.push_back(s / held_out.size());
      if (log) *log << "seed " << seed << ' ' << row.variant.name << " psnr " << row.psnr.back() << std::endl;
    }
  }
  for (auto& row : report.rows) {
    for (std::size_t i = 0; i < row.psnr.size(); ++i) {
      row.mean_psnr += row.psnr[i] / row.psnr.size();
      row.mean_ssim += row.ssim[i] / row.ssim.size();
    }
  }
  report.noisy_psnr = noisy_sum / noisy_count;
  return report;
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"name", r.variant.name},
                         {"bsa", r.variant.toggles.bsa},
                         {"srfe", r.variant.toggles.srfe},
                         {"flow_refine", r.variant.toggles.flow_refine},
                         {"psnr", r.psnr},
                         {"ssim", r.ssim},
                         {"mean_psnr", r.mean_psnr},
                         {"mean_ssim", r.mean_ssim}});
  return {{"rows", rows_json}, {"noisy_psnr", noisy_psnr}, {"seeds", seeds}};
}

std::string AblationReport::table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %4s %5s %12s %10s %8s\n", "variant", "BSA", "SRFE", "flow_refine",
                "PSNR(dB)", "SSIM");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-14s %4s %5s %12s %10.3f %8.4f\n", r.variant.name.c_str(),
                  r.variant.toggles.bsa ? "x" : "", r.variant.toggles.srfe ? "x" : "",
                  r.variant.toggles.flow_refine ? "x" : "", r.mean_psnr, r.mean_ssim);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-14s %4s %5s %12s %10.3f\n", "noisy input", "", "", "", noisy_psnr);
  out << line;
  return out.str();
}

}  // namespace stbn

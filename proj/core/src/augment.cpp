#include "emgssi/augment.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace emgssi::augment {

void validate(const AugmentConfig& c) {
  if (c.max_shift_samples < 0) throw std::invalid_argument("max_shift_samples must be >= 0");
  if (c.sigma_mv < 0.0) throw std::invalid_argument("sigma must be >= 0");
  if (c.scale_range[0] > c.scale_range[1]) throw std::invalid_argument("scale range inverted");
  if (c.offset_range_mv[0] > c.offset_range_mv[1]) {
    throw std::invalid_argument("offset range inverted");
  }
  if (!(c.apply_probability >= 0.0 && c.apply_probability <= 1.0)) {
    throw std::invalid_argument("apply_probability must lie in [0, 1]");
  }
}

synth::EmgSegment time_shift(const synth::EmgSegment& segment, int shift, int max_shift_samples) {
  if (std::abs(shift) > max_shift_samples) {
    throw std::invalid_argument("shift " + std::to_string(shift) + " exceeds bound " +
                                std::to_string(max_shift_samples));
  }
  synth::EmgSegment out = segment;
  const auto n = static_cast<long>(segment.data.samples());
  for (std::size_t c = 0; c < segment.data.channels(); ++c) {
    const auto src = segment.data.row(c);
    auto dst = out.data.row(c);
    for (long t = 0; t < n; ++t) {
      const long from = t - shift;
      dst[static_cast<std::size_t>(t)] =
          (from >= 0 && from < n) ? src[static_cast<std::size_t>(from)] : 0.0f;
    }
  }
  return out;
}

synth::EmgSegment inject_noise(const synth::EmgSegment& segment, const AugmentConfig& config,
                               synth::Rng& rng) {
  validate(config);
  synth::EmgSegment out = segment;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t c = 0; c < out.data.channels(); ++c) {
    auto row = out.data.row(c);
    double sigma = config.sigma_mv;
    if (config.noise_mode == NoiseMode::target_snr) {
      double power = 0.0;
      for (float v : row) power += static_cast<double>(v) * v;
      power /= static_cast<double>(row.size());
      sigma = power > 0.0 ? std::sqrt(power * std::pow(10.0, -config.target_snr_db / 10.0)) : 0.0;
    }
    for (float& v : row) {
      const double g = gauss(rng);
      v = static_cast<float>(v + sigma * g);
    }
  }
  return out;
}

synth::EmgSegment scale_offset(const synth::EmgSegment& segment, double scale, double offset_mv,
                               const AugmentConfig& config) {
  // Small slack so endpoints survive float round-trips.
  constexpr double slack = 1e-9;
  if (scale < config.scale_range[0] - slack || scale > config.scale_range[1] + slack) {
    throw std::invalid_argument("scale " + std::to_string(scale) + " outside configured range");
  }
  if (offset_mv < config.offset_range_mv[0] - slack ||
      offset_mv > config.offset_range_mv[1] + slack) {
    throw std::invalid_argument("offset " + std::to_string(offset_mv) +
                                " mV outside configured range");
  }
  synth::EmgSegment out = segment;
  for (float& v : out.data.values()) v = static_cast<float>(scale * v + offset_mv);
  return out;
}

std::vector<synth::EmgSegment> augment_batch(std::vector<synth::EmgSegment> segments,
                                             const AugmentConfig& config, synth::Rng& rng,
                                             AugmentCounts* counts) {
  validate(config);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> shift_dist(-config.max_shift_samples,
                                                config.max_shift_samples);
  std::uniform_real_distribution<double> scale_dist(config.scale_range[0], config.scale_range[1]);
  std::uniform_real_distribution<double> offset_dist(config.offset_range_mv[0],
                                                     config.offset_range_mv[1]);
  AugmentCounts local;
  for (synth::EmgSegment& s : segments) {
    const bool do_shift = coin(rng) < config.apply_probability;
    const bool do_noise = coin(rng) < config.apply_probability;
    const bool do_scale = coin(rng) < config.apply_probability;
    const int shift = shift_dist(rng);
    const double scale = scale_dist(rng);
    const double offset = offset_dist(rng);
    synth::Rng noise_rng(rng());

    if (do_shift) {
      s = time_shift(s, shift, config.max_shift_samples);
      ++local.shifted;
    }
    if (do_noise) {
      s = inject_noise(s, config, noise_rng);
      ++local.noised;
    }
    if (do_scale) {
      s = scale_offset(s, scale, offset, config);
      ++local.scaled;
    }
  }
  if (counts) *counts = local;
  return segments;
}

}  // namespace emgssi::augment

#pragma once

#include "emgssi/synth.hpp"

#include <array>
#include <vector>

namespace emgssi::augment {

enum class NoiseMode { fixed_sigma, target_snr };

struct AugmentConfig {
  int max_shift_samples = 100;
  NoiseMode noise_mode = NoiseMode::fixed_sigma;
  double sigma_mv = 0.02;
  double target_snr_db = 30.0;
  std::array<double, 2> scale_range{0.9, 1.1};
  std::array<double, 2> offset_range_mv{-0.1, 0.1};
  double apply_probability = 0.5;
};

// Throws std::invalid_argument when ranges are inverted, sigma < 0 or the
// probability is outside [0, 1].
void validate(const AugmentConfig& config);

// Same shift on every channel; vacated samples are zero.
synth::EmgSegment time_shift(const synth::EmgSegment& segment, int shift,
                             int max_shift_samples = 100);

// target_snr scales per-channel noise to the channel's mean power; channels
// with zero power are left untouched in that mode.
synth::EmgSegment inject_noise(const synth::EmgSegment& segment, const AugmentConfig& config,
                               synth::Rng& rng);

synth::EmgSegment scale_offset(const synth::EmgSegment& segment, double scale, double offset_mv,
                               const AugmentConfig& config = {});

struct AugmentCounts {
  std::size_t shifted = 0;
  std::size_t noised = 0;
  std::size_t scaled = 0;
};

// Each transform fires independently with apply_probability. The rng is
// consumed identically whether or not a transform fires.
std::vector<synth::EmgSegment> augment_batch(std::vector<synth::EmgSegment> segments,
                                             const AugmentConfig& config, synth::Rng& rng,
                                             AugmentCounts* counts = nullptr);

}  // namespace emgssi::augment

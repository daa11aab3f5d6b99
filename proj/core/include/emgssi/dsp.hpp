#pragma once

#include "emgssi/signal.hpp"

#include <complex>
#include <span>
#include <stdexcept>
#include <vector>

namespace emgssi::dsp {

class DesignError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct FilterSpec {
  int prototype_order = 4;
  double low_hz = 20.0;
  double high_hz = 450.0;
  double fs_hz = kSampleRateHz;
};

// One second-order section, a0 normalized to 1:
//   H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

struct BiquadCascade {
  std::vector<Biquad> sections;
  double overall_gain = 1.0;

  // Transfer function on the unit circle at frequency f (Hz).
  std::complex<double> response(double f_hz, double fs_hz) const;
  // Pole radius must be < 1 for every section.
  bool is_stable() const;
};

enum class FilterMode { causal, zero_phase };

// Butterworth bandpass: analog prototype of `prototype_order` poles, lowpass to
// bandpass transform at prewarped corners, bilinear transform. Produces
// prototype_order biquads (2 * prototype_order poles), unity gain at the
// prewarped geometric centre.
BiquadCascade design_bandpass(const FilterSpec& spec);

// Direct-form II transposed, zero initial state. zero_phase runs forward then
// backward. Throws std::invalid_argument on non-finite input.
std::vector<double> apply_iir(const BiquadCascade& cascade, std::span<const double> signal,
                              FilterMode mode);
std::vector<float> apply_iir(const BiquadCascade& cascade, std::span<const float> signal,
                             FilterMode mode);

// Filters every channel independently.
ChannelMatrix apply_iir(const BiquadCascade& cascade, const ChannelMatrix& signal,
                        FilterMode mode);

// Non-overlapping windows of window_s * fs_hz samples; the trailing remainder
// is dropped. Throws std::length_error if not even one window fits.
std::vector<ChannelMatrix> segment_stream(const ChannelMatrix& samples, double fs_hz,
                                          double window_s = 3.0);

struct Scalogram {
  std::vector<double> magnitudes;  // row-major [freqs x times]
  std::vector<double> freqs_hz;
  std::vector<double> times_s;

  std::size_t n_freqs() const { return freqs_hz.size(); }
  std::size_t n_times() const { return times_s.size(); }
  double at(std::size_t f, std::size_t t) const { return magnitudes[f * times_s.size() + t]; }
};

inline constexpr double kMorletOmega0 = 6.0;

// n log-spaced frequencies between lo and hi inclusive.
std::vector<double> log_spaced(double lo_hz, double hi_hz, std::size_t n);

// Morlet CWT magnitude, one row per requested frequency. Scale for frequency f
// is omega0 / (2 pi f). Normalized so a unit-amplitude sinusoid at a row's
// centre frequency has magnitude ~1 away from the edges.
Scalogram cwt_scalogram(std::span<const double> signal, double fs_hz,
                        std::span<const double> freqs_hz, double omega0 = kMorletOmega0);

// Fraction of one-sided periodogram power at frequencies strictly below
// split_hz. Zero signal gives 0.
double band_power_ratio(std::span<const double> signal, double fs_hz, double split_hz = 20.0);
double band_power_ratio(std::span<const float> signal, double fs_hz, double split_hz = 20.0);

// One-sided periodogram |X_k|^2 for k = 0..n/2.
std::vector<double> periodogram(std::span<const double> signal);

}  // namespace emgssi::dsp

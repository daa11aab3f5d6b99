#pragma once

#include "emgssi/signal.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace emgssi::synth {

using Rng = std::mt19937_64;
using Coupling = std::array<float, kChannels>;

enum class SplitTag : std::uint8_t { unassigned = 0, train = 1, test = 2 };

struct EmgSegment {
  ChannelMatrix data{kChannels, kSegmentLength};  // mV
  int label = 1;                                  // class id 1..10
  Coupling coupling{1.0f, 1.0f, 1.0f, 1.0f};
  SplitTag split = SplitTag::unassigned;

  bool operator==(const EmgSegment&) const = default;
};

// Throws std::invalid_argument if shape, label or samples are invalid.
void validate(const EmgSegment& segment);

struct Burst {
  double center_s = 0.0;
  double width_s = 0.1;
  double amplitude_mv = 1.0;
  bool operator==(const Burst&) const = default;
};

struct ClassTemplate {
  int class_id = 1;
  std::string word;
  std::array<std::vector<Burst>, kChannels> envelopes;
  bool operator==(const ClassTemplate&) const = default;

  // Activation envelope of channel c at time t (seconds).
  double envelope(std::size_t c, double t_s) const;
};

// Class identity is factorized over channels so that no single channel
// identifies the word: channel 1 carries one of 3 patterns, channel 2 one of
// 2, and channels 3 and 4 both carry a binary pattern. The (p1, p2) pair
// picks one of 5 groups and the binary pattern splits each group in two.
struct PatternCode {
  int ch1 = 0;  // 0..2
  int ch2 = 0;  // 0..1
  int ch34 = 0; // 0..1
};
PatternCode pattern_code(int class_id);

// Deterministic in (class_id, master_seed). Each (channel, pattern) owns 2-5
// bursts drawn from its own seeded generator. Throws std::out_of_range for
// ids outside 1..10.
ClassTemplate make_class_template(int class_id, std::uint64_t master_seed);

// data[c] = coupling[c] * E_c + (1 - coupling[c]) * A * (drift + sines) + noise,
// where E_c is unit-RMS Gaussian noise bandlimited to 20-400 Hz modulated by
// the template envelope, drift is a unit-RMS random walk and sines are three
// components drawn from 0.5-10 Hz. The number of draws from rng does not
// depend on the parameters.
EmgSegment synth_segment(const ClassTemplate& tmpl, const Coupling& coupling,
                         double artefact_amplitude_mv, double sensor_noise_mv, Rng& rng);

struct SynthConfig {
  int n_per_class = 100;
  Coupling coupling{1.0f, 1.0f, 0.7f, 0.7f};
  double artefact_amplitude_mv = 0.5;
  double sensor_noise_mv = 0.01;
  std::uint64_t seed = 1;
  std::uint64_t template_seed = 0;
};

struct Dataset {
  std::vector<EmgSegment> segments;

  std::size_t count(SplitTag tag) const;
  std::vector<const EmgSegment*> select(SplitTag tag) const;
  bool operator==(const Dataset&) const = default;
};

// Mixes (seed, a, b) into an independent generator seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Segments ordered by class then repetition; each (class, index) has its own
// derived generator.
Dataset synth_dataset(const SynthConfig& config);

// Stratified per class; round(n * fraction) clamped to [1, n-1] go to train.
// Throws std::invalid_argument if a class has fewer than 2 segments.
Dataset split_dataset(Dataset dataset, double train_fraction, std::uint64_t seed);

// The "EMGD" container. Little-endian throughout.
class DatasetFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint16_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const std::string& path, const Dataset& dataset);
Dataset read_dataset(const std::string& path);

}  // namespace emgssi::synth

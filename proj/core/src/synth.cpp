#include "emgssi/synth.hpp"

#include "emgssi/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace emgssi::synth {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::array<int, kChannels> kPatternsPerChannel = {3, 2, 2, 2};

// Groups in (ch1, ch2) pattern space; five of the six combinations are used.
constexpr std::array<std::array<int, 2>, 5> kGroups = {{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}}};

std::vector<Burst> draw_bursts(std::uint64_t master_seed, std::size_t channel, int pattern) {
  Rng rng(derive_seed(master_seed, 1000 + channel, static_cast<std::uint64_t>(pattern)));
  std::uniform_int_distribution<int> count(2, 5);
  std::uniform_real_distribution<double> center(0.3, 2.7);
  std::uniform_real_distribution<double> width(0.04, 0.15);
  std::uniform_real_distribution<double> amplitude(0.5, 1.0);
  std::vector<Burst> bursts(static_cast<std::size_t>(count(rng)));
  for (Burst& b : bursts) {
    b.center_s = center(rng);
    b.width_s = width(rng);
    b.amplitude_mv = amplitude(rng);
  }
  std::sort(bursts.begin(), bursts.end(),
            [](const Burst& a, const Burst& b) { return a.center_s < b.center_s; });
  return bursts;
}

const dsp::BiquadCascade& carrier_filter() {
  static const dsp::BiquadCascade cascade =
      dsp::design_bandpass({4, 20.0, 400.0, kSampleRateHz});
  return cascade;
}

void normalize_rms(std::vector<double>& x) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(x.size()));
  if (rms > 0.0) {
    for (double& v : x) v /= rms;
  }
}

}  // namespace

void validate(const EmgSegment& segment) {
  if (segment.data.channels() != kChannels || segment.data.samples() != kSegmentLength) {
    throw std::invalid_argument("segment must be 4 x 3000");
  }
  if (segment.label < 1 || segment.label > static_cast<int>(kNumClasses)) {
    throw std::invalid_argument("segment label " + std::to_string(segment.label) +
                                " outside 1..10");
  }
  for (float v : segment.data.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("segment contains non-finite samples");
  }
}

double ClassTemplate::envelope(std::size_t c, double t_s) const {
  double e = 0.0;
  for (const Burst& b : envelopes[c]) {
    const double d = (t_s - b.center_s) / b.width_s;
    e += b.amplitude_mv * std::exp(-0.5 * d * d);
  }
  return e;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0x9E3779B97F4A7C15ull));
}

PatternCode pattern_code(int class_id) {
  if (class_id < 1 || class_id > static_cast<int>(kNumClasses)) {
    throw std::out_of_range("class id " + std::to_string(class_id) + " outside 1..10");
  }
  const int k = class_id - 1;
  const auto& g = kGroups[static_cast<std::size_t>(k / 2)];
  return {g[0], g[1], k % 2};
}

ClassTemplate make_class_template(int class_id, std::uint64_t master_seed) {
  const PatternCode code = pattern_code(class_id);
  const std::array<int, kChannels> patterns = {code.ch1, code.ch2, code.ch34, code.ch34};
  ClassTemplate t;
  t.class_id = class_id;
  t.word = std::string(word_for(class_id));
  for (std::size_t c = 0; c < kChannels; ++c) {
    t.envelopes[c] = draw_bursts(master_seed, c, patterns[c]);
  }
  return t;
}

EmgSegment synth_segment(const ClassTemplate& tmpl, const Coupling& coupling,
                         double artefact_amplitude_mv, double sensor_noise_mv, Rng& rng) {
  for (float c : coupling) {
    if (!(c >= 0.0f && c <= 1.0f)) throw std::invalid_argument("coupling must lie in [0, 1]");
  }
  if (artefact_amplitude_mv < 0.0 || sensor_noise_mv < 0.0) {
    throw std::invalid_argument("amplitudes must be non-negative");
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> sine_freq(0.5, 10.0);
  std::uniform_real_distribution<double> sine_amp(0.3, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);

  const std::size_t n = kSegmentLength;
  const double dt = 1.0 / kSampleRateHz;
  EmgSegment seg;
  seg.label = tmpl.class_id;
  seg.coupling = coupling;

  for (std::size_t c = 0; c < kChannels; ++c) {
    std::vector<double> carrier(n);
    for (double& v : carrier) v = gauss(rng);
    carrier = dsp::apply_iir(carrier_filter(), carrier, dsp::FilterMode::zero_phase);
    normalize_rms(carrier);

    std::vector<double> drift(n);
    double walk = 0.0;
    for (double& v : drift) {
      walk += gauss(rng);
      v = walk;
    }
    normalize_rms(drift);

    std::array<double, 3> f{}, a{}, ph{};
    for (std::size_t k = 0; k < 3; ++k) {
      f[k] = sine_freq(rng);
      a[k] = sine_amp(rng);
      ph[k] = phase(rng);
    }

    const double cp = coupling[c];
    const double art = (1.0 - cp) * artefact_amplitude_mv;
    auto row = seg.data.row(c);
    for (std::size_t t = 0; t < n; ++t) {
      const double ts = static_cast<double>(t) * dt;
      double sines = 0.0;
      for (std::size_t k = 0; k < 3; ++k) sines += a[k] * std::sin(2.0 * kPi * f[k] * ts + ph[k]);
      const double emg = tmpl.envelope(c, ts) * carrier[t];
      const double noise = gauss(rng);
      row[t] = static_cast<float>(cp * emg + art * (drift[t] + sines) + sensor_noise_mv * noise);
    }
  }
  return seg;
}

std::size_t Dataset::count(SplitTag tag) const {
  return static_cast<std::size_t>(std::count_if(
      segments.begin(), segments.end(), [tag](const EmgSegment& s) { return s.split == tag; }));
}

std::vector<const EmgSegment*> Dataset::select(SplitTag tag) const {
  std::vector<const EmgSegment*> out;
  for (const EmgSegment& s : segments) {
    if (s.split == tag) out.push_back(&s);
  }
  return out;
}

Dataset synth_dataset(const SynthConfig& config) {
  if (config.n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
  Dataset out;
  out.segments.reserve(kNumClasses * static_cast<std::size_t>(config.n_per_class));
  for (int id = 1; id <= static_cast<int>(kNumClasses); ++id) {
    const ClassTemplate tmpl = make_class_template(id, config.template_seed);
    for (int i = 0; i < config.n_per_class; ++i) {
      Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(id),
                          static_cast<std::uint64_t>(i)));
      out.segments.push_back(synth_segment(tmpl, config.coupling, config.artefact_amplitude_mv,
                                           config.sensor_noise_mv, rng));
    }
  }
  return out;
}

Dataset split_dataset(Dataset dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  }
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < dataset.segments.size(); ++i) {
    validate(dataset.segments[i]);
    by_class[static_cast<std::size_t>(dataset.segments[i].label - 1)].push_back(i);
  }
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    auto& idx = by_class[k];
    if (idx.empty()) continue;
    if (idx.size() < 2) {
      throw std::invalid_argument("class " + std::to_string(k + 1) +
                                  " has fewer than 2 segments; cannot stratify");
    }
    Rng rng(derive_seed(seed, 77, k));
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      dataset.segments[idx[j]].split = j < n_train ? SplitTag::train : SplitTag::test;
    }
  }
  return dataset;
}

}  // namespace emgssi::synth

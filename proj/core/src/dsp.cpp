#include "emgssi/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

namespace emgssi::dsp {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// FFTW planner calls are not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void validate(const FilterSpec& spec) {
  if (spec.prototype_order < 1) {
    throw DesignError("prototype_order must be >= 1, got " +
                      std::to_string(spec.prototype_order));
  }
  if (!(spec.fs_hz > 0.0) || !std::isfinite(spec.fs_hz)) {
    throw DesignError("sampling rate must be positive and finite");
  }
  const double nyquist = spec.fs_hz / 2.0;
  if (!(spec.low_hz > 0.0)) throw DesignError("low corner must be > 0 Hz");
  if (!(spec.high_hz > spec.low_hz)) throw DesignError("high corner must exceed low corner");
  if (!(spec.high_hz < nyquist)) {
    throw DesignError("high corner " + std::to_string(spec.high_hz) +
                      " Hz is at or above Nyquist " + std::to_string(nyquist) + " Hz");
  }
}

template <typename Sample>
void check_finite(std::span<const Sample> x) {
  for (Sample v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("apply_iir: non-finite sample in input");
  }
}

void run_cascade(const BiquadCascade& cascade, std::vector<double>& x) {
  for (const Biquad& s : cascade.sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  for (double& v : x) v *= cascade.overall_gain;
}

std::vector<double> filter_double(const BiquadCascade& cascade, std::vector<double> x,
                                  FilterMode mode) {
  run_cascade(cascade, x);
  if (mode == FilterMode::zero_phase) {
    std::reverse(x.begin(), x.end());
    run_cascade(cascade, x);
    std::reverse(x.begin(), x.end());
  }
  return x;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

}  // namespace

std::complex<double> BiquadCascade::response(double f_hz, double fs_hz) const {
  const cplx zinv = std::polar(1.0, -2.0 * kPi * f_hz / fs_hz);
  cplx h = overall_gain;
  for (const Biquad& s : sections) {
    const cplx num = s.b0 + zinv * (s.b1 + zinv * s.b2);
    const cplx den = 1.0 + zinv * (s.a1 + zinv * s.a2);
    h *= num / den;
  }
  return h;
}

bool BiquadCascade::is_stable() const {
  for (const Biquad& s : sections) {
    // Roots of z^2 + a1 z + a2.
    const cplx disc = std::sqrt(cplx(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
    const cplx r1 = (-s.a1 + disc) / 2.0;
    const cplx r2 = (-s.a1 - disc) / 2.0;
    if (std::abs(r1) >= 1.0 || std::abs(r2) >= 1.0) return false;
  }
  return true;
}

BiquadCascade design_bandpass(const FilterSpec& spec) {
  validate(spec);
  const int n = spec.prototype_order;
  const double fs2 = 2.0 * spec.fs_hz;
  const double w_lo = fs2 * std::tan(kPi * spec.low_hz / spec.fs_hz);
  const double w_hi = fs2 * std::tan(kPi * spec.high_hz / spec.fs_hz);
  const double bw = w_hi - w_lo;
  const double w0_sq = w_lo * w_hi;

  std::vector<cplx> upper;
  std::vector<double> real_poles;
  for (int k = 1; k <= n; ++k) {
    const cplx p = std::polar(1.0, kPi * (2.0 * k + n - 1.0) / (2.0 * n));
    const cplx half = p * bw / 2.0;
    const cplx root = std::sqrt(half * half - w0_sq);
    for (const cplx s : {half + root, half - root}) {
      const cplx z = (fs2 + s) / (fs2 - s);
      const double tol = 1e-12 * std::max(1.0, std::abs(z));
      if (z.imag() > tol) {
        upper.push_back(z);
      } else if (std::abs(z.imag()) <= tol) {
        real_poles.push_back(z.real());
      }
    }
  }
  std::sort(real_poles.begin(), real_poles.end());
  if (real_poles.size() % 2 != 0 ||
      upper.size() + real_poles.size() / 2 != static_cast<std::size_t>(n)) {
    throw DesignError("pole pairing failed");
  }

  BiquadCascade out;
  for (const cplx z : upper) {
    out.sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  }
  for (std::size_t i = 0; i < real_poles.size(); i += 2) {
    const double r1 = real_poles[i], r2 = real_poles[i + 1];
    out.sections.push_back({1.0, 0.0, -1.0, -(r1 + r2), r1 * r2});
  }
  // Poles nearest the unit circle last.
  std::sort(out.sections.begin(), out.sections.end(),
            [](const Biquad& a, const Biquad& b) { return a.a2 < b.a2; });

  const double f_centre = spec.fs_hz / kPi * std::atan(std::sqrt(w0_sq) / fs2);
  out.overall_gain = 1.0 / std::abs(out.response(f_centre, spec.fs_hz));
  return out;
}

std::vector<double> apply_iir(const BiquadCascade& cascade, std::span<const double> signal,
                              FilterMode mode) {
  check_finite(signal);
  return filter_double(cascade, std::vector<double>(signal.begin(), signal.end()), mode);
}

std::vector<float> apply_iir(const BiquadCascade& cascade, std::span<const float> signal,
                             FilterMode mode) {
  check_finite(signal);
  const auto y = filter_double(cascade, std::vector<double>(signal.begin(), signal.end()), mode);
  std::vector<float> out(y.size());
  std::transform(y.begin(), y.end(), out.begin(), [](double v) { return static_cast<float>(v); });
  return out;
}

ChannelMatrix apply_iir(const BiquadCascade& cascade, const ChannelMatrix& signal,
                        FilterMode mode) {
  ChannelMatrix out(signal.channels(), signal.samples());
  for (std::size_t c = 0; c < signal.channels(); ++c) {
    const auto y = apply_iir(cascade, signal.row(c), mode);
    std::copy(y.begin(), y.end(), out.row(c).begin());
  }
  return out;
}

std::vector<ChannelMatrix> segment_stream(const ChannelMatrix& samples, double fs_hz,
                                          double window_s) {
  const auto window = static_cast<std::size_t>(std::llround(window_s * fs_hz));
  if (window == 0) throw std::invalid_argument("segment_stream: window length is zero");
  if (samples.samples() < window) {
    throw std::length_error("segment_stream: " + std::to_string(samples.samples()) +
                            " samples is shorter than one " + std::to_string(window) +
                            "-sample window");
  }
  const std::size_t count = samples.samples() / window;
  std::vector<ChannelMatrix> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    ChannelMatrix seg(samples.channels(), window);
    for (std::size_t c = 0; c < samples.channels(); ++c) {
      const auto src = samples.row(c).subspan(w * window, window);
      std::copy(src.begin(), src.end(), seg.row(c).begin());
    }
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<double> log_spaced(double lo_hz, double hi_hz, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {lo_hz};
  std::vector<double> f(n);
  const double a = std::log(lo_hz), b = std::log(hi_hz);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return f;
}

Scalogram cwt_scalogram(std::span<const double> signal, double fs_hz,
                        std::span<const double> freqs_hz, double omega0) {
  if (freqs_hz.empty()) throw std::invalid_argument("cwt_scalogram: empty frequency list");
  for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
    if (!(freqs_hz[i] > 0.0) || !(freqs_hz[i] < fs_hz / 2.0)) {
      throw std::invalid_argument("cwt_scalogram: frequencies must lie in (0, fs/2)");
    }
    if (i > 0 && !(freqs_hz[i] > freqs_hz[i - 1])) {
      throw std::invalid_argument("cwt_scalogram: frequencies must be strictly increasing");
    }
  }
  const std::size_t n = signal.size();
  const double dt = 1.0 / fs_hz;

  Scalogram out;
  out.freqs_hz.assign(freqs_hz.begin(), freqs_hz.end());
  out.times_s.resize(n);
  for (std::size_t t = 0; t < n; ++t) out.times_s[t] = static_cast<double>(t) * dt;
  out.magnitudes.assign(freqs_hz.size() * n, 0.0);
  if (n == 0) return out;

  // Zero padding past the widest wavelet support keeps the circular
  // convolution equal to the linear one.
  const double s_max = omega0 / (2.0 * kPi * freqs_hz.front());
  const auto half_support = static_cast<std::size_t>(std::ceil(6.0 * s_max / dt));
  const std::size_t m = next_pow2(n + 2 * half_support);

  std::vector<double> padded(m, 0.0);
  std::copy(signal.begin(), signal.end(), padded.begin());
  auto* spectrum = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (m / 2 + 1)));
  auto* work = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * m));
  fftw_plan forward, inverse;
  {
    std::lock_guard lock(planner_mutex());
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(m), padded.data(), spectrum, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_1d(static_cast<int>(m), work, work, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  fftw_execute(forward);

  for (std::size_t fi = 0; fi < freqs_hz.size(); ++fi) {
    const double scale = omega0 / (2.0 * kPi * freqs_hz[fi]);
    for (std::size_t k = 0; k < m; ++k) {
      work[k][0] = 0.0;
      work[k][1] = 0.0;
    }
    for (std::size_t k = 0; k <= m / 2; ++k) {
      const double omega = 2.0 * kPi * static_cast<double>(k) / (static_cast<double>(m) * dt);
      const double d = scale * omega - omega0;
      const double psi = 2.0 * std::exp(-0.5 * d * d);
      work[k][0] = spectrum[k][0] * psi;
      work[k][1] = spectrum[k][1] * psi;
    }
    fftw_execute(inverse);
    double* row = out.magnitudes.data() + fi * n;
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t t = 0; t < n; ++t) {
      row[t] = std::hypot(work[t][0], work[t][1]) * inv_m;
    }
  }

  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
  }
  fftw_free(spectrum);
  fftw_free(work);
  return out;
}

std::vector<double> periodogram(std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n == 0) return {};
  std::vector<double> in(signal.begin(), signal.end());
  auto* spec = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), spec, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::vector<double> p(n / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(spec);
  return p;
}

double band_power_ratio(std::span<const double> signal, double fs_hz, double split_hz) {
  if (signal.size() < 256) {
    throw std::invalid_argument("band_power_ratio: need at least 256 samples");
  }
  const std::size_t n = signal.size();
  const auto p = periodogram(signal);
  double below = 0.0, total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    // One-sided weighting: interior bins stand for +/- frequency pairs.
    const bool edge = (k == 0) || (n % 2 == 0 && k == n / 2);
    const double w = edge ? p[k] : 2.0 * p[k];
    total += w;
    if (static_cast<double>(k) * fs_hz / static_cast<double>(n) < split_hz) below += w;
  }
  if (total <= 0.0) return 0.0;
  return below / total;
}

double band_power_ratio(std::span<const float> signal, double fs_hz, double split_hz) {
  const std::vector<double> d(signal.begin(), signal.end());
  return band_power_ratio(std::span<const double>(d), fs_hz, split_hz);
}

}  // namespace emgssi::dsp

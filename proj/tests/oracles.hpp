#pragma once

// Independent reference implementations used by the tests. Nothing here calls
// into the library; each routine is the slow, obvious version of a quantity
// the library computes another way.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace oracle {

using cd = std::complex<double>;
inline constexpr double kPi = std::numbers::pi;

// Polynomial in z^-1 from its roots (monic), coefficients c[0] + c[1] z^-1 + ...
inline std::vector<cd> poly_from_roots(const std::vector<cd>& roots) {
  std::vector<cd> c{1.0};
  for (const cd& r : roots) {
    std::vector<cd> next(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= r * c[i];
    }
    c = std::move(next);
  }
  return c;
}

struct TransferFunction {
  std::vector<double> b, a;  // in powers of z^-1
};

inline cd eval_tf(const TransferFunction& tf, double f_hz, double fs_hz) {
  const cd zinv = std::polar(1.0, -2.0 * kPi * f_hz / fs_hz);
  cd num = 0.0, den = 0.0, p = 1.0;
  for (std::size_t i = 0; i < std::max(tf.b.size(), tf.a.size()); ++i) {
    if (i < tf.b.size()) num += tf.b[i] * p;
    if (i < tf.a.size()) den += tf.a[i] * p;
    p *= zinv;
  }
  return num / den;
}

// Butterworth bandpass from an order-n analog lowpass prototype: prewarp the
// corners, map every prototype pole through s^2 - p*B*s + W0^2 = 0, map the
// 2n analog poles with the bilinear transform, put n zeros at z = +1 and n at
// z = -1, then normalize the gain to one at the analog centre.
inline TransferFunction butterworth_bandpass(int n, double lo, double hi, double fs) {
  const double w1 = 2.0 * fs * std::tan(kPi * lo / fs);
  const double w2 = 2.0 * fs * std::tan(kPi * hi / fs);
  const double bw = w2 - w1, w0 = std::sqrt(w1 * w2);
  std::vector<cd> poles, zeros;
  for (int k = 0; k < n; ++k) {
    const cd p = std::polar(1.0, kPi * (2.0 * k + n + 1) / (2.0 * n));
    const cd half = p * bw / 2.0;
    const cd disc = std::sqrt(half * half - w0 * w0);
    for (const cd s : {half + disc, half - disc}) poles.push_back((2.0 * fs + s) / (2.0 * fs - s));
  }
  for (int k = 0; k < n; ++k) {
    zeros.push_back(1.0);
    zeros.push_back(-1.0);
  }
  const std::vector<cd> bz = poly_from_roots(zeros), az = poly_from_roots(poles);
  TransferFunction tf;
  for (const cd& v : bz) tf.b.push_back(v.real());
  for (const cd& v : az) tf.a.push_back(v.real());
  // Analog centre W0 maps to the digital frequency atan(W0 / 2fs) * fs / pi.
  const double fc = std::atan(w0 / (2.0 * fs)) * fs / kPi;
  const double g = 1.0 / std::abs(eval_tf(tf, fc, fs));
  for (double& v : tf.b) v *= g;
  return tf;
}

// Direct-form difference equation, zero initial state.
inline std::vector<double> filter_direct(const TransferFunction& tf, const std::vector<double>& x) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < tf.b.size() && i <= n; ++i) acc += tf.b[i] * x[n - i];
    for (std::size_t i = 1; i < tf.a.size() && i <= n; ++i) acc -= tf.a[i] * y[n - i];
    y[n] = acc / tf.a[0];
  }
  return y;
}

// O(n^2) one-sided periodogram |X_k|^2 for k = 0..n/2.
inline std::vector<double> periodogram(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> p(n / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    cd acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) acc += x[t] * std::polar(1.0, -2.0 * kPi * double(k * t % n) / double(n));
    p[k] = std::norm(acc);
  }
  return p;
}

inline double band_power_ratio(const std::vector<double>& x, double fs, double split) {
  const std::vector<double> p = periodogram(x);
  const std::size_t n = x.size();
  double lo = 0.0, total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    // Interior bins stand for both +k and -k.
    const double w = (k == 0 || (n % 2 == 0 && k == n / 2)) ? 1.0 : 2.0;
    total += w * p[k];
    if (double(k) * fs / double(n) < split) lo += w * p[k];
  }
  return total > 0.0 ? lo / total : 0.0;
}

// Time-domain analytic Morlet CWT magnitude at one frequency:
// psi_s(t) = 2 / (s sqrt(2 pi)) exp(-t^2 / 2s^2) exp(i w0 t / s), s = w0 / (2 pi f).
inline std::vector<double> cwt_row(const std::vector<double>& x, double fs, double f, double w0 = 6.0) {
  const double s = w0 / (2.0 * kPi * f), dt = 1.0 / fs;
  const auto half = static_cast<long>(std::ceil(8.0 * s / dt));
  std::vector<double> out(x.size());
  for (long t = 0; t < static_cast<long>(x.size()); ++t) {
    cd acc = 0.0;
    for (long k = std::max(0L, t - half); k <= std::min<long>(x.size() - 1, t + half); ++k) {
      const double tau = (t - k) * dt;
      acc += x[k] * std::exp(-tau * tau / (2.0 * s * s)) * std::polar(1.0, w0 * tau / s);
    }
    out[t] = std::abs(acc) * 2.0 / (s * std::sqrt(2.0 * kPi)) * dt;
  }
  return out;
}

}  // namespace oracle

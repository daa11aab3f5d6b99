#include "emgssi/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace emgssi::traineval {

namespace {

std::vector<double> squared_distances(const FeatureMatrix& f) {
  const std::size_t n = f.rows, d = f.cols;
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = f.values.data() + i * d;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* xj = f.values.data() + j * d;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double t = xi[k] - xj[k];
        s += t * t;
      }
      out[i * n + j] = out[j * n + i] = s;
    }
  }
  return out;
}

// Row i of P(j|i) for a given beta; returns the Shannon entropy in nats.
double row_affinity(const double* dist, std::size_t n, std::size_t i, double beta, double* row) {
  // Shift by the smallest off-diagonal distance for numerical range.
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) dmin = std::min(dmin, dist[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = j == i ? 0.0 : std::exp(-beta * (dist[j] - dmin));
    sum += row[j];
  }
  double h = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    row[j] /= sum;
    if (row[j] > 0.0) h -= row[j] * std::log(row[j]);
  }
  return h;
}

}  // namespace

std::vector<double> conditional_affinities(const FeatureMatrix& features, double perplexity,
                                           double tolerance, std::vector<double>* achieved) {
  const std::size_t n = features.rows;
  if (n < 2) throw std::invalid_argument("t-SNE needs at least two points");
  if (!(perplexity > 0.0)) throw std::invalid_argument("perplexity must be positive");
  const std::vector<double> dist = squared_distances(features);
  const double target = std::log(perplexity);
  std::vector<double> p(n * n, 0.0);
  if (achieved) achieved->assign(n, 0.0);

  for (std::size_t i = 0; i < n; ++i) {
    const double* di = dist.data() + i * n;
    double* row = p.data() + i * n;
    // Scale the starting beta by the typical distance so the search starts close.
    double mean_d = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean_d += di[j];
    mean_d /= static_cast<double>(n - 1);
    double beta = mean_d > 0.0 ? 1.0 / mean_d : 1.0;
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double h = row_affinity(di, n, i, beta, row);
    for (int it = 0; it < 200; ++it) {
      if (std::abs(std::exp(h) - perplexity) <= tolerance * perplexity) break;
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
      h = row_affinity(di, n, i, beta, row);
    }
    if (achieved) (*achieved)[i] = std::exp(h);
  }
  return p;
}

EmbeddingResult tsne_embed(const FeatureMatrix& features, std::vector<int> labels,
                           const TsneConfig& config, EmbeddingSource source) {
  const std::size_t n = features.rows;
  if (labels.size() != n) throw std::invalid_argument("label count differs from feature rows");
  if (static_cast<double>(n) <= 3.0 * config.perplexity)
    throw std::invalid_argument("t-SNE needs more than 3 * perplexity points");
  if (config.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  for (double v : features.values)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");

  // Centre and scale to unit max-abs so distances stay in a sane range.
  FeatureMatrix x = features;
  for (std::size_t c = 0; c < x.cols; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x.values[r * x.cols + c];
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) x.values[r * x.cols + c] -= mean;
  }
  double maxabs = 0.0;
  for (double v : x.values) maxabs = std::max(maxabs, std::abs(v));
  if (maxabs > 0.0)
    for (double& v : x.values) v /= maxabs;

  EmbeddingResult res;
  res.source = source;
  res.labels = std::move(labels);
  std::vector<double> pc = conditional_affinities(x, config.perplexity, config.perplexity_tolerance,
                                                  &res.achieved_perplexity);
  std::vector<double> p(n * n);
  const double norm = 1.0 / (2.0 * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      p[i * n + j] = std::max((pc[i * n + j] + pc[j * n + i]) * norm, 1e-12);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> init(0.0, 1e-4);
  std::vector<double> y(n * 2), dy(n * 2), inc(n * 2, 0.0), gains(n * 2, 1.0), num(n * n);
  for (double& v : y) v = init(rng);

  for (int it = 0; it < config.iterations; ++it) {
    const bool early = it < config.exaggeration_iterations;
    const double exag = early ? config.exaggeration : 1.0;
    const double momentum = early ? config.initial_momentum : config.final_momentum;

    double qsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num[i * n + i] = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double a = y[2 * i] - y[2 * j], b = y[2 * i + 1] - y[2 * j + 1];
        const double q = 1.0 / (1.0 + a * a + b * b);
        num[i * n + j] = num[j * n + i] = q;
        qsum += 2.0 * q;
      }
    }
    qsum = std::max(qsum, std::numeric_limits<double>::min());
    for (std::size_t i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double q = num[i * n + j];
        const double m = (exag * p[i * n + j] - std::max(q / qsum, 1e-12)) * q;
        gx += m * (y[2 * i] - y[2 * j]);
        gy += m * (y[2 * i + 1] - y[2 * j + 1]);
      }
      dy[2 * i] = 4.0 * gx;
      dy[2 * i + 1] = 4.0 * gy;
    }
    for (std::size_t k = 0; k < 2 * n; ++k) {
      const bool same = (dy[k] > 0.0) == (inc[k] > 0.0);
      gains[k] = std::max(same ? gains[k] * 0.8 : gains[k] + 0.2, 0.01);
      inc[k] = momentum * inc[k] - config.learning_rate * gains[k] * dy[k];
      y[k] += inc[k];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += y[2 * i];
      my += y[2 * i + 1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= mx;
      y[2 * i + 1] -= my;
    }
  }
  res.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.points[i] = {y[2 * i], y[2 * i + 1]};
  return res;
}

double separability_score(const EmbeddingResult& e) {
  const std::size_t n = e.points.size();
  if (e.labels.size() != n) throw std::invalid_argument("label count differs from points");
  if (n == 0) throw std::invalid_argument("empty embedding");
  if (std::all_of(e.labels.begin(), e.labels.end(), [&](int l) { return l == e.labels[0]; }))
    return 1.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t nn_idx = i;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double a = e.points[i][0] - e.points[j][0], b = e.points[i][1] - e.points[j][1];
      const double d = a * a + b * b;
      if (d < best) {
        best = d;
        nn_idx = j;
      }
    }
    if (e.labels[nn_idx] == e.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace emgssi::traineval

#include "doctest.h"

#include "emgssi/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace emgssi::traineval;

namespace {

FeatureMatrix gaussian_clusters(std::size_t per, std::size_t dim, double separation, std::uint64_t seed,
                                std::vector<int>& labels) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  FeatureMatrix f{2 * per, dim, std::vector<double>(2 * per * dim)};
  labels.clear();
  for (std::size_t i = 0; i < 2 * per; ++i) {
    const int k = i < per ? 0 : 1;
    labels.push_back(k + 1);
    for (std::size_t d = 0; d < dim; ++d) f.values[i * dim + d] = g(rng);
    // Centres differ by `separation` sigma along the first axis.
    f.values[i * dim] += k * separation;
  }
  return f;
}

TsneConfig quick(double perplexity, int iterations) {
  TsneConfig c;
  c.perplexity = perplexity;
  c.iterations = iterations;
  return c;
}

}  // namespace

TEST_CASE("well separated clusters stay separated") {
  std::vector<int> labels;
  const FeatureMatrix f = gaussian_clusters(50, 64, 20.0, 1, labels);
  const EmbeddingResult e = tsne_embed(f, labels, quick(30.0, 1000), EmbeddingSource::deep_feature);
  REQUIRE(e.points.size() == 100);
  for (const auto& p : e.points) {
    CHECK(std::isfinite(p[0]));
    CHECK(std::isfinite(p[1]));
  }
  CHECK(separability_score(e) >= 0.95);
}

TEST_CASE("bandwidth search hits the perplexity") {
  std::vector<int> labels;
  const FeatureMatrix f = gaussian_clusters(60, 10, 3.0, 2, labels);
  for (double perp : {5.0, 15.0, 30.0}) {
    std::vector<double> achieved;
    const auto p = conditional_affinities(f, perp, 1e-3, &achieved);
    REQUIRE(achieved.size() == f.rows);
    for (std::size_t i = 0; i < f.rows; ++i) {
      CHECK(std::abs(achieved[i] - perp) <= 0.01 * perp);
      double row = 0.0;
      for (std::size_t j = 0; j < f.rows; ++j) row += p[i * f.rows + j];
      CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(p[i * f.rows + i] == 0.0);
      // Recompute the perplexity from the returned row.
      double h = 0.0;
      for (std::size_t j = 0; j < f.rows; ++j) {
        const double v = p[i * f.rows + j];
        if (v > 0.0) h -= v * std::log(v);
      }
      CHECK(std::exp(h) == doctest::Approx(achieved[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("duplicate rows do not produce NaN") {
  FeatureMatrix f{40, 5, std::vector<double>(200, 0.7)};
  std::vector<int> labels(40, 1);
  for (std::size_t i = 20; i < 40; ++i) labels[i] = 2;
  const EmbeddingResult e = tsne_embed(f, labels, quick(10.0, 300), EmbeddingSource::raw_input);
  for (const auto& p : e.points) {
    CHECK(std::isfinite(p[0]));
    CHECK(std::isfinite(p[1]));
  }
  for (double a : e.achieved_perplexity) CHECK(std::isfinite(a));
  CHECK(e.source == EmbeddingSource::raw_input);
}

TEST_CASE("input checks") {
  std::vector<int> labels;
  const FeatureMatrix f = gaussian_clusters(45, 4, 5.0, 3, labels);
  CHECK_THROWS(tsne_embed(f, labels, quick(30.0, 10), EmbeddingSource::deep_feature));  // 90 = 3 * 30
  CHECK_NOTHROW(tsne_embed(f, labels, quick(29.0, 10), EmbeddingSource::deep_feature));
  std::vector<int> short_labels(labels.begin(), labels.end() - 1);
  CHECK_THROWS(tsne_embed(f, short_labels, quick(10.0, 10), EmbeddingSource::deep_feature));
  FeatureMatrix bad = f;
  bad.values[3] = std::nan("");
  CHECK_THROWS(tsne_embed(bad, labels, quick(10.0, 10), EmbeddingSource::deep_feature));
}

TEST_CASE("embedding is deterministic in the seed") {
  std::vector<int> labels;
  const FeatureMatrix f = gaussian_clusters(25, 8, 4.0, 4, labels);
  const auto a = tsne_embed(f, labels, quick(10.0, 200), EmbeddingSource::deep_feature);
  const auto b = tsne_embed(f, labels, quick(10.0, 200), EmbeddingSource::deep_feature);
  CHECK(a.points == b.points);
  TsneConfig other = quick(10.0, 200);
  other.seed = 2;
  CHECK(tsne_embed(f, labels, other, EmbeddingSource::deep_feature).points != a.points);
}

TEST_CASE("separability score conventions") {
  EmbeddingResult single;
  single.points = {{0, 0}, {1, 1}, {2, 2}};
  single.labels = {3, 3, 3};
  CHECK(separability_score(single) == 1.0);

  EmbeddingResult pairs;
  pairs.points = {{0, 0}, {0.1, 0}, {10, 0}, {10.1, 0}};
  pairs.labels = {1, 1, 2, 2};
  CHECK(separability_score(pairs) == 1.0);
  pairs.labels = {1, 2, 1, 2};
  CHECK(separability_score(pairs) == 0.0);

  // Ten balanced classes with labels independent of position.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double mean = 0.0;
  const int reps = 10;
  for (int r = 0; r < reps; ++r) {
    EmbeddingResult shuffled;
    for (int i = 0; i < 1000; ++i) {
      shuffled.points.push_back({u(rng), u(rng)});
      shuffled.labels.push_back(1 + i % 10);
    }
    std::shuffle(shuffled.labels.begin(), shuffled.labels.end(), rng);
    const double s = separability_score(shuffled);
    CHECK(std::abs(s - 0.10) <= 0.05);
    mean += s / reps;
  }
  CHECK(std::abs(mean - 0.10) <= 0.02);
}

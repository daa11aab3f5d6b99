#pragma once

#include "emgssi/traineval.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace emgssi::traineval {

enum class EmbeddingSource { raw_input, deep_feature };

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  std::uint64_t seed = 1;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  // Relative tolerance on the achieved perplexity of each point.
  double perplexity_tolerance = 1e-3;
};

struct EmbeddingResult {
  std::vector<std::array<double, 2>> points;
  std::vector<int> labels;
  EmbeddingSource source = EmbeddingSource::deep_feature;
  std::vector<double> achieved_perplexity;
};

// Conditional affinities P(j|i) with per-point bandwidths found by bisection
// on beta = 1 / (2 sigma^2); returns the row-major n x n matrix and fills the
// achieved perplexities.
std::vector<double> conditional_affinities(const FeatureMatrix& features, double perplexity,
                                           double tolerance, std::vector<double>* achieved);

// Exact O(n^2) t-SNE. Throws std::invalid_argument if n <= 3 * perplexity.
EmbeddingResult tsne_embed(const FeatureMatrix& features, std::vector<int> labels,
                           const TsneConfig& config, EmbeddingSource source);

// Leave-one-out 1-NN accuracy in the embedding. A single class scores 1.
double separability_score(const EmbeddingResult& embedding);

}  // namespace emgssi::traineval

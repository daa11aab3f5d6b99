#pragma once

#include "emgssi/tensor.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace emgssi::nn {

enum class Mode { train, eval };

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Convolution (cross-correlation). Inputs are [C, T] or [N, C, T]; outputs
// keep the input rank. Weight shape is [out, in, kernel].
// ---------------------------------------------------------------------------
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = false;
};

void validate(const ConvSpec& spec);

// floor((length + 2 p - k) / s) + 1. Throws if the kernel exceeds the padded
// length.
std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight,
                 const Tensor<T>* bias);

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;  // empty unless spec.bias
};

template <typename T>
ConvGrads<T> conv1d_backward(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& weight,
                             const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Batch normalization over (batch, time) per channel.
// ---------------------------------------------------------------------------
template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;
  std::vector<T> inv_std;
  Mode mode = Mode::eval;
};

// Train mode normalizes by biased batch variance and updates running
// statistics as new = (1 - momentum) * old + momentum * batch, using the
// unbiased batch variance. Eval mode uses the running statistics.
template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode, double eps,
                      double momentum, BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  Tensor<T> input, gamma, beta;
};

template <typename T>
BatchNormGrads<T> batchnorm1d_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma,
                                       const BatchNormCache<T>& cache);

// ---------------------------------------------------------------------------
// Elementwise activations. Backward takes the forward output.
// ---------------------------------------------------------------------------
enum class Activation { relu, sigmoid };

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind);
template <typename T>
Tensor<T> activation_backward(const Tensor<T>& y, const Tensor<T>& grad_out, Activation kind);

// ---------------------------------------------------------------------------
// Max pooling with -inf padding; ties route to the first index.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> maxpool1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride,
                    std::size_t padding, std::vector<std::size_t>* argmax = nullptr);
template <typename T>
Tensor<T> maxpool1d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                             const Tensor<T>& grad_out);

// [C, T] -> [C] or [N, C, T] -> [N, C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);
template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Fully connected: x [in] or [N, in], W [out, in], b [out] (may be null).
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias);

template <typename T>
struct LinearGrads {
  Tensor<T> input, weight, bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight,
                               const Tensor<T>& grad_out, bool has_bias);

// ---------------------------------------------------------------------------
// Inverted dropout. The mask holds 0 or 1 / (1 - p) per element.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng& rng, Tensor<T>* mask = nullptr);
template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_out, const Tensor<T>& mask);

// ---------------------------------------------------------------------------
// Softmax cross-entropy. Targets are 0-based class indices.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
struct CrossEntropy {
  double loss = 0.0;     // mean over the batch
  Tensor<T> probs;       // same shape as logits
  Tensor<T> grad;        // d loss / d logits, (probs - onehot) / N
};

template <typename T>
CrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits,
                                      std::span<const std::size_t> targets);

// ---------------------------------------------------------------------------
// Parameters and Adam.
// ---------------------------------------------------------------------------
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> adam_m;
  Tensor<T> adam_v;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), adam_m(value.shape()),
        adam_v(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
using ParamSet = std::vector<Parameter<T>*>;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam for step t >= 1. Moments live in each Parameter.
template <typename T>
void adam_step(const ParamSet<T>& params, const AdamConfig& config, long t);

// Zero-mean normal with std sqrt(2 / fan_in).
template <typename T>
Tensor<T> he_normal(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace emgssi::nn

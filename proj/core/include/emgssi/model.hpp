#pragma once

#include "emgssi/nn_layers.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace emgssi::model {

using nn::Mode;
using nn::ParamSet;
using nn::Shape;
using nn::Tensor;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct StageSpec {
  std::size_t blocks = 2;
  std::size_t out_channels = 16;
  std::size_t stride = 1;
  bool operator==(const StageSpec&) const = default;
};

// Defaults reproduce the 1D SE-ResNet: stem conv(4->16, k7, s2, p3) + BN +
// ReLU + maxpool(k3, s2, p1), three stages of two residual blocks
// (16, 32, 64 channels; strides 1, 2, 2), SE reduction 8, dropout 0.5, then
// GAP -> dropout -> FC(64 -> 10).
struct SeResNet1dConfig {
  std::size_t in_channels = 4;
  std::size_t seg_len = 3000;
  std::size_t num_classes = 10;
  std::size_t stem_channels = 16;
  std::size_t stem_kernel = 7;
  std::size_t stem_stride = 2;
  std::size_t stem_padding = 3;
  std::size_t pool_kernel = 3;
  std::size_t pool_stride = 2;
  std::size_t pool_padding = 1;
  std::vector<StageSpec> stages{{2, 16, 1}, {2, 32, 2}, {2, 64, 2}};
  std::size_t block_kernel = 3;
  std::size_t block_padding = 1;
  std::size_t se_reduction = 8;
  double dropout = 0.5;

  bool operator==(const SeResNet1dConfig&) const = default;

  // seg_len 64 with every channel count halved; used for whole-model
  // gradient checks.
  static SeResNet1dConfig tiny();
};

void validate(const SeResNet1dConfig& config);

std::string config_to_json(const SeResNet1dConfig& config);
SeResNet1dConfig config_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Squeeze-and-excitation: z = GAP(F), s = sigmoid(W2 relu(W1 z)), F' = F * s.
// F is [C, T] or [N, C, T]; s is [C] or [N, C]. No biases.
// ---------------------------------------------------------------------------
template <typename T>
struct SeOutput {
  Tensor<T> output;
  Tensor<T> weights;
};

template <typename T>
SeOutput<T> se_block(const Tensor<T>& features, const Tensor<T>& w1, const Tensor<T>& w2,
                     std::size_t reduction);

template <typename T>
class SeBlock {
 public:
  SeBlock() = default;
  SeBlock(std::string name, std::size_t channels, std::size_t reduction, nn::Rng& init_rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> infer(const Tensor<T>& x, Tensor<T>* weights) const;
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamSet<T>& out);

  const Tensor<T>& last_weights() const { return s_; }
  nn::Parameter<T>& w1() { return w1_; }
  nn::Parameter<T>& w2() { return w2_; }

 private:
  std::size_t reduction_ = 1;
  nn::Parameter<T> w1_, w2_;
  Tensor<T> input_, z_, hidden_, s_;
};

struct BlockSpec {
  std::size_t in_channels = 16;
  std::size_t out_channels = 16;
  std::size_t stride = 1;
  std::size_t kernel = 3;
  std::size_t padding = 1;
  std::size_t se_reduction = 8;
  double dropout = 0.5;
};

// conv(k, stride s) -> BN -> ReLU -> conv(k, 1) -> BN -> SE -> dropout, plus
// an identity shortcut, or 1x1 conv(stride s) + BN when the shape changes;
// output = ReLU(main + shortcut).
template <typename T>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(std::string name, const BlockSpec& spec, nn::Rng& init_rng);

  Tensor<T> forward(const Tensor<T>& x, Mode mode, nn::Rng& dropout_rng);
  Tensor<T> infer(const Tensor<T>& x, Tensor<T>* se_weights) const;
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamSet<T>& out);
  void collect_buffers(std::vector<std::pair<std::string, Tensor<T>*>>& out);

  const BlockSpec& spec() const { return spec_; }
  bool has_projection() const { return projection_; }
  nn::Conv1d<T>& conv1() { return conv1_; }
  nn::Conv1d<T>& conv2() { return conv2_; }
  SeBlock<T>& se() { return se_; }

 private:
  BlockSpec spec_;
  bool projection_ = false;
  nn::Conv1d<T> conv1_, conv2_, short_conv_;
  nn::BatchNorm1d<T> bn1_, bn2_, short_bn_;
  nn::ReLU<T> relu1_, relu_out_;
  SeBlock<T> se_;
  nn::Dropout<T> drop_;
};

struct AttentionTrace {
  // One vector per SE block in network order (16, 16, 32, 32, 64, 64 for the
  // default config), averaged over the batch.
  std::vector<std::vector<double>> se_weights;
};

using ShapeTrace = std::vector<std::pair<std::string, Shape>>;

template <typename T>
class SeResNet1d {
 public:
  SeResNet1d() = default;
  SeResNet1d(const SeResNet1dConfig& config, std::uint64_t seed);

  const SeResNet1dConfig& config() const { return config_; }

  // Input [N, C, T] or [C, T]; logits [N, K] or [K]. Caches activations for
  // backward; train mode updates BN running statistics and draws dropout
  // masks from dropout_rng().
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  // Accumulates parameter gradients from d loss / d logits.
  void backward(const Tensor<T>& grad_logits);

  // Eval-mode forward that leaves the model untouched. Optionally returns the
  // post-GAP features and per-block SE weights.
  Tensor<T> infer(const Tensor<T>& x, AttentionTrace* trace = nullptr,
                  Tensor<T>* features = nullptr, ShapeTrace* shapes = nullptr) const;

  // Post-GAP, pre-dropout features from the last forward() call.
  const Tensor<T>& last_features() const { return features_; }

  ParamSet<T> parameters();
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();
  void zero_grad();
  std::size_t parameter_count() const;

  nn::Rng& dropout_rng() { return dropout_rng_; }
  nn::Conv1d<T>& stem_conv() { return stem_conv_; }
  const nn::Conv1d<T>& stem_conv() const { return stem_conv_; }
  std::vector<ResBlock<T>>& blocks() { return blocks_; }
  const std::vector<ResBlock<T>>& blocks() const { return blocks_; }
  nn::Linear<T>& fc() { return fc_; }

 private:
  Tensor<T> prepare_input(const Tensor<T>& x) const;

  SeResNet1dConfig config_;
  nn::Conv1d<T> stem_conv_;
  nn::BatchNorm1d<T> stem_bn_;
  nn::ReLU<T> stem_relu_;
  nn::MaxPool1d<T> pool_;
  std::vector<ResBlock<T>> blocks_;
  nn::Dropout<T> head_drop_;
  nn::Linear<T> fc_;
  nn::Rng dropout_rng_;
  Shape gap_input_shape_;
  Tensor<T> features_;
  bool unbatched_ = false;
};

using Model = SeResNet1d<float>;

// Deterministic initialization from the seed; validates the config.
Model build_model(const SeResNet1dConfig& config, std::uint64_t seed);

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  std::optional<AttentionTrace> attention;
};

// Eval mode runs the read-only path; train mode the caching one.
template <typename T>
ForwardResult<T> forward(SeResNet1d<T>& model, const Tensor<T>& x, Mode mode,
                         bool capture_attention);

struct InputAttribution {
  // Occlusion: clamped drop in true-class probability when one input channel
  // is zeroed, normalized to sum 1 (uniform if every drop is zero).
  std::array<double, 4> occlusion{};
  // Stage-1 SE weights pushed back through absolute stem weight mass.
  std::array<double, 4> stem_projection{};
};

// segment is [4, T]; target is the 0-based true class.
InputAttribution input_attribution(const Model& model, const Tensor<float>& segment,
                                   std::size_t target);

// 2 * multiply-accumulates for conv and FC layers plus bias adds, 2 FLOPs
// per element for inference BN, and GAP / excitation / rescale work inside
// SE blocks. ReLU, pooling and residual adds are not counted.
std::uint64_t count_flops(const SeResNet1dConfig& config);

// FNV-1a over parameter and buffer bytes.
std::uint64_t parameter_checksum(Model& model);

// ---------------------------------------------------------------------------
// "EMGW" weight files.
// ---------------------------------------------------------------------------
class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigMismatchError : public WeightFileError {
 public:
  ConfigMismatchError(const std::string& field, const std::string& message)
      : WeightFileError(message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

inline constexpr std::uint16_t kWeightsVersion = 1;

std::vector<std::uint8_t> encode_weights(Model& model);
Model decode_weights(std::span<const std::uint8_t> bytes,
                     const std::optional<SeResNet1dConfig>& expected = std::nullopt);
void save_weights(Model& model, const std::string& path);
Model load_weights(const std::string& path,
                   const std::optional<SeResNet1dConfig>& expected = std::nullopt);

}  // namespace emgssi::model

#pragma once

#include "emgssi/augment.hpp"
#include "emgssi/dsp.hpp"
#include "emgssi/model.hpp"
#include "emgssi/synth.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace emgssi::traineval {

using synth::Dataset;
using synth::EmgSegment;

struct PipelineFlags {
  bool filter_on = true;
  std::array<bool, kChannels> channel_mask{true, true, true, true};
  dsp::FilterMode filter_mode = dsp::FilterMode::zero_phase;
  dsp::FilterSpec filter{};
};

struct TrainConfig {
  int epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  nn::AdamConfig optimizer{};
  augment::AugmentConfig augmentation{};
  bool augment_on = true;
  PipelineFlags pipeline{};
  model::SeResNet1dConfig model{};
  bool validate_each_epoch = true;
};

void validate(const TrainConfig& config);

// Filter (if enabled) then zero masked channels.
std::vector<EmgSegment> preprocess(std::span<const EmgSegment* const> segments,
                                   const PipelineFlags& flags);

// Stacks segments into a [N, 4, 3000] tensor.
nn::Tensor<float> to_batch(std::span<const EmgSegment> segments);
nn::Tensor<float> to_tensor(const ChannelMatrix& data);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  model::Model model;
  std::vector<EpochRecord> history;
  std::uint64_t init_checksum = 0;
  std::uint64_t data_order_checksum = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Pipeline: filter -> channel mask -> augment (train only) -> forward.
// Model initialization, batch order, augmentation and dropout each draw from
// their own stream derived from config.seed, so arms that differ only in
// pipeline flags share initialization and data order.
TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct ConfusionMatrix {
  // rows = true class, columns = predicted; index 0 is class id 1.
  std::array<std::array<std::uint32_t, kNumClasses>, kNumClasses> counts{};

  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t true_index) const;
  double accuracy() const;
};

ConfusionMatrix confusion_from(std::span<const int> true_ids, std::span<const int> predicted_ids);

struct Evaluation {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::vector<int> predicted;  // class ids, test-split order
  std::vector<int> truth;
};

// argmax over logits on the test split.
Evaluation evaluate(const model::Model& model, const Dataset& dataset, const PipelineFlags& flags);
// Same, on already preprocessed segments.
Evaluation evaluate_segments(const model::Model& model, std::span<const EmgSegment> segments);

std::vector<int> predict(const model::Model& model, std::span<const EmgSegment> segments);

struct AblationArm {
  std::string name;
  PipelineFlags flags;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::uint64_t init_checksum = 0;
  std::uint64_t data_order_checksum = 0;
};

struct AblationReport {
  std::uint64_t seed = 0;
  std::vector<AblationArm> arms;  // baseline, no_filter, single_ch1..single_ch4
  double baseline = 0.0;
  double no_filter = 0.0;
  double single_channel_best = 0.0;
  int best_channel = 1;
};

AblationReport ablate(const Dataset& dataset, const TrainConfig& base,
                      const std::function<void(const AblationArm&)>& on_arm = {});

// Row-major [n x d].
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// Post-GAP, pre-FC activations in eval mode; segments must be preprocessed.
FeatureMatrix extract_features(const model::Model& model, std::span<const EmgSegment> segments);

// Flattened model inputs, the "raw input" space.
FeatureMatrix flatten_inputs(std::span<const EmgSegment> segments);

}  // namespace emgssi::traineval

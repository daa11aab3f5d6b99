#include "emgssi/traineval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace emgssi::traineval {

namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kOrderStream = 12;
constexpr std::uint64_t kAugmentStream = 13;
constexpr std::size_t kEvalBatch = 32;

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFFu;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::size_t argmax_row(const nn::Tensor<float>& logits, std::size_t row) {
  const std::size_t k = logits.dim(1);
  const float* p = logits.data() + row * k;
  return static_cast<std::size_t>(std::max_element(p, p + k) - p);
}

}  // namespace

void validate(const TrainConfig& config) {
  if (config.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (config.batch_size == 0) throw std::invalid_argument("batch_size must be > 0");
  if (!(config.optimizer.lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  augment::validate(config.augmentation);
  model::validate(config.model);
  if (config.model.in_channels != kChannels || config.model.seg_len != kSegmentLength)
    throw std::invalid_argument("model input must be [4, 3000]");
  if (std::none_of(config.pipeline.channel_mask.begin(), config.pipeline.channel_mask.end(),
                   [](bool b) { return b; }))
    throw std::invalid_argument("channel mask selects no channel");
}

std::vector<EmgSegment> preprocess(std::span<const EmgSegment* const> segments,
                                   const PipelineFlags& flags) {
  std::vector<EmgSegment> out;
  out.reserve(segments.size());
  dsp::BiquadCascade cascade;
  if (flags.filter_on) cascade = dsp::design_bandpass(flags.filter);
  for (const EmgSegment* s : segments) {
    EmgSegment seg = *s;
    if (flags.filter_on) seg.data = dsp::apply_iir(cascade, seg.data, flags.filter_mode);
    for (std::size_t c = 0; c < kChannels; ++c) {
      if (flags.channel_mask[c]) continue;
      auto row = seg.data.row(c);
      std::fill(row.begin(), row.end(), 0.0f);
    }
    out.push_back(std::move(seg));
  }
  return out;
}

nn::Tensor<float> to_tensor(const ChannelMatrix& data) {
  nn::Tensor<float> t(nn::Shape{data.channels(), data.samples()});
  std::copy(data.values().begin(), data.values().end(), t.data());
  return t;
}

nn::Tensor<float> to_batch(std::span<const EmgSegment> segments) {
  if (segments.empty()) throw std::invalid_argument("empty batch");
  const std::size_t per = segments[0].data.values().size();
  nn::Tensor<float> t(nn::Shape{segments.size(), segments[0].data.channels(),
                                segments[0].data.samples()});
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto v = segments[i].data.values();
    if (v.size() != per) throw std::invalid_argument("segments differ in shape");
    std::copy(v.begin(), v.end(), t.data() + i * per);
  }
  return t;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch) {
  validate(config);
  const auto train_ptrs = dataset.select(synth::SplitTag::train);
  if (train_ptrs.empty()) throw std::invalid_argument("dataset has no train split");
  const auto test_ptrs = dataset.select(synth::SplitTag::test);

  const std::vector<EmgSegment> train_set = preprocess(train_ptrs, config.pipeline);
  const std::vector<EmgSegment> test_set = preprocess(test_ptrs, config.pipeline);

  TrainResult result{model::build_model(config.model, synth::derive_seed(config.seed, kInitStream)),
                     {}, 0, 0};
  model::Model& net = result.model;
  result.init_checksum = model::parameter_checksum(net);

  synth::Rng order_rng(synth::derive_seed(config.seed, kOrderStream));
  synth::Rng aug_rng(synth::derive_seed(config.seed, kAugmentStream));
  const nn::ParamSet<float> params = net.parameters();

  std::vector<std::size_t> order(train_set.size());
  std::uint64_t order_hash = 0xCBF29CE484222325ull;
  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t idx : order) order_hash = fnv1a(order_hash, idx);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<EmgSegment> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
      if (config.augment_on) batch = augment::augment_batch(std::move(batch), config.augmentation, aug_rng);

      std::vector<std::size_t> targets(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) targets[i] = static_cast<std::size_t>(batch[i].label - 1);

      const nn::Tensor<float> x = to_batch(batch);
      net.zero_grad();
      const nn::Tensor<float> logits = net.forward(x, nn::Mode::train);
      const nn::CrossEntropy<float> ce = nn::softmax_cross_entropy(logits, std::span<const std::size_t>(targets));
      net.backward(ce.grad);
      nn::adam_step(params, config.optimizer, ++step);

      loss_sum += ce.loss * static_cast<double>(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i)
        if (argmax_row(logits, i) == targets[i]) ++correct;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (config.validate_each_epoch || epoch == config.epochs)
      rec.val_accuracy = test_set.empty() ? 0.0 : evaluate_segments(net, test_set).accuracy;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.data_order_checksum = order_hash;
  return result;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto& row : counts)
    for (auto v : row) n += v;
  return n;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t true_index) const {
  std::uint64_t n = 0;
  for (auto v : counts.at(true_index)) n += v;
  return n;
}

double ConfusionMatrix::accuracy() const {
  const std::uint64_t n = total();
  if (n == 0) return 0.0;
  std::uint64_t diag = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) diag += counts[k][k];
  return static_cast<double>(diag) / static_cast<double>(n);
}

ConfusionMatrix confusion_from(std::span<const int> true_ids, std::span<const int> predicted_ids) {
  if (true_ids.size() != predicted_ids.size())
    throw std::invalid_argument("label and prediction counts differ");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < true_ids.size(); ++i) {
    const int t = true_ids[i], p = predicted_ids[i];
    if (t < 1 || t > kNumClasses || p < 1 || p > kNumClasses)
      throw std::out_of_range("class id outside 1..10");
    ++cm.counts[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(p - 1)];
  }
  return cm;
}

std::vector<int> predict(const model::Model& model, std::span<const EmgSegment> segments) {
  std::vector<int> out;
  out.reserve(segments.size());
  for (std::size_t start = 0; start < segments.size(); start += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, segments.size() - start);
    const nn::Tensor<float> logits = model.infer(to_batch(segments.subspan(start, n)));
    for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<int>(argmax_row(logits, i)) + 1);
  }
  return out;
}

Evaluation evaluate_segments(const model::Model& model, std::span<const EmgSegment> segments) {
  Evaluation ev;
  ev.predicted = predict(model, segments);
  ev.truth.reserve(segments.size());
  for (const auto& s : segments) ev.truth.push_back(s.label);
  ev.confusion = confusion_from(ev.truth, ev.predicted);
  ev.accuracy = ev.confusion.accuracy();
  return ev;
}

Evaluation evaluate(const model::Model& model, const Dataset& dataset, const PipelineFlags& flags) {
  const auto ptrs = dataset.select(synth::SplitTag::test);
  if (ptrs.empty()) throw std::invalid_argument("dataset has no test split");
  const std::vector<EmgSegment> segs = preprocess(ptrs, flags);
  return evaluate_segments(model, segs);
}

AblationReport ablate(const Dataset& dataset, const TrainConfig& base,
                      const std::function<void(const AblationArm&)>& on_arm) {
  if (dataset.count(synth::SplitTag::train) == 0 || dataset.count(synth::SplitTag::test) == 0)
    throw std::invalid_argument("ablation needs a split dataset");
  std::vector<std::pair<std::string, PipelineFlags>> arms;
  arms.emplace_back("baseline", base.pipeline);
  PipelineFlags nf = base.pipeline;
  nf.filter_on = false;
  arms.emplace_back("no_filter", nf);
  for (std::size_t c = 0; c < kChannels; ++c) {
    PipelineFlags sc = base.pipeline;
    sc.channel_mask = {false, false, false, false};
    sc.channel_mask[c] = true;
    arms.emplace_back("single_ch" + std::to_string(c + 1), sc);
  }

  AblationReport report;
  report.seed = base.seed;
  report.single_channel_best = -1.0;
  for (const auto& [name, flags] : arms) {
    TrainConfig cfg = base;
    cfg.pipeline = flags;
    cfg.validate_each_epoch = false;
    TrainResult tr = train(dataset, cfg);
    const Evaluation ev = evaluate(tr.model, dataset, flags);
    AblationArm arm{name, flags, ev.accuracy, ev.confusion, tr.init_checksum, tr.data_order_checksum};
    if (name == "baseline") report.baseline = arm.accuracy;
    else if (name == "no_filter") report.no_filter = arm.accuracy;
    else if (arm.accuracy > report.single_channel_best) {
      report.single_channel_best = arm.accuracy;
      report.best_channel = name.back() - '0';
    }
    if (on_arm) on_arm(arm);
    report.arms.push_back(std::move(arm));
  }
  return report;
}

FeatureMatrix extract_features(const model::Model& model, std::span<const EmgSegment> segments) {
  FeatureMatrix fm;
  fm.rows = segments.size();
  for (std::size_t start = 0; start < segments.size(); start += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, segments.size() - start);
    nn::Tensor<float> feats;
    model.infer(to_batch(segments.subspan(start, n)), nullptr, &feats);
    fm.cols = feats.dim(1);
    for (float v : feats.values()) fm.values.push_back(static_cast<double>(v));
  }
  return fm;
}

FeatureMatrix flatten_inputs(std::span<const EmgSegment> segments) {
  FeatureMatrix fm;
  fm.rows = segments.size();
  fm.cols = segments.empty() ? 0 : segments[0].data.values().size();
  fm.values.reserve(fm.rows * fm.cols);
  for (const auto& s : segments)
    for (float v : s.data.values()) fm.values.push_back(static_cast<double>(v));
  return fm;
}

}  // namespace emgssi::traineval

#include "cli.hpp"

#include "emgssi/dsp.hpp"
#include "emgssi/model.hpp"
#include "emgssi/report.hpp"
#include "emgssi/stream.hpp"
#include "emgssi/tsne.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

namespace emgssi::cli {

namespace fs = std::filesystem;

namespace {

// Output paths must land in an existing directory.
const CLI::Validator kWritable(
    [](std::string& path) -> std::string {
      const fs::path parent = fs::path(path).parent_path();
      if (!parent.empty() && !fs::is_directory(parent)) return "directory " + parent.string() + " does not exist";
      if (fs::is_directory(path)) return path + " is a directory";
      return {};
    },
    "WRITABLE");

void add_pipeline(CLI::App* sub, PipelineArgs& p) {
  sub->add_flag("--no-filter", p.no_filter, "Skip the 20-450 Hz bandpass");
  sub->add_option("--channels", p.channels, "Channels fed to the model, e.g. 1,2")
      ->delimiter(',')
      ->check(CLI::Range(1, 4));
}

// Removes every registered file unless commit() was called.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : paths_) fs::remove(p, ec);
  }
  const std::string& add(const std::string& path) {
    paths_.push_back(path);
    return path;
  }
  void commit() { committed_ = true; }

 private:
  std::vector<std::string> paths_;
  bool committed_ = false;
};

std::string percent(double v) { return report::fmt(100.0 * v, 2) + "%"; }

std::vector<synth::EmgSegment> test_inputs(const synth::Dataset& ds, const PipelineArgs& p) {
  const auto ptrs = ds.select(synth::SplitTag::test);
  if (ptrs.empty()) throw std::runtime_error("dataset has no test split");
  return traineval::preprocess(ptrs, pipeline_flags(p));
}

int run_synth(const SynthArgs& a, std::ostream& out) {
  if (a.coupling.size() != kChannels) throw std::invalid_argument("--coupling needs 4 values");
  synth::SynthConfig sc;
  sc.n_per_class = a.per_class;
  std::copy(a.coupling.begin(), a.coupling.end(), sc.coupling.begin());
  sc.artefact_amplitude_mv = a.artefact_mv;
  sc.sensor_noise_mv = a.noise_mv;
  sc.seed = a.seed;
  sc.template_seed = a.template_seed;
  const synth::Dataset ds = synth::split_dataset(synth::synth_dataset(sc), a.train_fraction, a.seed);
  OutputGuard guard;
  synth::write_dataset(guard.add(a.out), ds);
  guard.commit();
  out << "wrote " << ds.segments.size() << " segments (train " << ds.count(synth::SplitTag::train)
      << ", test " << ds.count(synth::SplitTag::test) << ") to " << a.out << "\n";
  return kExitOk;
}

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const synth::Dataset ds = synth::read_dataset(a.data);
  traineval::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.optimizer.lr = a.lr;
  cfg.seed = a.seed;
  cfg.augment_on = !a.no_augment;
  cfg.pipeline = pipeline_flags(a.pipeline);
  const traineval::TrainResult r = train(ds, cfg, [&](const traineval::EpochRecord& e) {
    err << "epoch " << e.epoch << "/" << a.epochs << " loss " << report::fmt(e.loss, 4) << " train "
        << percent(e.train_accuracy) << " val " << percent(e.val_accuracy) << "\n";
  });
  OutputGuard guard;
  model::Model net = r.model;
  model::save_weights(net, guard.add(a.out));
  if (!a.metrics.empty()) report::write_text_file(guard.add(a.metrics), report::metrics_csv(r.history));
  guard.commit();
  const double acc = r.history.empty() ? 0.0 : r.history.back().val_accuracy;
  out << "trained " << a.epochs << " epochs, test accuracy " << percent(acc) << ", weights " << a.out << "\n";
  return kExitOk;
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  const model::Model net = model::load_weights(a.model, model::SeResNet1dConfig{});
  const synth::Dataset ds = synth::read_dataset(a.data);
  const traineval::Evaluation e = traineval::evaluate_segments(net, test_inputs(ds, a.pipeline));
  OutputGuard guard;
  if (!a.confusion.empty()) report::write_text_file(guard.add(a.confusion), report::confusion_csv(e.confusion));
  if (!a.confusion_svg.empty())
    report::write_text_file(guard.add(a.confusion_svg), report::confusion_svg(e.confusion));
  guard.commit();
  for (std::size_t k = 0; k < kNumClasses; ++k)
    out << word_for(static_cast<int>(k) + 1) << " " << e.confusion.counts[k][k] << "/" << e.confusion.row_sum(k) << "\n";
  out << "accuracy " << percent(e.accuracy) << " on " << e.truth.size() << " test segments\n";
  return kExitOk;
}

int run_infer(const InferArgs& a, std::ostream& out) {
  const model::Model net = model::load_weights(a.model, model::SeResNet1dConfig{});
  const synth::Dataset ds = synth::read_dataset(a.data);
  if (a.index >= ds.segments.size())
    throw std::out_of_range("--index " + std::to_string(a.index) + " but the dataset has " +
                            std::to_string(ds.segments.size()) + " segments");
  const synth::EmgSegment* seg = &ds.segments[a.index];
  const auto pre = traineval::preprocess(std::span(&seg, 1), pipeline_flags(a.pipeline));
  const nn::Tensor<float> p = nn::softmax(net.infer(traineval::to_tensor(pre[0].data)));
  std::size_t best = 0;
  for (std::size_t k = 1; k < kNumClasses; ++k)
    if (p[k] > p[best]) best = k;
  out << "segment " << a.index << " true " << word_for(seg->label) << " predicted "
      << word_for(static_cast<int>(best) + 1) << " (" << report::fmt(p[best], 4) << ")\n";
  out << "probabilities";
  for (std::size_t k = 0; k < kNumClasses; ++k)
    out << (k ? "," : " ") << word_for(static_cast<int>(k) + 1) << "=" << report::fmt(p[k], 6);
  out << "\n";
  return kExitOk;
}

int run_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  const synth::Dataset ds = synth::read_dataset(a.data);
  traineval::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;
  const traineval::AblationReport rep = traineval::ablate(ds, cfg, [&](const traineval::AblationArm& arm) {
    err << arm.name << " " << percent(arm.accuracy) << "\n";
  });
  OutputGuard guard;
  report::write_text_file(guard.add(a.out), report::ablation_csv(rep));
  guard.commit();
  out << "baseline " << percent(rep.baseline) << ", no filter " << percent(rep.no_filter)
      << ", best single channel (ch" << rep.best_channel << ") " << percent(rep.single_channel_best) << "\n";
  return kExitOk;
}

int run_attn(const AttnArgs& a, std::ostream& out) {
  const model::Model net = model::load_weights(a.model, model::SeResNet1dConfig{});
  const synth::Dataset ds = synth::read_dataset(a.data);
  const auto segs = test_inputs(ds, a.pipeline);
  std::string csv = "index,label,word,method,ch1,ch2,ch3,ch4\n";
  std::array<double, 4> mean{};
  std::size_t front_wins = 0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto attr = model::input_attribution(net, traineval::to_tensor(segs[i].data),
                                               static_cast<std::size_t>(segs[i].label - 1));
    const std::string head = std::to_string(i) + "," + std::to_string(segs[i].label) + "," +
                             std::string(word_for(segs[i].label)) + ",";
    csv += head + "occlusion";
    for (double v : attr.occlusion) csv += "," + report::fmt(v);
    csv += "\n" + head + "stem_projection";
    for (double v : attr.stem_projection) csv += "," + report::fmt(v);
    csv += "\n";
    for (std::size_t c = 0; c < 4; ++c) mean[c] += attr.occlusion[c] / static_cast<double>(segs.size());
    if (attr.occlusion[0] + attr.occlusion[1] > attr.occlusion[2] + attr.occlusion[3]) ++front_wins;
  }
  OutputGuard guard;
  if (!a.out.empty()) report::write_text_file(guard.add(a.out), csv);
  guard.commit();
  out << "mean occlusion attribution";
  for (std::size_t c = 0; c < 4; ++c) out << " ch" << c + 1 << "=" << report::fmt(mean[c], 4);
  out << "\nchannels 1-2 above 3-4 on " << front_wins << "/" << segs.size() << " segments ("
      << percent(static_cast<double>(front_wins) / static_cast<double>(segs.size())) << ")\n";
  return kExitOk;
}

int run_tsne(const TsneArgs& a, std::ostream& out) {
  const model::Model net = model::load_weights(a.model, model::SeResNet1dConfig{});
  const synth::Dataset ds = synth::read_dataset(a.data);
  const auto segs = test_inputs(ds, a.pipeline);
  std::vector<int> labels;
  for (const auto& s : segs) labels.push_back(s.label);
  traineval::TsneConfig tc;
  tc.perplexity = a.perplexity;
  tc.iterations = a.iterations;
  tc.seed = a.seed;
  const auto deep = traineval::tsne_embed(traineval::extract_features(net, segs), labels, tc,
                                          traineval::EmbeddingSource::deep_feature);
  const auto raw = traineval::tsne_embed(traineval::flatten_inputs(segs), labels, tc,
                                         traineval::EmbeddingSource::raw_input);
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  OutputGuard guard;
  report::write_text_file(guard.add((dir / "embedding_deep.csv").string()), report::embedding_csv(deep));
  report::write_text_file(guard.add((dir / "embedding_raw.csv").string()), report::embedding_csv(raw));
  report::write_text_file(guard.add((dir / "embedding_deep.svg").string()),
                          report::embedding_svg(deep, "t-SNE of deep features"));
  report::write_text_file(guard.add((dir / "embedding_raw.svg").string()),
                          report::embedding_svg(raw, "t-SNE of raw inputs"));
  guard.commit();
  out << "1-NN separability: deep features " << percent(traineval::separability_score(deep))
      << ", raw inputs " << percent(traineval::separability_score(raw)) << "\n";
  return kExitOk;
}

int run_scalogram(const ScalogramArgs& a, std::ostream& out) {
  const synth::Dataset ds = synth::read_dataset(a.data);
  if (a.index >= ds.segments.size()) throw std::out_of_range("--index is past the end of the dataset");
  ChannelMatrix data = ds.segments[a.index].data;
  if (a.filtered) data = dsp::apply_iir(dsp::design_bandpass({}), data, dsp::FilterMode::zero_phase);
  const auto ch = data.row(static_cast<std::size_t>(a.channel - 1));
  const std::vector<double> signal(ch.begin(), ch.end());
  const auto freqs = dsp::log_spaced(a.fmin, a.fmax, a.n_freqs);
  const dsp::Scalogram s = dsp::cwt_scalogram(signal, kSampleRateHz, freqs);
  OutputGuard guard;
  report::write_text_file(guard.add(a.out), report::scalogram_csv(s));
  if (!a.svg.empty()) {
    const std::string title = std::string(word_for(ds.segments[a.index].label)) + ", channel " +
                              std::to_string(a.channel) + (a.filtered ? ", filtered" : ", raw");
    report::write_text_file(guard.add(a.svg), report::scalogram_svg(s, title));
  }
  guard.commit();
  out << "scalogram " << s.n_freqs() << " x " << s.n_times() << " for segment " << a.index << " ("
      << word_for(ds.segments[a.index].label) << ") channel " << a.channel << "\n";
  return kExitOk;
}

int run_serve(const ServeArgs& a, std::ostream& out, const std::atomic<bool>* stop) {
  const synth::Dataset ds = synth::read_dataset(a.data);
  auto ptrs = ds.select(synth::SplitTag::test);
  if (ptrs.empty())
    for (const auto& s : ds.segments) ptrs.push_back(&s);
  const ChannelMatrix samples = stream::concatenate(ptrs);
  stream::ServeConfig sc;
  sc.endpoint = stream::parse_endpoint(a.endpoint);
  sc.frame_ms = a.frame_ms;
  sc.pacing = !a.no_pacing;
  sc.scale_uv_per_count = a.scale;
  sc.drop_seqs = std::set<std::uint32_t>(a.drop.begin(), a.drop.end());
  sc.stop = stop;
  sc.on_listening = [&](std::uint16_t port) {
    out << "listening on " << sc.endpoint.host << ":" << port << " (" << samples.samples() << " samples, "
        << ptrs.size() << " segments)" << std::endl;
  };
  const stream::ServeStats st = stream::serve_replay(samples, sc);
  out << "sent " << st.frames_sent << " frames (" << st.samples_sent << " samples), dropped " << st.frames_dropped
      << (st.client_disconnected ? ", client disconnected" : "") << "\n";
  return kExitOk;
}

int run_decode(const DecodeArgs& a, std::ostream& out, const std::atomic<bool>* stop) {
  const model::Model net = model::load_weights(a.model, model::SeResNet1dConfig{});
  stream::IngestConfig ic;
  ic.endpoint = stream::parse_endpoint(a.endpoint);
  ic.decoder.filter_on = !a.no_filter;
  ic.stop = stop;
  std::string csv = "window,end_s,class_id,word";
  for (int k = 1; k <= static_cast<int>(kNumClasses); ++k) csv += ",p_" + std::string(word_for(k));
  csv += "\n";
  const stream::StreamStats st = stream::ingest_decode(net, ic, [&](const stream::Prediction& p) {
    out << "window " << p.window_index << " t=" << report::fmt(p.window_end_s, 3) << "s " << p.word << " ("
        << report::fmt(p.probabilities[static_cast<std::size_t>(p.class_id - 1)], 4) << ") latency "
        << report::fmt(p.latency_ms, 1) << " ms" << std::endl;
    csv += std::to_string(p.window_index) + "," + report::fmt(p.window_end_s, 3) + "," +
           std::to_string(p.class_id) + "," + p.word;
    for (double v : p.probabilities) csv += "," + report::fmt(v);
    csv += "\n";
  });
  OutputGuard guard;
  if (!a.out.empty()) report::write_text_file(guard.add(a.out), csv);
  guard.commit();
  out << "frames " << st.frames_received << ", gaps " << st.gaps_detected << ", duplicates " << st.duplicate_frames
      << ", samples " << st.samples_delivered << "\n";
  return kExitOk;
}

}  // namespace

traineval::PipelineFlags pipeline_flags(const PipelineArgs& args) {
  traineval::PipelineFlags f;
  f.filter_on = !args.no_filter;
  f.channel_mask = {false, false, false, false};
  for (int c : args.channels) {
    if (c < 1 || c > static_cast<int>(kChannels)) throw std::invalid_argument("channel ids are 1..4");
    f.channel_mask[static_cast<std::size_t>(c - 1)] = true;
  }
  return f;
}

ParseOutcome parse_args(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Command cmd;
  CLI::App app{"Silent speech decoding from 4-channel surface EMG"};
  app.name("emg_ssi");
  app.set_config("--config", "", "TOML defaults file with one [section] per subcommand")->envname("EMG_SSI_CONFIG");
  app.require_subcommand(1, 1);

  auto* synth = app.add_subcommand("synth", "Generate a labelled synthetic dataset");
  synth->add_option("--out", cmd.synth.out, "Output EMGD file")->required()->check(kWritable);
  synth->add_option("--per-class", cmd.synth.per_class, "Segments per word")->check(CLI::PositiveNumber);
  synth->add_option("--coupling", cmd.synth.coupling, "Per-channel coupling in [0,1]")
      ->delimiter(',')
      ->expected(4)
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--artefact", cmd.synth.artefact_mv, "Motion artefact amplitude (mV)")->check(CLI::NonNegativeNumber);
  synth->add_option("--noise", cmd.synth.noise_mv, "Sensor noise std (mV)")->check(CLI::NonNegativeNumber);
  synth->add_option("--train-fraction", cmd.synth.train_fraction, "Stratified train share")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", cmd.synth.seed, "Sample and split seed");
  synth->add_option("--template-seed", cmd.synth.template_seed, "Word template seed");

  auto* train = app.add_subcommand("train", "Train the SE-ResNet on a dataset");
  train->add_option("--data", cmd.train.data, "Input EMGD file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", cmd.train.out, "Output EMGW weights")->required()->check(kWritable);
  train->add_option("--metrics", cmd.train.metrics, "Per-epoch metrics CSV")->check(kWritable);
  train->add_option("--epochs", cmd.train.epochs)->check(CLI::NonNegativeNumber);
  train->add_option("--batch-size", cmd.train.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--lr", cmd.train.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
  train->add_option("--seed", cmd.train.seed, "Initialization, order and augmentation seed");
  train->add_flag("--no-augment", cmd.train.no_augment);
  add_pipeline(train, cmd.train.pipeline);

  auto* eval = app.add_subcommand("eval", "Test-split accuracy and confusion matrix");
  eval->add_option("--data", cmd.eval.data)->required()->check(CLI::ExistingFile);
  eval->add_option("--model", cmd.eval.model)->required()->check(CLI::ExistingFile);
  eval->add_option("--confusion", cmd.eval.confusion, "Confusion CSV")->check(kWritable);
  eval->add_option("--confusion-svg", cmd.eval.confusion_svg, "Confusion heatmap")->check(kWritable);
  add_pipeline(eval, cmd.eval.pipeline);

  auto* infer = app.add_subcommand("infer", "Classify one dataset segment");
  infer->add_option("--data", cmd.infer.data)->required()->check(CLI::ExistingFile);
  infer->add_option("--model", cmd.infer.model)->required()->check(CLI::ExistingFile);
  infer->add_option("--index", cmd.infer.index, "Segment index in file order");
  add_pipeline(infer, cmd.infer.pipeline);

  auto* ablate = app.add_subcommand("ablate", "Baseline, no-filter and single-channel arms");
  ablate->add_option("--data", cmd.ablate.data)->required()->check(CLI::ExistingFile);
  ablate->add_option("--out", cmd.ablate.out, "Ablation CSV")->required()->check(kWritable);
  ablate->add_option("--epochs", cmd.ablate.epochs)->check(CLI::NonNegativeNumber);
  ablate->add_option("--seed", cmd.ablate.seed);

  auto* attn = app.add_subcommand("attn", "Per-channel input attribution on the test split");
  attn->add_option("--data", cmd.attn.data)->required()->check(CLI::ExistingFile);
  attn->add_option("--model", cmd.attn.model)->required()->check(CLI::ExistingFile);
  attn->add_option("--out", cmd.attn.out, "Attribution CSV")->check(kWritable);
  add_pipeline(attn, cmd.attn.pipeline);

  auto* tsne = app.add_subcommand("tsne", "t-SNE of deep features and raw inputs");
  tsne->add_option("--data", cmd.tsne.data)->required()->check(CLI::ExistingFile);
  tsne->add_option("--model", cmd.tsne.model)->required()->check(CLI::ExistingFile);
  tsne->add_option("--out-dir", cmd.tsne.out_dir, "Directory for embedding CSV/SVG")->required();
  tsne->add_option("--perplexity", cmd.tsne.perplexity)->check(CLI::PositiveNumber);
  tsne->add_option("--iterations", cmd.tsne.iterations)->check(CLI::PositiveNumber);
  tsne->add_option("--seed", cmd.tsne.seed);
  add_pipeline(tsne, cmd.tsne.pipeline);

  auto* scal = app.add_subcommand("scalogram", "Morlet scalogram of one channel");
  scal->add_option("--data", cmd.scalogram.data)->required()->check(CLI::ExistingFile);
  scal->add_option("--out", cmd.scalogram.out, "Scalogram CSV")->required()->check(kWritable);
  scal->add_option("--svg", cmd.scalogram.svg, "Scalogram image")->check(kWritable);
  scal->add_option("--index", cmd.scalogram.index);
  scal->add_option("--channel", cmd.scalogram.channel)->check(CLI::Range(1, 4));
  scal->add_option("--fmin", cmd.scalogram.fmin)->check(CLI::PositiveNumber);
  scal->add_option("--fmax", cmd.scalogram.fmax)->check(CLI::PositiveNumber);
  scal->add_option("--n-freqs", cmd.scalogram.n_freqs)->check(CLI::PositiveNumber);
  scal->add_flag("--filtered", cmd.scalogram.filtered, "Bandpass before the transform");

  auto* serve = app.add_subcommand("serve", "Replay a dataset as a framed TCP stream");
  serve->add_option("--data", cmd.serve.data)->required()->check(CLI::ExistingFile);
  serve->add_option("--endpoint", cmd.serve.endpoint, "host:port, port 0 picks one");
  serve->add_option("--frame-ms", cmd.serve.frame_ms)->check(CLI::PositiveNumber);
  serve->add_flag("--no-pacing", cmd.serve.no_pacing, "Send as fast as the client reads");
  serve->add_option("--scale", cmd.serve.scale, "ADC scale (uV per count)")->check(CLI::PositiveNumber);
  serve->add_option("--drop", cmd.serve.drop, "Frame seqs to drop")->delimiter(',');

  auto* decode = app.add_subcommand("decode", "Decode words from a live stream");
  decode->add_option("--model", cmd.decode.model)->required()->check(CLI::ExistingFile);
  decode->add_option("--endpoint", cmd.decode.endpoint, "host:port of the replay server");
  decode->add_option("--out", cmd.decode.out, "Predictions CSV")->check(kWritable);
  decode->add_flag("--no-filter", cmd.decode.no_filter);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return {std::nullopt, kExitOk};
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return {std::nullopt, kExitOk};
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return {std::nullopt, kExitUsage};
  }
  cmd.name = app.get_subcommands().front()->get_name();
  return {std::move(cmd), kExitOk};
}

int execute(const Command& c, std::ostream& out, std::ostream& err, const std::atomic<bool>* stop) {
  try {
    if (c.name == "synth") return run_synth(c.synth, out);
    if (c.name == "train") return run_train(c.train, out, err);
    if (c.name == "eval") return run_eval(c.eval, out);
    if (c.name == "infer") return run_infer(c.infer, out);
    if (c.name == "ablate") return run_ablate(c.ablate, out, err);
    if (c.name == "attn") return run_attn(c.attn, out);
    if (c.name == "tsne") return run_tsne(c.tsne, out);
    if (c.name == "scalogram") return run_scalogram(c.scalogram, out);
    if (c.name == "serve") return run_serve(c.serve, out, stop);
    if (c.name == "decode") return run_decode(c.decode, out, stop);
    err << "error: unknown command '" << c.name << "'\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace emgssi::cli

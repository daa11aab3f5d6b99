#pragma once

#include "emgssi/synth.hpp"
#include "emgssi/traineval.hpp"

#include <atomic>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace emgssi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Flags shared by every command that feeds segments to a model.
struct PipelineArgs {
  bool no_filter = false;
  std::vector<int> channels{1, 2, 3, 4};
};

struct SynthArgs {
  std::string out;
  int per_class = 100;
  std::vector<float> coupling{1.0f, 1.0f, 0.7f, 0.7f};
  double artefact_mv = 0.5;
  double noise_mv = 0.01;
  double train_fraction = 0.8;
  std::uint64_t seed = 1;
  std::uint64_t template_seed = 0;
};

struct TrainArgs {
  std::string data;
  std::string out;
  std::string metrics;
  int epochs = 50;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  bool no_augment = false;
  PipelineArgs pipeline;
};

struct EvalArgs {
  std::string data;
  std::string model;
  std::string confusion;
  std::string confusion_svg;
  PipelineArgs pipeline;
};

struct InferArgs {
  std::string data;
  std::string model;
  std::size_t index = 0;
  PipelineArgs pipeline;
};

struct AblateArgs {
  std::string data;
  std::string out;
  int epochs = 50;
  std::uint64_t seed = 1;
};

struct AttnArgs {
  std::string data;
  std::string model;
  std::string out;
  PipelineArgs pipeline;
};

struct TsneArgs {
  std::string data;
  std::string model;
  std::string out_dir;
  double perplexity = 30.0;
  int iterations = 1000;
  std::uint64_t seed = 1;
  PipelineArgs pipeline;
};

struct ScalogramArgs {
  std::string data;
  std::string out;
  std::string svg;
  std::size_t index = 0;
  int channel = 1;
  double fmin = 5.0;
  double fmax = 499.0;
  std::size_t n_freqs = 64;
  bool filtered = false;
};

struct ServeArgs {
  std::string data;
  std::string endpoint = "127.0.0.1:9100";
  double frame_ms = 50.0;
  bool no_pacing = false;
  float scale = 0.5f;
  std::vector<std::uint32_t> drop;
};

struct DecodeArgs {
  std::string model;
  std::string endpoint = "127.0.0.1:9100";
  std::string out;
  bool no_filter = false;
};

struct Command {
  std::string name;
  SynthArgs synth;
  TrainArgs train;
  EvalArgs eval;
  InferArgs infer;
  AblateArgs ablate;
  AttnArgs attn;
  TsneArgs tsne;
  ScalogramArgs scalogram;
  ServeArgs serve;
  DecodeArgs decode;
};

struct ParseOutcome {
  std::optional<Command> command;  // empty when parsing ended the run
  int exit_code = kExitOk;
};

// Defaults may come from a TOML file named by --config or EMG_SSI_CONFIG,
// one [section] per subcommand.
ParseOutcome parse_args(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

traineval::PipelineFlags pipeline_flags(const PipelineArgs& args);

// Runs one command. Output files written before a failure are removed.
int execute(const Command& command, std::ostream& out, std::ostream& err,
            const std::atomic<bool>* stop = nullptr);

}  // namespace emgssi::cli

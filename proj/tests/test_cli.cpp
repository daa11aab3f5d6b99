#include "cli.hpp"
#include "cli_runner.hpp"

#include "emgssi/model.hpp"

#include <doctest.h>

#include <cstdlib>
#include <regex>
#include <sstream>

namespace fs = std::filesystem;
using emgssi::cli::kExitOk;
using emgssi::cli::kExitRuntime;
using emgssi::cli::kExitUsage;

namespace {

emgssi::cli::ParseOutcome parse(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "emg_ssi");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  auto r = emgssi::cli::parse_args(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str() + out.str();
  return r;
}

std::string bin() {
  const char* b = std::getenv("EMG_SSI_BIN");
  REQUIRE_MESSAGE(b != nullptr, "EMG_SSI_BIN must point at the emg_ssi executable");
  return b;
}

// Small dataset and one-epoch model shared by the binary tests.
struct Fixture {
  fs::path dir;
  fs::path data;
  fs::path weights;
  Fixture() {
    dir = cli_runner::fresh_dir("emgssi_cli_fixture");
    data = dir / "small.emgd";
    weights = dir / "small.emgw";
    auto r = cli_runner::run(bin() + " synth --out " + data.string() + " --per-class 4 --seed 3");
    REQUIRE_MESSAGE(r.exit_code == 0, r.out);
    r = cli_runner::run(bin() + " train --data " + data.string() + " --out " + weights.string() +
                        " --epochs 1 --batch-size 8");
    REQUIRE_MESSAGE(r.exit_code == 0, r.out);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("synth arguments parse into the config") {
  fs::create_directories(fs::temp_directory_path() / "emgssi_parse");
  const std::string out = (fs::temp_directory_path() / "emgssi_parse" / "data.emgd").string();
  const auto r = parse({"synth", "--out", out, "--per-class", "100", "--coupling", "1,1,0.3,0.3", "--seed", "7"});
  REQUIRE(r.command);
  CHECK(r.exit_code == kExitOk);
  CHECK(r.command->name == "synth");
  CHECK(r.command->synth.per_class == 100);
  CHECK(r.command->synth.seed == 7);
  CHECK(r.command->synth.coupling == std::vector<float>{1.0f, 1.0f, 0.3f, 0.3f});
}

TEST_CASE("train arguments and defaults") {
  const auto dir = cli_runner::fresh_dir("emgssi_parse_train");
  const auto data = dir / "d.emgd";
  { std::ofstream(data) << "x"; }
  const auto r = parse({"train", "--data", data.string(), "--epochs", "50", "--out", (dir / "model.emgw").string()});
  REQUIRE(r.command);
  CHECK(r.command->train.epochs == 50);
  CHECK(r.command->train.batch_size == 32);
  CHECK(r.command->train.lr == doctest::Approx(1e-3));
  CHECK_FALSE(r.command->train.no_augment);
  CHECK(r.command->train.pipeline.channels == std::vector<int>{1, 2, 3, 4});
}

TEST_CASE("usage errors exit 2 and name the problem") {
  std::string err;
  auto r = parse({"train", "--out", "model.emgw"}, &err);
  CHECK_FALSE(r.command);
  CHECK(r.exit_code == kExitUsage);
  CHECK(err.find("--data") != std::string::npos);

  r = parse({}, &err);
  CHECK(r.exit_code == kExitUsage);

  r = parse({"synth", "--out", "x.emgd", "--bogus"}, &err);
  CHECK(r.exit_code == kExitUsage);
  CHECK(err.find("--bogus") != std::string::npos);

  r = parse({"synth", "--out", "/nonexistent_dir_emgssi/x.emgd"}, &err);
  CHECK(r.exit_code == kExitUsage);
  CHECK(err.find("does not exist") != std::string::npos);

  r = parse({"scalogram", "--data", "/nonexistent.emgd", "--out", "s.csv"}, &err);
  CHECK(r.exit_code == kExitUsage);

  r = parse({"--help"}, &err);
  CHECK_FALSE(r.command);
  CHECK(r.exit_code == kExitOk);
  CHECK(err.find("synth") != std::string::npos);
}

TEST_CASE("channel subsets map to masks") {
  emgssi::cli::PipelineArgs p;
  p.channels = {1, 3};
  p.no_filter = true;
  const auto f = emgssi::cli::pipeline_flags(p);
  CHECK_FALSE(f.filter_on);
  CHECK(f.channel_mask == std::array<bool, 4>{true, false, true, false});
  p.channels = {5};
  CHECK_THROWS(emgssi::cli::pipeline_flags(p));
}

TEST_CASE("config file supplies defaults, flags override") {
  const auto dir = cli_runner::fresh_dir("emgssi_cfg");
  const auto cfg = dir / "emg.toml";
  { std::ofstream(cfg) << "[synth]\nper-class = 12\nseed = 99\n"; }
  const std::string out = (dir / "d.emgd").string();
  auto r = parse({"--config", cfg.string(), "synth", "--out", out});
  REQUIRE(r.command);
  CHECK(r.command->synth.per_class == 12);
  CHECK(r.command->synth.seed == 99);
  r = parse({"--config", cfg.string(), "synth", "--out", out, "--seed", "5"});
  REQUIRE(r.command);
  CHECK(r.command->synth.seed == 5);

  ::setenv("EMG_SSI_CONFIG", cfg.string().c_str(), 1);
  r = parse({"synth", "--out", out});
  ::unsetenv("EMG_SSI_CONFIG");
  REQUIRE(r.command);
  CHECK(r.command->synth.per_class == 12);
}

TEST_CASE("binary: synth, train, eval, infer") {
  const auto& f = fixture();
  CHECK(fs::file_size(f.data) > 0);
  CHECK(fs::file_size(f.weights) > 0);

  auto r = cli_runner::run(bin() + " eval --data " + f.data.string() + " --model " + f.weights.string() +
                           " --confusion " + (f.dir / "cm.csv").string());
  REQUIRE_MESSAGE(r.exit_code == 0, r.out);
  CHECK(r.out.find("accuracy ") != std::string::npos);
  CHECK(r.out.find("on 10 test segments") != std::string::npos);
  CHECK(fs::exists(f.dir / "cm.csv"));

  r = cli_runner::run(bin() + " infer --data " + f.data.string() + " --model " + f.weights.string() + " --index 5");
  REQUIRE_MESSAGE(r.exit_code == 0, r.out);
  const std::regex prob_re("=([0-9.eE+-]+)");
  double sum = 0.0;
  int n = 0;
  const auto line = r.out.substr(r.out.find("probabilities"));
  for (auto it = std::sregex_iterator(line.begin(), line.end(), prob_re); it != std::sregex_iterator(); ++it) {
    const double p = std::stod((*it)[1].str());
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    sum += p;
    ++n;
  }
  CHECK(n == 10);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-4));

  r = cli_runner::run(bin() + " infer --data " + f.data.string() + " --model " + f.weights.string() +
                      " --index 4000");
  CHECK(r.exit_code == kExitRuntime);
  CHECK(r.out.find("error:") != std::string::npos);
}

TEST_CASE("binary: weights with another architecture are rejected") {
  const auto& f = fixture();
  auto cfg = emgssi::model::SeResNet1dConfig{};
  cfg.se_reduction = 4;
  auto other = emgssi::model::build_model(cfg, 1);
  const auto path = f.dir / "other.emgw";
  emgssi::model::save_weights(other, path.string());
  const auto r = cli_runner::run(bin() + " eval --data " + f.data.string() + " --model " + path.string());
  CHECK(r.exit_code == kExitRuntime);
  CHECK(r.out.find("mismatch") != std::string::npos);
  CHECK(r.out.find("se_reduction") != std::string::npos);
}

TEST_CASE("binary: outputs of a failed command are removed") {
  const auto& f = fixture();
  const auto good = f.dir / "partial.csv";
  fs::remove(good);
  const auto r = cli_runner::run(bin() + " scalogram --data " + f.data.string() + " --out " + good.string() +
                                 " --svg /proc/emgssi_not_writable.svg");
  CHECK(r.exit_code == kExitRuntime);
  CHECK_FALSE(fs::exists(good));
}

TEST_CASE("binary: inputs are never modified") {
  const auto& f = fixture();
  const std::string data_before = cli_runner::slurp(f.data);
  const std::string weights_before = cli_runner::slurp(f.weights);
  const auto d = f.data.string();
  const auto w = f.weights.string();
  const auto o = f.dir;
  const std::vector<std::string> commands = {
      " eval --data " + d + " --model " + w,
      " infer --data " + d + " --model " + w,
      " attn --data " + d + " --model " + w + " --out " + (o / "attn.csv").string(),
      " scalogram --data " + d + " --out " + (o / "s.csv").string() + " --svg " + (o / "s.svg").string(),
      " tsne --data " + d + " --model " + w + " --out-dir " + (o / "tsne").string() +
          " --perplexity 2 --iterations 100",
  };
  for (const auto& c : commands) {
    const auto r = cli_runner::run(bin() + c);
    INFO(c);
    CHECK_MESSAGE(r.exit_code == 0, r.out);
  }
  CHECK(fs::exists(o / "tsne" / "embedding_deep.csv"));
  CHECK(fs::exists(o / "tsne" / "embedding_raw.svg"));
  CHECK(cli_runner::slurp(f.data) == data_before);
  CHECK(cli_runner::slurp(f.weights) == weights_before);
}

TEST_CASE("binary: serve and decode over loopback") {
  const auto& f = fixture();
  const std::string serve_cmd = bin() + " serve --data " + f.data.string() + " --endpoint 127.0.0.1:0 --no-pacing";
  FILE* server = ::popen((serve_cmd + " 2>&1").c_str(), "r");
  REQUIRE(server != nullptr);
  char line[512] = {};
  REQUIRE(std::fgets(line, sizeof line, server) != nullptr);
  std::smatch m;
  const std::string first(line);
  REQUIRE_MESSAGE(std::regex_search(first, m, std::regex("listening on ([0-9.]+):([0-9]+)")), first);
  const auto csv = f.dir / "decode.csv";
  const auto r = cli_runner::run(bin() + " decode --model " + f.weights.string() + " --endpoint " + m[1].str() +
                                 ":" + m[2].str() + " --out " + csv.string());
  std::string rest;
  while (std::fgets(line, sizeof line, server)) rest += line;
  ::pclose(server);
  REQUIRE_MESSAGE(r.exit_code == 0, r.out);
  // 10 test segments of 3 s each.
  CHECK(r.out.find("window 9 ") != std::string::npos);
  CHECK(r.out.find("window 10 ") == std::string::npos);
  CHECK(r.out.find("gaps 0") != std::string::npos);
  CHECK(rest.find("sent ") != std::string::npos);
  const std::string text = cli_runner::slurp(csv);
  CHECK(std::count(text.begin(), text.end(), '\n') == 11);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "mpctc/harness.hpp"

using namespace mpctc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "mpctc_cli_work";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MPCTC_CLI_PATH) + " " + args +
                          " >" + (kWork / "stdout.txt").string() + " 2>" +
                          (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string read_stdout() {
  std::ifstream in(kWork / "stdout.txt");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_quick_config(const fs::path& path) {
  ExperimentConfig cfg;
  cfg.seed = 5;
  cfg.task.num_anchors = 4;
  cfg.task.num_homophone_pairs = 1;
  cfg.task.min_tokens = 3;
  cfg.task.max_tokens = 5;
  cfg.task.feature_dim = 8;
  cfg.task.num_train = 16;
  cfg.task.num_dev = 6;
  cfg.task.num_test = 6;
  cfg.task.num_text = 20;
  cfg.task.with_intents = true;
  cfg.encoder = AudioEncoderConfig{1, 8, 2, 16, 0};
  cfg.fusion = FusionConfig{1, 8, 2, 16};
  cfg.mlm = MlmConfig{1, 8, 2, 16};
  cfg.rnnt_joint_dim = 8;
  cfg.optim.steps = 40;
  cfg.mlm_optim.steps = 20;
  cfg.k_list = {1, 2};
  cfg.iterations = 2;
  cfg.out_dir = (kWork / "out").string();
  cfg.save(path.string());
}

}  // namespace

TEST_CASE("cli pipeline: generate, train, decode, evaluate, bench, attention") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const fs::path config = kWork / "config.json";
  write_quick_config(config);
  const std::string c = " --config " + config.string();

  CHECK(run_cli("generate" + c) == 0);
  CHECK(fs::exists(kWork / "out/data/task.json"));
  CHECK(fs::exists(kWork / "out/data/vocab.txt"));

  CHECK(run_cli("train" + c + " --family ctc") == 0);
  CHECK(fs::exists(kWork / "out/ctc.ckpt.json"));
  CHECK(run_cli("train" + c + " --family mlmctc") == 0);
  CHECK(fs::exists(kWork / "out/mlmctc.ckpt.json"));

  CHECK(run_cli("decode" + c + " --family mlmctc --split test --trace " +
                (kWork / "trace.jsonl").string()) == 0);
  CHECK(fs::exists(kWork / "trace.jsonl"));
  {
    std::ifstream trace(kWork / "trace.jsonl");
    std::string line;
    REQUIRE(std::getline(trace, line));
    const json rec = json::parse(line);
    CHECK(rec.contains("hypothesis"));
    CHECK(rec.contains("masked_positions"));
    CHECK(rec.contains("rendered"));
  }
  const std::string decoded = read_stdout();
  CHECK(decoded.find("test-0\t") != std::string::npos);

  CHECK(run_cli("evaluate" + c) == 0);
  REQUIRE(fs::exists(kWork / "out/report.json"));
  {
    std::ifstream in(kWork / "out/report.json");
    const json report = json::parse(in);
    CHECK(report.at("models").contains("ctc"));
    CHECK(report.at("models").contains("mlmctc"));
  }

  CHECK(run_cli("bench" + c + " --out " + (kWork / "bench.json").string()) ==
        0);
  {
    std::ifstream in(kWork / "bench.json");
    const json bench = json::parse(in);
    CHECK(bench.contains("ctc_rtf"));
    CHECK(bench.contains("mlmctc_rtf_k1"));
  }

  CHECK(run_cli("dump-attention" + c + " --family mlmctc") == 0);
  CHECK(fs::exists(kWork / "out/attention/boundaries.json"));
  CHECK(fs::exists(kWork / "out/attention/attn_l0_h0.csv"));
}

TEST_CASE("cli verify exits zero and reports properties") {
  fs::create_directories(kWork);
  CHECK(run_cli("verify --seed 7") == 0);
  const std::string out = read_stdout();
  CHECK(out.find("[PASS]") != std::string::npos);
  CHECK(out.find("[FAIL]") == std::string::npos);
}

TEST_CASE("cli contract violations exit nonzero") {
  fs::create_directories(kWork);
  // Missing config file.
  CHECK(run_cli("train --config /nonexistent.json --family ctc") == 1);
  // Config without a seed.
  const fs::path bad = kWork / "bad.json";
  std::ofstream(bad) << "{}";
  CHECK(run_cli("generate --config " + bad.string()) == 1);
  // Unknown family.
  const fs::path config = kWork / "config2.json";
  write_quick_config(config);
  CHECK(run_cli("train --config " + config.string() + " --family bert") ==
        1);
  // Training without a dataset.
  ExperimentConfig cfg = ExperimentConfig::from_file(config.string());
  cfg.out_dir = (kWork / "fresh").string();
  cfg.save(config.string());
  CHECK(run_cli("train --config " + config.string() + " --family ctc") == 1);
}

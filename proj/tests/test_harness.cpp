#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "mpctc/checkpoint.hpp"
#include "mpctc/harness.hpp"
#include "mpctc/verify.hpp"
#include "test_util.hpp"

using namespace mpctc;
using namespace mpctc::testing;
using nlohmann::json;

namespace {

// Desk-scale-but-quick config for harness mechanics (not for quality).
ExperimentConfig quick_config(uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.task.num_anchors = 4;
  cfg.task.num_homophone_pairs = 1;
  cfg.task.min_tokens = 3;
  cfg.task.max_tokens = 5;
  cfg.task.feature_dim = 8;
  cfg.task.num_train = 20;
  cfg.task.num_dev = 8;
  cfg.task.num_test = 8;
  cfg.task.num_text = 30;
  cfg.task.with_intents = true;
  cfg.encoder = AudioEncoderConfig{1, 8, 2, 16, 0};
  cfg.fusion = FusionConfig{1, 8, 2, 16};
  cfg.mlm = MlmConfig{1, 8, 2, 16};
  cfg.rnnt_joint_dim = 8;
  cfg.optim.steps = 60;
  cfg.mlm_optim.steps = 40;
  cfg.k_list = {1, 2};
  cfg.iterations = 2;
  return cfg;
}

}  // namespace

TEST_CASE("config json round trip keeps every field") {
  ExperimentConfig cfg = quick_config(9);
  cfg.lambda_ctc = 0.25;
  cfg.embedder = "mlm";
  cfg.out_dir = "elsewhere";
  const json j = cfg.to_json();
  const ExperimentConfig back = ExperimentConfig::from_json(j);
  CHECK(back.to_json() == j);
}

TEST_CASE("config requires a seed and valid weights") {
  json j = quick_config(1).to_json();
  j.erase("seed");
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

  json bad = quick_config(1).to_json();
  bad["lambda_ctc"] = 1.5;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  bad = quick_config(1).to_json();
  bad["embedder"] = "huge";
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
}

TEST_CASE("the shipped default config parses and matches the defaults") {
  const ExperimentConfig cfg =
      ExperimentConfig::from_file(std::string(MPCTC_SOURCE_DIR) +
                                  "/configs/default.json");
  const ExperimentConfig reference = [] {
    ExperimentConfig c;
    c.seed = 1;
    return c;
  }();
  CHECK(cfg.to_json() == reference.to_json());
}

TEST_CASE("training runs every family with finite losses") {
  ExperimentConfig cfg = quick_config(21);
  const Dataset ds = generate_dataset(cfg.task, cfg.seed);
  for (const std::string family :
       {std::string(kFamilyCtc), std::string(kFamilyRnnt),
        std::string(kFamilyMlmCtc), std::string(kFamilyMlmCtcSlu)}) {
    CAPTURE(family);
    ModelSet models = build_models(cfg, ds, family);
    const TrainOutput out = train_family(cfg, family, ds, models, "");
    CHECK(out.loss_curve.size() + out.skipped_samples == 60);
    for (double loss : out.loss_curve) CHECK(std::isfinite(loss));
  }
  ModelSet dummy;
  CHECK_THROWS_AS(train_family(cfg, "unknown", ds, dummy, ""), ConfigError);
}

TEST_CASE("training writes a checkpoint and a loss csv") {
  ExperimentConfig cfg = quick_config(22);
  const Dataset ds = generate_dataset(cfg.task, cfg.seed);
  const auto dir = std::filesystem::temp_directory_path() / "mpctc_train";
  std::filesystem::remove_all(dir);
  ModelSet models = build_models(cfg, ds, kFamilyCtc);
  const TrainOutput out = train_family(cfg, kFamilyCtc, ds, models,
                                       dir.string());
  CHECK(std::filesystem::exists(out.checkpoint_path));
  CHECK(std::filesystem::exists(dir / "ctc.loss.csv"));

  // Reloading the checkpoint into fresh models reproduces the posteriors.
  ModelSet fresh = build_models(cfg, ds, kFamilyCtc);
  ParameterSet combined;
  combined.absorb("", fresh.ctc->params());
  load_parameters(combined, out.checkpoint_path);
  CHECK(fresh.ctc->frame_posteriors(ds.test[0].features).log_probs ==
        models.ctc->frame_posteriors(ds.test[0].features).log_probs);
  std::filesystem::remove_all(dir);
}

TEST_CASE("resuming from a snapshot reproduces the next step bitwise") {
  ExperimentConfig cfg = quick_config(23);
  const Dataset ds = generate_dataset(cfg.task, cfg.seed);

  // Run A: 10 steps, snapshot, one more step.
  ModelSet a = build_models(cfg, ds, kFamilyCtc);
  Rng rng_a(cfg.seed * 104729 + 1);
  SgdState sgd_a{cfg.optim.learning_rate, cfg.optim.momentum, {}};
  int skipped = 0;
  for (int step = 0; step < 10; ++step) {
    train_one_step(cfg, kFamilyCtc, ds, a, rng_a, sgd_a, &skipped);
  }
  const auto path =
      (std::filesystem::temp_directory_path() / "mpctc_snap.json").string();
  TrainSnapshot snap;
  snap.step = 10;
  std::stringstream state;
  state << rng_a;
  snap.rng_state = state.str();
  snap.optimizer = sgd_a;
  save_parameters(a.ctc->params(), path);  // params only
  save_snapshot(a.ctc->params(), snap, path);
  const double next_a =
      train_one_step(cfg, kFamilyCtc, ds, a, rng_a, sgd_a, &skipped);

  // Run B: fresh models, restore, one step.
  ModelSet b = build_models(cfg, ds, kFamilyCtc);
  TrainSnapshot restored = load_snapshot(b.ctc->params(), path);
  Rng rng_b;
  std::stringstream replay(restored.rng_state);
  replay >> rng_b;
  SgdState sgd_b = restored.optimizer;
  const double next_b =
      train_one_step(cfg, kFamilyCtc, ds, b, rng_b, sgd_b, &skipped);
  CHECK(next_a == next_b);  // bitwise
  std::filesystem::remove(path);
}

TEST_CASE("scoring recomputes from stored pairs and flags empty references") {
  const Vocabulary vocab = abc_vocab(2);
  std::vector<ScoredPair> pairs;
  pairs.push_back({"u1", seq({2, 3, 2}), seq({2, 2}), {false, true, false}});
  pairs.push_back({"u2", seq({}), seq({2}), {}});
  const SplitScore score = score_pairs(vocab, pairs);
  CHECK(score.totals.total() == 2);  // one sub/del pair + one insertion
  CHECK(score.ref_tokens == 3);
  CHECK(score.empty_reference_seen);
  CHECK(score.ambiguous_positions == 1);

  // Identical pairs score zero.
  std::vector<ScoredPair> same;
  same.push_back({"u", seq({2, 3}), seq({2, 3}), {false, false}});
  CHECK(score_pairs(vocab, same).wer == doctest::Approx(0.0));
  CHECK(score_pairs(vocab, same).cer == doctest::Approx(0.0));
}

TEST_CASE("evaluate is deterministic after stripping wall-clock fields") {
  ExperimentConfig cfg = quick_config(31);
  const Dataset ds = generate_dataset(cfg.task, cfg.seed);
  ModelSet models = build_models(cfg, ds, kFamilyMlmCtc);
  train_family(cfg, kFamilyMlmCtc, ds, models, "");
  ModelSet ctc_models = build_models(cfg, ds, kFamilyCtc);
  train_family(cfg, kFamilyCtc, ds, ctc_models, "");
  models.ctc = std::move(ctc_models.ctc);

  const json r1 = evaluate(cfg, ds, models);
  const json r2 = evaluate(cfg, ds, models);
  CHECK(strip_timing(r1) == strip_timing(r2));
  CHECK(r1.at("models").contains("ctc"));
  CHECK(r1.at("models").contains("mlmctc"));

  // The per-k sweep covers the configured list.
  const auto& per_k = r1.at("models").at("mlmctc").at("per_k");
  REQUIRE(per_k.size() == cfg.k_list.size());
  for (std::size_t i = 0; i < cfg.k_list.size(); ++i) {
    CHECK(per_k[i].at("k").get<int>() == cfg.k_list[i]);
    CHECK(per_k[i].contains("rtf"));
  }

  // WER is recomputable from the stored utterance pairs.
  const auto& test_block = r1.at("models").at("ctc").at("test");
  std::vector<ScoredPair> pairs;
  for (const auto& u : test_block.at("utterances")) {
    TokenSequence ref, hyp;
    std::stringstream rs(u.at("ref").get<std::string>());
    std::string tok;
    while (rs >> tok) ref.ids.push_back(ds.vocab.id_of(tok));
    std::stringstream hs(u.at("hyp").get<std::string>());
    while (hs >> tok) hyp.ids.push_back(ds.vocab.id_of(tok));
    pairs.push_back({u.at("id").get<std::string>(), ref, hyp, {}});
  }
  CHECK(score_pairs(ds.vocab, pairs).wer ==
        doctest::Approx(test_block.at("wer").get<double>()));
}

TEST_CASE("aux-only conditioned run matches the ctc family statistically") {
  // With lambda_ctc = 1 the conditioned family optimizes only the encoder's
  // auxiliary CTC losses, the ctc family's configuration up to the final
  // head's vocabulary. Both runs must drive the shared intermediate
  // objective far below its starting point; absolute per-run loss values at
  // this scale differ by single-sample-SGD noise.
  ExperimentConfig cfg = quick_config(37);
  cfg.task.num_train = 40;
  cfg.optim.steps = 1500;
  cfg.lambda_ctc = 1.0;
  const Dataset ds = generate_dataset(cfg.task, cfg.seed);

  auto run = [&](const std::string& family) {
    ModelSet models = build_models(cfg, ds, family);
    Rng rng(cfg.seed * 104729 + 3);
    SgdState sgd{cfg.optim.learning_rate, cfg.optim.momentum, {}};
    double first = -1.0, tail = 0.0;
    int tail_n = 0;
    for (int step = 0; step < cfg.optim.steps; ++step) {
      std::uniform_int_distribution<std::size_t> pick(0, ds.train.size() - 1);
      const Utterance& utt = ds.train[pick(rng)];
      LossBreakdown b;
      ParameterSet* params = nullptr;
      if (family == kFamilyCtc) {
        b = models.ctc->training_loss(utt.features, utt.tokens,
                                      utt.small_tokens, 0.5);
        params = &models.ctc->params();
      } else {
        b = models.conditioned->training_loss(utt.features, utt.tokens,
                                              utt.small_tokens, rng, 1.0,
                                              0.5);
        params = &models.conditioned->params();
      }
      if (b.skipped) continue;
      if (first < 0) first = b.inter_ctc;
      GradientMap g = backward(scale(b.total_value, 1.0 / utt.features.rows),
                               *params);
      sgd_step(*params, g, sgd);
      if (step >= (cfg.optim.steps * 4) / 5) {
        tail += b.inter_ctc;
        ++tail_n;
      }
    }
    return std::pair<double, double>(first, tail / tail_n);
  };

  const auto [ctc_first, ctc_tail] = run(kFamilyCtc);
  const auto [cond_first, cond_tail] = run(kFamilyMlmCtc);
  CHECK(ctc_tail < 0.10 * ctc_first);
  CHECK(cond_tail < 0.10 * cond_first);
}

TEST_CASE("rtf benchmark reports every decoder on one worker") {
  ExperimentConfig cfg = quick_config(41);
  const Dataset ds = generate_dataset(cfg.task, cfg.seed);
  ModelSet models = build_models(cfg, ds, kFamilyMlmCtc);
  ModelSet ctc = build_models(cfg, ds, kFamilyCtc);
  models.ctc = std::move(ctc.ctc);
  const json bench = bench_rtf(cfg, ds, models, 4);
  CHECK(bench.contains("ctc_rtf"));
  CHECK(bench.contains("mlmctc_rtf_k1"));
  CHECK(bench.contains("mlmctc_rtf_k2"));
  CHECK(bench.at("ctc_rtf").get<double>() > 0.0);
}

TEST_CASE("attention dump writes matrices and a boundary sidecar") {
  ExperimentConfig cfg = quick_config(43);
  const Dataset ds = generate_dataset(cfg.task, cfg.seed);
  ModelSet models = build_models(cfg, ds, kFamilyMlmCtc);
  const auto dir = std::filesystem::temp_directory_path() / "mpctc_attn";
  std::filesystem::remove_all(dir);
  dump_attention(*models.conditioned, ds.test[0], dir.string());
  CHECK(std::filesystem::exists(dir / "attn_l0_h0.csv"));
  CHECK(std::filesystem::exists(dir / "boundaries.json"));
  std::ifstream side(dir / "boundaries.json");
  const json j = json::parse(side);
  const int t = ds.test[0].features.rows;
  const int n = ds.test[0].tokens.length();
  CHECK(j.at("rows").get<int>() == t + n + 1);
  CHECK(j.at("audio_end").get<int>() == t);
  CHECK(j.at("summary_index").get<int>() == t);
  CHECK(j.at("tokens_begin").get<int>() == t + 1);

  // Rows of the dumped matrix sum to one.
  std::ifstream csv(dir / "attn_l0_h0.csv");
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) {
    double sum = 0.0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) sum += std::stod(cell);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    ++rows;
  }
  CHECK(rows == t + n + 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("verify oracles passes on the reference seed") {
  const VerifyReport report = verify_oracles();
  CHECK(report.all_pass());
  CHECK(report.properties.size() >= 12);
  const json j = report.to_json();
  CHECK(j.at("all_pass").get<bool>());
}

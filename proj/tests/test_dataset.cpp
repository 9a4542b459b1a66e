#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mpctc/dataset.hpp"
#include "mpctc/harness.hpp"
#include "test_util.hpp"

using namespace mpctc;
using namespace mpctc::testing;

namespace {

SyntheticTaskSpec small_task() {
  SyntheticTaskSpec task;
  task.num_anchors = 4;
  task.num_homophone_pairs = 2;
  task.min_tokens = 5;
  task.max_tokens = 7;
  task.feature_dim = 8;
  task.num_train = 12;
  task.num_dev = 6;
  task.num_test = 6;
  task.num_text = 20;
  task.with_intents = true;
  return task;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("generated utterances follow the task structure") {
  const SyntheticTaskSpec task = small_task();
  const Dataset ds = generate_dataset(task, 5);
  CHECK(ds.train.size() == 12);
  CHECK(ds.dev.size() == 6);
  CHECK(ds.test.size() == 6);
  CHECK(ds.text.size() == 20);

  for (const auto& split : {"train", "dev", "test"}) {
    for (const Utterance& u : ds.split(split)) {
      REQUIRE(u.tokens.length() % 2 == 1);  // anchor-terminated
      CHECK(u.tokens.length() >= 5);
      CHECK(u.small_tokens.length() == u.tokens.length());
      int first_member = -1;
      for (int n = 0; n < u.tokens.length(); ++n) {
        const int id = u.tokens.ids[n];
        if (n % 2 == 0) {
          CHECK(task.is_anchor_id(id));
          CHECK_FALSE(u.ambiguous[n]);
        } else {
          CHECK(task.is_member_id(id));
          CHECK(u.ambiguous[n]);
          // One member index per utterance.
          if (first_member < 0) first_member = task.member_of(id);
          CHECK(task.member_of(id) == first_member);
        }
        CHECK(u.small_tokens.ids[n] == task.small_id_of(id));
      }
      // The member obeys the leading-bigram table.
      if (u.tokens.length() > 2) {
        const int want = task.correct_member(0, u.tokens.ids[0] - 2,
                                             u.tokens.ids[2] - 2);
        CHECK(first_member == want);
      }
      CHECK(u.intent == (u.tokens.ids[0] - 2) % task.num_intents);
      CHECK(u.features.cols == task.feature_dim);
      CHECK(u.features.rows >= u.tokens.length() * 2 + 2);
    }
  }
}

TEST_CASE("same seed gives byte-identical dataset files") {
  const SyntheticTaskSpec task = small_task();
  const auto dir1 = std::filesystem::temp_directory_path() / "mpctc_ds1";
  const auto dir2 = std::filesystem::temp_directory_path() / "mpctc_ds2";
  save_dataset(generate_dataset(task, 7), dir1.string());
  save_dataset(generate_dataset(task, 7), dir2.string());
  for (const char* name :
       {"vocab.txt", "small_vocab.txt", "task.json", "train.jsonl",
        "train.feats", "dev.jsonl", "dev.feats", "test.jsonl", "test.feats",
        "text.jsonl"}) {
    CHECK(read_file((dir1 / name).string()) ==
          read_file((dir2 / name).string()));
  }
  // A different seed changes the data.
  save_dataset(generate_dataset(task, 8), dir2.string());
  CHECK(read_file((dir1 / "train.feats").string()) !=
        read_file((dir2 / "train.feats").string()));
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("dataset save and load round trip") {
  const SyntheticTaskSpec task = small_task();
  const Dataset ds = generate_dataset(task, 11);
  const auto dir = std::filesystem::temp_directory_path() / "mpctc_ds_rt";
  save_dataset(ds, dir.string());
  const Dataset loaded = load_dataset(dir.string());
  REQUIRE(loaded.train.size() == ds.train.size());
  REQUIRE(loaded.text.size() == ds.text.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(loaded.train[i].id == ds.train[i].id);
    CHECK(loaded.train[i].tokens == ds.train[i].tokens);
    CHECK(loaded.train[i].small_tokens == ds.train[i].small_tokens);
    CHECK(loaded.train[i].intent == ds.train[i].intent);
    CHECK(loaded.train[i].features.data == ds.train[i].features.data);
  }
  CHECK(loaded.text[3] == ds.text[3]);
  CHECK(loaded.class_embeddings.data == ds.class_embeddings.data);
  std::filesystem::remove_all(dir);
}

TEST_CASE("homophone members share their class and clean features") {
  const SyntheticTaskSpec task = small_task();
  for (int p = 0; p < task.num_homophone_pairs; ++p) {
    CHECK(task.class_of(task.member_id(p, 0)) ==
          task.class_of(task.member_id(p, 1)));
    CHECK(task.small_id_of(task.member_id(p, 0)) ==
          task.small_id_of(task.member_id(p, 1)));
  }
  // Anchors each own a class.
  for (int a = 1; a < task.num_anchors; ++a) {
    CHECK(task.class_of(task.anchor_id(a)) !=
          task.class_of(task.anchor_id(a - 1)));
  }
}

TEST_CASE("class embeddings are orthonormal") {
  const Dataset ds = generate_dataset(small_task(), 13);
  const Tensor& e = ds.class_embeddings;
  for (int i = 0; i < e.rows; ++i) {
    for (int j = 0; j <= i; ++j) {
      double dot = 0.0;
      for (int d = 0; d < e.cols; ++d) dot += e.at(i, d) * e.at(j, d);
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("context rule is total and consistent with generation") {
  const SyntheticTaskSpec task = small_task();
  const Dataset ds = generate_dataset(task, 17);
  Rng rng(23);
  for (const Utterance& u : ds.dev) {
    MaskedSequence masked = sample_training_mask(u.tokens, rng);
    for (int pos = 0; pos < masked.length(); ++pos) {
      const std::vector<double> posterior =
          task.context_posterior(masked, pos);
      REQUIRE(static_cast<int>(posterior.size()) == ds.vocab.size());
      double sum = 0.0;
      for (double p : posterior) {
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(sum == doctest::Approx(1.0));
      if (masked.observed[pos]) {
        CHECK(posterior[masked.ids[pos]] == doctest::Approx(1.0));
      }
    }
    // Fully observed context pins every member slot on the truth.
    MaskedSequence one_masked = MaskedSequence::all_observed(u.tokens);
    one_masked.ids[1] = Vocabulary::kMaskId;
    one_masked.observed[1] = false;
    const auto posterior = task.context_posterior(one_masked, 1);
    double truth_mass = 0.0;
    for (int p = 0; p < task.num_homophone_pairs; ++p) {
      const int member = task.member_of(u.tokens.ids[1]);
      truth_mass += posterior[task.member_id(p, member)];
    }
    CHECK(truth_mass == doctest::Approx(1.0));
  }
}

TEST_CASE("context table is fixed across dataset seeds") {
  const SyntheticTaskSpec task = small_task();
  for (int p = 0; p < task.num_homophone_pairs; ++p) {
    for (int l = 0; l < task.num_anchors; ++l) {
      for (int r = 0; r < task.num_anchors; ++r) {
        const int m = task.correct_member(p, l, r);
        CHECK((m == 0 || m == 1));
        CHECK(task.correct_member(p, l, r) == m);
      }
    }
  }
  CHECK_THROWS_AS(task.correct_member(0, -1, 0), ContractError);
  CHECK_THROWS_AS(task.correct_member(0, 0, task.num_anchors), ContractError);
}

TEST_CASE("clean single-anchor task reaches zero error after training") {
  // No homophones, no noise: the sanity ceiling for plain recognition.
  SyntheticTaskSpec task;
  task.num_anchors = 3;
  task.num_homophone_pairs = 0;
  task.min_tokens = 1;
  task.max_tokens = 1;
  task.min_frames_per_token = 2;
  task.max_frames_per_token = 3;
  task.feature_dim = 6;
  task.noise_stddev = 0.0;
  task.num_train = 30;
  task.num_dev = 10;
  task.num_test = 10;
  task.num_text = 1;

  ExperimentConfig cfg;
  cfg.seed = 3;
  cfg.task = task;
  cfg.encoder = AudioEncoderConfig{1, 8, 2, 16, 0};
  cfg.optim.steps = 400;
  cfg.validate();
  const Dataset ds = generate_dataset(task, cfg.seed);
  ModelSet models = build_models(cfg, ds, kFamilyCtc);
  train_family(cfg, kFamilyCtc, ds, models, "");
  std::vector<ScoredPair> pairs;
  for (const auto& u : ds.test) {
    pairs.push_back({u.id, u.tokens,
                     decode_ctc_baseline(*models.ctc, u.features),
                     u.ambiguous});
  }
  CHECK(score_pairs(ds.vocab, pairs).wer == doctest::Approx(0.0));
}

TEST_CASE("bad task specs are rejected") {
  SyntheticTaskSpec task = small_task();
  task.feature_dim = 2;
  CHECK_THROWS_AS(task.validate(), ConfigError);
  task = small_task();
  task.min_tokens = 5;
  task.max_tokens = 3;
  CHECK_THROWS_AS(task.validate(), ConfigError);
  task = small_task();
  task.num_homophone_pairs = 0;
  CHECK_THROWS_AS(task.validate(), ConfigError);
  task = small_task();
  task.silence_prob = 1.5;
  CHECK_THROWS_AS(task.validate(), ConfigError);
}

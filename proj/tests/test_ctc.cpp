#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sstream>

#include "doctest.h"
#include "mpctc/gradcheck.hpp"
#include "test_util.hpp"

using namespace mpctc;
using namespace mpctc::testing;

namespace {
constexpr int kBlank = Vocabulary::kBlankId;
constexpr int A = 2, B = 3;
}  // namespace

TEST_CASE("forced single-frame alignment has zero loss") {
  FramePosteriors post(1, 4);
  post.at(0, A) = 0.0;  // log 1
  const CtcLossResult res = ctc_loss(post, seq({A}));
  CHECK(res.feasible);
  CHECK(res.loss == doctest::Approx(0.0));
}

TEST_CASE("uniform-row losses match the enumeration oracle values") {
  // T=3, w=(a): 6 alignments of probability (1/3)^3 each.
  const CtcLossResult res3 = ctc_loss(uniform_posteriors(3, 2), seq({A}));
  CHECK(res3.loss == doctest::Approx(-std::log(6.0 / 27.0)).epsilon(1e-12));
  CHECK(res3.loss == doctest::Approx(1.50408).epsilon(1e-5));
  // T=2, w=(a,b): exactly one alignment.
  const CtcLossResult res2 = ctc_loss(uniform_posteriors(2, 2), seq({A, B}));
  CHECK(res2.loss == doctest::Approx(-std::log(1.0 / 9.0)).epsilon(1e-12));
  CHECK(res2.loss == doctest::Approx(2.19722).epsilon(1e-5));
}

TEST_CASE("loss equals brute force over enumerated alignments") {
  const Vocabulary vocab = abc_vocab(3);
  Rng rng(1234);
  std::uniform_int_distribution<int> t_dist(1, 6), len(0, 4), tok(2, 4);
  int feasible_cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int t = t_dist(rng);
    const FramePosteriors post = random_posteriors(t, 3, rng);
    TokenSequence w;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) w.ids.push_back(tok(rng));
    const CtcLossResult res = ctc_loss(post, w);
    if (t < min_frames_for(w)) {
      CHECK_FALSE(res.feasible);
      CHECK(std::isinf(res.loss));
      continue;
    }
    ++feasible_cases;
    const double oracle = brute_force_ctc_nll(post, w, vocab);
    CHECK(std::abs(res.loss - oracle) < 1e-9);
  }
  CHECK(feasible_cases > 100);
}

TEST_CASE("probability bound: exp(-loss) <= 1") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const FramePosteriors post = random_posteriors(4, 3, rng);
    const CtcLossResult res = ctc_loss(post, seq({A, B}));
    CHECK(res.loss >= -1e-12);
  }
}

TEST_CASE("monotone feasibility in the frame count") {
  Rng rng(78);
  std::uniform_int_distribution<int> len(1, 3), tok(2, 4), t_dist(1, 6);
  for (int trial = 0; trial < 60; ++trial) {
    TokenSequence w;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) w.ids.push_back(tok(rng));
    const int t = t_dist(rng);
    const bool feasible_t =
        ctc_loss(random_posteriors(t, 3, rng), w).feasible;
    const bool feasible_t1 =
        ctc_loss(random_posteriors(t + 1, 3, rng), w).feasible;
    if (feasible_t) CHECK(feasible_t1);
  }
}

TEST_CASE("gradient matches central finite differences") {
  Rng rng(99);
  FiniteDiffChecker fd;
  for (int trial = 0; trial < 8; ++trial) {
    std::uniform_int_distribution<int> t_dist(2, 6);
    const int t = t_dist(rng);
    Tensor logits = random_normal(t, 5, 1.0, rng);
    TokenSequence w = seq({A, B});
    const auto loss = [&]() {
      return ctc_loss(posteriors_from_logits(logits), w).loss;
    };
    const CtcLossResult res = ctc_loss(posteriors_from_logits(logits), w);
    Tensor grad(t, 5);
    grad.data = res.grad_logits;
    fd.check_tensor(loss, logits, grad);
  }
  CHECK(fd.max_rel_err < 1e-4);
  CHECK(fd.checked > 50);
}

TEST_CASE("gradient rows sum to zero and occupancies to one") {
  Rng rng(120);
  for (int trial = 0; trial < 25; ++trial) {
    const FramePosteriors post = random_posteriors(5, 3, rng);
    const CtcLossResult res = ctc_loss(post, seq({A, B}));
    REQUIRE(res.feasible);
    for (int t = 0; t < 5; ++t) {
      double grad_sum = 0.0, occ_sum = 0.0;
      for (int v = 0; v < post.vocab_size; ++v) {
        grad_sum += res.grad_logits[t * post.vocab_size + v];
        occ_sum += res.occupancy[t * post.vocab_size + v];
      }
      CHECK(std::abs(grad_sum) < 1e-6);
      CHECK(occ_sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("infeasible target flags instead of throwing") {
  const CtcLossResult res = ctc_loss(uniform_posteriors(1, 2), seq({A, B}));
  CHECK_FALSE(res.feasible);
  CHECK(std::isinf(res.loss));
  for (double g : res.grad_logits) CHECK(g == 0.0);
}

TEST_CASE("intermediate loss delegates to the same computation") {
  Rng rng(7);
  const FramePosteriors post = random_posteriors(3, 2, rng);
  const CtcLossResult a = ctc_loss(post, seq({A}));
  const CtcLossResult b = intermediate_ctc_loss(post, seq({A}));
  CHECK(a.loss == b.loss);
  CHECK(a.grad_logits == b.grad_logits);
  CHECK(intermediate_ctc_loss(uniform_posteriors(3, 2), seq({A})).loss ==
        doctest::Approx(1.50408).epsilon(1e-5));
  CHECK_FALSE(intermediate_ctc_loss(uniform_posteriors(1, 2), seq({A, A}))
                  .feasible);
}

TEST_CASE("best path takes per-frame argmax with low-id ties") {
  FramePosteriors post = peaked_posteriors({A, A, kBlank, B}, 4);
  auto [alignment, tokens] = best_path_decode(post);
  CHECK(alignment == ali({A, A, kBlank, B}));
  CHECK(tokens == seq({A, B}));

  FramePosteriors blanks = peaked_posteriors({kBlank, kBlank}, 4);
  CHECK(best_path_decode(blanks).second == seq({}));

  // Exact tie between blank (id 0) and a: blank wins.
  FramePosteriors tie(1, 4);
  tie.at(0, kBlank) = std::log(0.4);
  tie.at(0, A) = std::log(0.4);
  tie.at(0, B) = std::log(0.2);
  CHECK(best_path_decode(tie).first == ali({kBlank}));
}

TEST_CASE("hierarchical composition arithmetic") {
  CHECK(compose_hierarchical_loss(2, 4, 6, 0.3, 0.5) ==
        doctest::Approx(2.9));
  CHECK(compose_hierarchical_loss(2, 4, 6, 0.0, 0.5) == doctest::Approx(2.0));
  CHECK(compose_hierarchical_loss(123, 4, 6, 1.0, 0.5) ==
        doctest::Approx(5.0));
  // With lambda_ctc = 1 the main term is ignored even when infinite.
  CHECK(compose_hierarchical_loss(std::numeric_limits<double>::infinity(), 4,
                                  6, 1.0, 0.5) == doctest::Approx(5.0));
  CHECK_THROWS_AS(compose_hierarchical_loss(1, 2, 3, 1.2, 0.5), ConfigError);
  CHECK_THROWS_AS(compose_hierarchical_loss(1, 2, 3, 0.3, -0.1), ConfigError);
}

TEST_CASE("posterior grid validation") {
  FramePosteriors bad(2, 3);
  bad.at(0, 0) = 0.0;
  bad.at(0, 2) = 0.0;  // row sums to 2
  bad.at(1, 0) = 0.0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  Rng rng(5);
  CHECK_NOTHROW(random_posteriors(4, 2, rng).validate());
  CHECK_NOTHROW(uniform_posteriors(3, 2).validate());
}

TEST_CASE("posterior csv round trip") {
  Rng rng(15);
  const FramePosteriors post = random_posteriors(4, 2, rng);
  std::stringstream ss;
  post.save_csv(ss);
  const FramePosteriors loaded = FramePosteriors::load_csv(ss);
  REQUIRE(loaded.t_frames == post.t_frames);
  REQUIRE(loaded.vocab_size == post.vocab_size);
  for (std::size_t i = 0; i < post.log_probs.size(); ++i) {
    CHECK(loaded.log_probs[i] == post.log_probs[i]);
  }
  // -inf cells survive the trip.
  std::stringstream ss2;
  uniform_posteriors(2, 2).save_csv(ss2);
  const FramePosteriors uni = FramePosteriors::load_csv(ss2);
  CHECK(uni.at(0, Vocabulary::kMaskId) == kNegInf);
}

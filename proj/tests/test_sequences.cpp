#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <set>

#include "doctest.h"
#include "test_util.hpp"

using namespace mpctc;
using namespace mpctc::testing;

namespace {
constexpr int kBlank = Vocabulary::kBlankId;
constexpr int kMask = Vocabulary::kMaskId;
constexpr int A = 2, B = 3;
}  // namespace

TEST_CASE("vocabulary reserves blank and mask") {
  Vocabulary v = abc_vocab();
  CHECK(v.size() == 5);
  CHECK(v.num_regular() == 3);
  CHECK(v.token(kBlank) == "<blank>");
  CHECK(v.token(kMask) == "<mask>");
  CHECK(v.id_of("a") == 2);
  CHECK(v.id_of("zz") == -1);
  CHECK_THROWS_AS(Vocabulary::from_regular({"a", "a"}), ContractError);
}

TEST_CASE("vocabulary file round trip") {
  Vocabulary v = abc_vocab();
  const std::string path =
      (std::filesystem::temp_directory_path() / "vocab_rt.txt").string();
  v.save(path);
  Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(loaded.token(i) == v.token(i));
  std::filesystem::remove(path);
}

TEST_CASE("ctc collapse merges repeats then strips blanks") {
  CHECK(collapse_ctc(ali({A, A, kBlank, A, B, B})) == seq({A, A, B}));
  CHECK(collapse_ctc(ali({kBlank, kBlank, kBlank})) == seq({}));
  CHECK(collapse_ctc(ali({A, kBlank, A})) == seq({A, A}));
  CHECK(collapse_ctc(ali({})) == seq({}));
  CHECK_THROWS_AS(collapse_ctc(ali({A, kMask})), ContractError);
}

TEST_CASE("collapse is idempotent on its canonically embedded output") {
  Rng rng(9);
  std::uniform_int_distribution<int> len(0, 6), sym(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    Alignment a;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      int s = sym(rng);
      a.ids.push_back(s == 1 ? 0 : s);  // skip the mask id
    }
    TokenSequence once = collapse_ctc(a);
    // Embed with a blank between equal neighbors, the shortest alignment
    // whose collapse is `once`.
    Alignment embedded;
    for (std::size_t i = 0; i < once.ids.size(); ++i) {
      if (i > 0 && once.ids[i] == once.ids[i - 1]) {
        embedded.ids.push_back(kBlank);
      }
      embedded.ids.push_back(once.ids[i]);
    }
    CHECK(collapse_ctc(embedded) == once);
  }
}

TEST_CASE("rnnt collapse strips blanks without merging") {
  CHECK(collapse_rnnt(RnntAlignment({kBlank, A, A, kBlank}, 2)) ==
        seq({A, A}));
  CHECK(collapse_rnnt(RnntAlignment({kBlank, kBlank}, 2)) == seq({}));
  CHECK(collapse_rnnt(RnntAlignment({A, kBlank, B, kBlank}, 2)) ==
        seq({A, B}));
  CHECK_THROWS_AS(collapse_rnnt(RnntAlignment({A, kBlank}, 2)), ContractError);
}

TEST_CASE("alignment enumeration matches the hand counts") {
  Vocabulary v = abc_vocab(2);
  CHECK(enumerate_ctc_alignments(seq({A}), 3, v).size() == 6);
  auto ab = enumerate_ctc_alignments(seq({A, B}), 2, v);
  REQUIRE(ab.size() == 1);
  CHECK(ab.front() == ali({A, B}));
  CHECK(enumerate_ctc_alignments(seq({A, A}), 2, v).empty());
}

TEST_CASE("enumeration guard fails loudly") {
  Vocabulary v = abc_vocab(2);
  CHECK_THROWS_AS(enumerate_ctc_alignments(seq({A}), 9, v),
                  OracleTooLargeError);
  Vocabulary wide = Vocabulary::from_regular({"a", "b", "c", "d", "e"});
  CHECK_THROWS_AS(enumerate_ctc_alignments(seq({A}), 3, wide),
                  OracleTooLargeError);
}

TEST_CASE("enumeration round trip and feasibility rule") {
  Vocabulary v = abc_vocab(2);
  Rng rng(411);
  for (int trial = 0; trial < 40; ++trial) {
    std::uniform_int_distribution<int> len(0, 3), tok(2, 3), frames(1, 5);
    TokenSequence w;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) w.ids.push_back(tok(rng));
    const int t = frames(rng);
    const auto all = enumerate_ctc_alignments(w, t, v);
    for (const Alignment& a : all) {
      CHECK(collapse_ctc(a) == w);
      CHECK(a.frames() == t);
    }
    CHECK(all.empty() == (t < min_frames_for(w)));
    std::set<Alignment> dedup(all.begin(), all.end());
    CHECK(dedup.size() == all.size());
  }
}

TEST_CASE("edit distance hand cases") {
  CHECK(edit_distance(seq({A, B, 4}), seq({A, 4})) == (EditCounts{0, 0, 1}));
  CHECK(edit_distance(seq({A, B}), seq({A, B})) == (EditCounts{0, 0, 0}));
  CHECK(edit_distance(seq({A, B}), seq({B, A})).total() == 2);
  CHECK(wer(edit_distance(seq({A, B, 4}), seq({A, 4})), 3) ==
        doctest::Approx(1.0 / 3));
  // Empty-reference convention: denominator clamps to 1.
  CHECK(wer(edit_distance(seq({}), seq({A, B})), 0) == doctest::Approx(2.0));
}

TEST_CASE("edit distance metric properties") {
  Rng rng(52);
  std::uniform_int_distribution<int> len(0, 5), tok(2, 4);
  auto random_seq = [&]() {
    TokenSequence s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) s.ids.push_back(tok(rng));
    return s;
  };
  for (int trial = 0; trial < 300; ++trial) {
    const TokenSequence a = random_seq(), b = random_seq(), c = random_seq();
    const int ab = edit_distance(a, b).total();
    CHECK(ab == edit_distance(b, a).total());
    CHECK(ab <= edit_distance(a, c).total() + edit_distance(c, b).total());
    CHECK(edit_distance(a, a).total() == 0);
  }
}

TEST_CASE("edit alignment maps reference positions") {
  const auto aligned = edit_alignment(seq({A, B, 4}), seq({A, 4}));
  REQUIRE(aligned.size() == 3);
  CHECK(aligned[0] == A);
  CHECK(aligned[2] == 4);
  CHECK(aligned[1] == -1);
}

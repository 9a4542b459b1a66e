#pragma once

#include <string>
#include <vector>

#include "mpctc/models.hpp"

namespace mpctc {

// Synthetic recognition task: anchors at even positions with distinct
// acoustic classes, homophone slots at odd positions where the two pair
// members produce identical clean features. The correct member is a fixed
// pseudo-random function of (pair, left anchor, right anchor), so it is
// recoverable only through that context rule. The rule's table is big
// enough that the small paired training set underdetermines it, while the
// text-only pool (used to pre-train the contextual embedder) covers it
// many times over.
struct SyntheticTaskSpec {
  int num_anchors = 12;
  int num_homophone_pairs = 2;
  int min_tokens = 5;   // rounded up to odd so every slot has both anchors
  int max_tokens = 9;
  int min_frames_per_token = 2;
  int max_frames_per_token = 3;
  int feature_dim = 17;
  double noise_stddev = 0.25;
  double silence_prob = 0.2;  // chance of a silence frame between tokens
  int num_train = 800;
  int num_dev = 60;
  int num_test = 60;
  int num_text = 6000;  // text-only sequences for embedder pre-training
  bool with_intents = false;
  int num_intents = 3;  // intent = first anchor index mod num_intents

  void validate() const;

  int num_classes() const { return 1 + num_anchors + num_homophone_pairs; }
  Vocabulary build_vocab() const;
  Vocabulary build_small_vocab() const;

  // Full-vocabulary id helpers.
  int anchor_id(int anchor) const { return 2 + anchor; }
  int member_id(int pair, int member) const {
    return 2 + num_anchors + 2 * pair + member;
  }
  bool is_anchor_id(int id) const {
    return id >= 2 && id < 2 + num_anchors;
  }
  bool is_member_id(int id) const {
    return id >= 2 + num_anchors &&
           id < 2 + num_anchors + 2 * num_homophone_pairs;
  }
  // Acoustic class of a full-vocabulary token (0 is silence).
  int class_of(int id) const;
  // Small-vocabulary id of a full-vocabulary token.
  int small_id_of(int id) const;
  // Member index (0 or 1) of a pair-member token.
  int member_of(int id) const { return (id - 2 - num_anchors) % 2; }

  // The context rule's table: fixed given the task shape (independent of
  // the dataset seed, the way a language is fixed across corpora).
  int correct_member(int pair, int left_anchor, int right_anchor) const;

  // Posterior over full-vocabulary ids for a (possibly masked) position.
  std::vector<double> context_posterior(const MaskedSequence& masked,
                                        int pos) const;
  ContextRule context_rule() const;
  // Structured rows: class one-hot plus a pair-shared member flag, so
  // mixing over pairs keeps the member feature crisp.
  Tensor oracle_embedding_table() const;
};

struct Utterance {
  std::string id;
  Tensor features;  // T x feature_dim
  TokenSequence tokens;
  TokenSequence small_tokens;
  std::vector<bool> ambiguous;  // per token position: homophone slot?
  int intent = -1;
};

struct Dataset {
  SyntheticTaskSpec spec;
  Vocabulary vocab;
  Vocabulary small_vocab;
  Tensor class_embeddings;  // num_classes orthonormal rows
  std::vector<Utterance> train, dev, test;
  std::vector<TokenSequence> text;  // embedder pre-training pool

  const std::vector<Utterance>& split(const std::string& name) const;
};

// Splits draw from disjoint seed-derived streams; identical seeds give
// byte-identical datasets.
Dataset generate_dataset(const SyntheticTaskSpec& spec, uint64_t seed);

// JSON-lines manifests plus flat binary feature files with a shape header.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace mpctc

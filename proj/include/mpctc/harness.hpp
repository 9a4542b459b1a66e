#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "mpctc/dataset.hpp"
#include "mpctc/decoder.hpp"

namespace mpctc {

struct OptimConfig {
  double learning_rate = 0.02;
  double momentum = 0.9;
  int steps = 12000;
  // Global L2 clip applied to each step's gradient map (0 disables). The
  // lattice losses sum over frames, so raw gradient norms scale with T.
  double max_grad_norm = 5.0;
};

// One config drives generation, training, decoding and evaluation; the seed
// is mandatory so every run is replayable.
struct ExperimentConfig {
  SyntheticTaskSpec task;
  AudioEncoderConfig encoder;
  FusionConfig fusion;
  MlmConfig mlm;
  int rnnt_joint_dim = 32;
  double lambda_ctc = 0.3;
  double lambda_ic = 0.5;
  double lambda_slu = 1.0;
  OptimConfig optim;
  OptimConfig mlm_optim{0.05, 0.0, 25000, 5.0};
  uint64_t seed = 0;
  int iterations = 20;  // decode K
  std::vector<int> k_list{1, 5, 10, 20};
  std::string embedder = "oracle";  // "oracle" or "mlm"
  int rnnt_max_tokens_per_frame = 5;
  double frame_period_seconds = 0.01;
  std::string out_dir = "out";

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);  // seed required
  static ExperimentConfig from_file(const std::string& path);
  void save(const std::string& path) const;
};

// Families accepted by train/decode/evaluate.
inline constexpr const char* kFamilyCtc = "ctc";
inline constexpr const char* kFamilyRnnt = "rnnt";
inline constexpr const char* kFamilyMlmCtc = "mlmctc";
inline constexpr const char* kFamilyMlmCtcSlu = "mlmctc-slu";

bool family_known(const std::string& family);

// Bundled trained models; absent members were not trained.
struct ModelSet {
  std::unique_ptr<CtcBaselineModel> ctc;
  std::unique_ptr<RnntBaselineModel> rnnt;
  std::unique_ptr<ConditionedCtcModel> conditioned;  // mlmctc / mlmctc-slu
};

// Deterministic model construction from the config seed (parameters
// initialized, nothing trained yet). The conditioned model's embedder comes
// from cfg.embedder; "mlm" builds an untrained ToyMlm.
ModelSet build_models(const ExperimentConfig& cfg, const Dataset& ds,
                      const std::string& family);

struct TrainOutput {
  std::vector<double> loss_curve;  // per step identity, +inf rows skipped
  int skipped_samples = 0;
  std::string checkpoint_path;  // empty when not written
};

// Fixed-step training for one family; writes checkpoint + per-step loss CSV
// under out_dir when out_dir is nonempty. Throws on NaN with the step index.
TrainOutput train_family(const ExperimentConfig& cfg,
                         const std::string& family, const Dataset& ds,
                         ModelSet& models, const std::string& out_dir);

// Single training step (used by the resume test); returns the loss.
double train_one_step(const ExperimentConfig& cfg, const std::string& family,
                      const Dataset& ds, ModelSet& models, Rng& rng,
                      SgdState& sgd, int* skipped);

// Scoring helpers.
struct ScoredPair {
  std::string id;
  TokenSequence ref;
  TokenSequence hyp;
  std::vector<bool> ambiguous;
};

struct SplitScore {
  EditCounts totals;
  int ref_tokens = 0;
  double wer = 0.0;
  double cer = 0.0;
  int ambiguous_positions = 0;
  int ambiguous_errors = 0;
  bool empty_reference_seen = false;  // WER denominator clamped to 1

  double ambiguous_error_rate() const {
    return ambiguous_positions == 0
               ? 0.0
               : double(ambiguous_errors) / ambiguous_positions;
  }
};

SplitScore score_pairs(const Vocabulary& vocab,
                       const std::vector<ScoredPair>& pairs);

// Full evaluation: decodes every present model on dev and test, sweeps the
// conditioned decoder over k_list, measures RTF (reported but excluded from
// determinism comparisons) and returns a JSON report.
nlohmann::json evaluate(const ExperimentConfig& cfg, const Dataset& ds,
                        ModelSet& models);

// Report minus wall-clock fields, for determinism comparisons.
nlohmann::json strip_timing(nlohmann::json report);

// Decode-time benchmark (single worker): RTF for the CTC baseline, the
// transducer baseline and the conditioned decoder at K = 1 and K = cfg.iterations.
nlohmann::json bench_rtf(const ExperimentConfig& cfg, const Dataset& ds,
                         ModelSet& models, int max_utterances = 10);

// Attention matrices of the fused stack for one utterance: one CSV per
// layer/head plus a JSON sidecar recording the stream boundaries.
void dump_attention(const ConditionedCtcModel& model, const Utterance& utt,
                    const std::string& out_dir);

}  // namespace mpctc

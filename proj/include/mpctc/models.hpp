#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mpctc/autodiff.hpp"
#include "mpctc/ctc.hpp"
#include "mpctc/masking.hpp"
#include "mpctc/rnnt.hpp"

namespace mpctc {

// ---- configs --------------------------------------------------------------

struct AudioEncoderConfig {
  int layers = 2;
  int model_dim = 32;
  int heads = 2;
  int feedforward_dim = 64;
  int tap_layer = 0;  // block index whose output feeds the intermediate head

  void validate() const;
};

struct FusionConfig {
  int layers = 2;
  int model_dim = 48;
  int heads = 4;
  int feedforward_dim = 96;

  void validate() const;
};

struct MlmConfig {
  int layers = 3;
  int model_dim = 48;
  int heads = 4;
  int feedforward_dim = 96;

  void validate() const;
};

// ---- shared pieces ----------------------------------------------------------

// Sinusoidal position table, one row per position.
Tensor sinusoidal_positions(int length, int dim);

// log-softmax over rows of a raw logit matrix (pure math, no tape).
FramePosteriors posteriors_from_logits(const Tensor& logits);

// Pre-norm transformer encoder stack; parameters registered under `prefix`.
struct TransformerStack {
  std::string prefix;
  int layers = 0;
  int model_dim = 0;
  int heads = 0;
  int feedforward_dim = 0;

  void init(ParameterSet& ps, Rng& rng) const;
  // attention_out, when given, receives per-layer, per-head weights.
  // tap_out, when given, receives the output of block `tap_layer`.
  Value forward(const ParameterSet& ps, Value x,
                std::vector<std::vector<Tensor>>* attention_out = nullptr,
                int tap_layer = -1, Value* tap_out = nullptr) const;
};

// ---- contextual embedder contract -------------------------------------------

// Maps a masked token sequence to one embedding row per position.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  virtual Value embed(const MaskedSequence& masked) const = 0;
  virtual bool frozen() const = 0;
  virtual ParameterSet* parameters() { return nullptr; }
};

// Posterior over vocabulary ids for one (possibly masked) position, given the
// surrounding masked sequence.
using ContextRule =
    std::function<std::vector<double>(const MaskedSequence&, int pos)>;

// Deterministic embedder for tests and controlled runs: observed tokens get
// their table row, masked positions get the context rule's posterior mixed
// over table rows.
class OracleEmbedder : public Embedder {
 public:
  OracleEmbedder(Tensor table, ContextRule rule);

  int dim() const override { return table_.cols; }
  Value embed(const MaskedSequence& masked) const override;
  bool frozen() const override { return true; }

 private:
  Tensor table_;
  ContextRule rule_;
};

// Small trainable masked language model over the token vocabulary.
class ToyMlm : public Embedder {
 public:
  ToyMlm(const MlmConfig& cfg, int vocab_size, Rng& rng);

  int dim() const override { return cfg_.model_dim; }
  Value embed(const MaskedSequence& masked) const override;
  bool frozen() const override { return params_.frozen(); }
  ParameterSet* parameters() override { return &params_; }

  // Mask-and-predict cross-entropy on one sequence. Half the draws use the
  // uniform-count training mask; the other half mask a sparse random subset
  // (akin to standard MLM pre-training), which keeps most of the context
  // observed while a few positions are predicted.
  Value pretrain_loss(const TokenSequence& w, Rng& rng) const;
  void freeze() { params_.set_frozen(true); }

 private:
  MlmConfig cfg_;
  int vocab_size_;
  ParameterSet params_;
};

// ---- audio encoder -----------------------------------------------------------

struct AudioEncodeResult {
  Value final_hidden;  // T x model_dim
  Value tapped;        // T x model_dim, output of the tap block
};

class AudioEncoder {
 public:
  AudioEncoder(const AudioEncoderConfig& cfg, int feature_dim,
               ParameterSet& ps, const std::string& prefix, Rng& rng);

  AudioEncodeResult encode(const ParameterSet& ps,
                           const Tensor& features) const;
  const AudioEncoderConfig& config() const { return cfg_; }

 private:
  AudioEncoderConfig cfg_;
  int feature_dim_;
  std::string prefix_;
  TransformerStack stack_;
};

// ---- fusion stack --------------------------------------------------------------

// Consumes [audio frames | summary | tokens] and emits frame logits over the
// full vocabulary plus, when configured, intent logits at the summary slot.
struct FusedForward {
  Value frame_logits;    // T x vocab_size, mask column pinned to -1e30
  Value summary_logits;  // 1 x n_intents; undefined without an intent head
  std::vector<std::vector<Tensor>> attention;  // layer x head
  int t_frames = 0;
  int n_tokens = 0;
};

class FusionStack {
 public:
  FusionStack(const FusionConfig& cfg, int audio_dim, int ctx_dim,
              int vocab_size, int n_intents, ParameterSet& ps,
              const std::string& prefix, Rng& rng);

  FusedForward fuse(const ParameterSet& ps, const Value& h_audio,
                    const Value& h_ctx, bool want_attention) const;
  bool has_intent_head() const { return n_intents_ > 0; }
  int n_intents() const { return n_intents_; }

 private:
  FusionConfig cfg_;
  int audio_dim_, ctx_dim_, vocab_size_, n_intents_;
  std::string prefix_;
  TransformerStack stack_;
};

// ---- lattice loss bridges --------------------------------------------------------

// CTC loss of raw frame logits as a differentiable scalar; infeasible targets
// yield an undefined Value with *feasible == false.
Value ctc_loss_from_logits(const Value& frame_logits, const TokenSequence& w,
                           bool* feasible, CtcLossResult* detail = nullptr);

// Transducer loss of a (T+1)(N+1) x V stack of per-node log-probabilities.
Value rnnt_loss_from_log_probs(const Value& grid_log_probs,
                               const TokenSequence& w, int t_frames);

// ---- model families ---------------------------------------------------------------

struct LossBreakdown {
  double total = 0.0;
  double main = 0.0;        // fused-CTC or transducer term
  double final_ctc = 0.0;   // final-layer auxiliary CTC
  double inter_ctc = 0.0;   // intermediate-layer auxiliary CTC
  double intent = 0.0;
  bool skipped = false;     // infeasible target, no gradient available
  Value total_value;
};

// Masked-LM-conditioned CTC with hierarchical auxiliary losses and an
// optional joint intent head.
class ConditionedCtcModel {
 public:
  ConditionedCtcModel(const AudioEncoderConfig& enc_cfg,
                      const FusionConfig& fusion_cfg, int feature_dim,
                      const Vocabulary& vocab, const Vocabulary& small_vocab,
                      std::shared_ptr<Embedder> embedder, int n_intents,
                      Rng& rng);

  AudioEncodeResult encode(const Tensor& features) const;
  Value small_final_logits(const Value& h_final) const;
  Value small_inter_logits(const Value& h_tapped) const;
  FramePosteriors small_head_posteriors(const Value& h_final) const;
  FusedForward fuse(const Value& h_audio, const MaskedSequence& cond,
                    bool want_attention) const;

  // Single-sample Monte-Carlo estimate: sample one training mask, embed,
  // fuse, CTC against w, composed with the small-vocabulary CTC losses.
  LossBreakdown training_loss(const Tensor& features, const TokenSequence& w,
                              const TokenSequence& w_small, Rng& rng,
                              double lambda_ctc, double lambda_ic);

  // training_loss plus lambda_slu * cross-entropy on the summary logits.
  LossBreakdown training_loss_slu(const Tensor& features,
                                  const TokenSequence& w,
                                  const TokenSequence& w_small, int intent,
                                  Rng& rng, double lambda_ctc,
                                  double lambda_ic, double lambda_slu);

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  Embedder& embedder() { return *embedder_; }
  const Embedder& embedder() const { return *embedder_; }
  bool has_intent_head() const { return fusion_->has_intent_head(); }
  int n_intents() const { return fusion_->n_intents(); }
  const Vocabulary& vocab() const { return vocab_; }
  const Vocabulary& small_vocab() const { return small_vocab_; }

 private:
  Vocabulary vocab_, small_vocab_;
  ParameterSet params_;
  std::shared_ptr<Embedder> embedder_;
  std::unique_ptr<AudioEncoder> encoder_;
  std::unique_ptr<FusionStack> fusion_;
};

// Plain CTC baseline: full-vocabulary head on the final layer, small
// vocabulary on the tap layer, composed with lambda_ctc = 1.
class CtcBaselineModel {
 public:
  CtcBaselineModel(const AudioEncoderConfig& cfg, int feature_dim,
                   const Vocabulary& vocab, const Vocabulary& small_vocab,
                   Rng& rng);

  LossBreakdown training_loss(const Tensor& features, const TokenSequence& w,
                              const TokenSequence& w_small, double lambda_ic);
  FramePosteriors frame_posteriors(const Tensor& features) const;

  ParameterSet& params() { return params_; }
  const Vocabulary& vocab() const { return vocab_; }

 private:
  Vocabulary vocab_, small_vocab_;
  ParameterSet params_;
  std::unique_ptr<AudioEncoder> encoder_;
};

// Transducer baseline: recurrent prediction network + joint network over the
// (t, n) lattice, with the same auxiliary CTC heads.
class RnntBaselineModel {
 public:
  RnntBaselineModel(const AudioEncoderConfig& cfg, int joint_dim,
                    int feature_dim, const Vocabulary& vocab,
                    const Vocabulary& small_vocab, Rng& rng);

  LossBreakdown training_loss(const Tensor& features, const TokenSequence& w,
                              const TokenSequence& w_small, double lambda_ctc,
                              double lambda_ic);
  // Per-node distribution provider over the full vocabulary.
  JointFn joint_fn(const Tensor& features) const;
  TokenSequence greedy_decode(const Tensor& features,
                              int max_tokens_per_frame) const;

  ParameterSet& params() { return params_; }
  const Vocabulary& vocab() const { return vocab_; }

 private:
  Value joint_log_probs(const Value& h_audio, const TokenSequence& w) const;
  Value predict_hidden(int n_tokens, const TokenSequence& prefix) const;

  Vocabulary vocab_, small_vocab_;
  int joint_dim_;
  ParameterSet params_;
  std::unique_ptr<AudioEncoder> encoder_;
};

}  // namespace mpctc

#include "mpctc/models.hpp"

#include <cmath>

#include "mpctc/kernels.hpp"

namespace mpctc {

namespace {

// Pinning the mask column far below any real logit keeps it out of every
// alignment without special-casing the lattice code.
constexpr double kMaskColumnLogit = -1e30;

Tensor mask_column_bias(int vocab_size) {
  Tensor bias(1, vocab_size);
  bias.at(0, Vocabulary::kMaskId) = kMaskColumnLogit;
  return bias;
}

Tensor glorot(int rows, int cols, Rng& rng) {
  return random_normal(rows, cols, 1.0 / std::sqrt(double(rows)), rng);
}

void check_dims(int dim, int heads, const char* what) {
  if (dim <= 0 || heads <= 0 || dim % heads != 0) {
    throw ConfigError(std::string(what) +
                      ": model_dim must be a positive multiple of heads");
  }
}

}  // namespace

void AudioEncoderConfig::validate() const {
  check_dims(model_dim, heads, "audio encoder");
  if (layers < 1) throw ConfigError("audio encoder needs at least one layer");
  if (tap_layer < 0 || tap_layer >= layers) {
    throw ConfigError("tap layer must lie inside the block stack");
  }
}

void FusionConfig::validate() const {
  check_dims(model_dim, heads, "fusion stack");
  if (layers < 1) throw ConfigError("fusion stack needs at least one layer");
}

void MlmConfig::validate() const {
  check_dims(model_dim, heads, "mlm");
  if (layers < 1) throw ConfigError("mlm needs at least one layer");
}

Tensor sinusoidal_positions(int length, int dim) {
  Tensor pe(length, dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim; i += 2) {
      const double angle = pos / std::pow(10000.0, double(i) / dim);
      pe.at(pos, i) = std::sin(angle);
      if (i + 1 < dim) pe.at(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

FramePosteriors posteriors_from_logits(const Tensor& logits) {
  FramePosteriors post(logits.rows, logits.cols);
  if (logits.rows == 0) return post;
  std::vector<double> lse(logits.rows);
  kernels::row_logsumexp(logits.data.data(), lse.data(), logits.rows,
                         logits.cols);
  for (int t = 0; t < logits.rows; ++t) {
    for (int v = 0; v < logits.cols; ++v) {
      post.at(t, v) = logits.at(t, v) - lse[t];
    }
  }
  return post;
}

// ---- transformer stack ------------------------------------------------------

void TransformerStack::init(ParameterSet& ps, Rng& rng) const {
  const int head_dim = model_dim / heads;
  for (int l = 0; l < layers; ++l) {
    const std::string b = prefix + "block" + std::to_string(l) + ".";
    ps.add(b + "ln1.gain", Tensor::full(1, model_dim, 1.0));
    ps.add(b + "ln1.bias", Tensor::zeros(1, model_dim));
    for (int h = 0; h < heads; ++h) {
      const std::string hp = b + "head" + std::to_string(h) + ".";
      ps.add(hp + "wq", glorot(model_dim, head_dim, rng));
      ps.add(hp + "wk", glorot(model_dim, head_dim, rng));
      ps.add(hp + "wv", glorot(model_dim, head_dim, rng));
      ps.add(hp + "wo", glorot(head_dim, model_dim, rng));
    }
    ps.add(b + "attn.bias", Tensor::zeros(1, model_dim));
    ps.add(b + "ln2.gain", Tensor::full(1, model_dim, 1.0));
    ps.add(b + "ln2.bias", Tensor::zeros(1, model_dim));
    ps.add(b + "ff.w1", glorot(model_dim, feedforward_dim, rng));
    ps.add(b + "ff.b1", Tensor::zeros(1, feedforward_dim));
    ps.add(b + "ff.w2", glorot(feedforward_dim, model_dim, rng));
    ps.add(b + "ff.b2", Tensor::zeros(1, model_dim));
  }
}

Value TransformerStack::forward(const ParameterSet& ps, Value x,
                                std::vector<std::vector<Tensor>>* attention_out,
                                int tap_layer, Value* tap_out) const {
  for (int l = 0; l < layers; ++l) {
    const std::string b = prefix + "block" + std::to_string(l) + ".";
    Value normed = layernorm(x, ps.get(b + "ln1.gain"), ps.get(b + "ln1.bias"));
    Value attn_sum;
    std::vector<Tensor> layer_weights;
    for (int h = 0; h < heads; ++h) {
      const std::string hp = b + "head" + std::to_string(h) + ".";
      Value q = matmul(normed, ps.get(hp + "wq"));
      Value k = matmul(normed, ps.get(hp + "wk"));
      Value v = matmul(normed, ps.get(hp + "wv"));
      auto [out, weights] = scaled_dot_attention(q, k, v, nullptr);
      Value projected = matmul(out, ps.get(hp + "wo"));
      attn_sum = h == 0 ? projected : add(attn_sum, projected);
      if (attention_out != nullptr) layer_weights.push_back(weights.tensor());
    }
    if (attention_out != nullptr) {
      attention_out->push_back(std::move(layer_weights));
    }
    x = add(x, add_row_bias(attn_sum, ps.get(b + "attn.bias")));
    Value ff_in = layernorm(x, ps.get(b + "ln2.gain"), ps.get(b + "ln2.bias"));
    Value ff = matmul(
        gelu(add_row_bias(matmul(ff_in, ps.get(b + "ff.w1")),
                          ps.get(b + "ff.b1"))),
        ps.get(b + "ff.w2"));
    x = add(x, add_row_bias(ff, ps.get(b + "ff.b2")));
    if (l == tap_layer && tap_out != nullptr) *tap_out = x;
  }
  return x;
}

// ---- embedders ------------------------------------------------------------

OracleEmbedder::OracleEmbedder(Tensor table, ContextRule rule)
    : table_(std::move(table)), rule_(std::move(rule)) {}

Value OracleEmbedder::embed(const MaskedSequence& masked) const {
  masked.validate();
  Tensor out(masked.length(), table_.cols);
  for (int n = 0; n < masked.length(); ++n) {
    if (masked.observed[n]) {
      const int id = masked.ids[n];
      if (id < 0 || id >= table_.rows) {
        throw ContractError("token outside the context rule's domain");
      }
      for (int c = 0; c < table_.cols; ++c) out.at(n, c) = table_.at(id, c);
    } else {
      const std::vector<double> posterior = rule_(masked, n);
      if (static_cast<int>(posterior.size()) != table_.rows) {
        throw ContractError("context rule posterior does not cover the "
                            "vocabulary");
      }
      for (int id = 0; id < table_.rows; ++id) {
        if (posterior[id] == 0.0) continue;
        for (int c = 0; c < table_.cols; ++c) {
          out.at(n, c) += posterior[id] * table_.at(id, c);
        }
      }
    }
  }
  return Value::constant(std::move(out));
}

ToyMlm::ToyMlm(const MlmConfig& cfg, int vocab_size, Rng& rng)
    : cfg_(cfg), vocab_size_(vocab_size) {
  cfg_.validate();
  params_.add("mlm.embed", random_normal(vocab_size, cfg_.model_dim, 1.0, rng));
  TransformerStack stack{"mlm.", cfg_.layers, cfg_.model_dim, cfg_.heads,
                         cfg_.feedforward_dim};
  stack.init(params_, rng);
  params_.add("mlm.out.w", glorot(cfg_.model_dim, vocab_size, rng));
  params_.add("mlm.out.b", Tensor::zeros(1, vocab_size));
}

Value ToyMlm::embed(const MaskedSequence& masked) const {
  masked.validate();
  Value x = embedding_lookup(params_.get("mlm.embed"), masked.ids);
  x = add_const(x, sinusoidal_positions(masked.length(), cfg_.model_dim));
  TransformerStack stack{"mlm.", cfg_.layers, cfg_.model_dim, cfg_.heads,
                         cfg_.feedforward_dim};
  return stack.forward(params_, x);
}

Value ToyMlm::pretrain_loss(const TokenSequence& w, Rng& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MaskedSequence masked;
  if (unit(rng) < 0.5) {
    masked = sample_training_mask(w, rng);
  } else {
    // Sparse masking: each position independently with probability 0.3,
    // at least one.
    masked = MaskedSequence::all_observed(w);
    std::vector<int> hit;
    for (int n = 0; n < masked.length(); ++n) {
      if (unit(rng) < 0.3) hit.push_back(n);
    }
    if (hit.empty()) {
      std::uniform_int_distribution<int> pos(0, masked.length() - 1);
      hit.push_back(pos(rng));
    }
    for (int n : hit) {
      masked.ids[n] = Vocabulary::kMaskId;
      masked.observed[n] = false;
    }
  }
  Value hidden = embed(masked);
  Value logits = add_row_bias(matmul(hidden, params_.get("mlm.out.w")),
                              params_.get("mlm.out.b"));
  std::vector<std::pair<int, int>> targets;
  for (int n = 0; n < masked.length(); ++n) {
    if (!masked.observed[n]) targets.emplace_back(n, w.ids[n]);
  }
  return cross_entropy(logits, targets);
}

// ---- audio encoder -----------------------------------------------------------

AudioEncoder::AudioEncoder(const AudioEncoderConfig& cfg, int feature_dim,
                           ParameterSet& ps, const std::string& prefix,
                           Rng& rng)
    : cfg_(cfg), feature_dim_(feature_dim), prefix_(prefix) {
  cfg_.validate();
  ps.add(prefix_ + "in.w", glorot(feature_dim, cfg_.model_dim, rng));
  ps.add(prefix_ + "in.b", Tensor::zeros(1, cfg_.model_dim));
  stack_ = TransformerStack{prefix_, cfg_.layers, cfg_.model_dim, cfg_.heads,
                            cfg_.feedforward_dim};
  stack_.init(ps, rng);
}

AudioEncodeResult AudioEncoder::encode(const ParameterSet& ps,
                                       const Tensor& features) const {
  if (features.rows < 1 || features.cols != feature_dim_) {
    throw ShapeError("feature matrix does not match the encoder input");
  }
  Value x = add_row_bias(
      matmul(Value::constant(features), ps.get(prefix_ + "in.w")),
      ps.get(prefix_ + "in.b"));
  x = add_const(x, sinusoidal_positions(features.rows, cfg_.model_dim));
  AudioEncodeResult result;
  result.final_hidden =
      stack_.forward(ps, x, nullptr, cfg_.tap_layer, &result.tapped);
  return result;
}

// ---- fusion stack --------------------------------------------------------------

FusionStack::FusionStack(const FusionConfig& cfg, int audio_dim, int ctx_dim,
                         int vocab_size, int n_intents, ParameterSet& ps,
                         const std::string& prefix, Rng& rng)
    : cfg_(cfg),
      audio_dim_(audio_dim),
      ctx_dim_(ctx_dim),
      vocab_size_(vocab_size),
      n_intents_(n_intents),
      prefix_(prefix) {
  cfg_.validate();
  ps.add(prefix_ + "audio_proj.w", glorot(audio_dim, cfg_.model_dim, rng));
  ps.add(prefix_ + "audio_proj.b", Tensor::zeros(1, cfg_.model_dim));
  ps.add(prefix_ + "token_proj.w", glorot(ctx_dim, cfg_.model_dim, rng));
  ps.add(prefix_ + "token_proj.b", Tensor::zeros(1, cfg_.model_dim));
  ps.add(prefix_ + "summary", random_normal(1, cfg_.model_dim, 0.1, rng));
  ps.add(prefix_ + "stream_type", random_normal(2, cfg_.model_dim, 0.1, rng));
  stack_ = TransformerStack{prefix_, cfg_.layers, cfg_.model_dim, cfg_.heads,
                            cfg_.feedforward_dim};
  stack_.init(ps, rng);
  ps.add(prefix_ + "out.w", glorot(cfg_.model_dim, vocab_size, rng));
  ps.add(prefix_ + "out.b", Tensor::zeros(1, vocab_size));
  if (n_intents_ > 0) {
    ps.add(prefix_ + "intent.w", glorot(cfg_.model_dim, n_intents, rng));
    ps.add(prefix_ + "intent.b", Tensor::zeros(1, n_intents));
  }
}

FusedForward FusionStack::fuse(const ParameterSet& ps, const Value& h_audio,
                               const Value& h_ctx, bool want_attention) const {
  const int t = h_audio.rows();
  const int n = h_ctx.rows();
  if (h_audio.cols() != audio_dim_ || (n > 0 && h_ctx.cols() != ctx_dim_)) {
    throw ShapeError("fusion inputs do not match the configured stream "
                     "dimensions");
  }

  Value audio_in = add_row_bias(matmul(h_audio, ps.get(prefix_ + "audio_proj.w")),
                                ps.get(prefix_ + "audio_proj.b"));
  audio_in = add_const(audio_in, sinusoidal_positions(t, cfg_.model_dim));
  Value stream = ps.get(prefix_ + "stream_type");
  audio_in = add_row_bias(audio_in, slice_rows(stream, 0, 1));

  // Token stream may be empty mid-decode; positions restart at 0 per stream.
  Value token_in = h_ctx;
  if (n > 0) {
    token_in = add_row_bias(matmul(h_ctx, ps.get(prefix_ + "token_proj.w")),
                            ps.get(prefix_ + "token_proj.b"));
    token_in = add_const(token_in, sinusoidal_positions(n, cfg_.model_dim));
    token_in = add_row_bias(token_in, slice_rows(stream, 1, 1));
  }

  std::vector<Value> parts{audio_in, ps.get(prefix_ + "summary")};
  if (n > 0) parts.push_back(token_in);
  Value x = concat_rows(parts);

  FusedForward out;
  out.t_frames = t;
  out.n_tokens = n;
  Value hidden = stack_.forward(ps, x, want_attention ? &out.attention : nullptr);

  Value frame_hidden = slice_rows(hidden, 0, t);
  out.frame_logits = add_const(
      add_row_bias(matmul(frame_hidden, ps.get(prefix_ + "out.w")),
                   ps.get(prefix_ + "out.b")),
      mask_column_bias(vocab_size_));
  if (n_intents_ > 0) {
    Value summary_hidden = slice_rows(hidden, t, 1);
    out.summary_logits =
        add_row_bias(matmul(summary_hidden, ps.get(prefix_ + "intent.w")),
                     ps.get(prefix_ + "intent.b"));
  }
  return out;
}

// ---- lattice loss bridges --------------------------------------------------------

Value ctc_loss_from_logits(const Value& frame_logits, const TokenSequence& w,
                           bool* feasible, CtcLossResult* detail) {
  FramePosteriors post = posteriors_from_logits(frame_logits.tensor());
  CtcLossResult result = ctc_loss(post, w);
  if (feasible != nullptr) *feasible = result.feasible;
  if (detail != nullptr) *detail = result;
  if (!result.feasible) return Value();
  Tensor grad(post.t_frames, post.vocab_size);
  grad.data = result.grad_logits;
  return custom_scalar(frame_logits, result.loss, std::move(grad));
}

Value rnnt_loss_from_log_probs(const Value& grid_log_probs,
                               const TokenSequence& w, int t_frames) {
  const Tensor& lp = grid_log_probs.tensor();
  const int n = w.length();
  if (lp.rows != (t_frames + 1) * (n + 1)) {
    throw ShapeError("joint grid row count does not match (T+1)(N+1)");
  }
  JointGrid grid(t_frames, n, lp.cols);
  grid.log_probs = lp.data;
  RnntLossResult result = rnnt_loss(grid, w);
  Tensor grad(lp.rows, lp.cols);
  grad.data = result.grad_log_probs;
  return custom_scalar(grid_log_probs, result.loss, std::move(grad));
}

// ---- conditioned CTC model ----------------------------------------------------

ConditionedCtcModel::ConditionedCtcModel(
    const AudioEncoderConfig& enc_cfg, const FusionConfig& fusion_cfg,
    int feature_dim, const Vocabulary& vocab, const Vocabulary& small_vocab,
    std::shared_ptr<Embedder> embedder, int n_intents, Rng& rng)
    : vocab_(vocab), small_vocab_(small_vocab), embedder_(std::move(embedder)) {
  encoder_ = std::make_unique<AudioEncoder>(enc_cfg, feature_dim, params_,
                                            "enc.", rng);
  params_.add("head.small_final.w",
              glorot(enc_cfg.model_dim, small_vocab_.size(), rng));
  params_.add("head.small_final.b", Tensor::zeros(1, small_vocab_.size()));
  params_.add("head.small_inter.w",
              glorot(enc_cfg.model_dim, small_vocab_.size(), rng));
  params_.add("head.small_inter.b", Tensor::zeros(1, small_vocab_.size()));
  fusion_ = std::make_unique<FusionStack>(fusion_cfg, enc_cfg.model_dim,
                                          embedder_->dim(), vocab_.size(),
                                          n_intents, params_, "fuse.", rng);
}

AudioEncodeResult ConditionedCtcModel::encode(const Tensor& features) const {
  return encoder_->encode(params_, features);
}

Value ConditionedCtcModel::small_final_logits(const Value& h_final) const {
  return add_const(
      add_row_bias(matmul(h_final, params_.get("head.small_final.w")),
                   params_.get("head.small_final.b")),
      mask_column_bias(small_vocab_.size()));
}

Value ConditionedCtcModel::small_inter_logits(const Value& h_tapped) const {
  return add_const(
      add_row_bias(matmul(h_tapped, params_.get("head.small_inter.w")),
                   params_.get("head.small_inter.b")),
      mask_column_bias(small_vocab_.size()));
}

FramePosteriors ConditionedCtcModel::small_head_posteriors(
    const Value& h_final) const {
  return posteriors_from_logits(small_final_logits(h_final).tensor());
}

FusedForward ConditionedCtcModel::fuse(const Value& h_audio,
                                       const MaskedSequence& cond,
                                       bool want_attention) const {
  Value h_ctx = embedder_->embed(cond);
  return fusion_->fuse(params_, h_audio, h_ctx, want_attention);
}

LossBreakdown ConditionedCtcModel::training_loss(const Tensor& features,
                                                 const TokenSequence& w,
                                                 const TokenSequence& w_small,
                                                 Rng& rng, double lambda_ctc,
                                                 double lambda_ic) {
  if (w.empty()) throw ContractError("training target must be nonempty");
  if (lambda_ctc < 0.0 || lambda_ctc > 1.0 || lambda_ic < 0.0 ||
      lambda_ic > 1.0) {
    throw ConfigError("loss weights must lie in [0, 1]");
  }
  LossBreakdown b;
  AudioEncodeResult enc = encode(features);

  bool ok_final = true, ok_inter = true, ok_main = true;
  Value final_v = ctc_loss_from_logits(small_final_logits(enc.final_hidden),
                                       w_small, &ok_final);
  Value inter_v =
      ctc_loss_from_logits(small_inter_logits(enc.tapped), w_small, &ok_inter);

  Value main_v;
  if (lambda_ctc < 1.0) {
    MaskedSequence cond = sample_training_mask(w, rng);
    FusedForward fused = fuse(enc.final_hidden, cond, false);
    main_v = ctc_loss_from_logits(fused.frame_logits, w, &ok_main);
  }
  if (!ok_final || !ok_inter || !ok_main) {
    b.skipped = true;
    b.total = std::numeric_limits<double>::infinity();
    return b;
  }

  b.final_ctc = final_v.item();
  b.inter_ctc = inter_v.item();
  Value aux = add(scale(final_v, 1.0 - lambda_ic), scale(inter_v, lambda_ic));
  if (lambda_ctc < 1.0) {
    b.main = main_v.item();
    b.total_value = add(scale(main_v, 1.0 - lambda_ctc),
                        scale(aux, lambda_ctc));
  } else {
    b.total_value = aux;
  }
  b.total = compose_hierarchical_loss(b.main, b.final_ctc, b.inter_ctc,
                                      lambda_ctc, lambda_ic);
  return b;
}

LossBreakdown ConditionedCtcModel::training_loss_slu(
    const Tensor& features, const TokenSequence& w,
    const TokenSequence& w_small, int intent, Rng& rng, double lambda_ctc,
    double lambda_ic, double lambda_slu) {
  if (!has_intent_head()) {
    throw CapabilityError("model has no intent head");
  }
  if (intent < 0 || intent >= fusion_->n_intents()) {
    throw ContractError("intent label outside the label set");
  }
  if (w.empty()) throw ContractError("training target must be nonempty");

  LossBreakdown b;
  AudioEncodeResult enc = encode(features);
  bool ok_final = true, ok_inter = true, ok_main = true;
  Value final_v = ctc_loss_from_logits(small_final_logits(enc.final_hidden),
                                       w_small, &ok_final);
  Value inter_v =
      ctc_loss_from_logits(small_inter_logits(enc.tapped), w_small, &ok_inter);
  MaskedSequence cond = sample_training_mask(w, rng);
  FusedForward fused = fuse(enc.final_hidden, cond, false);
  Value main_v = ctc_loss_from_logits(fused.frame_logits, w, &ok_main);
  if (!ok_final || !ok_inter || !ok_main) {
    b.skipped = true;
    b.total = std::numeric_limits<double>::infinity();
    return b;
  }

  Value intent_v = cross_entropy(fused.summary_logits, intent);
  b.main = main_v.item();
  b.final_ctc = final_v.item();
  b.inter_ctc = inter_v.item();
  b.intent = intent_v.item();

  Value aux = add(scale(final_v, 1.0 - lambda_ic), scale(inter_v, lambda_ic));
  Value hier = add(scale(main_v, 1.0 - lambda_ctc), scale(aux, lambda_ctc));
  b.total_value = add(hier, scale(intent_v, lambda_slu));
  b.total = compose_hierarchical_loss(b.main, b.final_ctc, b.inter_ctc,
                                      lambda_ctc, lambda_ic) +
            lambda_slu * b.intent;
  return b;
}

// ---- plain CTC baseline ----------------------------------------------------

CtcBaselineModel::CtcBaselineModel(const AudioEncoderConfig& cfg,
                                   int feature_dim, const Vocabulary& vocab,
                                   const Vocabulary& small_vocab, Rng& rng)
    : vocab_(vocab), small_vocab_(small_vocab) {
  encoder_ =
      std::make_unique<AudioEncoder>(cfg, feature_dim, params_, "enc.", rng);
  params_.add("head.full.w", glorot(cfg.model_dim, vocab_.size(), rng));
  params_.add("head.full.b", Tensor::zeros(1, vocab_.size()));
  params_.add("head.small_inter.w",
              glorot(cfg.model_dim, small_vocab_.size(), rng));
  params_.add("head.small_inter.b", Tensor::zeros(1, small_vocab_.size()));
}

LossBreakdown CtcBaselineModel::training_loss(const Tensor& features,
                                              const TokenSequence& w,
                                              const TokenSequence& w_small,
                                              double lambda_ic) {
  LossBreakdown b;
  AudioEncodeResult enc = encoder_->encode(params_, features);
  Value full_logits = add_const(
      add_row_bias(matmul(enc.final_hidden, params_.get("head.full.w")),
                   params_.get("head.full.b")),
      mask_column_bias(vocab_.size()));
  Value inter_logits = add_const(
      add_row_bias(matmul(enc.tapped, params_.get("head.small_inter.w")),
                   params_.get("head.small_inter.b")),
      mask_column_bias(small_vocab_.size()));

  bool ok_final = true, ok_inter = true;
  Value final_v = ctc_loss_from_logits(full_logits, w, &ok_final);
  Value inter_v = ctc_loss_from_logits(inter_logits, w_small, &ok_inter);
  if (!ok_final || !ok_inter) {
    b.skipped = true;
    b.total = std::numeric_limits<double>::infinity();
    return b;
  }
  b.final_ctc = final_v.item();
  b.inter_ctc = inter_v.item();
  b.total_value =
      add(scale(final_v, 1.0 - lambda_ic), scale(inter_v, lambda_ic));
  b.total = compose_hierarchical_loss(0.0, b.final_ctc, b.inter_ctc, 1.0,
                                      lambda_ic);
  return b;
}

FramePosteriors CtcBaselineModel::frame_posteriors(
    const Tensor& features) const {
  AudioEncodeResult enc = encoder_->encode(params_, features);
  Value logits = add_const(
      add_row_bias(matmul(enc.final_hidden, params_.get("head.full.w")),
                   params_.get("head.full.b")),
      mask_column_bias(vocab_.size()));
  return posteriors_from_logits(logits.tensor());
}

// ---- transducer baseline ------------------------------------------------------

RnntBaselineModel::RnntBaselineModel(const AudioEncoderConfig& cfg,
                                     int joint_dim, int feature_dim,
                                     const Vocabulary& vocab,
                                     const Vocabulary& small_vocab, Rng& rng)
    : vocab_(vocab), small_vocab_(small_vocab), joint_dim_(joint_dim) {
  encoder_ =
      std::make_unique<AudioEncoder>(cfg, feature_dim, params_, "enc.", rng);
  const int d = cfg.model_dim;
  params_.add("head.small_final.w", glorot(d, small_vocab_.size(), rng));
  params_.add("head.small_final.b", Tensor::zeros(1, small_vocab_.size()));
  params_.add("head.small_inter.w", glorot(d, small_vocab_.size(), rng));
  params_.add("head.small_inter.b", Tensor::zeros(1, small_vocab_.size()));

  params_.add("pred.embed", random_normal(vocab_.size(), d, 1.0, rng));
  params_.add("pred.h0", Tensor::zeros(1, d));
  for (const char* gate : {"reset", "update", "cand"}) {
    params_.add(std::string("pred.gru.w_") + gate, glorot(d, d, rng));
    params_.add(std::string("pred.gru.u_") + gate, glorot(d, d, rng));
    params_.add(std::string("pred.gru.b_") + gate, Tensor::zeros(1, d));
  }
  params_.add("joint.audio.w", glorot(d, joint_dim_, rng));
  params_.add("joint.pred.w", glorot(d, joint_dim_, rng));
  params_.add("joint.bias", Tensor::zeros(1, joint_dim_));
  params_.add("joint.out.w", glorot(joint_dim_, vocab_.size(), rng));
  params_.add("joint.out.b", Tensor::zeros(1, vocab_.size()));
}

Value RnntBaselineModel::predict_hidden(int n_tokens,
                                        const TokenSequence& prefix) const {
  GruParams gru{params_.get("pred.gru.w_reset"), params_.get("pred.gru.u_reset"),
                params_.get("pred.gru.b_reset"), params_.get("pred.gru.w_update"),
                params_.get("pred.gru.u_update"), params_.get("pred.gru.b_update"),
                params_.get("pred.gru.w_cand"), params_.get("pred.gru.u_cand"),
                params_.get("pred.gru.b_cand")};
  Value h = params_.get("pred.h0");
  for (int n = 0; n < n_tokens; ++n) {
    Value x = embedding_lookup(params_.get("pred.embed"), {prefix.ids[n]});
    h = gated_recurrent_cell(x, h, gru);
  }
  return h;
}

Value RnntBaselineModel::joint_log_probs(const Value& h_audio,
                                         const TokenSequence& w) const {
  const int t_frames = h_audio.rows();
  const int n = w.length();
  Value audio_proj = matmul(h_audio, params_.get("joint.audio.w"));

  std::vector<Value> pred_rows;
  pred_rows.reserve(n + 1);
  {
    GruParams gru{params_.get("pred.gru.w_reset"),
                  params_.get("pred.gru.u_reset"),
                  params_.get("pred.gru.b_reset"),
                  params_.get("pred.gru.w_update"),
                  params_.get("pred.gru.u_update"),
                  params_.get("pred.gru.b_update"),
                  params_.get("pred.gru.w_cand"),
                  params_.get("pred.gru.u_cand"),
                  params_.get("pred.gru.b_cand")};
    Value h = params_.get("pred.h0");
    pred_rows.push_back(h);
    for (int i = 0; i < n; ++i) {
      Value x = embedding_lookup(params_.get("pred.embed"), {w.ids[i]});
      h = gated_recurrent_cell(x, h, gru);
      pred_rows.push_back(h);
    }
  }
  Value pred_proj =
      matmul(concat_rows(pred_rows), params_.get("joint.pred.w"));

  // Node (t, n) reuses the last audio frame for the t == T boundary row.
  std::vector<Value> rows;
  rows.reserve(static_cast<std::size_t>(t_frames + 1) * (n + 1));
  for (int t = 0; t <= t_frames; ++t) {
    Value a_row = slice_rows(audio_proj, std::min(t, t_frames - 1), 1);
    for (int u = 0; u <= n; ++u) {
      rows.push_back(add(a_row, slice_rows(pred_proj, u, 1)));
    }
  }
  Value pre = tanh_op(add_row_bias(concat_rows(rows), params_.get("joint.bias")));
  Value logits = add_const(
      add_row_bias(matmul(pre, params_.get("joint.out.w")),
                   params_.get("joint.out.b")),
      mask_column_bias(vocab_.size()));
  return log_softmax_lastdim(logits);
}

LossBreakdown RnntBaselineModel::training_loss(const Tensor& features,
                                               const TokenSequence& w,
                                               const TokenSequence& w_small,
                                               double lambda_ctc,
                                               double lambda_ic) {
  LossBreakdown b;
  AudioEncodeResult enc = encoder_->encode(params_, features);

  Value final_logits = add_const(
      add_row_bias(matmul(enc.final_hidden, params_.get("head.small_final.w")),
                   params_.get("head.small_final.b")),
      mask_column_bias(small_vocab_.size()));
  Value inter_logits = add_const(
      add_row_bias(matmul(enc.tapped, params_.get("head.small_inter.w")),
                   params_.get("head.small_inter.b")),
      mask_column_bias(small_vocab_.size()));
  bool ok_final = true, ok_inter = true;
  Value final_v = ctc_loss_from_logits(final_logits, w_small, &ok_final);
  Value inter_v = ctc_loss_from_logits(inter_logits, w_small, &ok_inter);
  if (!ok_final || !ok_inter) {
    b.skipped = true;
    b.total = std::numeric_limits<double>::infinity();
    return b;
  }

  Value grid = joint_log_probs(enc.final_hidden, w);
  Value main_v = rnnt_loss_from_log_probs(grid, w, features.rows);

  b.main = main_v.item();
  b.final_ctc = final_v.item();
  b.inter_ctc = inter_v.item();
  Value aux = add(scale(final_v, 1.0 - lambda_ic), scale(inter_v, lambda_ic));
  b.total_value =
      add(scale(main_v, 1.0 - lambda_ctc), scale(aux, lambda_ctc));
  b.total = compose_hierarchical_loss(b.main, b.final_ctc, b.inter_ctc,
                                      lambda_ctc, lambda_ic);
  return b;
}

JointFn RnntBaselineModel::joint_fn(const Tensor& features) const {
  AudioEncodeResult enc = encoder_->encode(params_, features);
  // Shared across calls; prefix hidden states are recomputed per call.
  auto audio_proj = std::make_shared<Value>(
      matmul(enc.final_hidden, params_.get("joint.audio.w")));
  const int t_frames = features.rows;
  return [this, audio_proj, t_frames](int t, const TokenSequence& prefix) {
    if (t < 0 || t >= t_frames) {
      throw ContractError("frame index outside the utterance");
    }
    Value h = predict_hidden(prefix.length(), prefix);
    Value pred_proj = matmul(h, params_.get("joint.pred.w"));
    Value pre = tanh_op(add_row_bias(
        add(slice_rows(*audio_proj, t, 1), pred_proj),
        params_.get("joint.bias")));
    Value logits = add_const(
        add_row_bias(matmul(pre, params_.get("joint.out.w")),
                     params_.get("joint.out.b")),
        mask_column_bias(vocab_.size()));
    Value row = log_softmax_lastdim(logits);
    return row.tensor().data;
  };
}

TokenSequence RnntBaselineModel::greedy_decode(const Tensor& features,
                                               int max_tokens_per_frame) const {
  return rnnt_greedy_decode(joint_fn(features), features.rows,
                            max_tokens_per_frame);
}

}  // namespace mpctc

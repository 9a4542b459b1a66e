#include "mpctc/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mpctc/checkpoint.hpp"
#include "mpctc/kernels.hpp"

namespace mpctc {

namespace {
using nlohmann::json;

json optim_to_json(const OptimConfig& o) {
  return json{{"learning_rate", o.learning_rate},
              {"momentum", o.momentum},
              {"steps", o.steps},
              {"max_grad_norm", o.max_grad_norm}};
}

OptimConfig optim_from_json(const json& j, OptimConfig base) {
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.momentum = j.value("momentum", base.momentum);
  base.steps = j.value("steps", base.steps);
  base.max_grad_norm = j.value("max_grad_norm", base.max_grad_norm);
  return base;
}

void clip_gradients(GradientMap& grads, double max_norm) {
  if (max_norm <= 0) return;
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double x : g.data) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (auto& [name, g] : grads) {
    for (double& x : g.data) x *= scale;
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  task.validate();
  encoder.validate();
  fusion.validate();
  mlm.validate();
  for (double w : {lambda_ctc, lambda_ic, lambda_slu}) {
    if (w < 0.0 || w > 1.0) {
      throw ConfigError("loss weights must lie in [0, 1]");
    }
  }
  if (iterations < 1) throw ConfigError("iteration count must be positive");
  if (k_list.empty()) throw ConfigError("k_list must be nonempty");
  for (int k : k_list) {
    if (k < 1) throw ConfigError("k_list entries must be positive");
  }
  if (embedder != "oracle" && embedder != "mlm") {
    throw ConfigError("embedder must be 'oracle' or 'mlm'");
  }
  if (optim.steps < 1 || mlm_optim.steps < 0) {
    throw ConfigError("bad step budget");
  }
  if (frame_period_seconds <= 0) {
    throw ConfigError("frame period must be positive");
  }
}

json ExperimentConfig::to_json() const {
  json j;
  j["task"] = json{{"num_anchors", task.num_anchors},
                   {"num_homophone_pairs", task.num_homophone_pairs},
                   {"min_tokens", task.min_tokens},
                   {"max_tokens", task.max_tokens},
                   {"min_frames_per_token", task.min_frames_per_token},
                   {"max_frames_per_token", task.max_frames_per_token},
                   {"feature_dim", task.feature_dim},
                   {"noise_stddev", task.noise_stddev},
                   {"silence_prob", task.silence_prob},
                   {"num_train", task.num_train},
                   {"num_dev", task.num_dev},
                   {"num_test", task.num_test},
                   {"num_text", task.num_text},
                   {"with_intents", task.with_intents},
                   {"num_intents", task.num_intents}};
  j["encoder"] = json{{"layers", encoder.layers},
                      {"model_dim", encoder.model_dim},
                      {"heads", encoder.heads},
                      {"feedforward_dim", encoder.feedforward_dim},
                      {"tap_layer", encoder.tap_layer}};
  j["fusion"] = json{{"layers", fusion.layers},
                     {"model_dim", fusion.model_dim},
                     {"heads", fusion.heads},
                     {"feedforward_dim", fusion.feedforward_dim}};
  j["mlm"] = json{{"layers", mlm.layers},
                  {"model_dim", mlm.model_dim},
                  {"heads", mlm.heads},
                  {"feedforward_dim", mlm.feedforward_dim}};
  j["rnnt_joint_dim"] = rnnt_joint_dim;
  j["lambda_ctc"] = lambda_ctc;
  j["lambda_ic"] = lambda_ic;
  j["lambda_slu"] = lambda_slu;
  j["optim"] = optim_to_json(optim);
  j["mlm_optim"] = optim_to_json(mlm_optim);
  j["seed"] = seed;
  j["iterations"] = iterations;
  j["k_list"] = k_list;
  j["embedder"] = embedder;
  j["rnnt_max_tokens_per_frame"] = rnnt_max_tokens_per_frame;
  j["frame_period_seconds"] = frame_period_seconds;
  j["out_dir"] = out_dir;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  if (!j.contains("seed")) {
    throw ConfigError("config must set a seed");
  }
  cfg.seed = j.at("seed").get<uint64_t>();
  if (j.contains("task")) {
    const json& t = j.at("task");
    cfg.task.num_anchors = t.value("num_anchors", cfg.task.num_anchors);
    cfg.task.num_homophone_pairs =
        t.value("num_homophone_pairs", cfg.task.num_homophone_pairs);
    cfg.task.min_tokens = t.value("min_tokens", cfg.task.min_tokens);
    cfg.task.max_tokens = t.value("max_tokens", cfg.task.max_tokens);
    cfg.task.min_frames_per_token =
        t.value("min_frames_per_token", cfg.task.min_frames_per_token);
    cfg.task.max_frames_per_token =
        t.value("max_frames_per_token", cfg.task.max_frames_per_token);
    cfg.task.feature_dim = t.value("feature_dim", cfg.task.feature_dim);
    cfg.task.noise_stddev = t.value("noise_stddev", cfg.task.noise_stddev);
    cfg.task.silence_prob = t.value("silence_prob", cfg.task.silence_prob);
    cfg.task.num_train = t.value("num_train", cfg.task.num_train);
    cfg.task.num_dev = t.value("num_dev", cfg.task.num_dev);
    cfg.task.num_test = t.value("num_test", cfg.task.num_test);
    cfg.task.num_text = t.value("num_text", cfg.task.num_text);
    cfg.task.with_intents = t.value("with_intents", cfg.task.with_intents);
    cfg.task.num_intents = t.value("num_intents", cfg.task.num_intents);
  }
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    cfg.encoder.layers = e.value("layers", cfg.encoder.layers);
    cfg.encoder.model_dim = e.value("model_dim", cfg.encoder.model_dim);
    cfg.encoder.heads = e.value("heads", cfg.encoder.heads);
    cfg.encoder.feedforward_dim =
        e.value("feedforward_dim", cfg.encoder.feedforward_dim);
    cfg.encoder.tap_layer = e.value("tap_layer", cfg.encoder.tap_layer);
  }
  if (j.contains("fusion")) {
    const json& f = j.at("fusion");
    cfg.fusion.layers = f.value("layers", cfg.fusion.layers);
    cfg.fusion.model_dim = f.value("model_dim", cfg.fusion.model_dim);
    cfg.fusion.heads = f.value("heads", cfg.fusion.heads);
    cfg.fusion.feedforward_dim =
        f.value("feedforward_dim", cfg.fusion.feedforward_dim);
  }
  if (j.contains("mlm")) {
    const json& m = j.at("mlm");
    cfg.mlm.layers = m.value("layers", cfg.mlm.layers);
    cfg.mlm.model_dim = m.value("model_dim", cfg.mlm.model_dim);
    cfg.mlm.heads = m.value("heads", cfg.mlm.heads);
    cfg.mlm.feedforward_dim =
        m.value("feedforward_dim", cfg.mlm.feedforward_dim);
  }
  cfg.rnnt_joint_dim = j.value("rnnt_joint_dim", cfg.rnnt_joint_dim);
  cfg.lambda_ctc = j.value("lambda_ctc", cfg.lambda_ctc);
  cfg.lambda_ic = j.value("lambda_ic", cfg.lambda_ic);
  cfg.lambda_slu = j.value("lambda_slu", cfg.lambda_slu);
  if (j.contains("optim")) cfg.optim = optim_from_json(j.at("optim"), cfg.optim);
  if (j.contains("mlm_optim")) {
    cfg.mlm_optim = optim_from_json(j.at("mlm_optim"), cfg.mlm_optim);
  }
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.k_list = j.value("k_list", cfg.k_list);
  cfg.embedder = j.value("embedder", cfg.embedder);
  cfg.rnnt_max_tokens_per_frame =
      j.value("rnnt_max_tokens_per_frame", cfg.rnnt_max_tokens_per_frame);
  cfg.frame_period_seconds =
      j.value("frame_period_seconds", cfg.frame_period_seconds);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  return from_json(json::parse(in));
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot open config for write: " + path);
  out << to_json().dump(2) << "\n";
}

bool family_known(const std::string& family) {
  return family == kFamilyCtc || family == kFamilyRnnt ||
         family == kFamilyMlmCtc || family == kFamilyMlmCtcSlu;
}

namespace {

int family_index(const std::string& family) {
  if (family == kFamilyCtc) return 1;
  if (family == kFamilyRnnt) return 2;
  if (family == kFamilyMlmCtc) return 3;
  if (family == kFamilyMlmCtcSlu) return 4;
  throw ConfigError("unknown model family: " + family);
}

std::shared_ptr<Embedder> make_embedder(const ExperimentConfig& cfg,
                                        const Dataset& ds, Rng& rng) {
  if (cfg.embedder == "oracle") {
    return std::make_shared<OracleEmbedder>(
        ds.spec.oracle_embedding_table(), ds.spec.context_rule());
  }
  return std::make_shared<ToyMlm>(cfg.mlm, ds.vocab.size(), rng);
}

}  // namespace

ModelSet build_models(const ExperimentConfig& cfg, const Dataset& ds,
                      const std::string& family) {
  cfg.validate();
  ModelSet models;
  Rng rng(cfg.seed * 7723 + family_index(family));
  if (family == kFamilyCtc) {
    models.ctc = std::make_unique<CtcBaselineModel>(
        cfg.encoder, cfg.task.feature_dim, ds.vocab, ds.small_vocab, rng);
  } else if (family == kFamilyRnnt) {
    models.rnnt = std::make_unique<RnntBaselineModel>(
        cfg.encoder, cfg.rnnt_joint_dim, cfg.task.feature_dim, ds.vocab,
        ds.small_vocab, rng);
  } else {
    auto embedder = make_embedder(cfg, ds, rng);
    const int intents =
        family == kFamilyMlmCtcSlu ? cfg.task.num_intents : 0;
    models.conditioned = std::make_unique<ConditionedCtcModel>(
        cfg.encoder, cfg.fusion, cfg.task.feature_dim, ds.vocab,
        ds.small_vocab, std::move(embedder), intents, rng);
  }
  return models;
}

double train_one_step(const ExperimentConfig& cfg, const std::string& family,
                      const Dataset& ds, ModelSet& models, Rng& rng,
                      SgdState& sgd, int* skipped) {
  std::uniform_int_distribution<std::size_t> pick(0, ds.train.size() - 1);
  const Utterance& utt = ds.train[pick(rng)];

  LossBreakdown b;
  ParameterSet* params = nullptr;
  if (family == kFamilyCtc) {
    b = models.ctc->training_loss(utt.features, utt.tokens, utt.small_tokens,
                                  cfg.lambda_ic);
    params = &models.ctc->params();
  } else if (family == kFamilyRnnt) {
    b = models.rnnt->training_loss(utt.features, utt.tokens, utt.small_tokens,
                                   cfg.lambda_ctc, cfg.lambda_ic);
    params = &models.rnnt->params();
  } else if (family == kFamilyMlmCtc) {
    b = models.conditioned->training_loss(utt.features, utt.tokens,
                                          utt.small_tokens, rng,
                                          cfg.lambda_ctc, cfg.lambda_ic);
    params = &models.conditioned->params();
  } else if (family == kFamilyMlmCtcSlu) {
    b = models.conditioned->training_loss_slu(
        utt.features, utt.tokens, utt.small_tokens, utt.intent, rng,
        cfg.lambda_ctc, cfg.lambda_ic, cfg.lambda_slu);
    params = &models.conditioned->params();
  } else {
    throw ConfigError("unknown model family: " + family);
  }

  if (b.skipped) {
    if (skipped != nullptr) ++*skipped;
    return std::numeric_limits<double>::infinity();
  }
  // Lattice losses sum over frames; stepping on the per-frame average keeps
  // one learning rate valid across utterance lengths.
  Value step_loss = scale(b.total_value, 1.0 / utt.features.rows);
  GradientMap grads = backward(step_loss, *params);
  clip_gradients(grads, cfg.optim.max_grad_norm);
  sgd_step(*params, grads, sgd);
  return b.total;
}

TrainOutput train_family(const ExperimentConfig& cfg,
                         const std::string& family, const Dataset& ds,
                         ModelSet& models, const std::string& out_dir) {
  cfg.validate();
  if (!family_known(family)) {
    throw ConfigError("unknown model family: " + family);
  }
  TrainOutput out;

  // The trainable masked LM is pre-trained on the transcripts, then frozen.
  if ((family == kFamilyMlmCtc || family == kFamilyMlmCtcSlu) &&
      cfg.embedder == "mlm") {
    auto* mlm = dynamic_cast<ToyMlm*>(&models.conditioned->embedder());
    if (mlm == nullptr) {
      throw ContractError("configured mlm embedder is missing");
    }
    if (ds.text.empty()) {
      throw ContractError("mlm pre-training needs the text pool");
    }
    mlm->parameters()->set_frozen(false);
    Rng rng(cfg.seed * 16127 + 11);
    SgdState sgd{cfg.mlm_optim.learning_rate, cfg.mlm_optim.momentum, {}};
    std::uniform_int_distribution<std::size_t> pick(0, ds.text.size() - 1);
    for (int step = 0; step < cfg.mlm_optim.steps; ++step) {
      Value loss = mlm->pretrain_loss(ds.text[pick(rng)], rng);
      if (std::isnan(loss.item())) {
        throw Error("NaN mlm pretraining loss at step " +
                    std::to_string(step));
      }
      GradientMap grads = backward(loss, *mlm->parameters());
      clip_gradients(grads, cfg.mlm_optim.max_grad_norm);
      sgd_step(*mlm->parameters(), grads, sgd);
    }
    mlm->freeze();
  }

  Rng rng(cfg.seed * 104729 + family_index(family));
  SgdState sgd{cfg.optim.learning_rate, cfg.optim.momentum, {}};
  std::vector<std::pair<int, double>> curve_rows;
  for (int step = 0; step < cfg.optim.steps; ++step) {
    // Fixed two-stage decay settles the tail of the run.
    sgd.learning_rate = cfg.optim.learning_rate;
    if (step >= (cfg.optim.steps * 3) / 5) sgd.learning_rate *= 0.5;
    if (step >= (cfg.optim.steps * 17) / 20) sgd.learning_rate *= 0.5;
    const double loss =
        train_one_step(cfg, family, ds, models, rng, sgd, &out.skipped_samples);
    curve_rows.emplace_back(step, loss);
    if (std::isfinite(loss)) {
      out.loss_curve.push_back(loss);
    }
    if (std::isnan(loss)) {
      throw Error("NaN loss at step " + std::to_string(step) + " (" + family +
                  ")");
    }
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    ParameterSet combined;
    if (family == kFamilyCtc) {
      combined.absorb("", models.ctc->params());
    } else if (family == kFamilyRnnt) {
      combined.absorb("", models.rnnt->params());
    } else {
      combined.absorb("", models.conditioned->params());
      if (auto* emb_params = models.conditioned->embedder().parameters()) {
        combined.absorb("embedder.", *emb_params);
      }
    }
    out.checkpoint_path = out_dir + "/" + family + ".ckpt.json";
    save_parameters(combined, out.checkpoint_path);

    std::ofstream csv(out_dir + "/" + family + ".loss.csv");
    csv << "step,loss\n";
    csv.precision(17);
    for (auto [step, loss] : curve_rows) csv << step << "," << loss << "\n";
  }
  return out;
}

SplitScore score_pairs(const Vocabulary& vocab,
                       const std::vector<ScoredPair>& pairs) {
  SplitScore score;
  EditCounts char_totals;
  int ref_chars = 0;
  for (const auto& pair : pairs) {
    const EditCounts counts = edit_distance(pair.ref, pair.hyp);
    score.totals.substitutions += counts.substitutions;
    score.totals.insertions += counts.insertions;
    score.totals.deletions += counts.deletions;
    score.ref_tokens += pair.ref.length();
    if (pair.ref.empty() && !pair.hyp.empty()) {
      score.empty_reference_seen = true;
    }

    // Character scoring over the space-joined token strings.
    auto to_chars = [&](const TokenSequence& seq) {
      TokenSequence chars;
      for (int n = 0; n < seq.length(); ++n) {
        if (n) chars.ids.push_back(' ');
        for (char c : vocab.token(seq.ids[n])) chars.ids.push_back(c);
      }
      return chars;
    };
    const TokenSequence ref_c = to_chars(pair.ref);
    const EditCounts cc = edit_distance(ref_c, to_chars(pair.hyp));
    char_totals.substitutions += cc.substitutions;
    char_totals.insertions += cc.insertions;
    char_totals.deletions += cc.deletions;
    ref_chars += ref_c.length();

    if (!pair.ambiguous.empty()) {
      const std::vector<int> aligned = edit_alignment(pair.ref, pair.hyp);
      for (int n = 0; n < pair.ref.length(); ++n) {
        if (!pair.ambiguous[n]) continue;
        ++score.ambiguous_positions;
        if (aligned[n] != pair.ref.ids[n]) ++score.ambiguous_errors;
      }
    }
  }
  score.wer = double(score.totals.total()) / std::max(score.ref_tokens, 1);
  score.cer = double(char_totals.total()) / std::max(ref_chars, 1);
  return score;
}

namespace {

json score_to_json(const SplitScore& s, const std::vector<ScoredPair>& pairs,
                   const Vocabulary& vocab) {
  json utts = json::array();
  for (const auto& p : pairs) {
    auto render = [&](const TokenSequence& seq) {
      std::string out;
      for (int n = 0; n < seq.length(); ++n) {
        if (n) out += ' ';
        out += vocab.token(seq.ids[n]);
      }
      return out;
    };
    utts.push_back(json{{"id", p.id}, {"ref", render(p.ref)},
                        {"hyp", render(p.hyp)}});
  }
  return json{{"wer", s.wer},
              {"cer", s.cer},
              {"substitutions", s.totals.substitutions},
              {"insertions", s.totals.insertions},
              {"deletions", s.totals.deletions},
              {"ref_tokens", s.ref_tokens},
              {"ambiguous_error_rate", s.ambiguous_error_rate()},
              {"ambiguous_errors", s.ambiguous_errors},
              {"ambiguous_positions", s.ambiguous_positions},
              {"empty_reference_wer_denominator_one", s.empty_reference_seen},
              {"utterances", utts}};
}

struct RtfClock {
  double decode_seconds = 0.0;
  double audio_seconds = 0.0;

  template <typename Fn>
  auto timed(Fn&& fn, int frames, double frame_period) {
    const auto start = std::chrono::steady_clock::now();
    auto result = fn();
    const auto stop = std::chrono::steady_clock::now();
    decode_seconds +=
        std::chrono::duration<double>(stop - start).count();
    audio_seconds += frames * frame_period;
    return result;
  }

  double rtf() const {
    return audio_seconds > 0 ? decode_seconds / audio_seconds : 0.0;
  }
};

}  // namespace

json evaluate(const ExperimentConfig& cfg, const Dataset& ds,
              ModelSet& models) {
  cfg.validate();
  json report;
  report["seed"] = cfg.seed;
  json models_json = json::object();

  const std::vector<std::string> split_names{"dev", "test"};

  if (models.ctc) {
    json m;
    RtfClock clock;
    for (const auto& split : split_names) {
      std::vector<ScoredPair> pairs;
      for (const auto& utt : ds.split(split)) {
        TokenSequence hyp = clock.timed(
            [&] { return decode_ctc_baseline(*models.ctc, utt.features); },
            utt.features.rows, cfg.frame_period_seconds);
        pairs.push_back({utt.id, utt.tokens, std::move(hyp), utt.ambiguous});
      }
      m[split] = score_to_json(score_pairs(ds.vocab, pairs), pairs, ds.vocab);
    }
    m["rtf"] = clock.rtf();
    models_json["ctc"] = std::move(m);
  }

  if (models.rnnt) {
    json m;
    RtfClock clock;
    for (const auto& split : split_names) {
      std::vector<ScoredPair> pairs;
      for (const auto& utt : ds.split(split)) {
        TokenSequence hyp = clock.timed(
            [&] {
              return decode_rnnt_baseline(*models.rnnt, utt.features,
                                          cfg.rnnt_max_tokens_per_frame);
            },
            utt.features.rows, cfg.frame_period_seconds);
        pairs.push_back({utt.id, utt.tokens, std::move(hyp), utt.ambiguous});
      }
      m[split] = score_to_json(score_pairs(ds.vocab, pairs), pairs, ds.vocab);
    }
    m["rtf"] = clock.rtf();
    models_json["rnnt"] = std::move(m);
  }

  if (models.conditioned) {
    json m;
    json per_k = json::array();
    const bool slu = models.conditioned->has_intent_head();
    for (int k : cfg.k_list) {
      DecodeConfig dc;
      dc.iterations = k;
      json k_entry;
      k_entry["k"] = k;
      RtfClock clock;
      for (const auto& split : split_names) {
        std::vector<ScoredPair> pairs;
        int intent_hits = 0, intent_total = 0;
        for (const auto& utt : ds.split(split)) {
          DecodeResult res = clock.timed(
              [&] { return decode(*models.conditioned, utt.features, dc); },
              utt.features.rows, cfg.frame_period_seconds);
          if (slu && utt.intent >= 0) {
            ++intent_total;
            if (res.intent == utt.intent) ++intent_hits;
          }
          pairs.push_back(
              {utt.id, utt.tokens, std::move(res.hypothesis), utt.ambiguous});
        }
        k_entry[split] =
            score_to_json(score_pairs(ds.vocab, pairs), pairs, ds.vocab);
        if (slu && intent_total > 0) {
          k_entry[split]["intent_accuracy"] =
              double(intent_hits) / intent_total;
        }
      }
      k_entry["rtf"] = clock.rtf();
      per_k.push_back(std::move(k_entry));
    }
    m["per_k"] = std::move(per_k);
    if (slu) {
      // Majority-class baseline per split.
      json baseline;
      for (const auto& split : split_names) {
        std::vector<int> counts(cfg.task.num_intents, 0);
        int total = 0;
        for (const auto& utt : ds.split(split)) {
          if (utt.intent >= 0) {
            ++counts[utt.intent];
            ++total;
          }
        }
        if (total > 0) {
          baseline[split] =
              double(*std::max_element(counts.begin(), counts.end())) / total;
        }
      }
      m["intent_majority_baseline"] = std::move(baseline);
    }
    models_json["mlmctc"] = std::move(m);
  }

  report["models"] = std::move(models_json);
  return report;
}

json strip_timing(json report) {
  if (report.is_object()) {
    report.erase("rtf");
    for (auto& [key, value] : report.items()) {
      value = strip_timing(std::move(value));
    }
  } else if (report.is_array()) {
    for (auto& value : report) value = strip_timing(std::move(value));
  }
  return report;
}

json bench_rtf(const ExperimentConfig& cfg, const Dataset& ds,
               ModelSet& models, int max_utterances) {
  const bool was_parallel = kernels::parallel_enabled();
  kernels::set_parallel(false);  // single worker for stable timing
  json out;
  const auto& utts = ds.test;
  const int count =
      std::min<int>(max_utterances, static_cast<int>(utts.size()));

  if (models.ctc) {
    RtfClock clock;
    for (int i = 0; i < count; ++i) {
      clock.timed(
          [&] { return decode_ctc_baseline(*models.ctc, utts[i].features); },
          utts[i].features.rows, cfg.frame_period_seconds);
    }
    out["ctc_rtf"] = clock.rtf();
  }
  if (models.rnnt) {
    RtfClock clock;
    for (int i = 0; i < count; ++i) {
      clock.timed(
          [&] {
            return decode_rnnt_baseline(*models.rnnt, utts[i].features,
                                        cfg.rnnt_max_tokens_per_frame);
          },
          utts[i].features.rows, cfg.frame_period_seconds);
    }
    out["rnnt_rtf"] = clock.rtf();
  }
  if (models.conditioned) {
    for (int k : {1, cfg.iterations}) {
      DecodeConfig dc;
      dc.iterations = k;
      RtfClock clock;
      for (int i = 0; i < count; ++i) {
        clock.timed(
            [&] { return decode(*models.conditioned, utts[i].features, dc); },
            utts[i].features.rows, cfg.frame_period_seconds);
      }
      out["mlmctc_rtf_k" + std::to_string(k)] = clock.rtf();
    }
  }
  out["utterances"] = count;
  kernels::set_parallel(was_parallel);
  return out;
}

void dump_attention(const ConditionedCtcModel& model, const Utterance& utt,
                    const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  // Condition on the fully observed reference, the end state of decoding.
  MaskedSequence cond = MaskedSequence::all_observed(utt.tokens);
  AudioEncodeResult enc = model.encode(utt.features);
  FusedForward fused = model.fuse(enc.final_hidden, cond, true);

  const int t = fused.t_frames;
  const int n = fused.n_tokens;
  for (std::size_t layer = 0; layer < fused.attention.size(); ++layer) {
    for (std::size_t head = 0; head < fused.attention[layer].size(); ++head) {
      const Tensor& w = fused.attention[layer][head];
      std::ofstream csv(out_dir + "/attn_l" + std::to_string(layer) + "_h" +
                        std::to_string(head) + ".csv");
      csv.precision(17);
      for (int r = 0; r < w.rows; ++r) {
        for (int c = 0; c < w.cols; ++c) {
          if (c) csv << ',';
          csv << w.at(r, c);
        }
        csv << '\n';
      }
    }
  }
  std::ofstream sidecar(out_dir + "/boundaries.json");
  sidecar << json{{"utterance", utt.id},
                  {"t_frames", t},
                  {"n_tokens", n},
                  {"rows", t + n + 1},
                  {"layout", "audio|summary|tokens"},
                  {"audio_end", t},
                  {"summary_index", t},
                  {"tokens_begin", t + 1}}
                 .dump(2)
          << "\n";
}

}  // namespace mpctc

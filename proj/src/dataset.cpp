#include "mpctc/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace mpctc {

namespace {
using nlohmann::json;
}

void SyntheticTaskSpec::validate() const {
  if (num_anchors < 1 || num_anchors > 26) {
    throw ConfigError("anchor count out of range");
  }
  if (num_homophone_pairs < 0 || num_homophone_pairs > 26) {
    throw ConfigError("homophone pair count out of range");
  }
  if (min_tokens < 1 || max_tokens < min_tokens) {
    throw ConfigError("bad utterance length range");
  }
  if (min_frames_per_token < 1 || max_frames_per_token < min_frames_per_token) {
    throw ConfigError("bad frames-per-token range");
  }
  if (feature_dim < num_classes()) {
    throw ConfigError("feature dim must cover the acoustic classes");
  }
  if (noise_stddev < 0) throw ConfigError("noise level must be nonnegative");
  if (silence_prob < 0 || silence_prob > 1) {
    throw ConfigError("silence probability outside [0, 1]");
  }
  if (num_train < 1 || num_dev < 1 || num_test < 1 || num_text < 0) {
    throw ConfigError("every split needs at least one utterance");
  }
  if (with_intents && num_intents < 2) {
    throw ConfigError("intent task needs at least two labels");
  }
  if (max_tokens > 1 && num_homophone_pairs < 1) {
    // Utterances longer than one token place homophones at odd positions.
    throw ConfigError("multi-token utterances need at least one homophone "
                      "pair");
  }
}

Vocabulary SyntheticTaskSpec::build_vocab() const {
  std::vector<std::string> regular;
  for (int a = 0; a < num_anchors; ++a) {
    regular.push_back("c" + std::to_string(a));
  }
  for (int p = 0; p < num_homophone_pairs; ++p) {
    regular.push_back("h" + std::to_string(p) + "a");
    regular.push_back("h" + std::to_string(p) + "b");
  }
  return Vocabulary::from_regular(regular);
}

Vocabulary SyntheticTaskSpec::build_small_vocab() const {
  std::vector<std::string> regular;
  for (int a = 0; a < num_anchors; ++a) {
    regular.push_back("C" + std::to_string(a));
  }
  for (int p = 0; p < num_homophone_pairs; ++p) {
    regular.push_back("H" + std::to_string(p));
  }
  return Vocabulary::from_regular(regular);
}

int SyntheticTaskSpec::class_of(int id) const {
  if (is_anchor_id(id)) return 1 + (id - 2);
  if (is_member_id(id)) return 1 + num_anchors + (id - 2 - num_anchors) / 2;
  throw ContractError("token id has no acoustic class");
}

int SyntheticTaskSpec::small_id_of(int id) const {
  if (is_anchor_id(id)) return 2 + (id - 2);
  if (is_member_id(id)) return 2 + num_anchors + (id - 2 - num_anchors) / 2;
  throw ContractError("token id has no small-vocabulary image");
}

int SyntheticTaskSpec::correct_member(int pair, int left_anchor,
                                      int right_anchor) const {
  if (pair < 0 || pair >= num_homophone_pairs || left_anchor < 0 ||
      left_anchor >= num_anchors || right_anchor < 0 ||
      right_anchor >= num_anchors) {
    throw ContractError("context rule queried outside its domain");
  }
  // Well-mixed fixed table; one generator draw per cell.
  const uint32_t cell = static_cast<uint32_t>(
      (pair * num_anchors + left_anchor) * num_anchors + right_anchor);
  std::mt19937 hash(0x9e3779b9u ^ (cell * 2654435761u));
  return static_cast<int>(hash() & 1u);
}

std::vector<double> SyntheticTaskSpec::context_posterior(
    const MaskedSequence& masked, int pos) const {
  const int vocab_size = 2 + num_anchors + 2 * num_homophone_pairs;
  std::vector<double> posterior(vocab_size, 0.0);
  if (pos < 0 || pos >= masked.length()) {
    throw ContractError("position outside the masked sequence");
  }
  for (int n = 0; n < masked.length(); ++n) {
    if (masked.observed[n] &&
        (masked.ids[n] < 2 || masked.ids[n] >= vocab_size)) {
      throw ContractError("token outside the context rule's domain");
    }
  }
  if (masked.observed[pos]) {
    posterior[masked.ids[pos]] = 1.0;
    return posterior;
  }
  // Slot type from observed context, not position parity, so an insertion
  // upstream cannot derail the rule: a masked position flanked by observed
  // anchors is a homophone slot; an observed member next door marks an
  // anchor slot; otherwise the canonical layout's parity decides.
  const bool left_anchor = pos - 1 >= 0 && masked.observed[pos - 1] &&
                           is_anchor_id(masked.ids[pos - 1]);
  const bool right_anchor = pos + 1 < masked.length() &&
                            masked.observed[pos + 1] &&
                            is_anchor_id(masked.ids[pos + 1]);
  const bool member_adjacent =
      (pos - 1 >= 0 && masked.observed[pos - 1] &&
       is_member_id(masked.ids[pos - 1])) ||
      (pos + 1 < masked.length() && masked.observed[pos + 1] &&
       is_member_id(masked.ids[pos + 1]));
  const bool member_slot =
      num_homophone_pairs > 0 &&
      ((left_anchor && right_anchor) || (!member_adjacent && pos % 2 == 1));

  if (member_slot) {
    // The member index: majority of observed member tokens, else the table
    // on the first two observed anchors, else open.
    int votes[2] = {0, 0};
    for (int n = 0; n < masked.length(); ++n) {
      if (n != pos && masked.observed[n] && is_member_id(masked.ids[n])) {
        ++votes[member_of(masked.ids[n])];
      }
    }
    double weight0 = -1.0;
    if (votes[0] != votes[1]) weight0 = votes[0] > votes[1] ? 1.0 : 0.0;
    if (weight0 < 0.0 && masked.length() > 2 && masked.observed[0] &&
        masked.observed[2] && is_anchor_id(masked.ids[0]) &&
        is_anchor_id(masked.ids[2])) {
      // The table keys on the leading anchor bigram; only the canonical
      // positions may be trusted to hold it.
      weight0 = correct_member(0, masked.ids[0] - 2, masked.ids[2] - 2) == 0
                    ? 1.0
                    : 0.0;
    }
    if (weight0 < 0.0) weight0 = 0.5;
    for (int p = 0; p < num_homophone_pairs; ++p) {
      posterior[member_id(p, 0)] = weight0 / num_homophone_pairs;
      posterior[member_id(p, 1)] = (1.0 - weight0) / num_homophone_pairs;
    }
    return posterior;
  }
  for (int a = 0; a < num_anchors; ++a) {
    posterior[anchor_id(a)] = 1.0 / num_anchors;
  }
  return posterior;
}

ContextRule SyntheticTaskSpec::context_rule() const {
  SyntheticTaskSpec spec = *this;
  return [spec](const MaskedSequence& masked, int pos) {
    return spec.context_posterior(masked, pos);
  };
}

Tensor SyntheticTaskSpec::oracle_embedding_table() const {
  const int vocab_size = 2 + num_anchors + 2 * num_homophone_pairs;
  // Class one-hot plus a two-way member flag. The flag dims are shared
  // across pairs, so a posterior mixed over pairs keeps the member feature
  // at full strength.
  const int dim = num_classes() + 2;
  Tensor table(vocab_size, dim);
  for (int id = 2; id < vocab_size; ++id) {
    table.at(id, class_of(id)) = 1.0;
    if (is_member_id(id)) {
      table.at(id, num_classes() + member_of(id)) = 1.0;
    }
  }
  return table;
}

namespace {

TokenSequence make_token_sequence(const SyntheticTaskSpec& spec, Rng& rng,
                                  int* first_anchor_out) {
  std::uniform_int_distribution<int> len_dist(spec.min_tokens,
                                              spec.max_tokens);
  std::uniform_int_distribution<int> anchor_dist(0, spec.num_anchors - 1);
  std::uniform_int_distribution<int> pair_dist(
      0, std::max(0, spec.num_homophone_pairs - 1));

  int n_tok = len_dist(rng);
  if (n_tok % 2 == 0) ++n_tok;  // anchor-terminated

  // Draw the anchor skeleton first, then fill the slots by the rule.
  std::vector<int> anchors((n_tok + 1) / 2);
  for (int& a : anchors) a = anchor_dist(rng);
  // One member index per utterance, fixed by the leading anchor bigram;
  // every homophone slot reuses it regardless of pair. Single-anchor
  // utterances have no slots to fill.
  const int member =
      spec.num_homophone_pairs > 0 && anchors.size() >= 2
          ? spec.correct_member(0, anchors[0], anchors[1])
          : 0;
  TokenSequence w;
  for (int n = 0; n < n_tok; ++n) {
    if (n % 2 == 0) {
      w.ids.push_back(spec.anchor_id(anchors[n / 2]));
    } else {
      w.ids.push_back(spec.member_id(pair_dist(rng), member));
    }
  }
  if (first_anchor_out != nullptr) *first_anchor_out = anchors[0];
  return w;
}

Utterance make_utterance(const SyntheticTaskSpec& spec,
                         const Tensor& class_emb, const std::string& id,
                         Rng& rng) {
  Utterance utt;
  utt.id = id;
  int first_anchor = 0;
  utt.tokens = make_token_sequence(spec, rng, &first_anchor);
  for (int n = 0; n < utt.tokens.length(); ++n) {
    utt.small_tokens.ids.push_back(spec.small_id_of(utt.tokens.ids[n]));
    utt.ambiguous.push_back(spec.is_member_id(utt.tokens.ids[n]));
  }
  if (spec.with_intents) utt.intent = first_anchor % spec.num_intents;

  // Frame layout: leading silence, token spans, optional separators,
  // trailing silence. Homophone members share their pair's class embedding
  // exactly; nothing in the features distinguishes them.
  std::uniform_int_distribution<int> frames_dist(spec.min_frames_per_token,
                                                 spec.max_frames_per_token);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> frame_classes;
  frame_classes.push_back(0);
  for (int n = 0; n < utt.tokens.length(); ++n) {
    const int span = frames_dist(rng);
    const int cls = spec.class_of(utt.tokens.ids[n]);
    for (int f = 0; f < span; ++f) frame_classes.push_back(cls);
    if (n + 1 < utt.tokens.length() && unit(rng) < spec.silence_prob) {
      frame_classes.push_back(0);
    }
  }
  frame_classes.push_back(0);

  utt.features = Tensor(static_cast<int>(frame_classes.size()),
                        spec.feature_dim);
  std::normal_distribution<double> noise(0.0, spec.noise_stddev);
  for (int t = 0; t < utt.features.rows; ++t) {
    for (int d = 0; d < spec.feature_dim; ++d) {
      utt.features.at(t, d) = class_emb.at(frame_classes[t], d) + noise(rng);
    }
  }
  return utt;
}

std::vector<Utterance> make_split(const SyntheticTaskSpec& spec,
                                  const Tensor& class_emb,
                                  const std::string& name, int count,
                                  uint64_t seed) {
  Rng rng(seed);
  std::vector<Utterance> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    out.push_back(
        make_utterance(spec, class_emb, name + "-" + std::to_string(i), rng));
  }
  return out;
}

}  // namespace

const std::vector<Utterance>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw ContractError("unknown split: " + name);
}

Dataset generate_dataset(const SyntheticTaskSpec& spec, uint64_t seed) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  ds.vocab = spec.build_vocab();
  ds.small_vocab = spec.build_small_vocab();

  // Orthonormal class directions (Gram-Schmidt over seeded Gaussians) keep
  // every pair of classes equally separable under the isotropic noise.
  Rng class_rng(seed);
  ds.class_embeddings =
      random_normal(spec.num_classes(), spec.feature_dim, 1.0, class_rng);
  for (int i = 0; i < spec.num_classes(); ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int d = 0; d < spec.feature_dim; ++d) {
        dot += ds.class_embeddings.at(i, d) * ds.class_embeddings.at(j, d);
      }
      for (int d = 0; d < spec.feature_dim; ++d) {
        ds.class_embeddings.at(i, d) -= dot * ds.class_embeddings.at(j, d);
      }
    }
    double norm = 0.0;
    for (int d = 0; d < spec.feature_dim; ++d) {
      norm += ds.class_embeddings.at(i, d) * ds.class_embeddings.at(i, d);
    }
    norm = std::sqrt(norm);
    if (norm < 1e-9) throw ConfigError("degenerate class embedding basis");
    for (int d = 0; d < spec.feature_dim; ++d) {
      ds.class_embeddings.at(i, d) /= norm;
    }
  }

  ds.train = make_split(spec, ds.class_embeddings, "train", spec.num_train,
                        seed * 1000003 + 1);
  ds.dev = make_split(spec, ds.class_embeddings, "dev", spec.num_dev,
                      seed * 1000003 + 2);
  ds.test = make_split(spec, ds.class_embeddings, "test", spec.num_test,
                       seed * 1000003 + 3);

  Rng text_rng(seed * 1000003 + 4);
  ds.text.reserve(spec.num_text);
  for (int i = 0; i < spec.num_text; ++i) {
    ds.text.push_back(make_token_sequence(spec, text_rng, nullptr));
  }
  return ds;
}

namespace {

json spec_to_json(const SyntheticTaskSpec& s) {
  return json{{"num_anchors", s.num_anchors},
              {"num_homophone_pairs", s.num_homophone_pairs},
              {"min_tokens", s.min_tokens},
              {"max_tokens", s.max_tokens},
              {"min_frames_per_token", s.min_frames_per_token},
              {"max_frames_per_token", s.max_frames_per_token},
              {"feature_dim", s.feature_dim},
              {"noise_stddev", s.noise_stddev},
              {"silence_prob", s.silence_prob},
              {"num_train", s.num_train},
              {"num_dev", s.num_dev},
              {"num_test", s.num_test},
              {"num_text", s.num_text},
              {"with_intents", s.with_intents},
              {"num_intents", s.num_intents}};
}

SyntheticTaskSpec spec_from_json(const json& j) {
  SyntheticTaskSpec s;
  s.num_anchors = j.value("num_anchors", s.num_anchors);
  s.num_homophone_pairs = j.value("num_homophone_pairs", s.num_homophone_pairs);
  s.min_tokens = j.value("min_tokens", s.min_tokens);
  s.max_tokens = j.value("max_tokens", s.max_tokens);
  s.min_frames_per_token = j.value("min_frames_per_token",
                                   s.min_frames_per_token);
  s.max_frames_per_token = j.value("max_frames_per_token",
                                   s.max_frames_per_token);
  s.feature_dim = j.value("feature_dim", s.feature_dim);
  s.noise_stddev = j.value("noise_stddev", s.noise_stddev);
  s.silence_prob = j.value("silence_prob", s.silence_prob);
  s.num_train = j.value("num_train", s.num_train);
  s.num_dev = j.value("num_dev", s.num_dev);
  s.num_test = j.value("num_test", s.num_test);
  s.num_text = j.value("num_text", s.num_text);
  s.with_intents = j.value("with_intents", s.with_intents);
  s.num_intents = j.value("num_intents", s.num_intents);
  return s;
}

void write_split(const Dataset& ds, const std::vector<Utterance>& utts,
                 const std::string& dir, const std::string& name) {
  std::ofstream manifest(dir + "/" + name + ".jsonl");
  std::ofstream feats(dir + "/" + name + ".feats", std::ios::binary);
  if (!manifest || !feats) {
    throw Error("cannot open split files for write in " + dir);
  }
  const char magic[8] = {'M', 'P', 'C', 'F', 'E', 'A', 'T', '1'};
  feats.write(magic, 8);
  const int64_t count = static_cast<int64_t>(utts.size());
  const int64_t dim = ds.spec.feature_dim;
  feats.write(reinterpret_cast<const char*>(&count), 8);
  feats.write(reinterpret_cast<const char*>(&dim), 8);
  for (const auto& u : utts) {
    json j;
    j["id"] = u.id;
    std::vector<std::string> toks, small;
    for (int id : u.tokens.ids) toks.push_back(ds.vocab.token(id));
    for (int id : u.small_tokens.ids) small.push_back(ds.small_vocab.token(id));
    j["tokens"] = toks;
    j["small_tokens"] = small;
    j["ambiguous"] = u.ambiguous;
    j["frames"] = u.features.rows;
    if (u.intent >= 0) j["intent"] = u.intent;
    manifest << j.dump() << "\n";

    const int64_t frames = u.features.rows;
    feats.write(reinterpret_cast<const char*>(&frames), 8);
    feats.write(reinterpret_cast<const char*>(u.features.data.data()),
                static_cast<std::streamsize>(u.features.size() * 8));
  }
}

std::vector<Utterance> read_split(const Dataset& ds, const std::string& dir,
                                  const std::string& name) {
  std::ifstream manifest(dir + "/" + name + ".jsonl");
  std::ifstream feats(dir + "/" + name + ".feats", std::ios::binary);
  if (!manifest || !feats) throw Error("cannot open split files in " + dir);
  char magic[8];
  feats.read(magic, 8);
  if (std::string(magic, 8) != "MPCFEAT1") {
    throw Error("bad feature file header in " + dir);
  }
  int64_t count = 0, dim = 0;
  feats.read(reinterpret_cast<char*>(&count), 8);
  feats.read(reinterpret_cast<char*>(&dim), 8);

  std::vector<Utterance> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Utterance u;
    u.id = j.at("id").get<std::string>();
    for (const auto& t : j.at("tokens")) {
      u.tokens.ids.push_back(ds.vocab.id_of(t.get<std::string>()));
    }
    for (const auto& t : j.at("small_tokens")) {
      u.small_tokens.ids.push_back(ds.small_vocab.id_of(t.get<std::string>()));
    }
    u.ambiguous = j.at("ambiguous").get<std::vector<bool>>();
    u.intent = j.value("intent", -1);
    int64_t frames = 0;
    feats.read(reinterpret_cast<char*>(&frames), 8);
    u.features = Tensor(static_cast<int>(frames), static_cast<int>(dim));
    feats.read(reinterpret_cast<char*>(u.features.data.data()),
               static_cast<std::streamsize>(u.features.size() * 8));
    out.push_back(std::move(u));
  }
  if (static_cast<int64_t>(out.size()) != count) {
    throw Error("manifest and feature file disagree in " + dir);
  }
  return out;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  ds.vocab.save(dir + "/vocab.txt");
  ds.small_vocab.save(dir + "/small_vocab.txt");
  {
    std::ofstream meta(dir + "/task.json");
    json j = spec_to_json(ds.spec);
    j["class_embeddings"] = ds.class_embeddings.data;
    meta << j.dump(2) << "\n";
  }
  write_split(ds, ds.train, dir, "train");
  write_split(ds, ds.dev, dir, "dev");
  write_split(ds, ds.test, dir, "test");
  {
    std::ofstream text(dir + "/text.jsonl");
    for (const auto& w : ds.text) {
      std::vector<std::string> toks;
      for (int id : w.ids) toks.push_back(ds.vocab.token(id));
      text << json{{"tokens", toks}}.dump() << "\n";
    }
  }
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream meta(dir + "/task.json");
  if (!meta) throw Error("cannot open " + dir + "/task.json");
  json j = json::parse(meta);
  Dataset ds;
  ds.spec = spec_from_json(j);
  ds.spec.validate();
  ds.vocab = Vocabulary::load(dir + "/vocab.txt");
  ds.small_vocab = Vocabulary::load(dir + "/small_vocab.txt");
  ds.class_embeddings = Tensor(ds.spec.num_classes(), ds.spec.feature_dim);
  const auto& emb = j.at("class_embeddings");
  if (emb.size() != ds.class_embeddings.size()) {
    throw ShapeError("class embedding payload does not match the task spec");
  }
  for (std::size_t i = 0; i < ds.class_embeddings.size(); ++i) {
    ds.class_embeddings.data[i] = emb[i].get<double>();
  }
  ds.train = read_split(ds, dir, "train");
  ds.dev = read_split(ds, dir, "dev");
  ds.test = read_split(ds, dir, "test");
  std::ifstream text(dir + "/text.jsonl");
  if (text) {
    std::string line;
    while (std::getline(text, line)) {
      if (line.empty()) continue;
      json tj = json::parse(line);
      TokenSequence w;
      for (const auto& t : tj.at("tokens")) {
        w.ids.push_back(ds.vocab.id_of(t.get<std::string>()));
      }
      ds.text.push_back(std::move(w));
    }
  }
  return ds;
}

}  // namespace mpctc

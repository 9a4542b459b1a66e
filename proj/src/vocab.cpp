#include "mpctc/vocab.hpp"

#include <fstream>
#include <unordered_set>

namespace mpctc {

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens)) {
  validate();
}

Vocabulary Vocabulary::from_regular(const std::vector<std::string>& regular) {
  std::vector<std::string> tokens;
  tokens.reserve(regular.size() + 2);
  tokens.push_back(kBlankToken);
  tokens.push_back(kMaskToken);
  tokens.insert(tokens.end(), regular.begin(), regular.end());
  return Vocabulary(std::move(tokens));
}

void Vocabulary::validate() const {
  if (tokens_.size() < 2) {
    throw ContractError("vocabulary must contain the blank and mask tokens");
  }
  if (tokens_[kBlankId] != kBlankToken || tokens_[kMaskId] != kMaskToken) {
    throw ContractError("vocabulary lines 0 and 1 must be <blank> and <mask>");
  }
  std::unordered_set<std::string> seen;
  for (const auto& t : tokens_) {
    if (t.empty()) throw ContractError("empty token in vocabulary");
    if (!seen.insert(t).second) {
      throw ContractError("duplicate token in vocabulary: " + t);
    }
  }
}

const std::string& Vocabulary::token(int id) const {
  if (!valid_id(id)) {
    throw ContractError("token id out of range: " + std::to_string(id));
  }
  return tokens_[id];
}

int Vocabulary::id_of(const std::string& token) const {
  for (int i = 0; i < size(); ++i) {
    if (tokens_[i] == token) return i;
  }
  return -1;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot open vocabulary file for write: " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

}  // namespace mpctc

#pragma once

#include <string>
#include <vector>

#include "mpctc/common.hpp"

namespace mpctc {

// Token inventory with two reserved symbols at fixed positions: the blank
// used by alignment lattices (id 0) and the mask used by contextual
// conditioning (id 1). Regular tokens occupy ids 2 and up.
class Vocabulary {
 public:
  static constexpr int kBlankId = 0;
  static constexpr int kMaskId = 1;
  static constexpr const char* kBlankToken = "<blank>";
  static constexpr const char* kMaskToken = "<mask>";

  Vocabulary() = default;

  // Builds a vocabulary from the regular (non-special) tokens.
  static Vocabulary from_regular(const std::vector<std::string>& regular);

  int size() const { return static_cast<int>(tokens_.size()); }
  int num_regular() const { return size() - 2; }

  bool valid_id(int id) const { return id >= 0 && id < size(); }
  bool is_special(int id) const { return id == kBlankId || id == kMaskId; }

  const std::string& token(int id) const;
  // Returns -1 when the token is unknown.
  int id_of(const std::string& token) const;

  // One token per line; line 0 is "<blank>", line 1 is "<mask>".
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  explicit Vocabulary(std::vector<std::string> tokens);
  void validate() const;

  std::vector<std::string> tokens_;
};

}  // namespace mpctc

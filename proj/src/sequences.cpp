#include "mpctc/sequences.hpp"

#include <algorithm>

namespace mpctc {

void TokenSequence::validate(const Vocabulary& vocab) const {
  for (int id : ids) {
    if (!vocab.valid_id(id)) {
      throw ContractError("token id out of range: " + std::to_string(id));
    }
    if (vocab.is_special(id)) {
      throw ContractError("token sequence contains a reserved symbol");
    }
  }
}

int RnntAlignment::blank_count() const {
  return static_cast<int>(
      std::count(ids.begin(), ids.end(), Vocabulary::kBlankId));
}

void RnntAlignment::validate() const {
  if (blank_count() != t_frames) {
    throw ContractError("transducer alignment must contain exactly one blank "
                        "per frame");
  }
  for (int id : ids) {
    if (id == Vocabulary::kMaskId) {
      throw ContractError("alignment contains the mask symbol");
    }
  }
}

TokenSequence collapse_ctc(const Alignment& a) {
  TokenSequence w;
  int prev = Vocabulary::kBlankId;
  for (int id : a.ids) {
    if (id == Vocabulary::kMaskId) {
      throw ContractError("alignment contains the mask symbol");
    }
    if (id != Vocabulary::kBlankId && id != prev) {
      w.ids.push_back(id);
    }
    prev = id;
  }
  return w;
}

TokenSequence collapse_rnnt(const RnntAlignment& z) {
  z.validate();
  TokenSequence w;
  for (int id : z.ids) {
    if (id != Vocabulary::kBlankId) w.ids.push_back(id);
  }
  return w;
}

int min_frames_for(const TokenSequence& w) {
  int repeats = 0;
  for (int n = 1; n < w.length(); ++n) {
    if (w.ids[n] == w.ids[n - 1]) ++repeats;
  }
  return w.length() + repeats;
}

std::vector<Alignment> enumerate_ctc_alignments(const TokenSequence& w,
                                                int t_frames,
                                                const Vocabulary& vocab) {
  if (t_frames > 8 || vocab.num_regular() > 4) {
    throw OracleTooLargeError("alignment enumeration guarded to T <= 8 and "
                              "at most 4 regular tokens");
  }
  w.validate(vocab);

  // Alphabet: blank plus every regular token.
  std::vector<int> alphabet;
  alphabet.push_back(Vocabulary::kBlankId);
  for (int id = 2; id < vocab.size(); ++id) alphabet.push_back(id);

  std::vector<Alignment> out;
  Alignment current;
  current.ids.resize(t_frames, Vocabulary::kBlankId);
  // Odometer over alphabet^T, filtered by collapse.
  std::vector<int> digit(t_frames, 0);
  const int base = static_cast<int>(alphabet.size());
  while (true) {
    for (int t = 0; t < t_frames; ++t) current.ids[t] = alphabet[digit[t]];
    if (collapse_ctc(current) == w) out.push_back(current);
    int pos = t_frames - 1;
    while (pos >= 0 && ++digit[pos] == base) digit[pos--] = 0;
    if (pos < 0) break;
  }
  return out;
}

EditCounts edit_distance(const TokenSequence& ref, const TokenSequence& hyp) {
  const int n = ref.length();
  const int m = hyp.length();
  // dp[i][j]: minimal (total, subs, ins, dels) to edit ref[0,i) -> hyp[0,j).
  struct Cell {
    int total, subs, ins, dels;
  };
  std::vector<std::vector<Cell>> dp(n + 1, std::vector<Cell>(m + 1));
  for (int i = 0; i <= n; ++i) dp[i][0] = {i, 0, 0, i};
  for (int j = 0; j <= m; ++j) dp[0][j] = {j, 0, j, 0};
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      const bool match = ref.ids[i - 1] == hyp.ids[j - 1];
      Cell sub = dp[i - 1][j - 1];
      if (!match) {
        sub.total += 1;
        sub.subs += 1;
      }
      Cell del = dp[i - 1][j];
      del.total += 1;
      del.dels += 1;
      Cell ins = dp[i][j - 1];
      ins.total += 1;
      ins.ins += 1;
      Cell best = sub;
      if (del.total < best.total) best = del;
      if (ins.total < best.total) best = ins;
      dp[i][j] = best;
    }
  }
  const Cell& c = dp[n][m];
  return EditCounts{c.subs, c.ins, c.dels};
}

std::vector<int> edit_alignment(const TokenSequence& ref,
                                const TokenSequence& hyp) {
  const int n = ref.length();
  const int m = hyp.length();
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1));
  for (int i = 0; i <= n; ++i) dp[i][0] = i;
  for (int j = 0; j <= m; ++j) dp[0][j] = j;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      int sub = dp[i - 1][j - 1] + (ref.ids[i - 1] != hyp.ids[j - 1] ? 1 : 0);
      int del = dp[i - 1][j] + 1;
      int ins = dp[i][j - 1] + 1;
      dp[i][j] = std::min({sub, del, ins});
    }
  }
  // Backtrace, preferring match/substitution so each reference position maps
  // to at most one hypothesis token.
  std::vector<int> aligned(n, -1);
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        dp[i][j] == dp[i - 1][j - 1] +
                        (ref.ids[i - 1] != hyp.ids[j - 1] ? 1 : 0)) {
      aligned[i - 1] = hyp.ids[j - 1];
      --i;
      --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      aligned[i - 1] = -1;
      --i;
    } else {
      --j;
    }
  }
  return aligned;
}

double wer(const EditCounts& counts, int ref_len) {
  return static_cast<double>(counts.total()) / std::max(ref_len, 1);
}

}  // namespace mpctc

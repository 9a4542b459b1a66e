#include "mpctc/ctc.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace mpctc {

void FramePosteriors::validate() const {
  if (t_frames < 0 || vocab_size <= 0 ||
      log_probs.size() != static_cast<std::size_t>(t_frames) * vocab_size) {
    throw ShapeError("frame posterior grid has inconsistent dimensions");
  }
  for (int t = 0; t < t_frames; ++t) {
    double lse = kNegInf;
    for (int v = 0; v < vocab_size; ++v) {
      const double x = at(t, v);
      if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) {
        throw ContractError("posterior entries must be finite or -inf");
      }
      lse = log_add(lse, x);
    }
    if (std::abs(lse) > 1e-6) {
      throw ContractError("posterior row " + std::to_string(t) +
                          " does not normalize: logsumexp = " +
                          std::to_string(lse));
    }
  }
}

void FramePosteriors::save_csv(std::ostream& out) const {
  out.precision(17);
  for (int t = 0; t < t_frames; ++t) {
    for (int v = 0; v < vocab_size; ++v) {
      if (v) out << ',';
      out << at(t, v);
    }
    out << '\n';
  }
}

FramePosteriors FramePosteriors::load_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell == "-inf") {
        row.push_back(kNegInf);
      } else {
        row.push_back(std::stod(cell));
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ShapeError("ragged posterior CSV");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ShapeError("empty posterior CSV");
  FramePosteriors post(static_cast<int>(rows.size()),
                       static_cast<int>(rows.front().size()));
  for (int t = 0; t < post.t_frames; ++t) {
    for (int v = 0; v < post.vocab_size; ++v) post.at(t, v) = rows[t][v];
  }
  return post;
}

namespace {

// Blank-interleaved label sequence: blank, w1, blank, w2, ..., blank.
std::vector<int> extended_labels(const TokenSequence& w) {
  std::vector<int> ext(2 * w.length() + 1, Vocabulary::kBlankId);
  for (int n = 0; n < w.length(); ++n) ext[2 * n + 1] = w.ids[n];
  return ext;
}

}  // namespace

CtcLossResult ctc_loss(const FramePosteriors& post, const TokenSequence& w) {
  const int T = post.t_frames;
  const int V = post.vocab_size;
  if (T < 1) throw ShapeError("ctc loss needs at least one frame");
  for (int id : w.ids) {
    if (id <= Vocabulary::kMaskId || id >= V) {
      throw ContractError("ctc target contains an invalid token id");
    }
  }

  CtcLossResult result;
  result.grad_logits.assign(static_cast<std::size_t>(T) * V, 0.0);
  result.occupancy.assign(static_cast<std::size_t>(T) * V, 0.0);

  if (T < min_frames_for(w)) {
    result.loss = std::numeric_limits<double>::infinity();
    result.feasible = false;
    return result;
  }

  const std::vector<int> ext = extended_labels(w);
  const int S = static_cast<int>(ext.size());
  auto idx = [S](int t, int s) { return static_cast<std::size_t>(t) * S + s; };

  // A state s may also arrive from s-2 when it is a token different from the
  // token two states back (blank states and repeated tokens may not skip).
  auto can_skip = [&](int s) {
    return s >= 2 && ext[s] != Vocabulary::kBlankId && ext[s] != ext[s - 2];
  };

  // alpha(t, s): log-prob of emitting frames 0..t and being at state s.
  std::vector<double> alpha(static_cast<std::size_t>(T) * S, kNegInf);
  alpha[idx(0, 0)] = post.at(0, ext[0]);
  if (S > 1) alpha[idx(0, 1)] = post.at(0, ext[1]);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double acc = alpha[idx(t - 1, s)];
      if (s >= 1) acc = log_add(acc, alpha[idx(t - 1, s - 1)]);
      if (can_skip(s)) acc = log_add(acc, alpha[idx(t - 1, s - 2)]);
      alpha[idx(t, s)] = acc + post.at(t, ext[s]);
    }
  }

  double log_p = alpha[idx(T - 1, S - 1)];
  if (S > 1) log_p = log_add(log_p, alpha[idx(T - 1, S - 2)]);
  if (log_p == kNegInf) {
    // Unreachable for positive posteriors, but a row may carry exact zeros.
    result.loss = std::numeric_limits<double>::infinity();
    result.feasible = false;
    return result;
  }
  result.loss = -log_p;

  // beta(t, s): log-prob of completing frames t+1..T-1 from state s; the
  // frame-t emission is carried by alpha, so sum_s alpha + beta == log_p at
  // every t.
  std::vector<double> beta(static_cast<std::size_t>(T) * S, kNegInf);
  beta[idx(T - 1, S - 1)] = 0.0;
  if (S > 1) beta[idx(T - 1, S - 2)] = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int s = S - 1; s >= 0; --s) {
      double acc = beta[idx(t + 1, s)] + post.at(t + 1, ext[s]);
      if (s + 1 < S) {
        acc = log_add(acc, beta[idx(t + 1, s + 1)] + post.at(t + 1, ext[s + 1]));
      }
      if (s + 2 < S && can_skip(s + 2)) {
        acc = log_add(acc, beta[idx(t + 1, s + 2)] + post.at(t + 1, ext[s + 2]));
      }
      beta[idx(t, s)] = acc;
    }
  }

  // Occupation gamma(t, v) = sum over states with label v of
  // exp(alpha + beta - log_p); gradient w.r.t. logits is softmax - gamma.
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      const double g = alpha[idx(t, s)] + beta[idx(t, s)] - log_p;
      if (g == kNegInf) continue;
      result.occupancy[static_cast<std::size_t>(t) * V + ext[s]] +=
          std::exp(g);
    }
    for (int v = 0; v < V; ++v) {
      const std::size_t k = static_cast<std::size_t>(t) * V + v;
      result.grad_logits[k] = std::exp(post.at(t, v)) - result.occupancy[k];
    }
  }
  return result;
}

CtcLossResult intermediate_ctc_loss(const FramePosteriors& layer_post,
                                    const TokenSequence& w_small) {
  return ctc_loss(layer_post, w_small);
}

std::pair<Alignment, TokenSequence> best_path_decode(
    const FramePosteriors& post) {
  if (post.t_frames < 1) throw ShapeError("decoding needs at least one frame");
  Alignment a;
  a.ids.reserve(post.t_frames);
  for (int t = 0; t < post.t_frames; ++t) {
    int best = 0;
    for (int v = 1; v < post.vocab_size; ++v) {
      if (post.at(t, v) > post.at(t, best)) best = v;
    }
    a.ids.push_back(best);
  }
  TokenSequence w = collapse_ctc(a);
  return {std::move(a), std::move(w)};
}

double compose_hierarchical_loss(double main, double final_ctc,
                                 double inter_ctc, double lambda_ctc,
                                 double lambda_ic) {
  if (lambda_ctc < 0.0 || lambda_ctc > 1.0 || lambda_ic < 0.0 ||
      lambda_ic > 1.0) {
    throw ConfigError("loss weights must lie in [0, 1]");
  }
  const double aux = (1.0 - lambda_ic) * final_ctc + lambda_ic * inter_ctc;
  if (lambda_ctc == 1.0) return aux;  // main may be +inf or unset
  return (1.0 - lambda_ctc) * main + lambda_ctc * aux;
}

}  // namespace mpctc

#include "mpctc/verify.hpp"

#include <algorithm>
#include <cmath>

#include "mpctc/dataset.hpp"
#include "mpctc/gradcheck.hpp"
#include "mpctc/harness.hpp"
#include "mpctc/kernels.hpp"
#include "mpctc/models.hpp"

namespace mpctc {

bool VerifyReport::all_pass() const {
  return std::all_of(properties.begin(), properties.end(),
                     [](const PropertyResult& p) { return p.pass; });
}

nlohmann::json VerifyReport::to_json() const {
  nlohmann::json props = nlohmann::json::array();
  for (const auto& p : properties) {
    props.push_back(nlohmann::json{{"name", p.name},
                                   {"pass", p.pass},
                                   {"observed", p.observed},
                                   {"tolerance", p.tolerance},
                                   {"detail", p.detail}});
  }
  return nlohmann::json{{"all_pass", all_pass()}, {"properties", props}};
}

namespace {

// Random frame posteriors over blank + mask + `regular` tokens; the mask
// column gets ordinary random mass (targets never use it, so enumeration and
// lattice agree regardless).
FramePosteriors random_posteriors(int t_frames, int regular, Rng& rng) {
  Tensor logits = random_normal(t_frames, regular + 2, 1.0, rng);
  return posteriors_from_logits(logits);
}

TokenSequence random_target(int max_len, int regular, Rng& rng) {
  std::uniform_int_distribution<int> len_dist(0, max_len);
  std::uniform_int_distribution<int> tok_dist(2, regular + 1);
  TokenSequence w;
  const int n = len_dist(rng);
  for (int i = 0; i < n; ++i) w.ids.push_back(tok_dist(rng));
  return w;
}

double brute_force_ctc_nll(const FramePosteriors& post, const TokenSequence& w,
                           const Vocabulary& vocab) {
  double log_sum = kNegInf;
  for (const Alignment& a :
       enumerate_ctc_alignments(w, post.t_frames, vocab)) {
    double lp = 0.0;
    for (int t = 0; t < post.t_frames; ++t) lp += post.at(t, a.ids[t]);
    log_sum = log_add(log_sum, lp);
  }
  return -log_sum;
}

double brute_force_rnnt_nll(const JointGrid& grid, const TokenSequence& w) {
  double log_sum = kNegInf;
  for (const RnntAlignment& path :
       enumerate_rnnt_paths(grid.t_frames, grid.n_tokens)) {
    double lp = 0.0;
    int t = 0, n = 0;
    for (int id : path.ids) {
      if (id == Vocabulary::kBlankId) {
        lp += grid.at(t, n, Vocabulary::kBlankId);
        ++t;
      } else {
        lp += grid.at(t, n, w.ids[n]);
        ++n;
      }
    }
    log_sum = log_add(log_sum, lp);
  }
  return -log_sum;
}

JointGrid random_grid(int t_frames, int n_tokens, int vocab_size, Rng& rng) {
  JointGrid grid(t_frames, n_tokens, vocab_size);
  Tensor logits =
      random_normal((t_frames + 1) * (n_tokens + 1), vocab_size, 1.0, rng);
  FramePosteriors rows = posteriors_from_logits(logits);
  grid.log_probs = rows.log_probs;
  return grid;
}

uint64_t binomial(int n, int k) {
  uint64_t result = 1;
  for (int i = 1; i <= k; ++i) {
    result = result * (n - k + i) / i;
  }
  return result;
}

}  // namespace

VerifyReport verify_oracles(uint64_t seed) {
  VerifyReport report;
  auto add_prop = [&](const std::string& name, double observed,
                      double tolerance, std::string detail = "") {
    report.properties.push_back(
        {name, observed <= tolerance, observed, tolerance, std::move(detail)});
  };
  auto add_flag = [&](const std::string& name, bool pass,
                      std::string detail = "") {
    report.properties.push_back({name, pass, pass ? 0.0 : 1.0, 0.5,
                                 std::move(detail)});
  };

  Rng rng(seed);

  // CTC loss vs exhaustive alignment enumeration.
  {
    const Vocabulary vocab = Vocabulary::from_regular({"a", "b", "c"});
    double worst = 0.0;
    bool roundtrip_ok = true;
    std::uniform_int_distribution<int> t_dist(1, 6);
    for (int trial = 0; trial < 200; ++trial) {
      const int t_frames = t_dist(rng);
      const FramePosteriors post = random_posteriors(t_frames, 3, rng);
      const TokenSequence w = random_target(4, 3, rng);
      const CtcLossResult res = ctc_loss(post, w);
      const auto alignments = enumerate_ctc_alignments(w, t_frames, vocab);
      for (const Alignment& a : alignments) {
        if (!(collapse_ctc(a) == w)) roundtrip_ok = false;
      }
      if (alignments.empty()) {
        if (res.feasible) roundtrip_ok = false;
        continue;
      }
      const double oracle = brute_force_ctc_nll(post, w, vocab);
      worst = std::max(worst, std::abs(res.loss - oracle));
    }
    add_prop("ctc_loss_matches_alignment_enumeration", worst, 1e-9,
        "200 random cases, T <= 6, 3 regular tokens");
    add_flag("ctc_enumeration_roundtrip_and_feasibility", roundtrip_ok,
             "collapse(a) == w for every enumerated alignment; empty "
             "enumeration iff infeasible");
  }

  // Fixed values derived from the enumeration oracle.
  {
    const Vocabulary vocab = Vocabulary::from_regular({"a", "b"});
    FramePosteriors uniform(3, 4);
    for (int t = 0; t < 3; ++t) {
      uniform.at(t, 0) = std::log(1.0 / 3.0);
      uniform.at(t, 2) = std::log(1.0 / 3.0);
      uniform.at(t, 3) = std::log(1.0 / 3.0);
    }
    const double lossA =
        ctc_loss(uniform, TokenSequence(std::vector<int>{2})).loss;  // -ln(6/27)
    FramePosteriors uniform2(2, 4);
    for (int t = 0; t < 2; ++t) {
      uniform2.at(t, 0) = std::log(1.0 / 3.0);
      uniform2.at(t, 2) = std::log(1.0 / 3.0);
      uniform2.at(t, 3) = std::log(1.0 / 3.0);
    }
    const double lossB =
        ctc_loss(uniform2, TokenSequence(std::vector<int>{2, 3})).loss;  // -ln(1/9)
    const double errA = std::abs(lossA - (-std::log(6.0 / 27.0)));
    const double errB = std::abs(lossB - (-std::log(1.0 / 9.0)));
    add_prop("ctc_fixed_uniform_cases", std::max(errA, errB), 1e-12,
        "T=3 w=(a) and T=2 w=(a,b) on uniform rows");
    add_flag("ctc_tolerance_sensitivity",
             std::abs((lossA + 1e-6) - (-std::log(6.0 / 27.0))) > 1e-9,
             "a 1e-6 perturbation must trip the 1e-9 equivalence bound");
  }

  // CTC analytic gradient vs central differences on logits.
  {
    FiniteDiffChecker fd;
    std::uniform_int_distribution<int> t_dist(2, 6);
    for (int trial = 0; trial < 6; ++trial) {
      const int t_frames = t_dist(rng);
      Tensor logits = random_normal(t_frames, 5, 1.0, rng);
      TokenSequence w = random_target(3, 3, rng);
      if (t_frames < min_frames_for(w) || w.empty()) {
        w = TokenSequence(std::vector<int>{2});
      }
      const auto loss_fn = [&]() {
        return ctc_loss(posteriors_from_logits(logits), w).loss;
      };
      const CtcLossResult res =
          ctc_loss(posteriors_from_logits(logits), w);
      Tensor grad(t_frames, 5);
      grad.data = res.grad_logits;
      fd.check_tensor(loss_fn, logits, grad);
    }
    add_prop("ctc_gradient_finite_difference", fd.max_rel_err, 1e-4,
        std::to_string(fd.checked) + " logit coordinates");
  }

  // Occupancy and gradient row identities.
  {
    double worst_occupancy = 0.0, worst_grad = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const FramePosteriors post = random_posteriors(5, 3, rng);
      TokenSequence w = random_target(2, 3, rng);
      if (w.empty()) w = TokenSequence(std::vector<int>{2});
      const CtcLossResult res = ctc_loss(post, w);
      if (!res.feasible) continue;
      for (int t = 0; t < post.t_frames; ++t) {
        double occ = 0.0, grad = 0.0;
        for (int v = 0; v < post.vocab_size; ++v) {
          occ += res.occupancy[t * post.vocab_size + v];
          grad += res.grad_logits[t * post.vocab_size + v];
        }
        worst_occupancy = std::max(worst_occupancy, std::abs(occ - 1.0));
        worst_grad = std::max(worst_grad, std::abs(grad));
      }
    }
    add_prop("ctc_occupancy_rows_sum_to_one", worst_occupancy, 1e-6);
    add_prop("ctc_gradient_rows_sum_to_zero", worst_grad, 1e-6);
  }

  // Transducer loss vs exhaustive path enumeration.
  {
    double worst = 0.0;
    std::uniform_int_distribution<int> t_dist(1, 7);
    std::uniform_int_distribution<int> n_dist(0, 3);
    for (int trial = 0; trial < 100; ++trial) {
      const int t_frames = t_dist(rng);
      const int n_tokens = std::min(n_dist(rng), 10 - t_frames);
      if (n_tokens < 0) continue;
      const JointGrid grid = random_grid(t_frames, n_tokens, 5, rng);
      TokenSequence w;
      std::uniform_int_distribution<int> tok_dist(2, 4);
      for (int i = 0; i < n_tokens; ++i) w.ids.push_back(tok_dist(rng));
      const double oracle = brute_force_rnnt_nll(grid, w);
      worst = std::max(worst, std::abs(rnnt_loss(grid, w).loss - oracle));
    }
    JointGrid fixed(1, 1, 3);
    for (int t = 0; t <= 1; ++t) {
      for (int n = 0; n <= 1; ++n) {
        fixed.at(t, n, 0) = std::log(0.6);
        fixed.at(t, n, 1) = kNegInf;
        fixed.at(t, n, 2) = std::log(0.4);
      }
    }
    const double fixed_err = std::abs(
        rnnt_loss(fixed, TokenSequence(std::vector<int>{2})).loss - (-std::log(0.48)));
    add_prop("rnnt_loss_matches_path_enumeration", std::max(worst, fixed_err),
        1e-9, "100 random grids with T+N <= 10 plus the 0.4/0.6 case");

    bool counts_ok = true;
    for (int t = 0; t <= 6; ++t) {
      for (int n = 0; n <= 4 && t + n <= 10; ++n) {
        if (enumerate_rnnt_paths(t, n).size() != binomial(t + n, n)) {
          counts_ok = false;
        }
      }
    }
    add_flag("rnnt_path_count_is_binomial", counts_ok,
             "|paths(T,N)| == C(T+N, N)");
  }

  // Transducer gradients vs central differences on the grid entries.
  {
    FiniteDiffChecker fd;
    for (int trial = 0; trial < 4; ++trial) {
      JointGrid grid = random_grid(3, 2, 4, rng);
      const TokenSequence w(std::vector<int>{2, 3});
      const auto loss_fn = [&]() { return rnnt_loss(grid, w).loss; };
      const RnntLossResult res = rnnt_loss(grid, w);
      for (std::size_t i = 0; i < grid.log_probs.size(); ++i) {
        fd.check_coordinate(
            loss_fn, grid.log_probs[i], res.grad_log_probs[i]);
      }
    }
    add_prop("rnnt_gradient_finite_difference", fd.max_rel_err, 1e-4,
        std::to_string(fd.checked) + " grid coordinates");
  }

  // Edit-distance metric properties.
  {
    bool ok = true;
    std::uniform_int_distribution<int> len_dist(0, 5);
    std::uniform_int_distribution<int> tok_dist(2, 4);
    auto random_seq = [&]() {
      TokenSequence s;
      const int n = len_dist(rng);
      for (int i = 0; i < n; ++i) s.ids.push_back(tok_dist(rng));
      return s;
    };
    for (int trial = 0; trial < 200; ++trial) {
      const TokenSequence a = random_seq(), b = random_seq(), c = random_seq();
      const int ab = edit_distance(a, b).total();
      const int ba = edit_distance(b, a).total();
      const int ac = edit_distance(a, c).total();
      const int cb = edit_distance(c, b).total();
      if (ab != ba) ok = false;
      if (ab > ac + cb) ok = false;
      if (edit_distance(a, a).total() != 0) ok = false;
    }
    if (edit_distance(TokenSequence(std::vector<int>{2, 3, 4}), TokenSequence(std::vector<int>{2, 4})) !=
        (EditCounts{0, 0, 1})) {
      ok = false;
    }
    if (edit_distance(TokenSequence(std::vector<int>{2, 3}), TokenSequence(std::vector<int>{3, 2}))
            .total() != 2) {
      ok = false;
    }
    add_flag("edit_distance_metric_properties", ok,
             "symmetry, triangle inequality, identity, fixed cases");
  }

  // Masking algebra.
  {
    bool ok = true;
    for (int hyp_len = 0; hyp_len <= 64 && ok; ++hyp_len) {
      for (int iters = 1; iters <= 32 && ok; ++iters) {
        int prev = hyp_len + 1;
        for (int k = 1; k <= iters; ++k) {
          const int m = decay_count(hyp_len, iters, k);
          if (m > prev || m < 0 || m > hyp_len) ok = false;
          prev = m;
        }
        if (decay_count(hyp_len, iters, iters) != 0) ok = false;
      }
    }
    add_flag("decay_schedule_exhaustive", ok,
             "m non-increasing and m(K) == 0 for hyp_len <= 64, K <= 32");

    // Hand-traced confidence bookkeeping.
    auto set_row = [](FramePosteriors& grid, int t,
                      std::initializer_list<double> probs) {
      int v = 0;
      for (double p : probs) {
        grid.at(t, v++) = p > 0 ? std::log(p) : kNegInf;
      }
    };
    FramePosteriors post(4, 5);
    // columns: blank, mask, a, b, pad; chosen-token probabilities per frame.
    set_row(post, 0, {0.05, 0.0, 0.9, 0.025, 0.025});
    set_row(post, 1, {0.9, 0.0, 0.05, 0.025, 0.025});
    set_row(post, 2, {0.2, 0.0, 0.2, 0.6, 0.0});
    set_row(post, 3, {0.1, 0.0, 0.1, 0.8, 0.0});
    auto [hyp, conf] =
        token_confidences(Alignment(std::vector<int>{2, 0, 3, 3}), post);
    bool trace_ok = hyp == TokenSequence(std::vector<int>{2, 3}) && conf.length() == 2 &&
                    std::abs(conf.scores[0] - 0.9) < 1e-12 &&
                    std::abs(conf.scores[1] - 0.8) < 1e-12;

    FramePosteriors post2(2, 3);
    set_row(post2, 0, {0.7, 0.0, 0.3});
    set_row(post2, 1, {0.3, 0.0, 0.7});
    auto [hyp2, conf2] = token_confidences(Alignment(std::vector<int>{2, 2}), post2);
    trace_ok = trace_ok && hyp2 == TokenSequence(std::vector<int>{2}) &&
               std::abs(conf2.scores[0] - 0.7) < 1e-12;
    auto [hyp3, conf3] = token_confidences(Alignment(std::vector<int>{0, 0}), post2);
    trace_ok = trace_ok && hyp3.empty() && conf3.length() == 0;
    add_flag("confidence_hand_traces", trace_ok,
             "max-per-token with blank-driven index advance");

    // Mask-count distribution: M ~ Uniform(1, N).
    Rng mask_rng(seed + 17);
    const TokenSequence w(std::vector<int>{2, 3, 2, 3});
    std::vector<int> histogram(5, 0);
    for (int i = 0; i < 10000; ++i) {
      ++histogram[sample_training_mask(w, mask_rng).mask_count()];
    }
    double worst_freq = 0.0;
    for (int m = 1; m <= 4; ++m) {
      worst_freq = std::max(worst_freq,
                            std::abs(histogram[m] / 10000.0 - 0.25));
    }
    add_prop("training_mask_count_uniform", worst_freq, 0.02,
        "10000 seeded draws, N = 4");
  }

  // Autodiff operator gradients: every op in the set, checked through a
  // fixed random linear functional of its output.
  {
    FiniteDiffChecker fd;
    auto check = [&](const std::function<Value(const Value&)>& op, int rows,
                     int cols) {
      Value x = Value::leaf(random_normal(rows, cols, 1.0, rng), true);
      Value probe;  // fixed weights, sized on the first forward
      auto scalarize = [&](const Value& v) {
        Value out = op(v);
        if (!probe.defined()) {
          probe = Value::constant(
              random_normal(out.rows(), out.cols(), 1.0, rng));
        }
        return mean(hadamard(out, probe));
      };
      auto f = [&]() { return scalarize(x).item(); };
      Value loss = scalarize(x);
      backward(loss);
      Tensor g = x.grad();
      fd.check_tensor(f, x.mutable_tensor(), g);
    };

    Value m2 = Value::leaf(random_normal(4, 3, 1.0, rng), false);
    Value bias = Value::leaf(random_normal(1, 4, 1.0, rng), false);
    Value gain = Value::leaf(Tensor::full(1, 4, 1.0), false);
    Value table = Value::leaf(random_normal(5, 3, 1.0, rng), false);
    Tensor offset = random_normal(3, 4, 1.0, rng);
    GruParams gru;
    {
      Rng grng(seed + 3);
      auto p = [&](int r, int c) {
        return Value::leaf(random_normal(r, c, 0.7, grng), false);
      };
      gru = GruParams{p(4, 4), p(4, 4), p(1, 4), p(4, 4), p(4, 4),
                      p(1, 4), p(4, 4), p(4, 4), p(1, 4)};
    }
    Value kv = Value::leaf(random_normal(5, 4, 1.0, rng), false);
    Tensor attn_mask = Tensor::zeros(3, 5);
    attn_mask.at(0, 4) = kNegInf;

    check([&](const Value& x) { return matmul(x, m2); }, 3, 4);
    check([&](const Value& x) { return matmul_nt(x, m2); }, 3, 3);
    check([&](const Value& x) { return add(x, scale(x, 0.5)); }, 3, 4);
    check([&](const Value& x) { return sub(x, hadamard(x, x)); }, 3, 4);
    check([&](const Value& x) { return add_row_bias(x, bias); }, 3, 4);
    check([&](const Value& x) { return add_const(x, offset); }, 3, 4);
    check([&](const Value& x) { return scale(x, -1.7); }, 3, 4);
    check([&](const Value& x) { return sigmoid(x); }, 3, 4);
    check([&](const Value& x) { return tanh_op(x); }, 3, 4);
    check([&](const Value& x) { return gelu(x); }, 3, 4);
    check([&](const Value& x) { return softmax_lastdim(x); }, 3, 5);
    check([&](const Value& x) { return log_softmax_lastdim(x); }, 3, 5);
    check([&](const Value& x) { return layernorm(x, gain, bias); }, 3, 4);
    check([&](const Value& x) { return embedding_lookup(x, {0, 2, 2, 4}); },
          5, 3);
    check([&](const Value& x) { return concat_rows({x, scale(x, 2.0)}); },
          3, 4);
    check([&](const Value& x) { return slice_rows(x, 1, 2); }, 4, 3);
    check([&](const Value& x) { return mean(x); }, 4, 4);
    check([&](const Value& x) { return cross_entropy(x, {{0, 1}, {2, 0}}); },
          3, 4);
    check(
        [&](const Value& x) {
          return scaled_dot_attention(x, kv, kv, &attn_mask).first;
        },
        3, 4);
    check([&](const Value& x) {
      return gated_recurrent_cell(slice_rows(x, 0, 1),
                                  tanh_op(slice_rows(x, 1, 1)), gru);
    }, 3, 4);
    add_prop("autodiff_op_gradients", fd.max_rel_err, 1e-4,
        std::to_string(fd.checked) + " coordinates across the op set");
  }

  // Kernel parity: the OpenMP variants must match the serial reference
  // bitwise.
  {
    bool ok = true;
    for (int trial = 0; trial < 5; ++trial) {
      const int m = 17, k = 23, n = 13;
      Tensor a = random_normal(m, k, 1.0, rng);
      Tensor b = random_normal(k, n, 1.0, rng);
      Tensor c1(m, n), c2(m, n);
      kernels::matmul_serial(a.data.data(), b.data.data(), c1.data.data(), m,
                             k, n);
      kernels::matmul_omp(a.data.data(), b.data.data(), c2.data.data(), m, k,
                          n);
      if (c1.data != c2.data) ok = false;
      Tensor bt = random_normal(n, k, 1.0, rng);
      Tensor d1(m, n), d2(m, n);
      kernels::matmul_nt_serial(a.data.data(), bt.data.data(), d1.data.data(),
                                m, k, n);
      kernels::matmul_nt_omp(a.data.data(), bt.data.data(), d2.data.data(), m,
                             k, n);
      if (d1.data != d2.data) ok = false;
      Tensor e1(k, n), e2(k, n);
      Tensor bm = random_normal(m, n, 1.0, rng);
      kernels::matmul_tn_serial(a.data.data(), bm.data.data(), e1.data.data(),
                                m, k, n);
      kernels::matmul_tn_omp(a.data.data(), bm.data.data(), e2.data.data(), m,
                             k, n);
      if (e1.data != e2.data) ok = false;
      std::vector<double> l1(m), l2(m);
      kernels::row_logsumexp_serial(a.data.data(), l1.data(), m, k);
      kernels::row_logsumexp_omp(a.data.data(), l2.data(), m, k);
      if (l1 != l2) ok = false;
    }
    add_flag("kernel_parallel_matches_serial", ok,
             "matmul/matmul_nt/matmul_tn/logsumexp, bitwise");
  }

  // End-to-end gradient of the conditioned training loss at tiny dims.
  {
    SyntheticTaskSpec task;
    task.num_anchors = 2;
    task.num_homophone_pairs = 1;
    task.min_tokens = 3;
    task.max_tokens = 3;
    task.feature_dim = 4;
    task.num_train = task.num_dev = task.num_test = 1;
    AudioEncoderConfig enc{1, 8, 2, 16, 0};
    FusionConfig fus{1, 8, 2, 16};
    Rng model_rng(seed + 5);
    auto embedder = std::make_shared<OracleEmbedder>(
        task.oracle_embedding_table(), task.context_rule());
    ConditionedCtcModel model(enc, fus, task.feature_dim, task.build_vocab(),
                              task.build_small_vocab(), embedder, 0,
                              model_rng);
    const Tensor features = random_normal(4, task.feature_dim, 1.0, model_rng);
    const TokenSequence w(std::vector<int>{
        task.anchor_id(0), task.member_id(0, 0), task.anchor_id(1)});
    TokenSequence w_small;
    for (int id : w.ids) w_small.ids.push_back(task.small_id_of(id));

    const uint64_t mask_seed = seed + 99;
    auto loss_fn = [&]() {
      Rng mask_rng(mask_seed);
      ConditionedCtcModel& m = model;
      return m.training_loss(features, w, w_small, mask_rng, 0.3, 0.5).total;
    };
    Rng mask_rng(mask_seed);
    LossBreakdown b = model.training_loss(features, w, w_small, mask_rng, 0.3,
                                          0.5);
    GradientMap grads = backward(b.total_value, model.params());
    FiniteDiffChecker fd;
    fd.floor = 1e-5;
    for (auto& p : model.params().items()) {
      auto it = grads.find(p.name);
      if (it == grads.end()) continue;
      fd.check_tensor_strided(loss_fn, p.value.mutable_tensor(), it->second,
                              7);
    }
    add_prop("end_to_end_loss_gradient", fd.max_rel_err, 1e-3,
        std::to_string(fd.checked) + " parameter coordinates, tiny dims");
  }

  return report;
}

}  // namespace mpctc

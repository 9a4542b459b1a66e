// Command-line front end: generate / train / decode / evaluate / bench /
// verify / dump-attention. Exit codes: 0 ok, 1 contract or usage error,
// 2 oracle failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mpctc/checkpoint.hpp"
#include "mpctc/harness.hpp"
#include "mpctc/verify.hpp"

namespace {

using namespace mpctc;
using nlohmann::json;

struct CommonArgs {
  std::string config_path;
  int64_t seed_override = -1;

  ExperimentConfig load() const {
    ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    if (seed_override >= 0) {
      cfg.seed = static_cast<uint64_t>(seed_override);
    }
    return cfg;
  }
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path,
                              "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", args.seed_override,
                  "override the config seed (>= 0)");
}

std::string data_dir(const ExperimentConfig& cfg, const std::string& flag) {
  return flag.empty() ? cfg.out_dir + "/data" : flag;
}

Dataset load_or_fail(const std::string& dir) {
  if (!std::filesystem::exists(dir + "/task.json")) {
    throw ContractError("no dataset at " + dir + " (run `mpctc generate`)");
  }
  return load_dataset(dir);
}

// Rebuilds a family's models and loads its checkpoint.
ModelSet load_family(const ExperimentConfig& cfg, const Dataset& ds,
                     const std::string& family, const std::string& ckpt) {
  ModelSet models = build_models(cfg, ds, family);
  ParameterSet combined;
  if (family == kFamilyCtc) {
    combined.absorb("", models.ctc->params());
  } else if (family == kFamilyRnnt) {
    combined.absorb("", models.rnnt->params());
  } else {
    combined.absorb("", models.conditioned->params());
    if (auto* emb = models.conditioned->embedder().parameters()) {
      combined.absorb("embedder.", *emb);
    }
  }
  load_parameters(combined, ckpt);
  return models;
}

std::string default_ckpt(const ExperimentConfig& cfg,
                         const std::string& family) {
  return cfg.out_dir + "/" + family + ".ckpt.json";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toy speech-recognition lab: lattice losses, masked-LM "
               "conditioning and iterative decoding"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, decode_args, eval_args, bench_args,
      verify_args, attn_args;

  auto* gen = app.add_subcommand("generate", "generate the synthetic dataset");
  add_common(gen, gen_args);
  std::string gen_out;
  gen->add_option("--out", gen_out, "dataset directory");

  auto* train = app.add_subcommand("train", "train one model family");
  add_common(train, train_args);
  std::string train_family_name = kFamilyMlmCtc, train_data, train_out;
  train->add_option("--family", train_family_name,
                    "ctc | rnnt | mlmctc | mlmctc-slu");
  train->add_option("--data", train_data, "dataset directory");
  train->add_option("--out", train_out, "output directory");

  auto* decode_cmd = app.add_subcommand("decode", "decode a split");
  add_common(decode_cmd, decode_args);
  std::string dec_family = kFamilyMlmCtc, dec_data, dec_ckpt, dec_split =
      "test", dec_trace;
  int dec_k = -1;
  decode_cmd->add_option("--family", dec_family);
  decode_cmd->add_option("--data", dec_data);
  decode_cmd->add_option("--checkpoint", dec_ckpt);
  decode_cmd->add_option("--split", dec_split, "train | dev | test");
  decode_cmd->add_option("--k", dec_k, "refinement iterations");
  decode_cmd->add_option("--trace", dec_trace,
                         "write per-iteration JSONL trace here");

  auto* eval_cmd = app.add_subcommand("evaluate", "score trained models");
  add_common(eval_cmd, eval_args);
  std::string eval_data, eval_out, eval_ckpt_dir;
  eval_cmd->add_option("--data", eval_data);
  eval_cmd->add_option("--checkpoints", eval_ckpt_dir,
                       "directory holding <family>.ckpt.json files");
  eval_cmd->add_option("--out", eval_out, "report path (JSON)");

  auto* bench_cmd = app.add_subcommand("bench", "decode-time RTF benchmark");
  add_common(bench_cmd, bench_args);
  std::string bench_data, bench_out;
  bench_cmd->add_option("--data", bench_data);
  bench_cmd->add_option("--out", bench_out, "benchmark report path (JSON)");

  auto* verify_cmd =
      app.add_subcommand("verify", "run the exhaustive-oracle suite");
  add_common(verify_cmd, verify_args, /*config_required=*/false);
  std::string verify_out;
  verify_cmd->add_option("--out", verify_out, "report path (JSON)");

  auto* attn = app.add_subcommand("dump-attention",
                                  "export fused attention matrices as CSV");
  add_common(attn, attn_args);
  std::string attn_data, attn_ckpt, attn_utt, attn_out, attn_family =
      kFamilyMlmCtc;
  attn->add_option("--family", attn_family, "mlmctc | mlmctc-slu");
  attn->add_option("--data", attn_data);
  attn->add_option("--checkpoint", attn_ckpt);
  attn->add_option("--utterance", attn_utt, "utterance id (default: first)");
  attn->add_option("--out", attn_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = gen_args.load();
      Dataset ds = generate_dataset(cfg.task, cfg.seed);
      const std::string dir = data_dir(cfg, gen_out);
      save_dataset(ds, dir);
      std::cout << "wrote " << ds.train.size() << "/" << ds.dev.size() << "/"
                << ds.test.size() << " utterances to " << dir << "\n";
    } else if (train->parsed()) {
      ExperimentConfig cfg = train_args.load();
      if (!family_known(train_family_name)) {
        throw ConfigError("unknown family: " + train_family_name);
      }
      Dataset ds = load_or_fail(data_dir(cfg, train_data));
      ModelSet models = build_models(cfg, ds, train_family_name);
      const std::string out =
          train_out.empty() ? cfg.out_dir : train_out;
      TrainOutput result =
          train_family(cfg, train_family_name, ds, models, out);
      std::cout << "trained " << train_family_name << ": "
                << result.loss_curve.size() << " steps, "
                << result.skipped_samples << " skipped, checkpoint at "
                << result.checkpoint_path << "\n";
    } else if (decode_cmd->parsed()) {
      ExperimentConfig cfg = decode_args.load();
      Dataset ds = load_or_fail(data_dir(cfg, dec_data));
      const std::string ckpt =
          dec_ckpt.empty() ? default_ckpt(cfg, dec_family) : dec_ckpt;
      ModelSet models = load_family(cfg, ds, dec_family, ckpt);
      const int k = dec_k > 0 ? dec_k : cfg.iterations;
      std::ofstream trace_out;
      if (!dec_trace.empty()) trace_out.open(dec_trace);

      for (const auto& utt : ds.split(dec_split)) {
        TokenSequence hyp;
        if (dec_family == kFamilyCtc) {
          hyp = decode_ctc_baseline(*models.ctc, utt.features);
        } else if (dec_family == kFamilyRnnt) {
          hyp = decode_rnnt_baseline(*models.rnnt, utt.features,
                                     cfg.rnnt_max_tokens_per_frame);
        } else {
          DecodeConfig dc;
          dc.iterations = k;
          dc.trace = !dec_trace.empty();
          DecodeResult res = decode(*models.conditioned, utt.features, dc);
          if (res.trace) res.trace->write_jsonl(trace_out, ds.vocab);
          hyp = std::move(res.hypothesis);
        }
        std::cout << utt.id << "\t";
        for (int n = 0; n < hyp.length(); ++n) {
          if (n) std::cout << ' ';
          std::cout << ds.vocab.token(hyp.ids[n]);
        }
        std::cout << "\n";
      }
    } else if (eval_cmd->parsed()) {
      ExperimentConfig cfg = eval_args.load();
      Dataset ds = load_or_fail(data_dir(cfg, eval_data));
      const std::string ckpt_dir =
          eval_ckpt_dir.empty() ? cfg.out_dir : eval_ckpt_dir;
      ModelSet models;
      for (const std::string family :
           {std::string(kFamilyCtc), std::string(kFamilyRnnt),
            std::string(kFamilyMlmCtc), std::string(kFamilyMlmCtcSlu)}) {
        const std::string ckpt = ckpt_dir + "/" + family + ".ckpt.json";
        if (!std::filesystem::exists(ckpt)) continue;
        ModelSet one = load_family(cfg, ds, family, ckpt);
        if (one.ctc) models.ctc = std::move(one.ctc);
        if (one.rnnt) models.rnnt = std::move(one.rnnt);
        if (one.conditioned) models.conditioned = std::move(one.conditioned);
      }
      if (!models.ctc && !models.rnnt && !models.conditioned) {
        throw ContractError("no checkpoints found in " + ckpt_dir);
      }
      json report = evaluate(cfg, ds, models);
      const std::string out_path =
          eval_out.empty() ? cfg.out_dir + "/report.json" : eval_out;
      std::filesystem::create_directories(
          std::filesystem::path(out_path).parent_path());
      std::ofstream out(out_path);
      out << report.dump(2) << "\n";
      std::cout << "wrote " << out_path << "\n";
    } else if (bench_cmd->parsed()) {
      ExperimentConfig cfg = bench_args.load();
      Dataset ds = load_or_fail(data_dir(cfg, bench_data));
      ModelSet models;
      for (const std::string family :
           {std::string(kFamilyCtc), std::string(kFamilyRnnt),
            std::string(kFamilyMlmCtc), std::string(kFamilyMlmCtcSlu)}) {
        const std::string ckpt = cfg.out_dir + "/" + family + ".ckpt.json";
        if (!std::filesystem::exists(ckpt)) continue;
        ModelSet one = load_family(cfg, ds, family, ckpt);
        if (one.ctc) models.ctc = std::move(one.ctc);
        if (one.rnnt) models.rnnt = std::move(one.rnnt);
        if (one.conditioned) models.conditioned = std::move(one.conditioned);
      }
      if (!models.ctc && !models.rnnt && !models.conditioned) {
        // Benchmark timing does not need trained weights.
        models = build_models(cfg, ds, kFamilyMlmCtc);
        ModelSet ctc_only = build_models(cfg, ds, kFamilyCtc);
        models.ctc = std::move(ctc_only.ctc);
      }
      json result = bench_rtf(cfg, ds, models);
      if (!bench_out.empty()) {
        std::ofstream out(bench_out);
        out << result.dump(2) << "\n";
      }
      std::cout << result.dump(2) << "\n";
    } else if (verify_cmd->parsed()) {
      uint64_t seed = 20240101;
      if (verify_args.seed_override >= 0) {
        seed = static_cast<uint64_t>(verify_args.seed_override);
      } else if (!verify_args.config_path.empty()) {
        seed = verify_args.load().seed;
      }
      VerifyReport report = verify_oracles(seed);
      const json j = report.to_json();
      if (!verify_out.empty()) {
        std::ofstream out(verify_out);
        out << j.dump(2) << "\n";
      }
      for (const auto& p : report.properties) {
        std::cout << (p.pass ? "[PASS] " : "[FAIL] ") << p.name
                  << " (observed " << p.observed << ", tolerance "
                  << p.tolerance << ")\n";
      }
      if (!report.all_pass()) return 2;
    } else if (attn->parsed()) {
      ExperimentConfig cfg = attn_args.load();
      Dataset ds = load_or_fail(data_dir(cfg, attn_data));
      const std::string ckpt =
          attn_ckpt.empty() ? default_ckpt(cfg, attn_family) : attn_ckpt;
      ModelSet models = load_family(cfg, ds, attn_family, ckpt);
      const Utterance* utt = &ds.test.front();
      if (!attn_utt.empty()) {
        utt = nullptr;
        for (const auto& split : {"train", "dev", "test"}) {
          for (const auto& u : ds.split(split)) {
            if (u.id == attn_utt) utt = &u;
          }
        }
        if (utt == nullptr) {
          throw ContractError("unknown utterance id: " + attn_utt);
        }
      }
      const std::string out =
          attn_out.empty() ? cfg.out_dir + "/attention" : attn_out;
      dump_attention(*models.conditioned, *utt, out);
      std::cout << "wrote attention matrices for " << utt->id << " to " << out
                << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// Command-line front end: dataset generation, training, prediction,
// evaluation, gradient checking and scan benchmarking.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "vmudiff/checkpoint.hpp"
#include "vmudiff/error.hpp"
#include "vmudiff/gradcheck.hpp"
#include "vmudiff/pipeline.hpp"
#include "vmudiff/sequence_io.hpp"

namespace fs = std::filesystem;
using namespace vmudiff;

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return 2;
    case ErrorKind::Io:
    case ErrorKind::BadMagic:
    case ErrorKind::VersionMismatch:
    case ErrorKind::Truncated:
    case ErrorKind::DimOverflow:
    case ErrorKind::ShapeMismatch:
      return 3;
    case ErrorKind::NonFinite:
    case ErrorKind::Numeric:
      return 4;
  }
  return 1;
}

// Flags are collected as config key/value overrides and applied on top of
// the optional --config file, so precedence is: defaults < file < flags.
struct ArgSink {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> kv;

  RunConfig build() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = parse_config_file(config_path);
    for (const auto& [key, value] : kv) apply_config_kv(cfg, key, value, "command line");
    return cfg;
  }
};

void add_common_flags(CLI::App* cmd, ArgSink& sink) {
  cmd->add_option("--config", sink.config_path, "key = value config file; flags override it");
  auto opt = [cmd, &sink](const char* flag, const char* key, const char* desc) {
    cmd->add_option_function<std::string>(
        flag, [&sink, key](const std::string& v) { sink.kv.emplace_back(key, v); }, desc);
  };
  auto flg = [cmd, &sink](const char* flag, const char* key, const char* desc) {
    cmd->add_flag_callback(
        flag, [&sink, key]() { sink.kv.emplace_back(key, "true"); }, desc);
  };
  opt("--seed", "seed", "run seed (u64)");
  opt("--out", "out_dir", "output directory");
  opt("--data", "data_dir", "dataset directory");
  opt("--checkpoint", "checkpoint", "checkpoint path (default <out>/model.vmck)");
  opt("--iters", "iters", "training iterations");
  opt("--ddim-steps", "ddim_steps", "sampler steps");
  opt("--alpha", "alpha", "coarse/refine loss weight");
  opt("--count", "count", "episodes to generate");
  opt("--episode", "episode", "manifest idx to predict (-1 = first test episode)");
  opt("--split", "split", "split to evaluate: train|val|test");
  opt("--lr", "lr", "Adam learning rate");
  opt("--batch", "batch", "episodes per optimizer step");
  opt("--warmup-frac", "warmup_frac", "leading fraction of iters trained coarse-only");
  opt("--ckpt-every", "ckpt_every", "checkpoint every n iterations (0 = final only)");
  opt("--beta1-init", "beta1_init", "refiner first-shift-head init: zero|uniform");
  flg("--pgm", "pgm", "also write 8-bit PGM frames");
  flg("--ablate-msfusion", "ablate_msfusion", "replace attention fusion with plain concat");
  flg("--ablate-stdiff", "ablate_stdiff", "drop the diffusion refiner");
  flg("--exact-zoh", "exact_zoh", "exact zero-order-hold input discretization");
}

void build_model_from_checkpoint(const RunConfig& cfg, std::optional<Model>& out) {
  Rng init_rng(seed_for_init(cfg.seed));
  out.emplace(cfg, init_rng);
  load_checkpoint(out->params(), cfg.checkpoint_path());
}

Tensor frame_of(const Tensor& t3, int t) {
  Tensor f({t3.shape[1], t3.shape[2]});
  const std::size_t n = f.numel();
  std::copy(t3.v.begin() + static_cast<std::ptrdiff_t>(t * n),
            t3.v.begin() + static_cast<std::ptrdiff_t>((t + 1) * n), f.v.begin());
  return f;
}

void write_frames_vmud(const Tensor& t3, const std::string& path) {
  FrameSequence seq(t3.shape[0], 1, t3.shape[1], t3.shape[2], Form::Normalized);
  std::copy(t3.v.begin(), t3.v.end(), seq.data.begin());
  write_sequence(seq, path);
}

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

int cmd_generate(const ArgSink& sink) {
  RunConfig cfg = sink.build();
  require(cfg.count >= 1, ErrorKind::Usage, "generate: count must be >= 1");
  cfg.validate();
  EpisodeParams ep;
  ep.seed = cfg.seed;
  ep.n_in = cfg.n_in;
  ep.m_out = cfg.m_out;
  ep.h = cfg.h;
  ep.w = cfg.w;
  Manifest m = make_dataset(cfg.count, ep, cfg.out_dir,
                            {cfg.train_frac, cfg.val_frac, 1.0 - cfg.train_frac - cfg.val_frac});
  long n_train = 0, n_val = 0, n_test = 0;
  for (const ManifestRow& r : m.rows) {
    if (r.split == "train")
      ++n_train;
    else if (r.split == "val")
      ++n_val;
    else
      ++n_test;
  }
  std::printf("wrote %zu episodes under %s (train %ld, val %ld, test %ld)\n", m.rows.size(),
              cfg.out_dir.c_str(), n_train, n_val, n_test);
  std::printf("manifest: %s\n", (fs::path(cfg.out_dir) / "manifest.tsv").string().c_str());
  return 0;
}

int cmd_train(const ArgSink& sink) {
  RunConfig cfg = sink.build();
  TrainResult res = train_run(cfg);
  if (res.l_refine)
    std::printf("trained %ld iters: l_coarse %.6f l_refine %.6f l_total %.6f\n", res.iters,
                res.l_coarse, *res.l_refine, res.l_total);
  else
    std::printf("trained %ld iters: l_coarse %.6f l_refine NA l_total %.6f\n", res.iters,
                res.l_coarse, res.l_total);
  std::printf("checkpoint: %s\nloss log: %s\n", cfg.checkpoint_path().c_str(),
              (fs::path(cfg.out_dir) / "loss_log.tsv").string().c_str());
  return 0;
}

int cmd_predict(const ArgSink& sink) {
  RunConfig cfg = sink.build();
  cfg.validate();
  Dataset ds = load_dataset(cfg.data_dir);
  std::size_t pos = ds.manifest.rows.size();
  if (cfg.episode >= 0) {
    for (std::size_t i = 0; i < ds.manifest.rows.size(); ++i)
      if (ds.manifest.rows[i].idx == cfg.episode) pos = i;
    require(pos < ds.manifest.rows.size(), ErrorKind::Usage,
            "episode " + std::to_string(cfg.episode) + " is not in the manifest");
  } else {
    require(!ds.test_rows.empty(), ErrorKind::Usage, "dataset has no test episodes");
    pos = ds.test_rows.front();
  }
  std::optional<Model> model;
  build_model_from_checkpoint(cfg, model);
  Sample s = load_sample(ds, pos, cfg);
  Prediction p = predict_sample(*model, s, cfg, seed_for_sampling(cfg.seed, s.idx));

  fs::create_directories(cfg.out_dir);
  write_frames_vmud(p.mu, (fs::path(cfg.out_dir) / "mu.vmud").string());
  write_frames_vmud(p.residual, (fs::path(cfg.out_dir) / "residual.vmud").string());
  write_frames_vmud(p.yhat, (fs::path(cfg.out_dir) / "yhat.vmud").string());
  if (cfg.pgm) {
    for (int t = 0; t < cfg.m_out; ++t)
      write_pgm(frame_of(p.yhat, t),
                (fs::path(cfg.out_dir) / ("yhat_" + std::to_string(t) + ".pgm")).string());
  }
  std::printf("episode %ld: wrote mu.vmud residual.vmud yhat.vmud under %s\n", s.idx,
              cfg.out_dir.c_str());
  return 0;
}

int cmd_evaluate(const ArgSink& sink) {
  RunConfig cfg = sink.build();
  cfg.validate();
  Dataset ds = load_dataset(cfg.data_dir);
  std::optional<Model> model;
  build_model_from_checkpoint(cfg, model);
  EvalResult ev = evaluate_split(*model, ds, cfg);
  write_eval_tsvs(ev, cfg.out_dir);

  std::printf("split %s: %zu episodes\n", cfg.split.c_str(), ev.episodes.size());
  std::printf("mse(normalized): model %.6f coarse %.6f persistence %.6f\n", ev.mean_mse_model,
              ev.mean_mse_coarse, ev.mean_mse_persistence);
  std::printf("csi@40dBZ: model %s coarse %s persistence %s\n",
              fmt_opt(csi(ev.model.tables[2])).c_str(), fmt_opt(csi(ev.coarse.tables[2])).c_str(),
              fmt_opt(csi(ev.persistence.tables[2])).c_str());
  std::printf("ssim: model %s coarse %s | sharpness: model %s coarse %s\n",
              fmt_opt(ev.model.ssim_overall).c_str(), fmt_opt(ev.coarse.ssim_overall).c_str(),
              fmt_opt(ev.model.sharpness_overall).c_str(),
              fmt_opt(ev.coarse.sharpness_overall).c_str());
  std::printf("reports: metrics.tsv metrics_coarse.tsv metrics_persistence.tsv under %s\n",
              cfg.out_dir.c_str());
  return 0;
}

int cmd_gradcheck(bool with_control) {
  std::vector<GradCheckCase> cases = standard_gradcheck_cases();
  std::vector<GradCheckResult> results = run_gradcheck(cases);
  std::vector<std::string> failed;
  for (const GradCheckResult& r : results) {
    std::printf("%-28s rel_err %.3e  tol %.0e  %s\n", r.name.c_str(), r.rel_err, r.tol,
                r.pass ? "PASS" : "FAIL");
    if (!r.pass) failed.push_back(r.name);
  }
  if (with_control) {
    std::vector<GradCheckResult> ctl = run_gradcheck({corrupted_backward_control()});
    std::printf("%-28s rel_err %.3e  tol %.0e  %s (expected FAIL)\n", ctl[0].name.c_str(),
                ctl[0].rel_err, ctl[0].tol, ctl[0].pass ? "PASS" : "FAIL");
    if (ctl[0].pass) failed.push_back(ctl[0].name + " (control should have failed)");
  }
  if (!failed.empty()) {
    std::string names;
    for (const std::string& n : failed) names += (names.empty() ? "" : ", ") + n;
    raise(ErrorKind::Numeric, "gradient checks failed: " + names);
  }
  std::printf("all %zu checks passed\n", results.size());
  return 0;
}

int cmd_bench_scan(const std::string& lengths_csv) {
  std::vector<int> lengths;
  std::string cur;
  for (char ch : lengths_csv + ",") {
    if (ch == ',') {
      if (!cur.empty()) {
        try {
          lengths.push_back(std::stoi(cur));
        } catch (const std::exception&) {
          raise(ErrorKind::Usage, "bench-scan: bad length '" + cur + "'");
        }
        cur.clear();
      }
    } else {
      cur += ch;
    }
  }
  std::vector<ScanBenchRow> rows = scan_benchmark(lengths);
  for (const ScanBenchRow& r : rows)
    std::printf("%d\t%.1f\t%.4f\n", r.length, r.nanos, r.nanos_per_element);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage radar nowcasting: state-space coarse predictor plus diffusion refinement"};
  app.require_subcommand(1);

  ArgSink g_gen, g_train, g_pred, g_eval;
  bool with_control = false;
  std::string lengths_csv = "256,512,1024,2048";

  add_common_flags(app.add_subcommand("generate", "synthesize an episode dataset"), g_gen);
  add_common_flags(app.add_subcommand("train", "train on a generated dataset"), g_train);
  add_common_flags(app.add_subcommand("predict", "run one episode through a checkpoint"), g_pred);
  add_common_flags(app.add_subcommand("evaluate", "score a split against observations"), g_eval);
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gc->add_flag("--with-corrupted-control", with_control,
               "also run the deliberately broken backward, expecting failure");
  CLI::App* bs = app.add_subcommand("bench-scan", "time the scan kernel; TSV to stdout");
  bs->add_option("--lengths", lengths_csv, "comma-separated sequence lengths");

  try {
    app.parse(argc, argv);
    if (app.got_subcommand("generate")) return cmd_generate(g_gen);
    if (app.got_subcommand("train")) return cmd_train(g_train);
    if (app.got_subcommand("predict")) return cmd_predict(g_pred);
    if (app.got_subcommand("evaluate")) return cmd_evaluate(g_eval);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(with_control);
    if (app.got_subcommand("bench-scan")) return cmd_bench_scan(lengths_csv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

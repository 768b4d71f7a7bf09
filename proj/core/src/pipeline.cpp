#include "vmudiff/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vmudiff/checkpoint.hpp"
#include "vmudiff/error.hpp"
#include "vmudiff/sequence.hpp"
#include "vmudiff/sequence_io.hpp"

namespace fs = std::filesystem;

namespace vmudiff {

namespace {

constexpr std::uint64_t kTagInit = 0x766d755f696e6974ull;
constexpr std::uint64_t kTagTrain = 0x766d755f7472616eull;
constexpr std::uint64_t kTagSample = 0x766d755f73616d70ull;

Tensor slice_frame(const Tensor& t3, int t) {
  Tensor out({t3.shape[1], t3.shape[2]});
  const std::size_t n = out.numel();
  std::copy(t3.v.begin() + static_cast<std::ptrdiff_t>(t * n),
            t3.v.begin() + static_cast<std::ptrdiff_t>((t + 1) * n), out.v.begin());
  return out;
}

Tensor scale_tensor(const Tensor& t, float s) {
  Tensor out = t;
  for (float& v : out.v) v *= s;
  return out;
}

std::optional<double> mean_frame_sharpness(const Tensor& pred3, const Tensor& obs3) {
  double sum = 0.0;
  int n = 0;
  for (int t = 0; t < pred3.shape[0]; ++t) {
    auto r = spectral_sharpness(slice_frame(pred3, t), slice_frame(obs3, t));
    if (r) {
      sum += *r;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

std::uint64_t seed_for_init(std::uint64_t run_seed) { return derive_seed(run_seed, kTagInit); }
std::uint64_t seed_for_train(std::uint64_t run_seed) { return derive_seed(run_seed, kTagTrain); }
std::uint64_t seed_for_sampling(std::uint64_t run_seed, long episode_idx) {
  return derive_seed(derive_seed(run_seed, kTagSample), static_cast<std::uint64_t>(episode_idx));
}

const std::vector<std::size_t>& Dataset::rows_for(const std::string& split) const {
  if (split == "train") return train_rows;
  if (split == "val") return val_rows;
  if (split == "test") return test_rows;
  raise(ErrorKind::Usage, "unknown split '" + split + "'");
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.dir = dir;
  ds.manifest = read_manifest((fs::path(dir) / "manifest.tsv").string());
  for (std::size_t i = 0; i < ds.manifest.rows.size(); ++i) {
    const std::string& s = ds.manifest.rows[i].split;
    if (s == "train")
      ds.train_rows.push_back(i);
    else if (s == "val")
      ds.val_rows.push_back(i);
    else if (s == "test")
      ds.test_rows.push_back(i);
    else
      raise(ErrorKind::Truncated, "manifest row " + std::to_string(i) + ": unknown split '" + s + "'");
  }
  return ds;
}

Sample load_sample(const Dataset& ds, std::size_t row_pos, const RunConfig& cfg) {
  require(row_pos < ds.manifest.rows.size(), ErrorKind::Usage, "manifest row out of range");
  const ManifestRow& row = ds.manifest.rows[row_pos];
  RadarSequence radar = as_radar(read_sequence((fs::path(ds.dir) / row.radar_path).string()));
  SatelliteSequence sat = as_satellite(read_sequence((fs::path(ds.dir) / row.sat_path).string()));

  require(radar.seq.t_len == cfg.n_in + cfg.m_out && radar.seq.h == cfg.h && radar.seq.w == cfg.w,
          ErrorKind::ShapeMismatch, row.radar_path + ": episode dims do not match the run config");
  require(sat.seq.t_len == cfg.n_in && sat.seq.h == cfg.h && sat.seq.w == cfg.w,
          ErrorKind::ShapeMismatch, row.sat_path + ": episode dims do not match the run config");

  RadarSequence radar_n = normalize_radar(radar);
  SatelliteSequence sat_n = normalize_satellite(sat);

  const int hw = cfg.h * cfg.w;
  Sample s;
  s.idx = row.idx;
  s.radar_in.reset({cfg.n_in, 1, cfg.h, cfg.w});
  s.sat_in.reset({cfg.n_in, 4, cfg.h, cfg.w});
  s.target.reset({cfg.m_out, cfg.h, cfg.w});
  s.target_raw.reset({cfg.m_out, cfg.h, cfg.w});
  s.last_input_raw.reset({cfg.h, cfg.w});

  for (int t = 0; t < cfg.n_in; ++t) {
    std::copy(radar_n.seq.frame(t, 0), radar_n.seq.frame(t, 0) + hw, &s.radar_in.at(t, 0, 0, 0));
    for (int c = 0; c < 4; ++c)
      std::copy(sat_n.seq.frame(t, c), sat_n.seq.frame(t, c) + hw, &s.sat_in.at(t, c, 0, 0));
  }
  for (int t = 0; t < cfg.m_out; ++t) {
    std::copy(radar_n.seq.frame(cfg.n_in + t, 0), radar_n.seq.frame(cfg.n_in + t, 0) + hw,
              &s.target.at(t, 0, 0));
    std::copy(radar.seq.frame(cfg.n_in + t, 0), radar.seq.frame(cfg.n_in + t, 0) + hw,
              &s.target_raw.at(t, 0, 0));
  }
  std::copy(radar.seq.frame(cfg.n_in - 1, 0), radar.seq.frame(cfg.n_in - 1, 0) + hw,
            &s.last_input_raw.at(0, 0));
  return s;
}

Model::Model(const RunConfig& cfg, Rng& init_rng)
    : sched_(NoiseSchedule::linear(cfg.t_diff)) {
  coarse_.emplace(ps_, cfg.vmu_config(), init_rng);
  if (!cfg.ablate_stdiff) stdiff_.emplace(ps_, cfg.stdiff_config(), sched_, init_rng);
}

TrainResult train_run(const RunConfig& cfg) {
  cfg.validate();
  Dataset ds = load_dataset(cfg.data_dir);
  require(!ds.train_rows.empty(), ErrorKind::Usage, "dataset has no train episodes");

  fs::create_directories(cfg.out_dir);
  Rng init_rng(seed_for_init(cfg.seed));
  Model model(cfg, init_rng);
  Rng train_rng(seed_for_train(cfg.seed));

  const long warmup_iters = std::llround(cfg.warmup_frac * static_cast<double>(cfg.iters));
  const long n_train = static_cast<long>(ds.train_rows.size());

  // Episodes are small at desk scale; cache decoded tensors on first touch.
  std::vector<std::optional<Sample>> cache(ds.manifest.rows.size());
  auto sample_at = [&](std::size_t pos) -> const Sample& {
    if (!cache[pos]) cache[pos] = load_sample(ds, pos, cfg);
    return *cache[pos];
  };

  const std::string log_path = (fs::path(cfg.out_dir) / "loss_log.tsv").string();
  std::ofstream log(log_path, std::ios::binary);
  require(log.good(), ErrorKind::Io, "cannot open loss log " + log_path);

  TrainResult res;
  char line[128];
  for (long it = 1; it <= cfg.iters; ++it) {
    const bool joint = model.has_refiner() && it > warmup_iters;
    double lc_mean = 0.0, lr_mean = 0.0, lt_mean = 0.0;
    try {
      model.params().zero_grads();
      const float scale = 1.0f / static_cast<float>(cfg.batch);
      for (int b = 0; b < cfg.batch; ++b) {
        const std::size_t pos = ds.train_rows[train_rng.uniform_int(0, n_train - 1)];
        const Sample& s = sample_at(pos);
        Tensor mu = model.coarse().forward(s.radar_in, s.sat_in);
        const double lc = mse_loss(mu, s.target);
        double lt = lc;
        if (joint) {
          // The refiner trains against residuals of the current coarse net
          // but sends no gradient back through mu or the fused features.
          Tensor z0 = compute_residual_target(s.target, mu);
          model.refiner().build_condition(mu, model.coarse().fused_features());
          const double lr = model.refiner().refine_loss(z0, train_rng);
          lt = total_loss(lc, lr, cfg.alpha);
          model.refiner().backward_refine(static_cast<float>(1.0 - cfg.alpha) * scale);
          model.coarse().backward(
              mse_loss_grad(mu, s.target, static_cast<float>(cfg.alpha) * scale));
          lr_mean += lr;
        } else {
          model.coarse().backward(mse_loss_grad(mu, s.target, scale));
        }
        require(std::isfinite(lt), ErrorKind::Numeric, "non-finite loss");
        lc_mean += lc;
        lt_mean += lt;
      }
      model.params().adam_step(static_cast<float>(cfg.lr));
    } catch (const Error& e) {
      raise(e.kind(), std::string(e.what()) + " (training iteration " + std::to_string(it) + ")");
    }
    lc_mean /= cfg.batch;
    lr_mean /= cfg.batch;
    lt_mean /= cfg.batch;

    if (joint)
      std::snprintf(line, sizeof line, "%ld\t%.6f\t%.6f\t%.6f\n", it, lc_mean, lr_mean, lt_mean);
    else
      std::snprintf(line, sizeof line, "%ld\t%.6f\tNA\t%.6f\n", it, lc_mean, lt_mean);
    log << line;

    res.iters = it;
    res.l_coarse = lc_mean;
    res.l_total = lt_mean;
    res.l_refine = joint ? std::optional<double>(lr_mean) : std::nullopt;

    if (cfg.ckpt_every > 0 && it % cfg.ckpt_every == 0)
      save_checkpoint(model.params(), cfg.checkpoint_path());
  }
  log.flush();
  require(log.good(), ErrorKind::Io, "short write to loss log " + log_path);
  save_checkpoint(model.params(), cfg.checkpoint_path());
  return res;
}

Prediction predict_sample(Model& model, const Sample& s, const RunConfig& cfg,
                          std::uint64_t noise_seed) {
  Prediction p;
  p.mu = model.coarse().forward(s.radar_in, s.sat_in);
  if (model.has_refiner()) {
    model.refiner().build_condition(p.mu, model.coarse().fused_features());
    Rng rng(noise_seed);
    p.residual = model.refiner().sample(cfg.ddim_steps, 0.0f, rng);
  } else {
    p.residual = Tensor::zeros_like(p.mu);
  }
  p.yhat_unclamped = p.mu;
  for (std::size_t i = 0; i < p.yhat_unclamped.v.size(); ++i)
    p.yhat_unclamped.v[i] += p.residual.v[i];
  if (model.has_refiner()) {
    p.yhat = p.yhat_unclamped;
    for (float& v : p.yhat.v) v = std::min(1.0f, std::max(0.0f, v));
  } else {
    p.yhat = p.mu;  // no refinement pass, so the forecast is the coarse field
  }
  return p;
}

EvalResult evaluate_split(Model& model, const Dataset& ds, const RunConfig& cfg) {
  const std::vector<std::size_t>& rows = ds.rows_for(cfg.split);
  require(!rows.empty(), ErrorKind::Usage, "split '" + cfg.split + "' has no episodes");

  EvalResult ev;
  MetricAccumulator acc_model, acc_coarse, acc_pers;
  for (std::size_t pos : rows) {
    Sample s = load_sample(ds, pos, cfg);
    Prediction p = predict_sample(model, s, cfg, seed_for_sampling(cfg.seed, s.idx));

    Tensor model_dbz = scale_tensor(p.yhat, kRadarHiDbz);
    Tensor coarse_dbz = scale_tensor(p.mu, kRadarHiDbz);
    Tensor pers_dbz({cfg.m_out, cfg.h, cfg.w});
    Tensor pers_norm({cfg.m_out, cfg.h, cfg.w});
    const int hw = cfg.h * cfg.w;
    for (int t = 0; t < cfg.m_out; ++t) {
      std::copy(s.last_input_raw.v.begin(), s.last_input_raw.v.end(),
                pers_dbz.v.begin() + static_cast<std::ptrdiff_t>(t * hw));
      std::copy(&s.radar_in.at(cfg.n_in - 1, 0, 0, 0), &s.radar_in.at(cfg.n_in - 1, 0, 0, 0) + hw,
                pers_norm.v.begin() + static_cast<std::ptrdiff_t>(t * hw));
    }

    acc_model.add(model_dbz, s.target_raw);
    acc_coarse.add(coarse_dbz, s.target_raw);
    acc_pers.add(pers_dbz, s.target_raw);

    EpisodeScores es;
    es.idx = s.idx;
    es.mse_model = mse_loss(p.yhat, s.target);
    es.mse_coarse = mse_loss(p.mu, s.target);
    es.mse_persistence = mse_loss(pers_norm, s.target);
    es.sharp_model = mean_frame_sharpness(model_dbz, s.target_raw);
    es.sharp_coarse = mean_frame_sharpness(coarse_dbz, s.target_raw);
    ev.episodes.push_back(es);

    ev.mean_mse_model += es.mse_model;
    ev.mean_mse_coarse += es.mse_coarse;
    ev.mean_mse_persistence += es.mse_persistence;
  }
  const double n = static_cast<double>(ev.episodes.size());
  ev.mean_mse_model /= n;
  ev.mean_mse_coarse /= n;
  ev.mean_mse_persistence /= n;
  ev.model = acc_model.report();
  ev.coarse = acc_coarse.report();
  ev.persistence = acc_pers.report();
  return ev;
}

void write_eval_tsvs(const EvalResult& ev, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_metric_tsv(fs::path(out_dir) / "metrics.tsv", ev.model);
  write_metric_tsv(fs::path(out_dir) / "metrics_coarse.tsv", ev.coarse);
  write_metric_tsv(fs::path(out_dir) / "metrics_persistence.tsv", ev.persistence);
}

void write_pgm(const Tensor& frame01, const std::string& path) {
  require(frame01.rank == 2, ErrorKind::ShapeMismatch, "pgm export expects a rank-2 frame");
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Io, "cannot open " + path);
  f << "P5\n" << frame01.shape[1] << ' ' << frame01.shape[0] << "\n255\n";
  std::vector<unsigned char> bytes(frame01.v.size());
  for (std::size_t i = 0; i < frame01.v.size(); ++i) {
    long v = std::lround(static_cast<double>(frame01.v[i]) * 255.0);
    bytes[i] = static_cast<unsigned char>(std::min(255l, std::max(0l, v)));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(f.good(), ErrorKind::Io, "short write to " + path);
}

}  // namespace vmudiff

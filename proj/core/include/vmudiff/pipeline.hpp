#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vmudiff/config.hpp"
#include "vmudiff/metrics.hpp"
#include "vmudiff/schedule.hpp"
#include "vmudiff/stdiff.hpp"
#include "vmudiff/synthetic.hpp"
#include "vmudiff/vmu.hpp"

namespace vmudiff {

/** One episode prepared for the nets; normalized units unless named raw. */
struct Sample {
  long idx = 0;             // manifest idx
  Tensor radar_in;          // (n_in, 1, h, w)
  Tensor sat_in;            // (n_in, 4, h, w)
  Tensor target;            // (m_out, h, w)
  Tensor target_raw;        // (m_out, h, w), dBZ
  Tensor last_input_raw;    // (h, w), dBZ; persistence base
};

/** Manifest plus row positions grouped by split. */
struct Dataset {
  std::string dir;
  Manifest manifest;
  std::vector<std::size_t> train_rows, val_rows, test_rows;

  const std::vector<std::size_t>& rows_for(const std::string& split) const;
};

Dataset load_dataset(const std::string& dir);

/** Reads one episode pair from disk and slices it; dims checked against cfg. */
Sample load_sample(const Dataset& ds, std::size_t row_pos, const RunConfig& cfg);

/**
 * Coarse net plus optional refiner on a single parameter store, so one
 * optimizer step covers every trainable scalar and one checkpoint holds
 * the whole model.
 */
class Model {
 public:
  Model(const RunConfig& cfg, Rng& init_rng);

  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }
  VmuNetT<float>& coarse() { return *coarse_; }
  bool has_refiner() const { return stdiff_.has_value(); }
  StdiffT<float>& refiner() { return *stdiff_; }
  const NoiseSchedule& schedule() const { return sched_; }

 private:
  ParamStore ps_;
  NoiseSchedule sched_;  // must outlive the refiner, which keeps a pointer
  std::optional<VmuNetT<float>> coarse_;
  std::optional<StdiffT<float>> stdiff_;
};

// Every random stream is derived from the run seed under a fixed tag, so
// dataset size, evaluation order and ablations never shift each other.
std::uint64_t seed_for_init(std::uint64_t run_seed);
std::uint64_t seed_for_train(std::uint64_t run_seed);
std::uint64_t seed_for_sampling(std::uint64_t run_seed, long episode_idx);

struct TrainResult {
  long iters = 0;
  double l_coarse = 0.0;
  double l_total = 0.0;
  std::optional<double> l_refine;  // empty while the refiner is idle
};

/**
 * Full training run: builds the model, samples train episodes, writes
 * <out_dir>/loss_log.tsv (iter, l_coarse, l_refine, l_total per line, NA
 * when the refiner is idle) plus periodic and final checkpoints.
 * Non-finite losses abort with the failing iteration in the message.
 */
TrainResult train_run(const RunConfig& cfg);

struct Prediction {
  Tensor mu;              // (m,h,w), clamped coarse output
  Tensor residual;        // (m,h,w); zero when the refiner is absent
  Tensor yhat_unclamped;  // exact float sum mu + residual
  Tensor yhat;            // clamp(mu + residual, 0, 1); equals mu without refiner
};

/** Runs the model on one sample; the refiner draws from its own stream. */
Prediction predict_sample(Model& model, const Sample& s, const RunConfig& cfg,
                          std::uint64_t noise_seed);

struct EpisodeScores {
  long idx = 0;
  double mse_model = 0.0;        // normalized units, mean over m*h*w
  double mse_coarse = 0.0;
  double mse_persistence = 0.0;
  std::optional<double> sharp_model;   // mean per-frame spectral ratio
  std::optional<double> sharp_coarse;
};

struct EvalResult {
  MetricReport model, coarse, persistence;
  std::vector<EpisodeScores> episodes;
  double mean_mse_model = 0.0;
  double mean_mse_coarse = 0.0;
  double mean_mse_persistence = 0.0;
};

/**
 * Scores one split: the model forecast, the bare coarse forecast and
 * last-input-frame persistence against the observed future, all in dBZ.
 */
EvalResult evaluate_split(Model& model, const Dataset& ds, const RunConfig& cfg);

/** metrics.tsv, metrics_coarse.tsv, metrics_persistence.tsv under out_dir. */
void write_eval_tsvs(const EvalResult& ev, const std::string& out_dir);

/** 8-bit binary PGM (`P5`), values scaled from [0, 1]. Frame is rank 2. */
void write_pgm(const Tensor& frame01, const std::string& path);

}  // namespace vmudiff

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "vmudiff/tensor.hpp"

namespace vmudiff {

inline constexpr std::array<double, 5> kDbzThresholds{25.0, 35.0, 40.0, 45.0, 50.0};

struct ContingencyTable {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  ContingencyTable& operator+=(const ContingencyTable& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

/** Event iff value >= thr; inputs are raw-dBZ fields of matching shape. */
ContingencyTable contingency(const Tensor& pred_dbz, const Tensor& obs_dbz, double thr);

// Zero denominators yield nullopt (undefined), never 0.
std::optional<double> csi(const ContingencyTable& t);
std::optional<double> far(const ContingencyTable& t);
std::optional<double> hss(const ContingencyTable& t);

/**
 * Windowed structural similarity of two single frames in [0, 1]:
 * 11x11 Gaussian window sigma 1.5, K1 = 0.01, K2 = 0.03, range 1, averaged
 * over fully interior window positions. Frames must be rank 2 and >= 11x11.
 */
double ssim(const Tensor& x, const Tensor& y);

/**
 * Ratio of high-frequency spectral energy of pred to obs, over radial
 * frequencies above half-Nyquist. 1 = matched sharpness, < 1 = blurrier
 * than truth. nullopt when the reference has no high-frequency energy
 * beyond DFT roundoff. Frames must be rank 2 and square.
 */
std::optional<double> spectral_sharpness(const Tensor& pred, const Tensor& obs);

struct MetricReport {
  std::array<double, 5> thresholds = kDbzThresholds;
  std::array<ContingencyTable, 5> tables;  // pooled over all frames and samples
  std::vector<std::optional<double>> ssim_per_lead;
  std::vector<std::optional<double>> sharpness_per_lead;
  std::optional<double> ssim_overall;
  std::optional<double> sharpness_overall;
};

/**
 * Pools matched forecast/observation sequences: contingency tables are
 * summed (scored once at the end, not per frame), SSIM and sharpness are
 * averaged per lead time and overall, skipping undefined values.
 *
 * Inputs are raw dBZ, rank 3 (t, h, w). SSIM is computed on fields
 * rescaled to [0, 1] by the radar range.
 */
class MetricAccumulator {
 public:
  void add(const Tensor& pred_dbz, const Tensor& obs_dbz);
  MetricReport report() const;

 private:
  int t_len_ = -1;
  std::array<ContingencyTable, 5> tables_;
  std::vector<double> ssim_sum_;
  std::vector<std::int64_t> ssim_n_;
  std::vector<double> sharp_sum_;
  std::vector<std::int64_t> sharp_n_;
};

MetricReport evaluate_run(const Tensor& pred_dbz, const Tensor& obs_dbz);

/**
 * Pinned report layout: one `thr <TAB> csi <TAB> hss <TAB> far` row per
 * threshold, then `ssim <TAB> value` and `sharpness <TAB> value`;
 * undefined scores print as NA.
 */
void write_metric_tsv(const std::filesystem::path& path, const MetricReport& report);

}  // namespace vmudiff

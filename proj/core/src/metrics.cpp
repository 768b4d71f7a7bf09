#include "vmudiff/metrics.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>

#include "vmudiff/sequence.hpp"

namespace vmudiff {

ContingencyTable contingency(const Tensor& pred_dbz, const Tensor& obs_dbz, double thr) {
  require(pred_dbz.same_shape(obs_dbz), ErrorKind::ShapeMismatch, "contingency: shape mismatch");
  ContingencyTable t;
  for (int i = 0; i < pred_dbz.numel(); ++i) {
    bool p = pred_dbz.v[i] >= thr;
    bool o = obs_dbz.v[i] >= thr;
    if (p && o)
      ++t.tp;
    else if (p)
      ++t.fp;
    else if (o)
      ++t.fn;
    else
      ++t.tn;
  }
  return t;
}

std::optional<double> csi(const ContingencyTable& t) {
  std::int64_t d = t.tp + t.fp + t.fn;
  if (d == 0) return std::nullopt;
  return static_cast<double>(t.tp) / static_cast<double>(d);
}

std::optional<double> far(const ContingencyTable& t) {
  std::int64_t d = t.tp + t.fp;
  if (d == 0) return std::nullopt;
  return static_cast<double>(t.fp) / static_cast<double>(d);
}

std::optional<double> hss(const ContingencyTable& t) {
  double tp = static_cast<double>(t.tp), fp = static_cast<double>(t.fp);
  double fn = static_cast<double>(t.fn), tn = static_cast<double>(t.tn);
  double d = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn);
  if (d == 0.0) return std::nullopt;
  return 2.0 * (tp * tn - fp * fn) / d;
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin * kWin>& gaussian_window() {
  static const std::array<double, kWin * kWin> w = [] {
    std::array<double, kWin * kWin> g{};
    double sum = 0.0;
    for (int y = 0; y < kWin; ++y) {
      for (int x = 0; x < kWin; ++x) {
        double dy = y - kWin / 2, dx = x - kWin / 2;
        double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
        g[y * kWin + x] = v;
        sum += v;
      }
    }
    for (auto& v : g) v /= sum;
    return g;
  }();
  return w;
}

}  // namespace

double ssim(const Tensor& x, const Tensor& y) {
  require(x.rank == 2 && x.same_shape(y), ErrorKind::ShapeMismatch, "ssim: shape mismatch");
  const int h = x.shape[0], w = x.shape[1];
  require(h >= kWin && w >= kWin, ErrorKind::ShapeMismatch, "ssim: frame smaller than window");
  const auto& win = gaussian_window();
  double total = 0.0;
  std::int64_t n = 0;
  for (int oy = 0; oy + kWin <= h; ++oy) {
    for (int ox = 0; ox + kWin <= w; ++ox) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int ky = 0; ky < kWin; ++ky) {
        const float* xr = x.data() + static_cast<std::size_t>(oy + ky) * w + ox;
        const float* yr = y.data() + static_cast<std::size_t>(oy + ky) * w + ox;
        const double* wr = win.data() + static_cast<std::size_t>(ky) * kWin;
        for (int kx = 0; kx < kWin; ++kx) {
          double a = xr[kx], b = yr[kx], g = wr[kx];
          mx += g * a;
          my += g * b;
          mxx += g * a * a;
          myy += g * b * b;
          mxy += g * a * b;
        }
      }
      double vx = mxx - mx * mx;
      double vy = myy - my * my;
      double cov = mxy - mx * my;
      double s = ((2 * mx * my + kC1) * (2 * cov + kC2)) /
                 ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      total += s;
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

namespace {

/** Row-column 2D DFT; returns |X|^2 per frequency bin. */
std::vector<double> dft2_power(const Tensor& x) {
  const int h = x.shape[0], w = x.shape[1];
  std::vector<std::complex<double>> rows(static_cast<std::size_t>(h) * w);
  // 1D DFT along each row
  for (int r = 0; r < h; ++r) {
    for (int k = 0; k < w; ++k) {
      std::complex<double> acc(0, 0);
      for (int j = 0; j < w; ++j) {
        double ang = -2.0 * M_PI * k * j / w;
        acc += static_cast<double>(x.at(r, j)) * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      rows[static_cast<std::size_t>(r) * w + k] = acc;
    }
  }
  std::vector<double> power(static_cast<std::size_t>(h) * w);
  // then along each column
  for (int k = 0; k < w; ++k) {
    for (int m = 0; m < h; ++m) {
      std::complex<double> acc(0, 0);
      for (int r = 0; r < h; ++r) {
        double ang = -2.0 * M_PI * m * r / h;
        acc += rows[static_cast<std::size_t>(r) * w + k] *
               std::complex<double>(std::cos(ang), std::sin(ang));
      }
      power[static_cast<std::size_t>(m) * w + k] = std::norm(acc);
    }
  }
  return power;
}

struct BandEnergy {
  double high = 0.0;
  double total = 0.0;
};

BandEnergy band_energy(const Tensor& x) {
  const int n = x.shape[0];
  std::vector<double> power = dft2_power(x);
  // signed frequencies; high band = radius above half-Nyquist (n/4)
  const double cut2 = (n / 4.0) * (n / 4.0);
  BandEnergy e;
  for (int ky = 0; ky < n; ++ky) {
    int fy = ky <= n / 2 ? ky : ky - n;
    for (int kx = 0; kx < n; ++kx) {
      int fx = kx <= n / 2 ? kx : kx - n;
      double p = power[static_cast<std::size_t>(ky) * n + kx];
      e.total += p;
      if (fy * fy + fx * fx > cut2) e.high += p;
    }
  }
  return e;
}

}  // namespace

std::optional<double> spectral_sharpness(const Tensor& pred, const Tensor& obs) {
  require(pred.rank == 2 && pred.same_shape(obs), ErrorKind::ShapeMismatch,
          "sharpness: shape mismatch");
  require(pred.shape[0] == pred.shape[1], ErrorKind::ShapeMismatch,
          "sharpness: frames must be square");
  BandEnergy eo = band_energy(obs);
  // a flat reference leaves only DFT roundoff in the band; judge it against
  // the total energy so such frames read as textureless, not as defined
  if (eo.high <= eo.total * 1e-12) return std::nullopt;
  return band_energy(pred).high / eo.high;
}

void MetricAccumulator::add(const Tensor& pred_dbz, const Tensor& obs_dbz) {
  require(pred_dbz.rank == 3 && pred_dbz.same_shape(obs_dbz), ErrorKind::ShapeMismatch,
          "metrics: sequences must be rank 3 with matching shapes");
  const int tl = pred_dbz.shape[0], h = pred_dbz.shape[1], w = pred_dbz.shape[2];
  if (t_len_ < 0) {
    t_len_ = tl;
    ssim_sum_.assign(tl, 0.0);
    ssim_n_.assign(tl, 0);
    sharp_sum_.assign(tl, 0.0);
    sharp_n_.assign(tl, 0);
  }
  require(tl == t_len_, ErrorKind::ShapeMismatch, "metrics: lead-time count changed mid-pool");

  const float scale = static_cast<float>(kRadarHiDbz);
  for (int t = 0; t < tl; ++t) {
    Tensor pf({h, w}), of({h, w}), pn({h, w}), on({h, w});
    for (int i = 0; i < h * w; ++i) {
      float p = pred_dbz.v[static_cast<std::size_t>(t) * h * w + i];
      float o = obs_dbz.v[static_cast<std::size_t>(t) * h * w + i];
      pf.v[i] = p;
      of.v[i] = o;
      pn.v[i] = std::min(1.0f, std::max(0.0f, p / scale));
      on.v[i] = std::min(1.0f, std::max(0.0f, o / scale));
    }
    for (std::size_t k = 0; k < kDbzThresholds.size(); ++k) {
      tables_[k] += contingency(pf, of, kDbzThresholds[k]);
    }
    ssim_sum_[t] += ssim(pn, on);
    ++ssim_n_[t];
    if (auto s = spectral_sharpness(pf, of)) {
      sharp_sum_[t] += *s;
      ++sharp_n_[t];
    }
  }
}

MetricReport MetricAccumulator::report() const {
  MetricReport r;
  r.tables = tables_;
  double ssum = 0.0, shsum = 0.0;
  std::int64_t sn = 0, shn = 0;
  const int tl = std::max(t_len_, 0);
  r.ssim_per_lead.resize(tl);
  r.sharpness_per_lead.resize(tl);
  for (int t = 0; t < tl; ++t) {
    if (ssim_n_[t] > 0) r.ssim_per_lead[t] = ssim_sum_[t] / ssim_n_[t];
    if (sharp_n_[t] > 0) r.sharpness_per_lead[t] = sharp_sum_[t] / sharp_n_[t];
    ssum += ssim_sum_[t];
    sn += ssim_n_[t];
    shsum += sharp_sum_[t];
    shn += sharp_n_[t];
  }
  if (sn > 0) r.ssim_overall = ssum / sn;
  if (shn > 0) r.sharpness_overall = shsum / shn;
  return r;
}

MetricReport evaluate_run(const Tensor& pred_dbz, const Tensor& obs_dbz) {
  MetricAccumulator acc;
  acc.add(pred_dbz, obs_dbz);
  return acc.report();
}

namespace {

std::string fmt_score(const std::optional<double>& s) {
  if (!s) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *s);
  return buf;
}

}  // namespace

void write_metric_tsv(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot open metric report for writing: " + path.string());
  for (std::size_t k = 0; k < report.thresholds.size(); ++k) {
    const auto& t = report.tables[k];
    out << static_cast<int>(report.thresholds[k]) << '\t' << fmt_score(csi(t)) << '\t'
        << fmt_score(hss(t)) << '\t' << fmt_score(far(t)) << '\n';
  }
  out << "ssim\t" << fmt_score(report.ssim_overall) << '\n';
  out << "sharpness\t" << fmt_score(report.sharpness_overall) << '\n';
  require(out.good(), ErrorKind::Io, "metric report write failed: " + path.string());
}

}  // namespace vmudiff

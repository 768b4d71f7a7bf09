#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "doctest.h"
#include "vmudiff/metrics.hpp"
#include "vmudiff/rng.hpp"
#include "vmudiff/sequence.hpp"

using namespace vmudiff;

namespace {

Tensor frame(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Tensor t({h, w});
  Rng rng(seed);
  for (auto& v : t.v) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::Usage;
}

// Direct-summation structural similarity, written out independently:
// 11x11 Gaussian window sigma 1.5, K1 = 0.01, K2 = 0.03, unit range,
// averaged over fully interior window placements.
double ssim_reference(const Tensor& x, const Tensor& y) {
  const int h = x.shape[0], w = x.shape[1];
  double win[11][11];
  double wsum = 0.0;
  for (int a = 0; a < 11; ++a) {
    for (int b = 0; b < 11; ++b) {
      double dy = a - 5, dx = b - 5;
      win[a][b] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
      wsum += win[a][b];
    }
  }
  for (auto& row : win) {
    for (auto& v : row) v /= wsum;
  }
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int n = 0;
  for (int oy = 0; oy + 11 <= h; ++oy) {
    for (int ox = 0; ox + 11 <= w; ++ox) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int a = 0; a < 11; ++a) {
        for (int b = 0; b < 11; ++b) {
          double g = win[a][b];
          double xv = x.at(oy + a, ox + b), yv = y.at(oy + a, ox + b);
          mx += g * xv;
          my += g * yv;
          sxx += g * xv * xv;
          syy += g * yv * yv;
          sxy += g * xv * yv;
        }
      }
      double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++n;
    }
  }
  return total / n;
}

// Direct full 2D DFT energy in the band above half-Nyquist radius.
double high_band_reference(const Tensor& x) {
  const int n = x.shape[0];
  const double cut2 = (n / 4.0) * (n / 4.0);
  double e = 0.0;
  for (int ky = 0; ky < n; ++ky) {
    int fy = ky <= n / 2 ? ky : ky - n;
    for (int kx = 0; kx < n; ++kx) {
      int fx = kx <= n / 2 ? kx : kx - n;
      if (fy * fy + fx * fx <= cut2) continue;
      std::complex<double> acc(0.0, 0.0);
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
          double ang = -2.0 * M_PI * (static_cast<double>(ky) * r / n +
                                      static_cast<double>(kx) * c / n);
          acc += static_cast<double>(x.at(r, c)) * std::complex<double>(std::cos(ang), std::sin(ang));
        }
      }
      e += std::norm(acc);
    }
  }
  return e;
}

}  // namespace

TEST_CASE("a hand-built contingency table scores csi 0.6 and far 0.25") {
  Tensor pred({3, 3}), obs({3, 3});
  pred.v = {50, 50, 50, 45, 10, 10, 10, 10, 10};
  obs.v = {50, 60, 41, 20, 55, 0, 0, 0, 0};
  ContingencyTable t = contingency(pred, obs, 40.0);
  CHECK(t.tp == 3);
  CHECK(t.fp == 1);
  CHECK(t.fn == 1);
  CHECK(t.tn == 4);
  CHECK(*csi(t) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(*far(t) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("values exactly at the threshold count as events") {
  Tensor pred({1, 1}), obs({1, 1});
  pred.v = {40.0f};
  obs.v = {40.0f};
  ContingencyTable t = contingency(pred, obs, 40.0);
  CHECK(t.tp == 1);
}

TEST_CASE("hss on a hand-built table is one half, and a skill-free split is zero") {
  ContingencyTable t;
  t.tp = 2;
  t.fp = 1;
  t.fn = 1;
  t.tn = 5;
  CHECK(*hss(t) == doctest::Approx(0.5).epsilon(1e-12));

  // tp*tn == fp*fn means no skill over chance
  ContingencyTable flat;
  flat.tp = 4;
  flat.tn = 3;
  flat.fp = 6;
  flat.fn = 2;
  CHECK(*hss(flat) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("zero denominators are undefined, not zero") {
  ContingencyTable none;  // no events anywhere
  none.tn = 9;
  CHECK_FALSE(csi(none).has_value());
  CHECK_FALSE(far(none).has_value());
  CHECK_FALSE(hss(none).has_value());

  ContingencyTable all;  // every cell an observed and forecast event
  all.tp = 9;
  CHECK(*csi(all) == 1.0);
  CHECK(*far(all) == 0.0);
  CHECK_FALSE(hss(all).has_value());  // marginals are degenerate
}

TEST_CASE("csi never exceeds one minus far") {
  Rng rng(101);
  for (int i = 0; i < 200; ++i) {
    ContingencyTable t;
    t.tp = static_cast<std::int64_t>(rng.uniform_int(0, 50));
    t.fp = static_cast<std::int64_t>(rng.uniform_int(0, 50));
    t.fn = static_cast<std::int64_t>(rng.uniform_int(0, 50));
    t.tn = static_cast<std::int64_t>(rng.uniform_int(0, 50));
    auto c = csi(t), f = far(t);
    if (c && f) CHECK(*c <= 1.0 - *f + 1e-15);
  }
}

TEST_CASE("event counts shrink as the threshold rises") {
  Tensor pred = frame(32, 32, 7, 0.0, 70.0);
  Tensor obs = frame(32, 32, 8, 0.0, 70.0);
  std::int64_t prev_obs = -1, prev_pred = -1;
  bool first = true;
  for (double thr : kDbzThresholds) {
    ContingencyTable t = contingency(pred, obs, thr);
    std::int64_t obs_events = t.tp + t.fn;
    std::int64_t pred_events = t.tp + t.fp;
    if (!first) {
      CHECK(obs_events <= prev_obs);
      CHECK(pred_events <= prev_pred);
    }
    prev_obs = obs_events;
    prev_pred = pred_events;
    first = false;
  }
}

TEST_CASE("hss of independent forecasts is near zero") {
  Tensor pred = frame(256, 256, 11, 0.0, 70.0);
  Tensor obs = frame(256, 256, 12, 0.0, 70.0);
  ContingencyTable t = contingency(pred, obs, 40.0);
  CHECK(std::abs(*hss(t)) < 0.04);  // ~5 sigma for 65536 independent cells
}

TEST_CASE("ssim matches a direct-summation reference on random frames") {
  Tensor x = frame(16, 16, 21);
  Tensor y = frame(16, 16, 22);
  CHECK(ssim(x, y) == doctest::Approx(ssim_reference(x, y)).epsilon(1e-9));

  Tensor a = frame(13, 19, 23);  // non-square, minimal margin on one side
  Tensor b = frame(13, 19, 24);
  CHECK(ssim(a, b) == doctest::Approx(ssim_reference(a, b)).epsilon(1e-9));
}

TEST_CASE("ssim is one on identical frames and symmetric") {
  Tensor x = frame(16, 16, 25);
  CHECK(ssim(x, x) == 1.0);
  Tensor y = frame(16, 16, 26);
  CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
  CHECK(ssim(x, y) < 1.0);
}

TEST_CASE("ssim rejects bad shapes") {
  Tensor x = frame(16, 16, 27), small = frame(10, 16, 28);
  Tensor other = frame(16, 12, 29);
  CHECK(kind_of([&] { ssim(x, other); }) == ErrorKind::ShapeMismatch);
  CHECK(kind_of([&] { ssim(small, small); }) == ErrorKind::ShapeMismatch);
  Tensor r3({2, 16, 16});
  CHECK(kind_of([&] { ssim(r3, r3); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("spectral sharpness matches a direct band-energy reference") {
  Tensor pred = frame(12, 12, 31);
  Tensor obs = frame(12, 12, 32);
  auto s = spectral_sharpness(pred, obs);
  REQUIRE(s.has_value());
  double want = high_band_reference(pred) / high_band_reference(obs);
  CHECK(*s == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("sharpness is one against itself, below one when blurred, above with noise") {
  Tensor obs = frame(16, 16, 33);
  CHECK(*spectral_sharpness(obs, obs) == 1.0);

  // 3x3 mean blur with border renormalization
  Tensor blur({16, 16});
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      double acc = 0.0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= 16 || xx < 0 || xx >= 16) continue;
          acc += obs.at(yy, xx);
          ++n;
        }
      }
      blur.at(y, x) = static_cast<float>(acc / n);
    }
  }
  CHECK(*spectral_sharpness(blur, obs) < 1.0);

  Tensor noisy = obs;
  Rng rng(34);
  for (auto& v : noisy.v) v += static_cast<float>(0.5 * rng.normal());
  CHECK(*spectral_sharpness(noisy, obs) > 1.0);
}

TEST_CASE("sharpness is undefined for a flat reference and rejects bad shapes") {
  Tensor flat({12, 12});
  std::fill(flat.v.begin(), flat.v.end(), 3.0f);
  Tensor pred = frame(12, 12, 35);
  CHECK_FALSE(spectral_sharpness(pred, flat).has_value());

  Tensor rect = frame(12, 16, 36);
  CHECK(kind_of([&] { spectral_sharpness(rect, rect); }) == ErrorKind::ShapeMismatch);
  CHECK(kind_of([&] { spectral_sharpness(pred, rect); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("the accumulator pools counts instead of averaging per-frame scores") {
  // frame 0 has three hits, frame 1 a single false alarm. Pooled csi is
  // 3/4; a per-frame average would report (1 + 0)/2 = 1/2.
  Tensor pred({2, 16, 16}), obs({2, 16, 16});
  for (int i = 0; i < 3; ++i) {
    pred.at(0, 0, i) = 50.0f;
    obs.at(0, 0, i) = 50.0f;
  }
  pred.at(1, 4, 4) = 50.0f;

  MetricAccumulator acc;
  acc.add(pred, obs);
  MetricReport rep = acc.report();
  const auto& t40 = rep.tables[2];
  CHECK(t40.tp == 3);
  CHECK(t40.fp == 1);
  CHECK(t40.fn == 0);
  CHECK(*csi(t40) == doctest::Approx(0.75).epsilon(1e-12));

  // a second episode doubles the pooled counts and keeps the score
  acc.add(pred, obs);
  MetricReport rep2 = acc.report();
  CHECK(rep2.tables[2].tp == 6);
  CHECK(rep2.tables[2].fp == 2);
  CHECK(*csi(rep2.tables[2]) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("accumulator ssim works on range-normalized clamped fields") {
  Tensor pred({1, 16, 16}), obs({1, 16, 16});
  Rng rng(41);
  for (auto& v : pred.v) v = static_cast<float>(rng.uniform(-10.0, 90.0));
  for (auto& v : obs.v) v = static_cast<float>(rng.uniform(0.0, 70.0));

  MetricAccumulator acc;
  acc.add(pred, obs);
  MetricReport rep = acc.report();

  Tensor pn({16, 16}), on({16, 16});
  for (int i = 0; i < 256; ++i) {
    pn.v[i] = std::min(1.0f, std::max(0.0f, pred.v[i] / static_cast<float>(kRadarHiDbz)));
    on.v[i] = std::min(1.0f, std::max(0.0f, obs.v[i] / static_cast<float>(kRadarHiDbz)));
  }
  REQUIRE(rep.ssim_overall.has_value());
  CHECK(*rep.ssim_overall == doctest::Approx(ssim(pn, on)).epsilon(1e-12));
}

TEST_CASE("undefined sharpness frames are skipped, not zero-counted") {
  Tensor flat_obs({1, 16, 16}), pred = Tensor({1, 16, 16});
  std::fill(flat_obs.v.begin(), flat_obs.v.end(), 10.0f);
  Rng rng(42);
  for (auto& v : pred.v) v = static_cast<float>(rng.uniform(0.0, 70.0));

  Tensor tex_obs({1, 16, 16});
  for (auto& v : tex_obs.v) v = static_cast<float>(rng.uniform(0.0, 70.0));

  MetricAccumulator acc;
  acc.add(pred, flat_obs);  // no reference texture: sharpness undefined here
  acc.add(pred, tex_obs);
  MetricReport rep = acc.report();

  REQUIRE(rep.sharpness_overall.has_value());
  Tensor p2({16, 16}), o2({16, 16});
  std::copy(pred.v.begin(), pred.v.begin() + 256, p2.v.begin());
  std::copy(tex_obs.v.begin(), tex_obs.v.begin() + 256, o2.v.begin());
  CHECK(*rep.sharpness_overall ==
        doctest::Approx(*spectral_sharpness(p2, o2)).epsilon(1e-12));
  // ssim averaged over both adds regardless
  REQUIRE(static_cast<int>(rep.ssim_per_lead.size()) == 1);
  CHECK(rep.ssim_per_lead[0].has_value());
}

TEST_CASE("lead-time count may not change mid-pool") {
  MetricAccumulator acc;
  Tensor a({2, 16, 16}), b({3, 16, 16});
  acc.add(a, a);
  CHECK(kind_of([&] { acc.add(b, b); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("the metric report prints the pinned tsv layout") {
  MetricReport rep;
  ContingencyTable t;
  t.tp = 1;
  t.fp = 1;
  t.fn = 0;
  t.tn = 2;
  rep.tables.fill(t);
  rep.ssim_overall = 0.5;
  // sharpness left undefined

  auto path = std::filesystem::temp_directory_path() / "vmudiff_metric_format.tsv";
  write_metric_tsv(path, rep);
  std::ifstream in(path, std::ios::binary);
  std::stringstream got;
  got << in.rdbuf();

  std::string row = "\t0.500000\t0.500000\t0.500000\n";
  std::string want = "25" + row + "35" + row + "40" + row + "45" + row + "50" + row +
                     "ssim\t0.500000\nsharpness\tNA\n";
  CHECK(got.str() == want);
  std::filesystem::remove(path);
}

TEST_CASE("an all-quiet run reports NA scores everywhere") {
  MetricAccumulator acc;
  Tensor quiet({1, 16, 16});  // both fields identically zero
  acc.add(quiet, quiet);
  MetricReport rep = acc.report();
  for (const auto& t : rep.tables) {
    CHECK_FALSE(csi(t).has_value());
    CHECK_FALSE(far(t).has_value());
    CHECK_FALSE(hss(t).has_value());
  }
  CHECK_FALSE(rep.sharpness_overall.has_value());
  CHECK(rep.ssim_overall.has_value());  // ssim of matching flat frames is defined

  auto path = std::filesystem::temp_directory_path() / "vmudiff_metric_na.tsv";
  write_metric_tsv(path, rep);
  std::ifstream in(path, std::ios::binary);
  std::stringstream got;
  got << in.rdbuf();
  std::string row = "\tNA\tNA\tNA\n";
  std::string want = "25" + row + "35" + row + "40" + row + "45" + row + "50" + row +
                     "ssim\t1.000000\nsharpness\tNA\n";
  CHECK(got.str() == want);
  std::filesystem::remove(path);
}

TEST_CASE("evaluate_run is a one-shot accumulator") {
  Tensor pred({2, 16, 16}), obs({2, 16, 16});
  Rng rng(51);
  for (auto& v : pred.v) v = static_cast<float>(rng.uniform(0.0, 70.0));
  for (auto& v : obs.v) v = static_cast<float>(rng.uniform(0.0, 70.0));
  MetricReport one = evaluate_run(pred, obs);
  MetricAccumulator acc;
  acc.add(pred, obs);
  MetricReport two = acc.report();
  CHECK(one.tables[0].tp == two.tables[0].tp);
  CHECK(*one.ssim_overall == *two.ssim_overall);
  CHECK(*one.sharpness_overall == *two.sharpness_overall);
}

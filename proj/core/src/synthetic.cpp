#include "vmudiff/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vmudiff/sequence_io.hpp"

namespace vmudiff {

namespace {

void check_range(const Range& r, double lo, double hi, const char* name) {
  require(r.lo <= r.hi, ErrorKind::Usage, std::string(name) + " range is empty");
  require(r.lo >= lo && r.hi <= hi, ErrorKind::Usage,
          std::string(name) + " range must stay within the documented bounds");
}

}  // namespace

void EpisodeParams::validate() const {
  require(n_in >= 1 && m_out >= 1, ErrorKind::Usage, "n_in and m_out must be >= 1");
  require(h >= 16 && w >= 16, ErrorKind::Usage, "grid must be at least 16x16");
  require(sat_lag >= 0, ErrorKind::Usage, "sat_lag must be >= 0");
  require(n_blobs_min >= 1 && n_blobs_max <= 4 && n_blobs_min <= n_blobs_max, ErrorKind::Usage,
          "blob count must lie in [1, 4]");
  check_range(velocity, -2.0, 2.0, "velocity");
  check_range(sigma, 2.0, 6.0, "sigma");
  check_range(intensity, 30.0, 60.0, "intensity");
  check_range(growth, 0.9, 1.1, "growth");
  require(noise_amp >= 0.0, ErrorKind::Usage, "noise amplitude must be >= 0");
  // A blob must fit: reject grids the widest allowed blob cannot sit on.
  require(std::min(h, w) >= 2 * sigma.hi, ErrorKind::Usage,
          "grid too small for the requested sigma range");
}

void render_radar_frame(const std::vector<Blob>& blobs, double t, int h, int w, float* out) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (const Blob& b : blobs) {
        double amp = b.peak * std::pow(b.growth, t);
        double dx = x - (b.cx + b.vx * t);
        double dy = y - (b.cy + b.vy * t);
        v += amp * std::exp(-(dx * dx / (2.0 * b.sx * b.sx) + dy * dy / (2.0 * b.sy * b.sy)));
      }
      out[y * w + x] = static_cast<float>(std::clamp(v, 0.0, 70.0));
    }
  }
}

void render_smoothed_frame(const std::vector<Blob>& blobs, double t, double smooth_sigma,
                           int h, int w, float* out) {
  // Gaussian-blurring a Gaussian widens it: sigma' = sqrt(sigma^2 + s^2),
  // and mass conservation scales the peak by (sx*sy)/(sx'*sy').
  double s2 = smooth_sigma * smooth_sigma;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (const Blob& b : blobs) {
        double sx2 = b.sx * b.sx + s2;
        double sy2 = b.sy * b.sy + s2;
        double amp = b.peak * std::pow(b.growth, t) * (b.sx * b.sy) / std::sqrt(sx2 * sy2);
        double dx = x - (b.cx + b.vx * t);
        double dy = y - (b.cy + b.vy * t);
        v += amp * std::exp(-(dx * dx / (2.0 * sx2) + dy * dy / (2.0 * sy2)));
      }
      out[y * w + x] = static_cast<float>(v);
    }
  }
}

std::vector<Blob> sample_blobs(const EpisodeParams& p, Rng& rng) {
  int count = static_cast<int>(rng.uniform_int(p.n_blobs_min, p.n_blobs_max));
  std::vector<Blob> blobs(count);
  for (Blob& b : blobs) {
    b.cx = rng.uniform(0.2 * p.w, 0.8 * p.w);
    b.cy = rng.uniform(0.2 * p.h, 0.8 * p.h);
    b.vx = rng.uniform(p.velocity.lo, p.velocity.hi);
    b.vy = rng.uniform(p.velocity.lo, p.velocity.hi);
    b.sx = rng.uniform(p.sigma.lo, p.sigma.hi);
    b.sy = rng.uniform(p.sigma.lo, p.sigma.hi);
    b.peak = rng.uniform(p.intensity.lo, p.intensity.hi);
    b.growth = rng.uniform(p.growth.lo, p.growth.hi);
  }
  return blobs;
}

Episode generate_episode(const EpisodeParams& p) {
  p.validate();
  Rng rng(p.seed);
  std::vector<Blob> blobs = sample_blobs(p, rng);

  Episode ep;
  ep.radar.seq = FrameSequence(p.n_in + p.m_out, 1, p.h, p.w, Form::Raw);
  for (int t = 0; t < p.n_in + p.m_out; ++t) {
    render_radar_frame(blobs, static_cast<double>(t), p.h, p.w, ep.radar.seq.frame(t, 0));
  }

  // Channel k carries the radar scene sat_lag frames ahead, smoothed with
  // sigma = 1 + k, mapped to brightness temperature with cold-is-convective
  // polarity, then jittered and clamped to the physical span.
  ep.sat.seq = FrameSequence(p.n_in, 4, p.h, p.w, Form::Raw);
  const double span = kSatHiK - kSatLoK;
  std::vector<float> dbz(static_cast<std::size_t>(p.h) * p.w);
  for (int t = 0; t < p.n_in; ++t) {
    for (int k = 0; k < 4; ++k) {
      render_smoothed_frame(blobs, static_cast<double>(t + p.sat_lag), 1.0 + k, p.h, p.w,
                            dbz.data());
      float* out = ep.sat.seq.frame(t, k);
      for (int i = 0; i < p.h * p.w; ++i) {
        double kelvin = kSatHiK - (static_cast<double>(dbz[i]) / kRadarHiDbz) * span;
        kelvin += rng.uniform(-1.0, 1.0) * p.noise_amp * span;
        out[i] = static_cast<float>(std::clamp(kelvin, static_cast<double>(kSatLoK),
                                               static_cast<double>(kSatHiK)));
      }
    }
  }
  return ep;
}

Manifest make_dataset(long count, const EpisodeParams& params, const std::string& out_dir,
                      const std::array<double, 3>& split) {
  require(count >= 1, ErrorKind::Usage, "episode count must be >= 1");
  params.validate();
  double total = split[0] + split[1] + split[2];
  require(std::abs(total - 1.0) <= 1e-9, ErrorKind::Usage, "split fractions must sum to 1");
  for (double f : split) require(f >= 0.0, ErrorKind::Usage, "split fractions must be >= 0");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorKind::Io, "cannot create dataset directory " + out_dir);

  // Exact split sizes from cumulative fractions; membership comes from a
  // seeded shuffle keyed per index, so it is stable under regeneration.
  long n_train = std::lround(split[0] * static_cast<double>(count));
  long n_trval = std::lround((split[0] + split[1]) * static_cast<double>(count));
  std::vector<long> order(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](long a, long b) {
    std::uint64_t ka = derive_seed(params.seed, static_cast<std::uint64_t>(a));
    std::uint64_t kb = derive_seed(params.seed, static_cast<std::uint64_t>(b));
    return ka != kb ? ka < kb : a < b;
  });
  std::vector<std::string> split_of(static_cast<std::size_t>(count));
  for (long r = 0; r < count; ++r) {
    const char* s = r < n_train ? "train" : (r < n_trval ? "val" : "test");
    split_of[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = s;
  }

  Manifest m;
  m.rows.reserve(static_cast<std::size_t>(count));
  for (long idx = 0; idx < count; ++idx) {
    EpisodeParams ep_params = params;
    ep_params.seed = derive_seed(params.seed, static_cast<std::uint64_t>(idx) ^ 0xe19a5053u);
    Episode ep = generate_episode(ep_params);

    ManifestRow row;
    row.idx = idx;
    row.split = split_of[static_cast<std::size_t>(idx)];
    row.radar_path = "ep" + std::to_string(idx) + "_radar.vmud";
    row.sat_path = "ep" + std::to_string(idx) + "_sat.vmud";
    row.seed = ep_params.seed;
    write_sequence(ep.radar.seq, (std::filesystem::path(out_dir) / row.radar_path).string());
    write_sequence(ep.sat.seq, (std::filesystem::path(out_dir) / row.sat_path).string());
    m.rows.push_back(std::move(row));
  }
  write_manifest(m, (std::filesystem::path(out_dir) / "manifest.tsv").string());
  return m;
}

void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::Io, "cannot open manifest for writing: " + path);
  for (const ManifestRow& r : m.rows) {
    f << r.idx << '\t' << r.split << '\t' << r.radar_path << '\t' << r.sat_path << '\t' << r.seed
      << '\n';
  }
  f.flush();
  require(f.good(), ErrorKind::Io, "short write to manifest: " + path);
}

Manifest read_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Io, "cannot open manifest: " + path);
  Manifest m;
  std::string line;
  long line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestRow r;
    std::string idx_s, seed_s;
    if (!std::getline(ss, idx_s, '\t') || !std::getline(ss, r.split, '\t') ||
        !std::getline(ss, r.radar_path, '\t') || !std::getline(ss, r.sat_path, '\t') ||
        !std::getline(ss, seed_s)) {
      raise(ErrorKind::Truncated, path + ": malformed manifest line " + std::to_string(line_no));
    }
    try {
      r.idx = std::stol(idx_s);
      r.seed = std::stoull(seed_s);
    } catch (const std::exception&) {
      raise(ErrorKind::Truncated, path + ": bad number on manifest line " + std::to_string(line_no));
    }
    require(r.split == "train" || r.split == "val" || r.split == "test", ErrorKind::Truncated,
            path + ": unknown split on line " + std::to_string(line_no));
    m.rows.push_back(std::move(r));
  }
  require(!m.rows.empty(), ErrorKind::Truncated, path + ": empty manifest");
  return m;
}

}  // namespace vmudiff

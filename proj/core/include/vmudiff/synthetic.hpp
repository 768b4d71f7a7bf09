#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vmudiff/rng.hpp"
#include "vmudiff/sequence.hpp"

namespace vmudiff {

/** Closed interval [lo, hi] a per-blob quantity is drawn from. */
struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/**
 * Knobs for one synthetic episode: advected anisotropic Gaussian blobs
 * rendered to radar dBZ, with satellite channels derived analytically from
 * the same blobs at a later frame (the satellite "sees the future").
 */
struct EpisodeParams {
  std::uint64_t seed = 0;
  int n_in = 5;    // observed frames
  int m_out = 5;   // forecast frames
  int h = 32;
  int w = 32;
  int n_blobs_min = 1;
  int n_blobs_max = 4;          // within [1, 4]
  Range velocity{-2.0, 2.0};    // cells/frame, each axis; within [-2, 2]
  Range sigma{2.0, 6.0};        // blob std-dev in cells; within [2, 6]
  Range intensity{30.0, 60.0};  // peak dBZ; within [30, 60]
  Range growth{0.9, 1.1};       // per-frame multiplicative; within [0.9, 1.1]
  int sat_lag = 2;              // frames the satellite leads radar
  double noise_amp = 0.02;      // satellite noise amplitude, normalized units

  void validate() const;
};

/** One Gaussian blob; x runs along columns, y along rows. */
struct Blob {
  double cx = 0.0, cy = 0.0;  // center at frame 0, in cells
  double vx = 0.0, vy = 0.0;  // cells per frame
  double sx = 1.0, sy = 1.0;  // std-dev per axis
  double peak = 0.0;          // peak dBZ at frame 0
  double growth = 1.0;        // per-frame amplitude factor
};

struct Episode {
  RadarSequence radar;   // n_in + m_out frames, raw dBZ
  SatelliteSequence sat;  // n_in frames, raw kelvin
};

/** Sum of blobs at frame time t, clamped to [0, 70] dBZ. */
void render_radar_frame(const std::vector<Blob>& blobs, double t, int h, int w, float* out);

/**
 * Radar field at frame t smoothed with an isotropic Gaussian of std-dev
 * smooth_sigma, evaluated in closed form from the blob parameters (no
 * clamping before smoothing), still in dBZ-equivalent units.
 */
void render_smoothed_frame(const std::vector<Blob>& blobs, double t, double smooth_sigma,
                           int h, int w, float* out);

std::vector<Blob> sample_blobs(const EpisodeParams& p, Rng& rng);

Episode generate_episode(const EpisodeParams& p);

struct ManifestRow {
  long idx = 0;
  std::string split;  // "train" | "val" | "test"
  std::string radar_path;
  std::string sat_path;
  std::uint64_t seed = 0;
};

struct Manifest {
  std::vector<ManifestRow> rows;  // sorted by idx
};

/**
 * Generates `count` episodes under out_dir as ep{idx}_radar.vmud /
 * ep{idx}_sat.vmud plus a manifest file. Episode idx draws its RNG stream
 * from (params.seed, idx), so any generation order produces identical files.
 * split = train/val/test fractions, must sum to 1.
 */
Manifest make_dataset(long count, const EpisodeParams& params, const std::string& out_dir,
                      const std::array<double, 3>& split);

void write_manifest(const Manifest& m, const std::string& path);
Manifest read_manifest(const std::string& path);

}  // namespace vmudiff

#pragma once

#include <cstdint>
#include <string>

#include "vmudiff/stdiff.hpp"
#include "vmudiff/vmu.hpp"

namespace vmudiff {

/**
 * Everything a run needs, file-loadable as UTF-8 `key = value` lines
 * (# comments and blank lines allowed, keys named like the fields).
 * Command-line flags override file values.
 */
struct RunConfig {
  std::uint64_t seed = 1;
  std::string data_dir = "data";
  std::string out_dir = "out";
  std::string checkpoint;  // empty = <out_dir>/model.vmck

  // dataset generation
  long count = 500;
  double train_frac = 0.7;
  double val_frac = 0.15;  // test = remainder

  // geometry (desk scale)
  int n_in = 5;
  int m_out = 5;
  int h = 32;
  int w = 32;

  // coarse net widths
  int c_radar = 4;
  int c_sat = 4;
  int c0 = 16;
  int levels = 3;
  int blocks_per_level = 2;

  // scan kernel
  int n_state = 8;
  bool exact_zoh = false;

  // denoiser
  int stdiff_width = 16;
  int stdiff_blocks = 4;
  std::string beta1_init = "zero";  // zero | uniform

  // diffusion and training
  int t_diff = 1000;
  int ddim_steps = 50;  // desk default; 250 matches the full-scale protocol
  double alpha = 0.7;
  double lr = 1e-4;
  long iters = 2000;
  int batch = 1;
  double warmup_frac = 0.0;  // leading fraction of iters trained coarse-only
  long ckpt_every = 0;       // 0 = final checkpoint only

  // prediction / evaluation
  long episode = -1;  // manifest idx; -1 = first episode of the test split
  bool pgm = false;
  std::string split = "test";

  // ablations
  bool ablate_msfusion = false;
  bool ablate_stdiff = false;

  void validate() const;
  VmuConfig vmu_config() const;
  StdiffConfig stdiff_config() const;
  std::string checkpoint_path() const;
};

/** Applies one key/value pair; unknown keys or bad values raise Usage. */
void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value,
                     const std::string& where);

/** Loads `key = value` lines over the given base config. */
RunConfig parse_config_file(const std::string& path, RunConfig base = {});

}  // namespace vmudiff

#pragma once

#include <vector>

#include "vmudiff/error.hpp"

namespace vmudiff {

/**
 * Precomputed diffusion variance tables, all 64-bit. Index 0 is the
 * convention row (beta 0, alpha_bar 1); steps run 1..t_max.
 */
struct NoiseSchedule {
  int t_max = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  static NoiseSchedule linear(int t_max = 1000, double beta_lo = 1e-4, double beta_hi = 0.02);

  void check_step(int t) const {
    require(t >= 0 && t <= t_max, ErrorKind::Usage, "diffusion step out of range");
  }
  double sqrt_ab(int t) const;
  double sqrt_1mab(int t) const;
};

/**
 * Uniform ascending step subsequence for skipping samplers:
 * tau_k = round((k+1) * t_max / n_steps), k = 0..n_steps-1.
 * The last entry is always t_max.
 */
std::vector<int> ddim_times(int n_steps, int t_max);

}  // namespace vmudiff

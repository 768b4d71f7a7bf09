#include "vmudiff/schedule.hpp"

#include <cmath>

namespace vmudiff {

NoiseSchedule NoiseSchedule::linear(int t_max, double beta_lo, double beta_hi) {
  require(t_max >= 2, ErrorKind::Usage, "schedule needs at least 2 steps");
  require(beta_lo > 0.0 && beta_lo < beta_hi && beta_hi < 1.0, ErrorKind::Usage,
          "schedule needs 0 < beta_lo < beta_hi < 1");
  NoiseSchedule s;
  s.t_max = t_max;
  s.beta.assign(t_max + 1, 0.0);
  s.alpha.assign(t_max + 1, 1.0);
  s.alpha_bar.assign(t_max + 1, 1.0);
  for (int t = 1; t <= t_max; ++t) {
    s.beta[t] = beta_lo + (beta_hi - beta_lo) * static_cast<double>(t - 1) / (t_max - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

double NoiseSchedule::sqrt_ab(int t) const {
  check_step(t);
  return std::sqrt(alpha_bar[t]);
}

double NoiseSchedule::sqrt_1mab(int t) const {
  check_step(t);
  return std::sqrt(1.0 - alpha_bar[t]);
}

std::vector<int> ddim_times(int n_steps, int t_max) {
  require(n_steps >= 1 && n_steps <= t_max, ErrorKind::Usage,
          "sample steps must be in [1, t_max]");
  std::vector<int> times(n_steps);
  for (int k = 0; k < n_steps; ++k) {
    times[k] = static_cast<int>(std::lround(static_cast<double>(k + 1) * t_max / n_steps));
  }
  // spacing > 1 guarantees strict monotonicity; keep the guard anyway
  for (int k = 1; k < n_steps; ++k) {
    require(times[k] > times[k - 1], ErrorKind::Numeric, "degenerate sampler timetable");
  }
  require(times.back() == t_max, ErrorKind::Numeric, "sampler timetable must end at t_max");
  return times;
}

}  // namespace vmudiff

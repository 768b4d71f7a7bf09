#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vmudiff/nn.hpp"

namespace vmudiff {

struct GradCheckCase {
  std::string name;
  double tol;
  std::function<double()> run;  // builds the graph and returns the relative error
};

struct GradCheckResult {
  std::string name;
  double tol = 0.0;
  double rel_err = 0.0;
  bool pass = false;
};

/** ||a - b||_2 / max(||a||_2, ||b||_2, 1e-12). */
double l2_relative_error(const std::vector<double>& a, const std::vector<double>& b);

/**
 * Central finite differences over every parameter scalar in the store.
 * eval(true) must zero nothing itself: the checker zeroes grads, calls
 * eval(true) once to populate analytic grads, then sweeps eval(false)
 * at perturbed parameter values. Returns the combined relative error.
 */
double fd_check(ParamStoreT<double>& ps, const std::function<double(bool)>& eval,
                double h = 1e-3);

/** The op checks behind the gradcheck command and the release gate. */
std::vector<GradCheckCase> standard_gradcheck_cases();

/** Deliberately wrong backward; must FAIL its tolerance. */
GradCheckCase corrupted_backward_control();

std::vector<GradCheckResult> run_gradcheck(const std::vector<GradCheckCase>& cases);

}  // namespace vmudiff

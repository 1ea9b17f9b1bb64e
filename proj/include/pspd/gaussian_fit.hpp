#pragma once

#include <string>
#include <vector>

#include "pspd/histogram.hpp"

namespace pspd {

// Result of a binned Gaussian-plus-baseline fit. The model integrates the
// Gaussian across each bin,
//   m_i = baseline + amplitude * [Phi((e_{i+1}-mean)/sigma) - Phi((e_i-mean)/sigma)],
// so amplitude is the total area in counts and sigma stays estimable well
// below one bin width.
struct GaussianFit {
  double amplitude = 0.0;
  double mean = 0.0;
  double sigma = 0.0;
  double baseline = 0.0;

  double amplitude_err = 0.0;
  double mean_err = 0.0;
  double sigma_err = 0.0;
  double baseline_err = 0.0;

  double chi2 = 0.0;
  int dof = 0;
  int n_iter = 0;
  bool converged = false;
  // Sigma ended on its lower bound: the peak is narrower than the data can
  // resolve ("unresolved").
  bool sigma_at_bound = false;
};

struct GaussianFitOptions {
  int min_bins = 5;
  double min_counts = 100.0;
  int max_iterations = 200;
  // Lower bound on sigma, as a fraction of the mean bin width.
  double sigma_floor_bins = 0.02;
  double cost_rel_tol = 1e-14;
};

// Weighted nonlinear least squares (Levenberg-Marquardt) with Poisson weights
// w_i = 1/max(counts_i, 1). Initialization from moments.
//
// edges has counts.size()+1 entries. Throws FitError when the region is too
// small (fewer than min_bins bins or min_counts counts) or the fit does not
// converge.
GaussianFit fit_binned_gaussian(const std::vector<double>& edges,
                                const std::vector<double>& counts,
                                const GaussianFitOptions& opts = {});

// Fit over a bin range [first_bin, last_bin] of a histogram.
GaussianFit fit_binned_gaussian(const Histogram1D& hist, int first_bin, int last_bin,
                                const GaussianFitOptions& opts = {});

} // namespace pspd

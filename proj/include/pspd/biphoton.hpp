#pragma once

#include <vector>

#include "pspd/errors.hpp"

namespace pspd {

// Pump and filter widths of the Gaussian biphoton model. All in rad/s.
struct BiphotonParams {
  double omega_p = 0.0;       // pump angular frequency
  double delta_omega_p = 0.0; // pump spectral width
  double delta_omega_f = 0.0; // per-arm filter width

  void validate() const {
    if (!(omega_p > 0.0)) throw DomainError("biphoton: omega_p must be positive");
    if (!(delta_omega_f > 0.0)) throw DomainError("biphoton: filter width must be positive");
    if (delta_omega_p < 0.0) throw DomainError("biphoton: pump width must be non-negative");
  }
};

// Effective widths of the two-Gaussian amplitude:
//   pe = sqrt(dp^2/2 + df^2), ce = df.
struct EffectiveWidths {
  double delta_omega_pe = 0.0;
  double delta_omega_ce = 0.0;
};

EffectiveWidths effective_widths(const BiphotonParams& p);

// Joint spectral amplitude
//   Psi = 1/sqrt(pi*pe*ce) * exp(-(wp-wi-ws)^2/(4 pe^2)) * exp(-(wi-ws)^2/(4 ce^2)),
// normalized so that the squared modulus integrates to one.
double amplitude(double omega_s, double omega_i, const BiphotonParams& p);

// sigma(E) = hbar * pe [eV].
double energy_sigma_ev(const BiphotonParams& p);

// sigma(dt) = 1 / ce [s].
double dt_sigma_s(const BiphotonParams& p);

struct GridSpec {
  int min_points = 512;       // per axis
  int max_points = 4096;
  double span_widths = 8.0;   // frequency half-span, in units of the joint width
  double rel_tol = 1e-6;      // grid-refinement stability requirement
  bool want_dt_marginal = false;
};

// Moments of the model computed numerically, independent of the closed
// forms: norm and energy variance by direct quadrature of |Psi|^2 on the
// frequency grid, dt variance from |FFT(Psi)|^2 (the time-domain pair
// correlation). Refines the grid until stable to rel_tol; throws
// ConvergenceError if max_points is reached first.
struct NumericMoments {
  double norm = 0.0;           // integral of |Psi|^2
  double energy_sigma_ev = 0.0;
  double dt_sigma_s = 0.0;
  int grid_points = 0;         // per axis, at convergence
  // Time-difference marginal of |FFT(Psi)|^2, filled when requested.
  std::vector<double> dt_axis_s;
  std::vector<double> dt_weight;
};

NumericMoments numeric_moments(const BiphotonParams& p, const GridSpec& grid = {});

// Brute-force oracle for dt_sigma_s.
double numeric_dt_sigma_s(const BiphotonParams& p, const GridSpec& grid = {});

// sigma(E) * sigma(dt) and the closed form hbar * sqrt(1 + dp^2/(2 df^2)).
// The two routes must agree to 1e-12 relative.
struct UncertaintyProduct {
  double product_ev_s = 0.0;
  double ratio_to_hbar = 0.0;
  double closed_form_ratio = 0.0;
};

UncertaintyProduct uncertainty_product(const BiphotonParams& p);

} // namespace pspd

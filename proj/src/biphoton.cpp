#include "pspd/biphoton.hpp"

#include <fftw3.h>

#include <cmath>
#include <vector>

#include "pspd/constants.hpp"

namespace pspd {

EffectiveWidths effective_widths(const BiphotonParams& p) {
  p.validate();
  EffectiveWidths w;
  // Branch keeps pe bit-identical to the filter width at zero pump width.
  w.delta_omega_pe = p.delta_omega_p == 0.0
                         ? p.delta_omega_f
                         : std::sqrt(0.5 * p.delta_omega_p * p.delta_omega_p +
                                     p.delta_omega_f * p.delta_omega_f);
  w.delta_omega_ce = p.delta_omega_f;
  return w;
}

double amplitude(double omega_s, double omega_i, const BiphotonParams& p) {
  const auto w = effective_widths(p);
  double sum_det = p.omega_p - omega_i - omega_s;
  double diff = omega_i - omega_s;
  double pe2 = w.delta_omega_pe * w.delta_omega_pe;
  double ce2 = w.delta_omega_ce * w.delta_omega_ce;
  return 1.0 / std::sqrt(constants::pi * w.delta_omega_pe * w.delta_omega_ce) *
         std::exp(-sum_det * sum_det / (4.0 * pe2)) * std::exp(-diff * diff / (4.0 * ce2));
}

double energy_sigma_ev(const BiphotonParams& p) {
  return constants::hbar_ev_s * effective_widths(p).delta_omega_pe;
}

double dt_sigma_s(const BiphotonParams& p) {
  return 1.0 / effective_widths(p).delta_omega_ce;
}

namespace {

struct GridResult {
  double norm;
  double sum_sigma; // of (omega_s + omega_i), scaled units
  double dt_sigma;  // scaled time units
  std::vector<double> dt_axis;   // scaled (ps); filled when requested
  std::vector<double> dt_weight;
};

// One evaluation at n points per axis. The amplitude is sampled on the sum /
// difference axes S = omega_s + omega_i and D = omega_i - omega_s (a linear
// substitution in the Fourier integral), so both spectral scales stay
// resolved for any pump/filter width ratio. Eq.-of-motion phases:
//   omega_i t + omega_s (t + dt) = S (t + dt/2) - D dt/2,
// so the DFT conjugate of S is tau1 = t + dt/2 and of D is tau2 = -dt/2;
// marginalizing over t means summing |F|^2 over tau1, and dt = -2 tau2.
// Everything runs in scaled units (rad/ps, ps).
GridResult evaluate_grid(const BiphotonParams& scaled, int n, double span_sigmas,
                         bool want_marginal = false) {
  const auto w = effective_widths(scaled);
  const double half_s = span_sigmas * w.delta_omega_pe;
  const double half_d = span_sigmas * w.delta_omega_ce;
  const double delta_s = 2.0 * half_s / n;
  const double delta_d = 2.0 * half_d / n;

  const double inv4pe2 = 1.0 / (4.0 * w.delta_omega_pe * w.delta_omega_pe);
  const double inv4ce2 = 1.0 / (4.0 * w.delta_omega_ce * w.delta_omega_ce);
  const double prefactor =
      1.0 / std::sqrt(constants::pi * w.delta_omega_pe * w.delta_omega_ce);

  std::vector<double> psi(static_cast<std::size_t>(n) * n);
  double norm = 0.0, m1 = 0.0, m2 = 0.0;
  for (int ms = 0; ms < n; ++ms) {
    double sum = scaled.omega_p - half_s + ms * delta_s; // S
    double sum_det = scaled.omega_p - sum;
    double gs = prefactor * std::exp(-sum_det * sum_det * inv4pe2);
    double* row = &psi[static_cast<std::size_t>(ms) * n];
    double row_norm = 0.0;
    for (int md = 0; md < n; ++md) {
      double diff = -half_d + md * delta_d; // D
      double v = gs * std::exp(-diff * diff * inv4ce2);
      row[md] = v;
      row_norm += v * v;
    }
    norm += row_norm;
    m1 += row_norm * sum;
    m2 += row_norm * sum * sum;
  }
  GridResult out;
  // Jacobian of (omega_s, omega_i) -> (S, D) is 1/2.
  out.norm = norm * delta_s * delta_d * 0.5;
  double mean = m1 / norm;
  out.sum_sigma = std::sqrt(std::max(m2 / norm - mean * mean, 0.0));

  int nc = n / 2 + 1;
  fftw_complex* out_c =
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) *
                                             static_cast<std::size_t>(n) * nc));
  fftw_plan plan = fftw_plan_dft_r2c_2d(n, n, psi.data(), out_c, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  // Real input: |F(-k1, -k2)| = |F(k1, k2)|, so E[dt] = 0 and columns
  // 0 < k2 < n/2 stand for both half-planes. dt = -2 tau2.
  const double dtau2 = constants::two_pi / (n * delta_d);
  double wsum = 0.0, wdt2 = 0.0;
  std::vector<double> col_weight(static_cast<std::size_t>(nc), 0.0);
  for (int k1 = 0; k1 < n; ++k1) {
    const fftw_complex* row = &out_c[static_cast<std::size_t>(k1) * nc];
    for (int k2 = 0; k2 < nc; ++k2) {
      double re = row[k2][0], im = row[k2][1];
      col_weight[k2] += re * re + im * im;
    }
  }
  fftw_free(out_c);
  for (int k2 = 0; k2 < nc; ++k2) {
    double tau2 = (k2 <= n / 2 ? k2 : k2 - n) * dtau2;
    double dt = -2.0 * tau2;
    double mult = (k2 != 0 && k2 != n / 2) ? 2.0 : 1.0;
    wsum += mult * col_weight[k2];
    wdt2 += mult * col_weight[k2] * dt * dt;
  }
  out.dt_sigma = std::sqrt(wdt2 / wsum);

  if (want_marginal) {
    // Symmetric in dt; emit both signs explicitly.
    out.dt_axis.resize(2 * (nc - 1) + 1);
    out.dt_weight.resize(out.dt_axis.size());
    for (int k2 = -(nc - 1); k2 <= nc - 1; ++k2) {
      std::size_t idx = static_cast<std::size_t>(k2 + nc - 1);
      out.dt_axis[idx] = -2.0 * k2 * dtau2;
      out.dt_weight[idx] = col_weight[std::abs(k2)];
    }
  }
  return out;
}

} // namespace

NumericMoments numeric_moments(const BiphotonParams& p, const GridSpec& grid) {
  p.validate();
  if (grid.min_points < 16 || grid.span_widths < 4.0)
    throw DomainError("numeric_moments: grid too small to be meaningful");

  // Scale to rad/ps; conjugate times come out in ps.
  constexpr double scale = 1e-12;
  BiphotonParams sp{p.omega_p * scale, p.delta_omega_p * scale, p.delta_omega_f * scale};

  int n = grid.min_points;
  double span = grid.span_widths; // half-span per axis, in units of that axis' width
  GridResult coarse = evaluate_grid(sp, n, span);
  while (true) {
    if (2 * n > grid.max_points)
      throw ConvergenceError("numeric_moments: not stable within max grid of " +
                             std::to_string(grid.max_points) + " points per axis");
    GridResult fine = evaluate_grid(sp, 2 * n, l * std::sqrt(2.0), grid.want_dt_marginal);
    double change = std::abs(fine.dt_sigma - coarse.dt_sigma) / fine.dt_sigma;
    double change_e = std::abs(fine.sum_sigma - coarse.sum_sigma) / fine.sum_sigma;
    if (change <= grid.rel_tol && change_e <= grid.rel_tol) {
      NumericMoments out;
      out.norm = fine.norm;
      out.energy_sigma_ev = constants::hbar_ev_s * fine.sum_sigma / scale;
      out.dt_sigma_s = fine.dt_sigma * 1e-12; // ps -> s
      out.grid_points = 2 * n;
      if (grid.want_dt_marginal) {
        out.dt_weight = std::move(fine.dt_weight);
        out.dt_axis_s.resize(fine.dt_axis.size());
        for (std::size_t d = 0; d < fine.dt_axis.size(); ++d)
          out.dt_axis_s[d] = fine.dt_axis[d] * 1e-12;
      }
      return out;
    }
    coarse = fine;
    n *= 2;
    l *= std::sqrt(2.0);
  }
}

double numeric_dt_sigma_s(const BiphotonParams& p, const GridSpec& grid) {
  return numeric_moments(p, grid).dt_sigma_s;
}

UncertaintyProduct uncertainty_product(const BiphotonParams& p) {
  const auto w = effective_widths(p);
  UncertaintyProduct out;
  out.ratio_to_hbar = w.delta_omega_pe / w.delta_omega_ce;
  out.product_ev_s = constants::hbar_ev_s * out.ratio_to_hbar;
  out.closed_form_ratio =
      std::sqrt(1.0 + 0.5 * (p.delta_omega_p * p.delta_omega_p) /
                          (p.delta_omega_f * p.delta_omega_f));
  if (std::abs(out.ratio_to_hbar - out.closed_form_ratio) >
      1e-12 * out.closed_form_ratio)
    throw Error("uncertainty_product: direct and closed-form ratios disagree");
  return out;
}

} // namespace pspd

#pragma once

namespace pspd::constants {

// Reduced Planck constant [eV s].
inline constexpr double hbar_ev_s = 6.582119569e-16;

// h*c [eV nm], for E = hc / lambda.
inline constexpr double hc_ev_nm = 1239.841984;

// Speed of light [nm / s].
inline constexpr double c_nm_per_s = 2.99792458e17;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// Angular frequency [rad/s] of light with the given vacuum wavelength [nm].
inline constexpr double omega_of_lambda_nm(double lambda_nm) {
  return two_pi * c_nm_per_s / lambda_nm;
}

// Inverse of omega_of_lambda_nm.
inline constexpr double lambda_nm_of_omega(double omega_rad_s) {
  return two_pi * c_nm_per_s / omega_rad_s;
}

} // namespace pspd::constants

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pspd/biphoton.hpp"
#include "pspd/constants.hpp"

using namespace pspd;
using pspd::constants::hbar_ev_s;

namespace {

const double kOmegaP = constants::omega_of_lambda_nm(405.0);

BiphotonParams params(double dp, double df) { return BiphotonParams{kOmegaP, dp, df}; }

} // namespace

TEST_SUITE("effective_widths") {
  TEST_CASE("zero pump width collapses to the filter width, bit-exact") {
    auto w = effective_widths(params(0.0, 1e12));
    CHECK(w.delta_omega_pe == 1e12);
    CHECK(w.delta_omega_ce == 1e12);
  }

  TEST_CASE("equal widths give sqrt(1.5)") {
    auto w = effective_widths(params(2e12, 2e12));
    CHECK(w.delta_omega_pe == doctest::Approx(2e12 * std::sqrt(1.5)).epsilon(1e-14));
    CHECK(w.delta_omega_ce == 2e12);
  }

  TEST_CASE("2e12 pump with 1e12 filter gives sqrt(3)e12") {
    auto w = effective_widths(params(2e12, 1e12));
    CHECK(w.delta_omega_pe == doctest::Approx(std::sqrt(3.0) * 1e12).epsilon(1e-14));
  }

  TEST_CASE("pe is always at least the filter width") {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int k = 0; k < 100; ++k) {
      auto w = effective_widths(params(u(gen) * 1e12, (0.1 + u(gen)) * 1e12));
      CHECK(w.delta_omega_pe >= w.delta_omega_ce);
    }
  }

  TEST_CASE("invalid parameters") {
    CHECK_THROWS_AS(effective_widths(params(1e12, 0.0)), DomainError);
    CHECK_THROWS_AS(effective_widths(params(-1e12, 1e12)), DomainError);
    CHECK_THROWS_AS(effective_widths(BiphotonParams{0.0, 0.0, 1e12}), DomainError);
  }
}

TEST_SUITE("amplitude") {
  TEST_CASE("maximum at the degenerate point equals the closed-form prefactor") {
    auto p = params(2e12, 1e13);
    auto w = effective_widths(p);
    double peak = amplitude(0.5 * p.omega_p, 0.5 * p.omega_p, p);
    CHECK(peak ==
          doctest::Approx(1.0 / std::sqrt(constants::pi * w.delta_omega_pe * w.delta_omega_ce))
              .epsilon(1e-12));
    // Any displacement lowers the amplitude.
    CHECK(amplitude(0.5 * p.omega_p + 3e12, 0.5 * p.omega_p, p) < peak);
  }

  TEST_CASE("symmetric under signal-idler exchange") {
    auto p = params(1.7e12, 8e12);
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(-3e13, 3e13);
    for (int k = 0; k < 200; ++k) {
      double a = 0.5 * p.omega_p + u(gen);
      double b = 0.5 * p.omega_p + u(gen);
      CHECK(amplitude(a, b, p) == amplitude(b, a, p));
    }
  }

  TEST_CASE("squared modulus integrates to one") {
    for (auto [dp, df] : {std::pair{0.0, 1e12}, {1e12, 1e12}, {5e12, 5e11}}) {
      auto m = numeric_moments(params(dp, df));
      CHECK(m.norm == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_SUITE("energy_sigma") {
  TEST_CASE("zero pump width: hbar times the filter width") {
    CHECK(energy_sigma_ev(params(0.0, 1e12)) ==
          doctest::Approx(hbar_ev_s * 1e12).epsilon(1e-14));
    CHECK(energy_sigma_ev(params(0.0, 1e12)) == doctest::Approx(6.582e-4).epsilon(1e-4));
  }

  TEST_CASE("homogeneous of degree one in the widths") {
    double base = energy_sigma_ev(params(1.3e12, 2.1e12));
    double doubled = energy_sigma_ev(params(2.6e12, 4.2e12));
    CHECK(doubled == doctest::Approx(2.0 * base).epsilon(1e-12));
  }

  TEST_CASE("numeric energy variance matches the closed form") {
    for (auto [dp, df] : {std::pair{0.0, 1e12}, {2e12, 1e12}, {1e12, 1e13}}) {
      auto p = params(dp, df);
      auto m = numeric_moments(p);
      CHECK(m.energy_sigma_ev == doctest::Approx(energy_sigma_ev(p)).epsilon(1e-6));
    }
  }
}

TEST_SUITE("dt_sigma") {
  TEST_CASE("reciprocal of the filter width") {
    CHECK(dt_sigma_s(params(0.0, 1e12)) == doctest::Approx(1e-12).epsilon(1e-14));
  }

  TEST_CASE("independent of the pump width") {
    CHECK(dt_sigma_s(params(0.0, 2e12)) == dt_sigma_s(params(7e12, 2e12)));
  }

  TEST_CASE("numeric Fourier oracle agrees to 1e-6 for width ratios 0, 1, 10") {
    for (double ratio : {0.0, 1.0, 10.0}) {
      double df = 2e12;
      auto p = params(ratio * df, df);
      double numeric = numeric_dt_sigma_s(p);
      CHECK(numeric == doctest::Approx(dt_sigma_s(p)).epsilon(1e-6));
    }
  }

  TEST_CASE("oracle equivalence across a 3x3 grid of width decades") {
    for (double dp : {1e11, 1e12, 1e13})
      for (double df : {1e11, 1e12, 1e13}) {
        auto p = params(dp, df);
        auto m = numeric_moments(p);
        CHECK(m.dt_sigma_s == doctest::Approx(dt_sigma_s(p)).epsilon(1e-6));
        CHECK(m.energy_sigma_ev == doctest::Approx(energy_sigma_ev(p)).epsilon(1e-6));
        CHECK(m.norm == doctest::Approx(1.0).epsilon(1e-6));
      }
  }

  TEST_CASE("dt marginal is Gaussian to 1e-8 of its peak") {
    GridSpec grid;
    grid.want_dt_marginal = true;
    auto m = numeric_moments(params(2e12, 2e12), grid);
    REQUIRE(!m.dt_weight.empty());
    double peak = 0.0, wsum = 0.0, m2 = 0.0;
    for (std::size_t d = 0; d < m.dt_weight.size(); ++d) {
      peak = std::max(peak, m.dt_weight[d]);
      wsum += m.dt_weight[d];
      m2 += m.dt_weight[d] * m.dt_axis_s[d] * m.dt_axis_s[d];
    }
    double sigma = std::sqrt(m2 / wsum);
    // The moments determine the Gaussian; compare shape pointwise.
    for (std::size_t d = 0; d < m.dt_weight.size(); ++d) {
      double x = m.dt_axis_s[d] / sigma;
      double model = peak * std::exp(-0.5 * x * x);
      CHECK(std::abs(m.dt_weight[d] - model) <= 1e-8 * peak);
    }
  }

  TEST_CASE("grid refinement control reports non-convergence") {
    GridSpec grid;
    grid.min_points = 512;
    grid.max_points = 512; // cannot refine even once
    CHECK_THROWS_AS(numeric_moments(params(1e12, 1e12), grid), ConvergenceError);
  }
}

TEST_SUITE("uncertainty_product") {
  TEST_CASE("zero pump width gives exactly hbar") {
    auto up = uncertainty_product(params(0.0, 3e12));
    CHECK(up.product_ev_s == hbar_ev_s); // bit-exact
    CHECK(up.ratio_to_hbar == 1.0);
    CHECK(up.closed_form_ratio == 1.0);
  }

  TEST_CASE("equal widths give sqrt(1.5)") {
    auto up = uncertainty_product(params(1e12, 1e12));
    CHECK(up.ratio_to_hbar == doctest::Approx(std::sqrt(1.5)).epsilon(1e-12));
    CHECK(up.ratio_to_hbar == doctest::Approx(1.2247).epsilon(1e-4));
  }

  TEST_CASE("pump width ten times the filter width gives sqrt(51)") {
    auto up = uncertainty_product(params(1e13, 1e12));
    CHECK(up.ratio_to_hbar == doctest::Approx(std::sqrt(51.0)).epsilon(1e-12));
    CHECK(up.ratio_to_hbar == doctest::Approx(7.1414).epsilon(1e-4));
    // Cross-check against energy_sigma x numeric dt oracle.
    auto p = params(1e13, 1e12);
    double numeric_product = energy_sigma_ev(p) * numeric_dt_sigma_s(p);
    CHECK(numeric_product == doctest::Approx(up.product_ev_s).epsilon(1e-6));
  }

  TEST_CASE("factorization identity: ratio equals pe/ce to 1e-12") {
    std::mt19937_64 gen(12);
    std::uniform_real_distribution<double> u(0.05, 20.0);
    for (int k = 0; k < 500; ++k) {
      auto p = params(u(gen) * 1e12, u(gen) * 1e12);
      auto up = uncertainty_product(p);
      auto w = effective_widths(p);
      CHECK(std::abs(up.ratio_to_hbar - w.delta_omega_pe / w.delta_omega_ce) <=
            1e-12 * up.ratio_to_hbar);
      CHECK(std::abs(up.ratio_to_hbar - up.closed_form_ratio) <= 1e-12 * up.ratio_to_hbar);
    }
  }

  TEST_CASE("monotonicity and the hbar lower bound") {
    double prev = 0.0;
    for (double dp : {1e11, 1e12, 5e12, 2e13}) {
      double r = uncertainty_product(params(dp, 1e12)).ratio_to_hbar;
      CHECK(r > prev);
      prev = r;
    }
    prev = 1e300;
    for (double df : {1e11, 1e12, 5e12, 2e13}) {
      double r = uncertainty_product(params(1e12, df)).ratio_to_hbar;
      CHECK(r < prev);
      prev = r;
    }
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(0.01, 50.0);
    for (int k = 0; k < 300; ++k)
      CHECK(uncertainty_product(params(u(gen) * 1e12, u(gen) * 1e12)).ratio_to_hbar >= 1.0);
  }
}

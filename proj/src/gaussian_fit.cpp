#include "pspd/gaussian_fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "pspd/constants.hpp"

namespace pspd {

namespace {

constexpr double inv_sqrt2 = 0.70710678118654752440;
constexpr double inv_sqrt2pi = 0.39894228040143267794;

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z * inv_sqrt2); }
inline double norm_pdf(double z) { return inv_sqrt2pi * std::exp(-0.5 * z * z); }

struct Model {
  // Per-bin integral I_i and its derivatives w.r.t. (mean, sigma).
  static void eval(const std::vector<double>& edges, double mean, double sigma,
                   std::vector<double>& integral, std::vector<double>& d_mean,
                   std::vector<double>& d_sigma) {
    const std::size_t n = edges.size() - 1;
    integral.resize(n);
    d_mean.resize(n);
    d_sigma.resize(n);
    double z_lo = (edges[0] - mean) / sigma;
    double cdf_lo = norm_cdf(z_lo);
    double pdf_lo = norm_pdf(z_lo);
    for (std::size_t i = 0; i < n; ++i) {
      double z_hi = (edges[i + 1] - mean) / sigma;
      double cdf_hi = norm_cdf(z_hi);
      double pdf_hi = norm_pdf(z_hi);
      integral[i] = cdf_hi - cdf_lo;
      d_mean[i] = (pdf_lo - pdf_hi) / sigma;
      d_sigma[i] = (z_lo * pdf_lo - z_hi * pdf_hi) / sigma;
      z_lo = z_hi;
      cdf_lo = cdf_hi;
      pdf_lo = pdf_hi;
    }
  }
};

} // namespace

GaussianFit fit_binned_gaussian(const std::vector<double>& edges,
                                const std::vector<double>& counts,
                                const GaussianFitOptions& opts) {
  const int n = static_cast<int>(counts.size());
  if (edges.size() != counts.size() + 1)
    throw DomainError("gaussian fit: edges must have counts.size()+1 entries");
  if (n < opts.min_bins)
    throw FitError("gaussian fit: region has " + std::to_string(n) + " bins, need at least " +
                   std::to_string(opts.min_bins));
  double total = 0.0;
  for (double c : counts) {
    if (!(c >= 0.0)) throw DomainError("gaussian fit: negative bin count");
    total += c;
  }
  if (total < opts.min_counts)
    throw FitError("gaussian fit: region has " + std::to_string(total) +
                   " counts, need at least " + std::to_string(opts.min_counts));

  const double span = edges.back() - edges.front();
  const double mean_bin_width = span / n;
  const double sigma_floor = opts.sigma_floor_bins * mean_bin_width;

  // Moment initialization with a crude baseline from the smallest bins.
  std::vector<double> sorted(counts);
  std::sort(sorted.begin(), sorted.end());
  double base0 = sorted[static_cast<std::size_t>(0.1 * (n - 1))];
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = 0.5 * (edges[i] + edges[i + 1]);
    double c = std::max(counts[i] - base0, 0.0);
    s0 += c;
    s1 += c * x;
    s2 += c * x * x;
  }
  double mean0, sigma0, amp0;
  if (s0 > 0.0) {
    mean0 = s1 / s0;
    double var = s2 / s0 - mean0 * mean0 - mean_bin_width * mean_bin_width / 12.0;
    sigma0 = std::sqrt(std::max(var, 0.09 * mean_bin_width * mean_bin_width));
    amp0 = s0;
  } else {
    mean0 = 0.5 * (edges.front() + edges.back());
    sigma0 = 0.25 * span;
    amp0 = std::max(total, 1.0);
  }
  sigma0 = std::clamp(sigma0, sigma_floor, span);

  // Weights: Poisson, w = 1/max(c, 1).
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 1.0 / std::max(counts[i], 1.0);

  Eigen::Vector4d p(amp0, mean0, sigma0, base0); // (A, mu, sigma, B)
  std::vector<double> integral, d_mean, d_sigma;

  auto cost_of = [&](const Eigen::Vector4d& q) {
    Model::eval(edges, q[1], q[2], integral, d_mean, d_sigma);
    double c = 0.0;
    for (int i = 0; i < n; ++i) {
      double r = counts[i] - (q[3] + q[0] * integral[i]);
      c += w[i] * r * r;
    }
    return c;
  };

  double cost = cost_of(p);
  double lambda = 1e-3;
  int iter = 0;
  bool converged = false;
  bool any_step = false;
  const double cost_floor = 1e-12 * n; // effectively a perfect fit

  Eigen::Matrix4d jtj;
  Eigen::Vector4d jtr;
  for (; iter < opts.max_iterations; ++iter) {
    if (cost <= cost_floor) {
      converged = true;
      break;
    }
    Model::eval(edges, p[1], p[2], integral, d_mean, d_sigma);
    jtj.setZero();
    jtr.setZero();
    for (int i = 0; i < n; ++i) {
      Eigen::Vector4d g(integral[i], p[0] * d_mean[i], p[0] * d_sigma[i], 1.0);
      double r = counts[i] - (p[3] + p[0] * integral[i]);
      jtj.noalias() += w[i] * g * g.transpose();
      jtr.noalias() += w[i] * r * g;
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::Matrix4d a = jtj;
      for (int k = 0; k < 4; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-30);
      Eigen::Vector4d delta = a.ldlt().solve(jtr);
      Eigen::Vector4d q = p + delta;
      q[2] = std::max(q[2], sigma_floor);
      double new_cost = cost_of(q);
      if (std::isfinite(new_cost) && new_cost <= cost) {
        double drop = cost - new_cost;
        p = q;
        bool small_step = delta.cwiseAbs().maxCoeff() <=
                          1e-12 * (1.0 + p.cwiseAbs().maxCoeff());
        cost = new_cost;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        any_step = true;
        if (drop <= opts.cost_rel_tol * (cost + cost_floor) || small_step) converged = true;
        break;
      }
      lambda *= 8.0;
    }
    if (converged) break;
    if (!stepped) {
      // Damping exhausted with no downhill step: a stationary point. Only a
      // fit that never improved at all is reported as failed.
      converged = any_step || jtr.cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + cost);
      break;
    }
  }

  if (!converged)
    throw FitError("gaussian fit: no convergence after " + std::to_string(iter) +
                   " iterations (cost " + std::to_string(cost) + ", mean " +
                   std::to_string(p[1]) + ", sigma " + std::to_string(p[2]) + ")");

  GaussianFit out;
  out.amplitude = p[0];
  out.mean = p[1];
  out.sigma = p[2];
  out.baseline = p[3];
  out.chi2 = cost;
  out.dof = n - 4;
  out.n_iter = iter;
  out.converged = true;
  // Unresolved: sigma at the optimizer floor, or below the quantization
  // noise scale of one bin (width / sqrt(12)).
  out.sigma_at_bound = p[2] <= std::max(sigma_floor * (1.0 + 1e-12),
                                        mean_bin_width / std::sqrt(12.0));

  // Covariance from the Gauss-Newton normal matrix at the optimum.
  Model::eval(edges, p[1], p[2], integral, d_mean, d_sigma);
  jtj.setZero();
  for (int i = 0; i < n; ++i) {
    Eigen::Vector4d g(integral[i], p[0] * d_mean[i], p[0] * d_sigma[i], 1.0);
    jtj.noalias() += w[i] * g * g.transpose();
  }
  Eigen::Matrix4d cov = jtj.inverse();
  out.amplitude_err = std::sqrt(std::max(cov(0, 0), 0.0));
  out.mean_err = std::sqrt(std::max(cov(1, 1), 0.0));
  out.sigma_err = std::sqrt(std::max(cov(2, 2), 0.0));
  out.baseline_err = std::sqrt(std::max(cov(3, 3), 0.0));
  return out;
}

GaussianFit fit_binned_gaussian(const Histogram1D& hist, int first_bin, int last_bin,
                                const GaussianFitOptions& opts) {
  first_bin = std::max(first_bin, 0);
  last_bin = std::min(last_bin, hist.n_bins() - 1);
  if (first_bin > last_bin) throw DomainError("gaussian fit: empty bin range");
  std::vector<double> edges, counts;
  edges.reserve(last_bin - first_bin + 2);
  counts.reserve(last_bin - first_bin + 1);
  for (int i = first_bin; i <= last_bin; ++i) {
    edges.push_back(hist.bin_low(i));
    counts.push_back(static_cast<double>(hist.counts[i]));
  }
  edges.push_back(hist.bin_high(last_bin));
  return fit_binned_gaussian(edges, counts, opts);
}

} // namespace pspd

#include "pspd/calibration.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace pspd {

DensityHistogram::DensityHistogram(const SensorConfig& cfg)
    : n_tdcs(cfg.n_tdcs), n_bins(cfg.fine_bins_per_tdc) {
  counts.assign(static_cast<std::size_t>(n_tdcs) * n_bins, 0);
}

void DensityHistogram::add(const RawHit& hit, const SensorConfig& cfg) {
  validate_hit(hit, cfg);
  int tdc = hit.pixel / cfg.pixels_per_tdc();
  ++counts[static_cast<std::size_t>(tdc) * n_bins + hit.fine];
  ++total;
}

void DensityHistogram::add_all(std::span<const RawHit> hits, const SensorConfig& cfg) {
  for (const RawHit& h : hits) add(h, cfg);
}

void DensityHistogram::merge(const DensityHistogram& other) {
  if (other.n_tdcs != n_tdcs || other.n_bins != n_bins)
    throw ConfigError("density histogram merge: incompatible dimensions");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  total += other.total;
}

std::uint64_t DensityHistogram::tdc_total(int tdc) const {
  const std::uint64_t* c = &counts[static_cast<std::size_t>(tdc) * n_bins];
  return std::accumulate(c, c + n_bins, std::uint64_t{0});
}

DensityHistogram accumulate_density(std::span<const RawHit> hits, const SensorConfig& cfg) {
  if (hits.empty())
    throw InsufficientStatsError("accumulate_density: insufficient statistics (empty stream)");
  DensityHistogram hist(cfg);
  hist.add_all(hits, cfg);
  return hist;
}

TdcFitReport fit_tdc_calibration(const DensityHistogram& hist, const SensorConfig& cfg,
                                 std::uint64_t min_counts_per_tdc) {
  if (hist.n_tdcs != cfg.n_tdcs || hist.n_bins != cfg.fine_bins_per_tdc)
    throw ConfigError("fit_tdc_calibration: histogram does not match sensor config");

  std::ostringstream deficits;
  int n_under = 0;
  for (int t = 0; t < hist.n_tdcs; ++t) {
    std::uint64_t n = hist.tdc_total(t);
    if (n < min_counts_per_tdc) {
      if (n_under++) deficits << ", ";
      deficits << "TDC " << t << " has " << n << " counts (" << (min_counts_per_tdc - n)
               << " short of " << min_counts_per_tdc << ")";
    }
  }
  if (n_under)
    throw InsufficientStatsError("fit_tdc_calibration: " + deficits.str());

  TdcFitReport report;
  std::vector<std::vector<double>> widths(hist.n_tdcs,
                                          std::vector<double>(hist.n_bins, 0.0));
  for (int t = 0; t < hist.n_tdcs; ++t) {
    double n_tdc = static_cast<double>(hist.tdc_total(t));
    for (int b = 0; b < hist.n_bins; ++b) {
      std::uint64_t c = hist.count(t, b);
      widths[t][b] = cfg.coarse_period_ps * static_cast<double>(c) / n_tdc;
      if (c == 0)
        report.warnings.push_back("TDC " + std::to_string(t) + " bin " + std::to_string(b) +
                                  " has zero occupancy; width set to 0");
    }
  }
  report.calibration = TdcCalibration::from_widths(widths, cfg.coarse_period_ps);
  return report;
}

PairDifferenceMatrix::PairDifferenceMatrix(int n_pixels) : n_pixels_(n_pixels) {
  auto n = static_cast<std::size_t>(n_pixels) * (n_pixels - 1) / 2;
  n_.assign(n, 0);
  mean_.assign(n, 0.0);
  m2_.assign(n, 0.0);
}

std::size_t PairDifferenceMatrix::tri(int i, int j) const {
  if (i > j) std::swap(i, j);
  // Index of pair (i, j), i < j, in row-major upper-triangle order.
  return static_cast<std::size_t>(i) * n_pixels_ - static_cast<std::size_t>(i) * (i + 1) / 2 +
         (j - i - 1);
}

double PairDifferenceMatrix::mean_dt_ps(int i, int j) const {
  double m = mean_[tri(i, j)];
  return i < j ? m : -m;
}

double PairDifferenceMatrix::stderr_ps(int i, int j) const {
  std::size_t k = tri(i, j);
  if (n_[k] < 2) return std::numeric_limits<double>::infinity();
  double var = m2_[k] / static_cast<double>(n_[k] - 1);
  return std::sqrt(var / static_cast<double>(n_[k]));
}

void PairDifferenceMatrix::add_observation(int i, int j, double dt_ps) {
  if (i == j) throw DomainError("pair differences: i == j");
  if (i > j) {
    std::swap(i, j);
    dt_ps = -dt_ps;
  }
  std::size_t k = tri(i, j);
  double delta = dt_ps - mean_[k];
  ++n_[k];
  mean_[k] += delta / static_cast<double>(n_[k]);
  m2_[k] += delta * (dt_ps - mean_[k]);
}

void PairDifferenceMatrix::add_cycle(std::span<const CalibratedHit> cycle_hits,
                                     double window_ps) {
  std::vector<double> first_time(static_cast<std::size_t>(n_pixels_), -1.0);
  std::vector<int> used;
  used.reserve(64);
  std::size_t i = 0;
  while (i < cycle_hits.size()) {
    double t0 = cycle_hits[i].time_ps;
    std::size_t end = i;
    while (end < cycle_hits.size() && cycle_hits[end].time_ps - t0 <= window_ps) ++end;

    used.clear();
    for (std::size_t k = i; k < end; ++k) {
      int p = cycle_hits[k].pixel;
      if (first_time[p] < 0.0) { // hits are time-sorted: first seen is earliest
        first_time[p] = cycle_hits[k].time_ps;
        used.push_back(p);
      }
    }
    for (std::size_t a = 0; a < used.size(); ++a)
      for (std::size_t b = a + 1; b < used.size(); ++b)
        add_observation(used[a], used[b], first_time[used[a]] - first_time[used[b]]);
    for (int p : used) first_time[p] = -1.0;
    i = end;
  }
}

void PairDifferenceMatrix::merge(const PairDifferenceMatrix& other) {
  if (other.n_pixels_ != n_pixels_)
    throw ConfigError("pair difference merge: incompatible pixel counts");
  for (std::size_t k = 0; k < n_.size(); ++k) {
    if (other.n_[k] == 0) continue;
    if (n_[k] == 0) {
      n_[k] = other.n_[k];
      mean_[k] = other.mean_[k];
      m2_[k] = other.m2_[k];
      continue;
    }
    double na = static_cast<double>(n_[k]);
    double nb = static_cast<double>(other.n_[k]);
    double delta = other.mean_[k] - mean_[k];
    double nt = na + nb;
    mean_[k] += delta * nb / nt;
    m2_[k] += other.m2_[k] + delta * delta * na * nb / nt;
    n_[k] += other.n_[k];
  }
}

PairDifferenceMatrix PairDifferenceMatrix::from_offsets(const std::vector<double>& offsets_ps,
                                                        std::uint64_t count_per_pair,
                                                        double stderr_scale_ps) {
  int n = static_cast<int>(offsets_ps.size());
  PairDifferenceMatrix m(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      std::size_t k = m.tri(i, j);
      m.n_[k] = count_per_pair;
      m.mean_[k] = offsets_ps[i] - offsets_ps[j];
      // Back out the M2 that yields stderr = stderr_scale.
      if (count_per_pair >= 2)
        m.m2_[k] = stderr_scale_ps * stderr_scale_ps * static_cast<double>(count_per_pair) *
                   static_cast<double>(count_per_pair - 1);
    }
  return m;
}

PairDifferenceMatrix accumulate_pair_differences(std::span<const CalibratedHit> hits,
                                                 double window_ps, const SensorConfig& cfg) {
  PairDifferenceMatrix m(cfg.n_pixels);
  std::size_t i = 0;
  while (i < hits.size()) {
    std::size_t end = i;
    while (end < hits.size() && hits[end].cycle_index == hits[i].cycle_index) ++end;
    m.add_cycle(hits.subspan(i, end - i), window_ps);
    i = end;
  }
  return m;
}

OffsetTable solve_offsets(const PairDifferenceMatrix& m, const SensorConfig& cfg,
                          const SolveOffsetsOptions& opts) {
  const int n = cfg.n_pixels;
  if (m.n_pixels() != n)
    throw ConfigError("solve_offsets: matrix does not match sensor pixel count");

  struct Eq {
    int i, j;
    double dt, w;
  };
  std::vector<Eq> eqs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      std::uint64_t c = m.count(i, j);
      if (c < opts.min_pair_count || c == 0) continue;
      double se = m.stderr_ps(i, j);
      if (!std::isfinite(se)) se = opts.stderr_floor_ps;
      se = std::max(se, opts.stderr_floor_ps);
      eqs.push_back({i, j, m.mean_dt_ps(i, j), 1.0 / (se * se)});
    }

  // Connectivity to the gauge pixel via union-find.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const Eq& e : eqs) parent[find(e.i)] = find(e.j);
  std::vector<int> disconnected;
  for (int p = 0; p < n; ++p)
    if (find(p) != find(0)) disconnected.push_back(p);
  if (!disconnected.empty()) {
    std::ostringstream msg;
    msg << "solve_offsets: " << disconnected.size()
        << " pixel(s) not connected to pixel 0 through measured pairs:";
    for (std::size_t k = 0; k < disconnected.size() && k < 16; ++k)
      msg << ' ' << disconnected[k];
    if (disconnected.size() > 16) msg << " ...";
    throw DomainError(msg.str());
  }

  // Normal equations over unknowns o_1..o_{n-1} (o_0 = 0).
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n - 1, n - 1);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n - 1);
  for (const Eq& e : eqs) {
    int ui = e.i - 1, uj = e.j - 1; // -1 marks the gauge pixel
    if (ui >= 0) {
      a(ui, ui) += e.w;
      b(ui) += e.w * e.dt;
    }
    if (uj >= 0) {
      a(uj, uj) += e.w;
      b(uj) -= e.w * e.dt;
    }
    if (ui >= 0 && uj >= 0) {
      a(ui, uj) -= e.w;
      a(uj, ui) -= e.w;
    }
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success)
    throw Error("solve_offsets: normal equations are not positive definite");
  Eigen::VectorXd o = ldlt.solve(b);
  Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(n - 1, n - 1));

  OffsetTable out;
  out.offset_ps.assign(static_cast<std::size_t>(n), 0.0);
  out.sigma_ps.assign(static_cast<std::size_t>(n), 0.0);
  for (int p = 1; p < n; ++p) {
    out.offset_ps[p] = o(p - 1);
    out.sigma_ps[p] = std::sqrt(std::max(cov(p - 1, p - 1), 0.0));
  }
  return out;
}

} // namespace pspd

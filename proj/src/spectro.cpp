#include "pspd/spectro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pspd/constants.hpp"

namespace pspd {

void Spectrum::merge(const Spectrum& other) {
  if (other.counts.size() != counts.size())
    throw ConfigError("spectrum merge: incompatible pixel counts");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  total += other.total;
  n_cycles += other.n_cycles;
  exposure_s += other.exposure_s;
}

Spectrum build_spectrum(std::span<const RawHit> hits, const SensorConfig& cfg) {
  Spectrum spec(cfg);
  for (const RawHit& h : hits) {
    if (h.pixel >= cfg.n_pixels) throw DomainError("build_spectrum: pixel out of range");
    spec.add(h.pixel);
  }
  return spec;
}

Spectrum build_spectrum(std::span<const CalibratedHit> hits, const SensorConfig& cfg) {
  Spectrum spec(cfg);
  for (const CalibratedHit& h : hits) {
    if (h.pixel >= cfg.n_pixels) throw DomainError("build_spectrum: pixel out of range");
    spec.add(h.pixel);
  }
  return spec;
}

std::vector<int> find_peak_candidates(const Spectrum& spec, double min_counts,
                                      int min_separation) {
  std::vector<int> candidates;
  const int n = spec.n_pixels();
  for (int p = 0; p < n; ++p) {
    double c = static_cast<double>(spec.counts[p]);
    if (c < min_counts) continue;
    bool is_max = true;
    for (int q = std::max(0, p - min_separation); q <= std::min(n - 1, p + min_separation); ++q) {
      if (q == p) continue;
      if (spec.counts[q] > spec.counts[p] ||
          (spec.counts[q] == spec.counts[p] && q < p)) {
        is_max = false;
        break;
      }
    }
    if (is_max) candidates.push_back(p);
  }
  return candidates;
}

GaussianFit fit_gaussian_peak(const Spectrum& spec, int center_pixel, int halfwidth,
                              const GaussianFitOptions& opts) {
  int lo = std::max(0, center_pixel - halfwidth);
  int hi = std::min(spec.n_pixels() - 1, center_pixel + halfwidth);
  std::vector<double> edges, counts;
  for (int p = lo; p <= hi; ++p) {
    edges.push_back(p - 0.5);
    counts.push_back(static_cast<double>(spec.counts[p]));
  }
  edges.push_back(hi + 0.5);
  return fit_binned_gaussian(edges, counts, opts);
}

SpectralCalibration calibrate_wavelength(const std::vector<GaussianFit>& peaks,
                                         std::vector<double> reference_lines_nm,
                                         const WavelengthCalOptions& opts) {
  if (peaks.size() < 2)
    throw DomainError("calibrate_wavelength: need at least 2 fitted peaks");
  if (reference_lines_nm.size() < 2)
    throw DomainError("calibrate_wavelength: need at least 2 reference lines");
  std::sort(reference_lines_nm.begin(), reference_lines_nm.end());

  // Greedy nearest-neighbour match under the provisional dispersion guess.
  struct Claim {
    int peak = -1;
    double dist = 0.0;
  };
  std::vector<Claim> claims(reference_lines_nm.size());
  std::vector<int> match_of_peak(peaks.size(), -1);
  std::ostringstream conflicts;
  int n_conflicts = 0;
  for (std::size_t k = 0; k < peaks.size(); ++k) {
    double predicted = opts.guess_a_nm + opts.guess_b_nm_per_pixel * peaks[k].mean;
    int best = -1;
    double best_dist = opts.match_tolerance_nm;
    for (std::size_t r = 0; r < reference_lines_nm.size(); ++r) {
      double d = std::abs(reference_lines_nm[r] - predicted);
      if (d <= best_dist) {
        best_dist = d;
        best = static_cast<int>(r);
      }
    }
    if (best < 0) continue;
    if (claims[best].peak >= 0) {
      if (n_conflicts++) conflicts << "; ";
      conflicts << "peaks at pixels " << peaks[claims[best].peak].mean << " and "
                << peaks[k].mean << " both match line " << reference_lines_nm[best] << " nm";
      continue;
    }
    claims[best] = {static_cast<int>(k), best_dist};
    match_of_peak[k] = best;
  }
  if (n_conflicts)
    throw DomainError("calibrate_wavelength: ambiguous matches: " + conflicts.str());

  std::vector<std::pair<int, int>> matched; // (peak, line)
  for (std::size_t k = 0; k < peaks.size(); ++k)
    if (match_of_peak[k] >= 0) matched.emplace_back(static_cast<int>(k), match_of_peak[k]);
  if (matched.size() < 2)
    throw DomainError("calibrate_wavelength: only " + std::to_string(matched.size()) +
                      " peak(s) matched a reference line within " +
                      std::to_string(opts.match_tolerance_nm) + " nm");

  // Weighted linear fit lambda = a + b * pixel. Weights from the fitted peak
  // position uncertainties converted to wavelength via the guess slope.
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (auto [k, r] : matched) {
    double x = peaks[k].mean;
    double y = reference_lines_nm[r];
    double sig = std::abs(opts.guess_b_nm_per_pixel) * std::max(peaks[k].mean_err, 1e-6);
    double w = 1.0 / (sig * sig);
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
  }
  double det = sw * sxx - sx * sx;
  if (det <= 0.0)
    throw DomainError("calibrate_wavelength: degenerate peak positions");
  SpectralCalibration cal;
  cal.b_nm_per_pixel = (sw * sxy - sx * sy) / det;
  cal.a_nm = (sy - cal.b_nm_per_pixel * sx) / sw;

  double ss = 0.0;
  for (auto [k, r] : matched) {
    SpectralCalibration::Match m;
    m.pixel = peaks[k].mean;
    m.pixel_err = peaks[k].mean_err;
    m.reference_nm = reference_lines_nm[r];
    m.fitted_nm = cal.lambda_of_pixel(m.pixel);
    m.residual_nm = m.fitted_nm - m.reference_nm;
    ss += m.residual_nm * m.residual_nm;
    cal.matches.push_back(m);
  }
  cal.residual_rms_nm = std::sqrt(ss / static_cast<double>(matched.size()));
  return cal;
}

PixelSet::PixelSet(std::initializer_list<int> pixels, int n_pixels) {
  member_.assign(static_cast<std::size_t>(n_pixels), 0);
  for (int p : pixels) {
    if (p < 0 || p >= n_pixels) throw DomainError("pixel set: pixel out of range");
    member_[p] = 1;
  }
}

PixelSet PixelSet::range(int first, int last, int n_pixels) {
  if (first < 0 || last >= n_pixels || first > last)
    throw DomainError("pixel set: bad range");
  PixelSet s;
  s.member_.assign(static_cast<std::size_t>(n_pixels), 0);
  for (int p = first; p <= last; ++p) s.member_[p] = 1;
  return s;
}

PixelSet PixelSet::parse(const std::string& spec, int n_pixels) {
  PixelSet s;
  s.member_.assign(static_cast<std::size_t>(n_pixels), 0);
  std::istringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t dash = item.find('-', 1); // allow no negatives anyway
    int first, last;
    try {
      if (dash == std::string::npos) {
        first = last = std::stoi(item);
      } else {
        first = std::stoi(item.substr(0, dash));
        last = std::stoi(item.substr(dash + 1));
      }
    } catch (const std::exception&) {
      throw DomainError("pixel set: cannot parse '" + item + "'");
    }
    if (first < 0 || last >= n_pixels || first > last)
      throw DomainError("pixel set: range '" + item + "' out of bounds");
    for (int p = first; p <= last; ++p) s.member_[p] = 1;
  }
  return s;
}

bool PixelSet::overlaps(const PixelSet& other) const {
  std::size_t n = std::min(member_.size(), other.member_.size());
  for (std::size_t p = 0; p < n; ++p)
    if (member_[p] && other.member_[p]) return true;
  return false;
}

CoincidenceScanner::CoincidenceScanner(double window_ps, PixelSet group_a, PixelSet group_b,
                                       const CoincidenceOptions& opts)
    : window_ps_(window_ps), group_a_(std::move(group_a)), group_b_(std::move(group_b)),
      opts_(opts) {
  if (!(window_ps > 0.0)) throw DomainError("find_coincidences: window must be positive");
  if (group_a_.overlaps(group_b_))
    throw DomainError("find_coincidences: pixel groups overlap");
  result_.dt_hist = Histogram1D(-window_ps, window_ps, opts.hist_bin_width_ps);
}

void CoincidenceScanner::feed_cycle(std::span<const CalibratedHit> cycle_hits) {
  a_.clear();
  b_.clear();
  double prev = -std::numeric_limits<double>::infinity();
  for (const CalibratedHit& h : cycle_hits) {
    if (h.time_ps < prev)
      throw DomainError("find_coincidences: hits not sorted by time within cycle");
    prev = h.time_ps;
    if (group_a_.contains(h.pixel)) a_.push_back(&h);
    else if (group_b_.contains(h.pixel)) b_.push_back(&h);
  }
  std::size_t lo = 0;
  for (const CalibratedHit* ha : a_) {
    while (lo < b_.size() && b_[lo]->time_ps < ha->time_ps - window_ps_) ++lo;
    for (std::size_t k = lo; k < b_.size() && b_[k]->time_ps <= ha->time_ps + window_ps_; ++k) {
      double dt = b_[k]->time_ps - ha->time_ps;
      result_.dt_hist.fill(dt);
      ++result_.n_pairs;
      if (opts_.collect_pairs)
        result_.pairs.push_back({ha->cycle_index, ha->pixel, b_[k]->pixel, ha->time_ps,
                                 b_[k]->time_ps, dt});
    }
  }
}

CoincidenceResult CoincidenceScanner::take() { return std::move(result_); }

CoincidenceResult find_coincidences(std::span<const CalibratedHit> hits, double window_ps,
                                    const PixelSet& group_a, const PixelSet& group_b,
                                    const CoincidenceOptions& opts) {
  CoincidenceScanner scanner(window_ps, group_a, group_b, opts);
  std::size_t i = 0;
  std::uint32_t prev_cycle = 0;
  while (i < hits.size()) {
    std::uint32_t cycle = hits[i].cycle_index;
    if (i > 0 && cycle < prev_cycle)
      throw DomainError("find_coincidences: hits not sorted by cycle");
    prev_cycle = cycle;
    std::size_t end = i;
    while (end < hits.size() && hits[end].cycle_index == cycle) ++end;
    scanner.feed_cycle(hits.subspan(i, end - i));
    i = end;
  }
  return scanner.take();
}

PairTimeResolution pair_time_resolution(const Histogram1D& dt_hist,
                                        const PairTimeResolutionOptions& opts) {
  if (dt_hist.total() == 0)
    throw InsufficientStatsError("pair_time_resolution: empty dt histogram");
  int peak = dt_hist.max_bin();
  PairTimeResolution out;
  out.fit = fit_binned_gaussian(dt_hist, peak - opts.fit_halfwidth_bins,
                                peak + opts.fit_halfwidth_bins, opts.fit);
  out.sigma_pair_ps = out.fit.sigma;
  out.sigma_single_ps = out.fit.sigma / std::sqrt(2.0);
  out.center_ps = out.fit.mean;
  return out;
}

AnticorrResult anticorrelation_from_frequencies(std::span<const FrequencyPair> pairs,
                                                double omega_pump_rad_s) {
  if (pairs.size() < 10)
    throw InsufficientStatsError("anticorrelation: need at least 10 pairs, have " +
                                 std::to_string(pairs.size()));
  // Center frequencies before forming the normal equations; the absolute
  // scale (~1e15) would otherwise eat the spread (~1e13) in the squares.
  double mean_a = 0.0, mean_b = 0.0;
  for (const FrequencyPair& p : pairs) {
    mean_a += p.omega_a_rad_s;
    mean_b += p.omega_b_rad_s;
  }
  const double n = static_cast<double>(pairs.size());
  mean_a /= n;
  mean_b /= n;

  double sxx = 0.0, sxy = 0.0, ss = 0.0;
  for (const FrequencyPair& p : pairs) {
    double xa = p.omega_a_rad_s - mean_a;
    double xb = p.omega_b_rad_s - mean_b;
    sxx += xa * xa;
    sxy += xa * xb;
    double r = p.omega_a_rad_s + p.omega_b_rad_s - omega_pump_rad_s;
    ss += r * r;
  }
  if (sxx <= 0.0) throw DomainError("anticorrelation: degenerate frequency spread");
  AnticorrResult out;
  out.slope = sxy / sxx;
  out.intercept_rad_s = mean_b - out.slope * mean_a;
  out.conservation_residual_rms_rad_s = std::sqrt(ss / n);
  out.n_pairs = pairs.size();
  return out;
}

AnticorrResult anticorrelation(std::span<const CoincidencePair> pairs,
                               const SpectralCalibration& cal, double pump_nm) {
  if (pairs.size() < 10)
    throw InsufficientStatsError("anticorrelation: need at least 10 pairs, have " +
                                 std::to_string(pairs.size()));
  if (cal.b_nm_per_pixel == 0.0)
    throw ConfigError("anticorrelation: invalid spectral calibration");
  if (!(pump_nm > 0.0)) throw DomainError("anticorrelation: pump wavelength must be positive");

  int max_a = 0, max_b = 0;
  for (const CoincidencePair& p : pairs) {
    max_a = std::max(max_a, static_cast<int>(p.pixel_a));
    max_b = std::max(max_b, static_cast<int>(p.pixel_b));
  }

  std::vector<FrequencyPair> freq;
  freq.reserve(pairs.size());
  Hist2D hist;
  hist.n_a = max_a + 1;
  hist.n_b = max_b + 1;
  hist.counts.assign(static_cast<std::size_t>(hist.n_a) * hist.n_b, 0);
  for (int p = 0; p < hist.n_a; ++p) hist.a_axis_nm.push_back(cal.lambda_of_pixel(p));
  for (int p = 0; p < hist.n_b; ++p) hist.b_axis_nm.push_back(cal.lambda_of_pixel(p));
  for (const CoincidencePair& p : pairs) {
    ++hist.at(p.pixel_a, p.pixel_b);
    freq.push_back({constants::omega_of_lambda_nm(cal.lambda_of_pixel(p.pixel_a)),
                    constants::omega_of_lambda_nm(cal.lambda_of_pixel(p.pixel_b))});
  }

  AnticorrResult out =
      anticorrelation_from_frequencies(freq, constants::omega_of_lambda_nm(pump_nm));
  out.hist = std::move(hist);
  return out;
}

HupResult hup_benchmark(double lambda_nm, double dlambda_nm, double dt_s) {
  if (!(lambda_nm > 0.0) || !(dlambda_nm > 0.0) || !(dt_s > 0.0))
    throw DomainError("hup_benchmark: all inputs must be positive");
  HupResult out;
  out.delta_e_ev = constants::hc_ev_nm * dlambda_nm / (lambda_nm * lambda_nm);
  out.delta_t_s = dt_s;
  out.product_ev_s = out.delta_e_ev * dt_s;
  out.ratio_to_hbar_over_2 = out.product_ev_s / (0.5 * constants::hbar_ev_s);
  return out;
}

} // namespace pspd

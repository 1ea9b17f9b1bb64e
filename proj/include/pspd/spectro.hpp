#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pspd/gaussian_fit.hpp"
#include "pspd/histogram.hpp"
#include "pspd/sensor.hpp"

namespace pspd {

// Per-pixel hit counts.
struct Spectrum {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
  std::uint32_t n_cycles = 0;
  double exposure_s = 0.0;

  Spectrum() = default;
  explicit Spectrum(const SensorConfig& cfg)
      : counts(static_cast<std::size_t>(cfg.n_pixels), 0) {}

  void add(int pixel) {
    ++counts[pixel];
    ++total;
  }
  void merge(const Spectrum& other);
  int n_pixels() const { return static_cast<int>(counts.size()); }
};

Spectrum build_spectrum(std::span<const RawHit> hits, const SensorConfig& cfg);
Spectrum build_spectrum(std::span<const CalibratedHit> hits, const SensorConfig& cfg);

// Local maxima above min_counts, at least min_separation pixels apart
// (greater peaks win). Candidate pixels, ascending.
std::vector<int> find_peak_candidates(const Spectrum& spec, double min_counts,
                                      int min_separation = 5);

// Gaussian fit over the pixel window [center - halfwidth, center + halfwidth].
// Pixel p spans [p - 0.5, p + 0.5], so fit.mean is in fractional pixel units.
GaussianFit fit_gaussian_peak(const Spectrum& spec, int center_pixel, int halfwidth,
                              const GaussianFitOptions& opts = {});

// Affine pixel -> wavelength map with the per-line residuals of its fit.
struct SpectralCalibration {
  double a_nm = 0.0;          // wavelength at pixel 0
  double b_nm_per_pixel = 0.0;
  struct Match {
    double pixel = 0.0;
    double pixel_err = 0.0;
    double reference_nm = 0.0;
    double fitted_nm = 0.0;   // a + b * pixel
    double residual_nm = 0.0; // fitted - reference
  };
  std::vector<Match> matches;
  double residual_rms_nm = 0.0;

  double lambda_of_pixel(double pixel) const { return a_nm + b_nm_per_pixel * pixel; }
};

struct WavelengthCalOptions {
  // Provisional dispersion guess used to predict wavelengths for matching.
  double guess_a_nm = 0.0;
  double guess_b_nm_per_pixel = 0.11;
  double match_tolerance_nm = 0.3;
};

// Matches fitted peak positions (pixel units) to reference lines by nearest
// neighbour under the provisional guess, then fits lambda = a + b * pixel
// weighted by the peak position uncertainties. Throws DomainError when fewer
// than two lines match or when two peaks claim the same line.
SpectralCalibration calibrate_wavelength(const std::vector<GaussianFit>& peaks,
                                         std::vector<double> reference_lines_nm,
                                         const WavelengthCalOptions& opts);

// Pixel group membership for coincidence analysis.
class PixelSet {
public:
  PixelSet() = default;
  PixelSet(std::initializer_list<int> pixels, int n_pixels);
  static PixelSet range(int first, int last, int n_pixels); // inclusive
  static PixelSet parse(const std::string& spec, int n_pixels); // "0-127,200,202"

  bool contains(int pixel) const { return member_[pixel] != 0; }
  bool overlaps(const PixelSet& other) const;
  int n_pixels() const { return static_cast<int>(member_.size()); }

private:
  std::vector<std::uint8_t> member_;
};

// Two hits from disjoint pixel groups within one cycle. dt = t_b - t_a,
// group A being the signal arm by convention.
struct CoincidencePair {
  std::uint32_t cycle_index = 0;
  std::uint16_t pixel_a = 0;
  std::uint16_t pixel_b = 0;
  double t_a_ps = 0.0;
  double t_b_ps = 0.0;
  double dt_ps = 0.0;
};

struct CoincidenceOptions {
  double hist_bin_width_ps = 2500.0 / 140.0; // 1 LSB
  bool collect_pairs = true;
};

struct CoincidenceResult {
  std::vector<CoincidencePair> pairs;
  Histogram1D dt_hist;
  std::uint64_t n_pairs = 0;
};

// Streaming coincidence search: feed cycles one at a time (hits of a cycle
// sorted by time). All A/B combinations with |dt| <= window are kept.
class CoincidenceScanner {
public:
  CoincidenceScanner(double window_ps, PixelSet group_a, PixelSet group_b,
                     const CoincidenceOptions& opts = {});

  void feed_cycle(std::span<const CalibratedHit> cycle_hits);
  CoincidenceResult take();

  std::uint64_t n_pairs() const { return result_.n_pairs; }

private:
  double window_ps_;
  PixelSet group_a_, group_b_;
  CoincidenceOptions opts_;
  CoincidenceResult result_;
  std::vector<const CalibratedHit*> a_, b_;
};

// One-shot search over a full stream sorted by (cycle, time).
CoincidenceResult find_coincidences(std::span<const CalibratedHit> hits, double window_ps,
                                    const PixelSet& group_a, const PixelSet& group_b,
                                    const CoincidenceOptions& opts = {});

struct PairTimeResolution {
  double sigma_pair_ps = 0.0;
  double sigma_single_ps = 0.0; // sigma_pair / sqrt(2)
  double center_ps = 0.0;
  GaussianFit fit;
};

struct PairTimeResolutionOptions {
  int fit_halfwidth_bins = 25; // window around the histogram maximum
  GaussianFitOptions fit;
};

// Gaussian fit of the dt histogram around its peak.
PairTimeResolution pair_time_resolution(const Histogram1D& dt_hist,
                                        const PairTimeResolutionOptions& opts = {});

// Wavelength-wavelength occupancy of coincident pairs, one bin per pixel.
struct Hist2D {
  int n_a = 0, n_b = 0;
  std::vector<std::uint64_t> counts; // n_a * n_b, row-major in a
  std::vector<double> a_axis_nm;     // wavelength at each A pixel
  std::vector<double> b_axis_nm;

  std::uint64_t& at(int ia, int ib) { return counts[static_cast<std::size_t>(ia) * n_b + ib]; }
  std::uint64_t at(int ia, int ib) const {
    return counts[static_cast<std::size_t>(ia) * n_b + ib];
  }
};

struct AnticorrResult {
  double slope = 0.0;            // of omega_b vs omega_a
  double intercept_rad_s = 0.0;
  double conservation_residual_rms_rad_s = 0.0; // rms of (omega_a + omega_b - omega_pump)
  std::uint64_t n_pairs = 0;
  Hist2D hist;
};

// Converts pair pixels to angular frequencies through the spectral
// calibration and quantifies energy-conservation anti-correlation. Throws
// InsufficientStatsError below 10 pairs.
AnticorrResult anticorrelation(std::span<const CoincidencePair> pairs,
                               const SpectralCalibration& cal, double pump_nm);

// Regression core on already-converted frequencies: unweighted least-squares
// line omega_b vs omega_a plus the rms of (omega_a + omega_b - omega_pump).
struct FrequencyPair {
  double omega_a_rad_s = 0.0;
  double omega_b_rad_s = 0.0;
};
AnticorrResult anticorrelation_from_frequencies(std::span<const FrequencyPair> pairs,
                                                double omega_pump_rad_s);

struct HupResult {
  double delta_e_ev = 0.0;
  double delta_t_s = 0.0;
  double product_ev_s = 0.0;
  double ratio_to_hbar_over_2 = 0.0;
};

// Energy-time uncertainty benchmark: dE = hc * dlambda / lambda^2,
// product = dE * dt, ratio = product / (hbar / 2).
HupResult hup_benchmark(double lambda_nm, double dlambda_nm, double dt_s);

} // namespace pspd

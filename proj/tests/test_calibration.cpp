#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pspd/calibration.hpp"
#include "pspd/config_json.hpp"
#include "pspd/rng.hpp"
#include "pspd/sim.hpp"

using namespace pspd;

namespace {

SensorConfig tiny_config(int n_pixels, int n_tdcs) {
  SensorConfig cfg;
  cfg.n_pixels = n_pixels;
  cfg.n_tdcs = n_tdcs;
  cfg.validate();
  return cfg;
}

std::vector<CalibratedHit> pulse_train(const std::vector<double>& offsets, int n_pulses,
                                       double spacing_ps) {
  // Noiseless pulsed data: every pixel fires at pulse_time + offset.
  std::vector<CalibratedHit> hits;
  for (int k = 0; k < n_pulses; ++k) {
    double t0 = 1e6 + k * spacing_ps;
    for (std::size_t p = 0; p < offsets.size(); ++p) {
      CalibratedHit h;
      h.cycle_index = 0;
      h.pixel = static_cast<std::uint16_t>(p);
      h.time_ps = t0 + offsets[p];
      hits.push_back(h);
    }
  }
  std::sort(hits.begin(), hits.end(),
            [](const CalibratedHit& a, const CalibratedHit& b) { return a.time_ps < b.time_ps; });
  return hits;
}

} // namespace

TEST_SUITE("accumulate_density") {
  TEST_CASE("one hit per fine code fills one TDC uniformly") {
    SensorConfig cfg;
    std::vector<RawHit> hits;
    for (int f = 0; f < 140; ++f) {
      RawHit h;
      h.pixel = 1; // TDC 0
      h.fine = static_cast<std::uint8_t>(f);
      hits.push_back(h);
    }
    auto hist = accumulate_density(hits, cfg);
    CHECK(hist.total == 140);
    for (int f = 0; f < 140; ++f) CHECK(hist.count(0, f) == 1);
    CHECK(hist.tdc_total(0) == 140);
    for (int t = 1; t < 64; ++t) CHECK(hist.tdc_total(t) == 0);
  }

  TEST_CASE("hits on pixels 0-3 land only in TDC 0") {
    SensorConfig cfg;
    std::vector<RawHit> hits;
    for (int p = 0; p < 4; ++p)
      for (int f = 0; f < 10; ++f) {
        RawHit h;
        h.pixel = static_cast<std::uint16_t>(p);
        h.fine = static_cast<std::uint8_t>(f);
        hits.push_back(h);
      }
    auto hist = accumulate_density(hits, cfg);
    CHECK(hist.tdc_total(0) == 40);
    for (int t = 1; t < 64; ++t) CHECK(hist.tdc_total(t) == 0);
  }

  TEST_CASE("empty stream is an error") {
    SensorConfig cfg;
    CHECK_THROWS_AS(accumulate_density({}, cfg), InsufficientStatsError);
  }

  TEST_CASE("merge is associative with sharding") {
    SensorConfig cfg;
    std::mt19937_64 gen(3);
    std::vector<RawHit> hits(5000);
    for (auto& h : hits) {
      h.pixel = static_cast<std::uint16_t>(gen() % 256);
      h.fine = static_cast<std::uint8_t>(gen() % 140);
    }
    auto whole = accumulate_density(hits, cfg);
    DensityHistogram sharded(cfg);
    for (std::size_t k = 0; k < hits.size(); k += 777) {
      DensityHistogram shard(cfg);
      shard.add_all(std::span(hits).subspan(k, std::min<std::size_t>(777, hits.size() - k)), cfg);
      sharded.merge(shard);
    }
    CHECK(sharded.counts == whole.counts);
    CHECK(sharded.total == whole.total);
  }
}

TEST_SUITE("fit_tdc_calibration") {
  TEST_CASE("equal occupancy gives nominal widths") {
    SensorConfig cfg;
    DensityHistogram hist(cfg);
    for (auto& c : hist.counts) c = 1000;
    hist.total = 1000 * hist.counts.size();
    auto report = fit_tdc_calibration(hist, cfg, 1000);
    CHECK(report.warnings.empty());
    for (int t = 0; t < cfg.n_tdcs; ++t)
      for (double w : report.calibration.widths(t))
        CHECK(w == doctest::Approx(2500.0 / 140.0).epsilon(1e-12));
  }

  TEST_CASE("two-bin toy: widths proportional to occupancy") {
    auto cfg = tiny_config(2, 2);
    cfg.fine_bins_per_tdc = 2;
    cfg.coarse_period_ps = 2500.0;
    cfg.nominal_lsb_ps = 1250.0;
    cfg.validate();
    DensityHistogram hist(cfg);
    hist.counts = {200, 500, 200, 500};
    hist.total = 1400;
    auto report = fit_tdc_calibration(hist, cfg, 1);
    CHECK(report.calibration.widths(0)[0] == doctest::Approx(2500.0 * 2.0 / 7.0).epsilon(1e-12));
    CHECK(report.calibration.widths(0)[1] == doctest::Approx(2500.0 * 5.0 / 7.0).epsilon(1e-12));
  }

  TEST_CASE("under-populated TDC error names the deficit") {
    SensorConfig cfg;
    DensityHistogram hist(cfg);
    for (auto& c : hist.counts) c = 10;
    hist.counts[0 * 140 + 5] = 0; // TDC 0 slightly short
    try {
      fit_tdc_calibration(hist, cfg, 1400);
      FAIL("expected InsufficientStatsError");
    } catch (const InsufficientStatsError& e) {
      std::string msg = e.what();
      CHECK(msg.find("TDC 0") != std::string::npos);
      CHECK(msg.find("10 short of 1400") != std::string::npos);
    }
  }

  TEST_CASE("zero-count bins give zero width and a warning") {
    SensorConfig cfg;
    DensityHistogram hist(cfg);
    for (auto& c : hist.counts) c = 100;
    hist.counts[3 * 140 + 77] = 0;
    auto report = fit_tdc_calibration(hist, cfg, 100);
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("TDC 3 bin 77") != std::string::npos);
    CHECK(report.calibration.widths(3)[77] == 0.0);
    // Invariants hold regardless.
    double sum = 0.0;
    for (double w : report.calibration.widths(3)) sum += w;
    CHECK(std::abs(sum - 2500.0) <= 1e-9 * 2500.0);
  }

  TEST_CASE("round trip: injected DNL recovered from uniform illumination") {
    auto cfg = tiny_config(8, 2); // 2 TDCs keeps this quick
    DetectorEffects effects;
    effects.pde = 1.0;
    effects.dcr_hz_per_pixel = 0.0;
    effects.jitter_sigma_ps = 0.0;
    effects.true_dnl = random_dnl(cfg, 10.0, 26.0, 17);
    UniformSource src{1.25e5}; // per pixel; 1e6 per TDC over 500 cycles
    Dispersion disp;

    DensityHistogram hist(cfg);
    simulate(cfg, effects, src, disp, 500, 1234, [&](CycleData&& data) {
      hist.add_all(data.hits, cfg);
    }, SimOptions{false});
    REQUIRE(hist.tdc_total(0) > 900000);

    auto report = fit_tdc_calibration(hist, cfg, 100000);
    double ss = 0.0;
    int n = 0;
    for (int t = 0; t < cfg.n_tdcs; ++t) {
      auto rec = report.calibration.widths(t);
      auto truth = effects.true_dnl->widths(t);
      for (int b = 0; b < cfg.fine_bins_per_tdc; ++b) {
        double rel = (rec[b] - truth[b]) / truth[b];
        ss += rel * rel;
        ++n;
      }
    }
    CHECK(std::sqrt(ss / n) <= 0.02);
  }
}

TEST_SUITE("pair_differences") {
  TEST_CASE("noiseless two-pixel offsets measured exactly") {
    auto cfg = tiny_config(2, 2);
    auto hits = pulse_train({0.0, 10.0}, 50, 8e6);
    auto m = accumulate_pair_differences(hits, 5000.0, cfg);
    CHECK(m.count(0, 1) == 50);
    CHECK(m.mean_dt_ps(1, 0) == 10.0);
    CHECK(m.mean_dt_ps(0, 1) == -10.0);
    CHECK(m.stderr_ps(0, 1) == 0.0);
  }

  TEST_CASE("antisymmetry by construction") {
    auto cfg = tiny_config(4, 4);
    auto hits = pulse_train({0.0, 3.0, -2.0, 7.5}, 40, 8e6);
    auto m = accumulate_pair_differences(hits, 5000.0, cfg);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        if (i == j) continue;
        CHECK(m.mean_dt_ps(i, j) + m.mean_dt_ps(j, i) == 0.0);
        CHECK(m.count(i, j) == m.count(j, i));
      }
  }

  TEST_CASE("multiple hits per pixel per pulse use the earliest") {
    auto cfg = tiny_config(2, 2);
    std::vector<CalibratedHit> hits;
    auto push = [&](int pixel, double t) {
      CalibratedHit h;
      h.pixel = static_cast<std::uint16_t>(pixel);
      h.time_ps = t;
      hits.push_back(h);
    };
    push(0, 1000.0);
    push(1, 1012.0);
    push(1, 1900.0); // afterpulse-like second hit inside the window
    std::sort(hits.begin(), hits.end(),
              [](const CalibratedHit& a, const CalibratedHit& b) { return a.time_ps < b.time_ps; });
    auto m = accumulate_pair_differences(hits, 5000.0, cfg);
    CHECK(m.count(0, 1) == 1);
    CHECK(m.mean_dt_ps(0, 1) == -12.0);
  }

  TEST_CASE("stderr matches jitter * sqrt(2) / sqrt(count) on simulated flashes") {
    auto cfg = tiny_config(16, 4);
    DetectorEffects effects;
    effects.pde = 1.0;
    effects.dcr_hz_per_pixel = 0.0;
    effects.jitter_sigma_ps = 40.0;
    PulsedLaser src{125000.0, 1.0};
    Dispersion disp;

    PairDifferenceMatrix m(cfg.n_pixels);
    auto cal = TdcCalibration::identity(cfg);
    auto zeros = OffsetTable::zeros(cfg.n_pixels);
    int n_pulses = 0;
    simulate(cfg, effects, src, disp, 4, 55, [&](CycleData&& data) {
      std::vector<CalibratedHit> decoded;
      for (const RawHit& h : data.hits) decoded.push_back(decode_calibrated(h, cfg, cal, zeros));
      std::sort(decoded.begin(), decoded.end(),
                [](const CalibratedHit& a, const CalibratedHit& b) { return a.time_ps < b.time_ps; });
      m.add_cycle(decoded, 5000.0);
      n_pulses += 500;
    }, SimOptions{false});
    REQUIRE(n_pulses == 2000);

    // Quantization adds (lsb^2/12) per hit on top of the 40 ps jitter.
    double lsb = cfg.nominal_lsb_ps;
    double expected = std::sqrt(2.0 * (40.0 * 40.0 + lsb * lsb / 12.0) / n_pulses);
    for (int i = 0; i < cfg.n_pixels; ++i)
      for (int j = i + 1; j < cfg.n_pixels; ++j) {
        CHECK(m.count(i, j) == static_cast<std::uint64_t>(n_pulses));
        CHECK(m.stderr_ps(i, j) == doctest::Approx(expected).epsilon(0.08));
      }
  }
}

TEST_SUITE("solve_offsets") {
  TEST_CASE("exact differences over all pairs recover the offsets") {
    auto cfg = tiny_config(3, 3);
    auto m = PairDifferenceMatrix::from_offsets({0.0, 10.0, -5.0}, 100);
    auto table = solve_offsets(m, cfg);
    CHECK(table.offset_ps[0] == 0.0);
    CHECK(table.offset_ps[1] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(table.offset_ps[2] == doctest::Approx(-5.0).epsilon(1e-12));
    CHECK(table.gauge_fixed());
  }

  TEST_CASE("consistent chain composes") {
    auto cfg = tiny_config(3, 3);
    PairDifferenceMatrix m(3);
    for (int k = 0; k < 40; ++k) {
      m.add_observation(1, 0, 4.0);
      m.add_observation(2, 1, 6.0);
    }
    auto table = solve_offsets(m, cfg);
    CHECK(table.offset_ps[1] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(table.offset_ps[2] == doctest::Approx(10.0).epsilon(1e-12));
  }

  TEST_CASE("gauge invariance is exact for identical difference matrices") {
    auto cfg = tiny_config(8, 2);
    std::mt19937_64 gen(11);
    std::vector<double> base(8);
    // Offsets on a 2^-10 grid so that +7 is exact in floating point.
    for (auto& o : base) o = std::floor((gen() % 1024000) / 1024.0 * 1024.0) / 1024.0 - 500.0;
    std::vector<double> shifted(base);
    for (auto& o : shifted) o += 7.0;

    auto sol_a = solve_offsets(PairDifferenceMatrix::from_offsets(base, 64, 0.5), cfg);
    auto sol_b = solve_offsets(PairDifferenceMatrix::from_offsets(shifted, 64, 0.5), cfg);
    for (int p = 0; p < 8; ++p) CHECK(sol_a.offset_ps[p] == sol_b.offset_ps[p]);
  }

  TEST_CASE("disconnected pixels are reported") {
    auto cfg = tiny_config(4, 4);
    PairDifferenceMatrix m(4);
    for (int k = 0; k < 40; ++k) m.add_observation(1, 0, 2.0);
    try {
      solve_offsets(m, cfg);
      FAIL("expected DomainError");
    } catch (const DomainError& e) {
      std::string msg = e.what();
      CHECK(msg.find("2") != std::string::npos);
      CHECK(msg.find("3") != std::string::npos);
    }
  }

  TEST_CASE("count scaling leaves the solution unchanged") {
    auto cfg = tiny_config(8, 2);
    DetectorEffects effects;
    effects.pde = 1.0;
    effects.dcr_hz_per_pixel = 0.0;
    effects.jitter_sigma_ps = 40.0;
    effects.true_offsets = random_offsets(8, -300.0, 300.0, 21);
    PulsedLaser src{125000.0, 1.0};
    Dispersion disp;

    PairDifferenceMatrix m(8);
    auto cal = TdcCalibration::identity(cfg);
    auto zeros = OffsetTable::zeros(8);
    simulate(cfg, effects, src, disp, 2, 3, [&](CycleData&& data) {
      std::vector<CalibratedHit> decoded;
      for (const RawHit& h : data.hits) decoded.push_back(decode_calibrated(h, cfg, cal, zeros));
      std::sort(decoded.begin(), decoded.end(),
                [](const CalibratedHit& a, const CalibratedHit& b) { return a.time_ps < b.time_ps; });
      m.add_cycle(decoded, 5000.0);
    }, SimOptions{false});

    PairDifferenceMatrix scaled = m;
    for (int k = 0; k < 9; ++k) scaled.merge(m); // counts x10, same means
    auto sol_a = solve_offsets(m, cfg);
    auto sol_b = solve_offsets(scaled, cfg);
    for (int p = 0; p < 8; ++p)
      CHECK(sol_a.offset_ps[p] == doctest::Approx(sol_b.offset_ps[p]).epsilon(1e-9));
  }

  TEST_CASE("weighted residuals are orthogonal to the incidence columns") {
    auto cfg = tiny_config(16, 4);
    DetectorEffects effects;
    effects.pde = 1.0;
    effects.dcr_hz_per_pixel = 0.0;
    effects.jitter_sigma_ps = 40.0;
    effects.true_offsets = random_offsets(16, -500.0, 500.0, 2);
    PulsedLaser src{125000.0, 1.0};
    Dispersion disp;

    PairDifferenceMatrix m(16);
    auto cal = TdcCalibration::identity(cfg);
    auto zeros = OffsetTable::zeros(16);
    simulate(cfg, effects, src, disp, 2, 13, [&](CycleData&& data) {
      std::vector<CalibratedHit> decoded;
      for (const RawHit& h : data.hits) decoded.push_back(decode_calibrated(h, cfg, cal, zeros));
      std::sort(decoded.begin(), decoded.end(),
                [](const CalibratedHit& a, const CalibratedHit& b) { return a.time_ps < b.time_ps; });
      m.add_cycle(decoded, 5000.0);
    }, SimOptions{false});

    SolveOffsetsOptions opts;
    auto sol = solve_offsets(m, cfg, opts);

    // gradient_k = sum over equations of w * r * (d eq / d o_k)
    std::vector<double> grad(16, 0.0);
    double res_norm = 0.0;
    for (int i = 0; i < 16; ++i)
      for (int j = i + 1; j < 16; ++j) {
        if (m.count(i, j) < opts.min_pair_count) continue;
        double se = std::max(m.stderr_ps(i, j), opts.stderr_floor_ps);
        double w = 1.0 / (se * se);
        double r = m.mean_dt_ps(i, j) - (sol.offset_ps[i] - sol.offset_ps[j]);
        grad[i] += w * r;
        grad[j] -= w * r;
        res_norm += w * r * r;
      }
    res_norm = std::sqrt(res_norm);
    for (int k = 1; k < 16; ++k) CHECK(std::abs(grad[k]) <= 1e-8 * (res_norm + 1.0));
  }

  TEST_CASE("full round trip recovers injected offsets to the picosecond") {
    auto cfg = tiny_config(16, 4);
    DetectorEffects effects;
    effects.pde = 1.0;
    effects.dcr_hz_per_pixel = 0.0;
    effects.jitter_sigma_ps = 40.0;
    effects.true_offsets = random_offsets(16, -500.0, 500.0, 77);
    PulsedLaser src{125000.0, 1.0};
    Dispersion disp;

    PairDifferenceMatrix m(16);
    auto cal = TdcCalibration::identity(cfg);
    auto zeros = OffsetTable::zeros(16);
    simulate(cfg, effects, src, disp, 4, 14, [&](CycleData&& data) {
      std::vector<CalibratedHit> decoded;
      for (const RawHit& h : data.hits) decoded.push_back(decode_calibrated(h, cfg, cal, zeros));
      std::sort(decoded.begin(), decoded.end(),
                [](const CalibratedHit& a, const CalibratedHit& b) { return a.time_ps < b.time_ps; });
      m.add_cycle(decoded, 5000.0);
    }, SimOptions{false});

    auto sol = solve_offsets(m, cfg);
    const auto& truth = effects.true_offsets->offset_ps;
    double ss = 0.0;
    for (int p = 0; p < 16; ++p) {
      double aligned = truth[p] - truth[0];
      ss += (sol.offset_ps[p] - aligned) * (sol.offset_ps[p] - aligned);
      CHECK(sol.sigma_ps[p] < 1.0);
    }
    CHECK(std::sqrt(ss / 16.0) <= 1.0);
  }
}

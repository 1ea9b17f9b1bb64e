#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "pspd/sensor.hpp"

using namespace pspd;

TEST_SUITE("sensor_config") {
  TEST_CASE("defaults are consistent") {
    SensorConfig cfg;
    cfg.validate();
    CHECK(cfg.pixels_per_tdc() == 4);
    CHECK(cfg.fine_bins_per_tdc * cfg.nominal_lsb_ps == doctest::Approx(2500.0).epsilon(1e-12));
    CHECK(cfg.max_coarse() == 1599999);
  }

  TEST_CASE("invariant violations are rejected") {
    SensorConfig cfg;
    cfg.n_pixels = 255; // not divisible by 64
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = SensorConfig{};
    cfg.nominal_lsb_ps = 17.9; // 140 * 17.9 = 2506
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = SensorConfig{};
    cfg.buffer_cap_per_pixel_per_cycle = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = SensorConfig{};
    cfg.cycle_length_ps = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_SUITE("tdc_of_pixel") {
  TEST_CASE("block mapping at defaults") {
    SensorConfig cfg;
    CHECK(tdc_of_pixel(0, cfg) == 0);
    CHECK(tdc_of_pixel(3, cfg) == 0);
    CHECK(tdc_of_pixel(4, cfg) == 1);
    CHECK(tdc_of_pixel(255, cfg) == 63);
  }

  TEST_CASE("out of range pixel") {
    SensorConfig cfg;
    CHECK_THROWS_AS(tdc_of_pixel(256, cfg), DomainError);
    CHECK_THROWS_AS(tdc_of_pixel(-1, cfg), DomainError);
  }
}

TEST_SUITE("decode_nominal") {
  TEST_CASE("bin-center convention") {
    SensorConfig cfg;
    CHECK(decode_nominal({0, 0, 0, 0, 0}, cfg) == doctest::Approx(8.9285).epsilon(0.002));
    CHECK(decode_nominal({0, 1, 0, 0, 0}, cfg) == doctest::Approx(2508.9285).epsilon(1e-5));
    CHECK(decode_nominal({0, 0, 0, 139, 0}, cfg) == doctest::Approx(2491.07).epsilon(1e-5));
  }

  TEST_CASE("invariant violations") {
    SensorConfig cfg;
    RawHit h;
    h.fine = 140;
    CHECK_THROWS_AS(decode_nominal(h, cfg), DomainError);
    h = RawHit{};
    h.pixel = 256;
    CHECK_THROWS_AS(decode_nominal(h, cfg), DomainError);
    h = RawHit{};
    h.coarse = 1600000; // at cycle end
    CHECK_THROWS_AS(decode_nominal(h, cfg), DomainError);
  }
}

TEST_SUITE("tdc_calibration") {
  TEST_CASE("identity calibration reproduces nominal decode everywhere") {
    SensorConfig cfg;
    auto cal = TdcCalibration::identity(cfg);
    auto offsets = OffsetTable::zeros(cfg.n_pixels);
    for (std::uint32_t coarse : {0u, 1u, 77u, 1599999u})
      for (int fine = 0; fine < cfg.fine_bins_per_tdc; ++fine) {
        RawHit h;
        h.pixel = 42;
        h.coarse = coarse;
        h.fine = static_cast<std::uint8_t>(fine);
        CHECK(decode_calibrated(h, cfg, cal, offsets).time_ps ==
              doctest::Approx(decode_nominal(h, cfg)).epsilon(1e-12));
      }
  }

  TEST_CASE("two-bin toy widths") {
    SensorConfig cfg;
    cfg.n_pixels = 2;
    cfg.n_tdcs = 1;
    cfg.fine_bins_per_tdc = 2;
    cfg.coarse_period_ps = 35.0;
    cfg.nominal_lsb_ps = 17.5;
    cfg.validate();
    auto cal = TdcCalibration::from_widths({{10.0, 25.0}}, 35.0);
    auto offsets = OffsetTable::zeros(2);
    RawHit h;
    h.fine = 1;
    CHECK(decode_calibrated(h, cfg, cal, offsets).time_ps == doctest::Approx(22.5));
    h.fine = 0;
    CHECK(decode_calibrated(h, cfg, cal, offsets).time_ps == doctest::Approx(5.0));
  }

  TEST_CASE("offset subtraction and edge flag") {
    SensorConfig cfg;
    auto cal = TdcCalibration::identity(cfg);
    auto offsets = OffsetTable::zeros(cfg.n_pixels);
    offsets.offset_ps[3] = 5.0;

    RawHit h;
    h.pixel = 3;
    auto c = decode_calibrated(h, cfg, cal, offsets);
    CHECK(c.time_ps == doctest::Approx(decode_nominal(h, cfg) - 5.0));
    CHECK_FALSE(c.edge);

    // A large positive offset pushes bin 0 below zero: clamped and flagged.
    offsets.offset_ps[3] = 100.0;
    c = decode_calibrated(h, cfg, cal, offsets);
    CHECK(c.time_ps == 0.0);
    CHECK(c.edge);
  }

  TEST_CASE("renormalization: widths sum to the coarse period") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(1.0, 30.0);
    std::vector<std::vector<double>> widths(4, std::vector<double>(140));
    for (auto& per_tdc : widths)
      for (auto& w : per_tdc) w = u(gen);
    auto cal = TdcCalibration::from_widths(widths, 2500.0);
    for (int t = 0; t < 4; ++t) {
      double sum = 0.0;
      for (double w : cal.widths(t)) sum += w;
      CHECK(std::abs(sum - 2500.0) <= 1e-9 * 2500.0);
      CHECK(cal.edges(t).front() == 0.0);
      CHECK(cal.edges(t).back() == 2500.0);
      for (std::size_t i = 1; i < cal.edges(t).size(); ++i)
        CHECK(cal.edges(t)[i] >= cal.edges(t)[i - 1]);
    }
  }

  TEST_CASE("rejects negative widths and dimension mismatches") {
    CHECK_THROWS_AS(TdcCalibration::from_widths({{-1.0, 10.0}}, 35.0), ConfigError);
    SensorConfig cfg;
    auto toy = TdcCalibration::from_widths({{10.0, 25.0}}, 35.0);
    auto offsets = OffsetTable::zeros(cfg.n_pixels);
    RawHit h;
    CHECK_THROWS_AS(decode_calibrated(h, cfg, toy, offsets), ConfigError);
    auto cal = TdcCalibration::identity(cfg);
    auto short_offsets = OffsetTable::zeros(8);
    CHECK_THROWS_AS(decode_calibrated(h, cfg, cal, short_offsets), ConfigError);
  }
}

TEST_SUITE("decode properties") {
  TEST_CASE("monotonic in (coarse, fine) for strictly positive widths") {
    SensorConfig cfg;
    cfg.n_pixels = 4;
    cfg.n_tdcs = 1;
    cfg.fine_bins_per_tdc = 16;
    cfg.coarse_period_ps = 2500.0;
    cfg.nominal_lsb_ps = 2500.0 / 16;
    cfg.validate();
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> w(16);
      for (auto& x : w) x = u(gen);
      auto cal = TdcCalibration::from_widths({w}, 2500.0);
      auto offsets = OffsetTable::zeros(4);
      double prev = -1.0;
      for (std::uint32_t coarse = 0; coarse < 3; ++coarse)
        for (int fine = 0; fine < 16; ++fine) {
          RawHit h;
          h.coarse = coarse;
          h.fine = static_cast<std::uint8_t>(fine);
          double t = decode_calibrated(h, cfg, cal, offsets).time_ps;
          CHECK(t > prev);
          prev = t;
        }
    }
  }

  TEST_CASE("gauge invariance: global offset shift moves all times equally") {
    SensorConfig cfg;
    auto cal = TdcCalibration::identity(cfg);
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> off(-400.0, 400.0);
    OffsetTable base = OffsetTable::zeros(cfg.n_pixels);
    for (auto& o : base.offset_ps) o = off(gen);
    OffsetTable shifted = base;
    for (auto& o : shifted.offset_ps) o += 7.0;

    std::uniform_int_distribution<int> pix(0, cfg.n_pixels - 1);
    std::uniform_int_distribution<std::uint32_t> coarse(1, 1000);
    std::uniform_int_distribution<int> fine(0, 139);
    std::vector<double> t_base, t_shift;
    for (int k = 0; k < 200; ++k) {
      RawHit h;
      h.pixel = static_cast<std::uint16_t>(pix(gen));
      h.coarse = coarse(gen);
      h.fine = static_cast<std::uint8_t>(fine(gen));
      t_base.push_back(decode_calibrated(h, cfg, cal, base).time_ps);
      t_shift.push_back(decode_calibrated(h, cfg, cal, shifted).time_ps);
    }
    for (std::size_t k = 0; k < t_base.size(); ++k)
      CHECK(t_shift[k] - t_base[k] == doctest::Approx(-7.0).epsilon(1e-12));
    // Pairwise differences unchanged.
    for (std::size_t k = 1; k < t_base.size(); ++k)
      CHECK(t_shift[k] - t_shift[0] == doctest::Approx(t_base[k] - t_base[0]).epsilon(1e-9));
  }

  TEST_CASE("fine_of_remainder inverts bin_center") {
    auto cal = TdcCalibration::from_widths({{10.0, 0.0, 25.0, 5.0}}, 40.0);
    CHECK(cal.fine_of_remainder(0, 0.0) == 0);
    CHECK(cal.fine_of_remainder(0, 9.99) == 0);
    CHECK(cal.fine_of_remainder(0, 10.0) == 2); // zero-width bin 1 never selected
    CHECK(cal.fine_of_remainder(0, 34.9) == 2);
    CHECK(cal.fine_of_remainder(0, 35.0) == 3);
    CHECK(cal.fine_of_remainder(0, 40.0) == 3);
  }
}

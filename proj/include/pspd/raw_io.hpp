#pragma once

#include <cstdint>
#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pspd/sensor.hpp"
#include "pspd/sim.hpp"

namespace pspd {

// Raw timestamp container:
//   magic "PSPD" | u16 LE format_version = 1 | u32 LE config_length |
//   config JSON ({"sensor": ..., "provenance": ...}, UTF-8) | records.
// Each record is 12 bytes LE:
//   u32 cycle | u16 pixel | u8 fine | u8 flags (bit 0 = edge) | u32 coarse.
inline constexpr char kRawMagic[4] = {'P', 'S', 'P', 'D'};
inline constexpr std::uint16_t kRawFormatVersion = 1;
inline constexpr std::size_t kRawRecordSize = 12;

// Streaming writer. Records must arrive in (cycle, pixel, coarse, fine)
// order; every record is validated against the config.
class RawWriter {
public:
  RawWriter(const std::string& path, const SensorConfig& cfg,
            const nlohmann::json& provenance = {});
  ~RawWriter();
  RawWriter(const RawWriter&) = delete;
  RawWriter& operator=(const RawWriter&) = delete;

  void write(const RawHit& hit);
  void write(std::span<const RawHit> hits);
  std::uint64_t count() const { return count_; }
  void close();

private:
  std::string path_;
  SensorConfig cfg_;
  std::FILE* file_ = nullptr;
  std::vector<unsigned char> buf_;
  std::uint64_t count_ = 0;
  RawHit last_{};
  bool any_ = false;
};

// Writes hits (sorted into canonical order first) and returns the record
// count. File bytes are a deterministic function of (cfg, provenance, hits).
std::uint64_t write_raw(const std::string& path, const SensorConfig& cfg,
                        std::span<const RawHit> hits, const nlohmann::json& provenance = {});

// Streaming reader with constant memory use. Validation failures report the
// byte offset of the offending record.
class RawReader {
public:
  explicit RawReader(const std::string& path);
  ~RawReader();
  RawReader(const RawReader&) = delete;
  RawReader& operator=(const RawReader&) = delete;

  const SensorConfig& config() const { return cfg_; }
  const nlohmann::json& provenance() const { return provenance_; }

  // Appends up to max_hits records to out; returns the number read (0 at EOF).
  std::size_t read_chunk(std::vector<RawHit>& out, std::size_t max_hits);

  std::uint64_t records_read() const { return records_; }

private:
  std::string path_;
  std::FILE* file_ = nullptr;
  SensorConfig cfg_;
  nlohmann::json provenance_;
  std::vector<unsigned char> buf_;
  std::size_t buf_pos_ = 0, buf_len_ = 0;
  std::uint64_t data_start_ = 0;
  std::uint64_t records_ = 0;
  std::uint32_t max_coarse_ = 0;

  bool refill();
};

// Convenience full read.
std::pair<SensorConfig, std::vector<RawHit>> read_raw(const std::string& path);

// Truth sidecar CSV: pair_id,kind,emission_time_ps,wavelength_nm,pixel.
class TruthCsvWriter {
public:
  explicit TruthCsvWriter(const std::string& path);
  ~TruthCsvWriter();

  void write(const TruthRecord& r);
  void write(std::span<const TruthRecord> records);
  std::uint64_t count() const { return count_; }
  void close();

private:
  std::FILE* file_ = nullptr;
  std::string path_;
  std::uint64_t count_ = 0;
};

std::vector<TruthRecord> read_truth_csv(const std::string& path);

// FNV-1a 64-bit content digest, "fnv1a64:<16 hex digits>". Reproducibility
// check, not a cryptographic hash.
std::string digest_file(const std::string& path);
std::string digest_bytes(std::span<const unsigned char> bytes);

} // namespace pspd

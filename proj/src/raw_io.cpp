#include "pspd/raw_io.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstring>
#include <sstream>

#include "pspd/config_json.hpp"

namespace pspd {

namespace {

constexpr std::size_t kIoBufRecords = 1 << 16;

inline void put_u16(unsigned char* p, std::uint16_t v) {
  p[0] = static_cast<unsigned char>(v);
  p[1] = static_cast<unsigned char>(v >> 8);
}

inline void put_u32(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v);
  p[1] = static_cast<unsigned char>(v >> 8);
  p[2] = static_cast<unsigned char>(v >> 16);
  p[3] = static_cast<unsigned char>(v >> 24);
}

inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void encode_record(unsigned char* p, const RawHit& h) {
  put_u32(p, h.cycle_index);
  put_u16(p + 4, h.pixel);
  p[6] = h.fine;
  p[7] = h.flags;
  put_u32(p + 8, h.coarse);
}

} // namespace

RawWriter::RawWriter(const std::string& path, const SensorConfig& cfg,
                     const nlohmann::json& provenance)
    : path_(path), cfg_(cfg) {
  cfg.validate();
  file_ = std::fopen(path.c_str(), "wb");
  if (!file_) throw IoError("cannot open " + path + " for writing");
  buf_.resize(kIoBufRecords * kRawRecordSize);

  nlohmann::json config{{"sensor", to_json(cfg)}};
  config["provenance"] = provenance.is_null() ? nlohmann::json::object() : provenance;
  std::string config_str = config.dump();

  unsigned char header[10];
  std::memcpy(header, kRawMagic, 4);
  put_u16(header + 4, kRawFormatVersion);
  put_u32(header + 6, static_cast<std::uint32_t>(config_str.size()));
  if (std::fwrite(header, 1, sizeof(header), file_) != sizeof(header) ||
      std::fwrite(config_str.data(), 1, config_str.size(), file_) != config_str.size())
    throw IoError("failed writing header to " + path);
}

RawWriter::~RawWriter() {
  if (file_) std::fclose(file_);
}

void RawWriter::write(const RawHit& hit) { write(std::span<const RawHit>(&hit, 1)); }

void RawWriter::write(std::span<const RawHit> hits) {
  if (!file_) throw IoError("raw writer already closed");
  std::size_t n = 0;
  for (const RawHit& h : hits) {
    try {
      validate_hit(h, cfg_);
    } catch (const DomainError& e) {
      throw DomainError("write_raw: record " + std::to_string(count_ + n) + ": " + e.what());
    }
    if ((h.flags & ~RawHit::kEdgeFlag) != 0)
      throw DomainError("write_raw: record " + std::to_string(count_ + n) +
                        ": reserved flag bits set");
    if (any_ && raw_hit_order(h, last_))
      throw DomainError("write_raw: record " + std::to_string(count_ + n) +
                        " out of (cycle, pixel, coarse, fine) order");
    last_ = h;
    any_ = true;
    encode_record(&buf_[n * kRawRecordSize], h);
    ++n;
    if (n == kIoBufRecords) {
      if (std::fwrite(buf_.data(), kRawRecordSize, n, file_) != n)
        throw IoError("failed writing records to " + path_);
      count_ += n;
      n = 0;
    }
  }
  if (n) {
    if (std::fwrite(buf_.data(), kRawRecordSize, n, file_) != n)
      throw IoError("failed writing records to " + path_);
    count_ += n;
  }
}

void RawWriter::close() {
  if (!file_) return;
  int rc = std::fclose(file_);
  file_ = nullptr;
  if (rc != 0) throw IoError("failed closing " + path_);
}

std::uint64_t write_raw(const std::string& path, const SensorConfig& cfg,
                        std::span<const RawHit> hits, const nlohmann::json& provenance) {
  std::vector<RawHit> sorted(hits.begin(), hits.end());
  std::stable_sort(sorted.begin(), sorted.end(), raw_hit_order);
  RawWriter writer(path, cfg, provenance);
  writer.write(sorted);
  writer.close();
  return sorted.size();
}

RawReader::RawReader(const std::string& path) : path_(path) {
  file_ = std::fopen(path.c_str(), "rb");
  if (!file_) throw IoError("cannot open " + path);

  unsigned char header[10];
  if (std::fread(header, 1, sizeof(header), file_) != sizeof(header))
    throw IoError(path + ": truncated header");
  if (std::memcmp(header, kRawMagic, 4) != 0)
    throw IoError(path + ": bad magic, expected \"PSPD\"");
  std::uint16_t version = get_u16(header + 4);
  if (version != kRawFormatVersion)
    throw IoError(path + ": unsupported format version " + std::to_string(version));
  std::uint32_t config_len = get_u32(header + 6);
  if (config_len > (1u << 26))
    throw IoError(path + ": implausible config length " + std::to_string(config_len));

  std::string config_str(config_len, '\0');
  if (std::fread(config_str.data(), 1, config_len, file_) != config_len)
    throw IoError(path + ": truncated config block");
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(config_str);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": config is not valid JSON: " + e.what());
  }
  if (!config.contains("sensor")) throw IoError(path + ": config lacks \"sensor\"");
  cfg_ = sensor_config_from_json(config.at("sensor"));
  if (config.contains("provenance")) provenance_ = config.at("provenance");
  max_coarse_ = cfg_.max_coarse();
  data_start_ = 10 + config_len;
  buf_.resize(kIoBufRecords * kRawRecordSize);
}

RawReader::~RawReader() {
  if (file_) std::fclose(file_);
}

bool RawReader::refill() {
  // Preserve a partial record tail, if any.
  std::size_t tail = buf_len_ - buf_pos_;
  if (tail) std::memmove(buf_.data(), buf_.data() + buf_pos_, tail);
  buf_pos_ = 0;
  buf_len_ = tail;
  std::size_t got = std::fread(buf_.data() + tail, 1, buf_.size() - tail, file_);
  buf_len_ += got;
  if (buf_len_ == 0) return false;
  if (buf_len_ < kRawRecordSize) {
    std::uint64_t offset = data_start_ + records_ * kRawRecordSize;
    throw IoError(path_ + ": truncated record at byte offset " + std::to_string(offset) +
                  " (" + std::to_string(buf_len_) + " trailing bytes)");
  }
  return true;
}

std::size_t RawReader::read_chunk(std::vector<RawHit>& out, std::size_t max_hits) {
  std::size_t n = 0;
  while (n < max_hits) {
    if (buf_len_ - buf_pos_ < kRawRecordSize) {
      if (!refill()) break;
      continue;
    }
    const unsigned char* p = buf_.data() + buf_pos_;
    RawHit h;
    h.cycle_index = get_u32(p);
    h.pixel = get_u16(p + 4);
    h.fine = p[6];
    h.flags = p[7];
    h.coarse = get_u32(p + 8);

    if (h.pixel >= cfg_.n_pixels || h.fine >= cfg_.fine_bins_per_tdc ||
        h.coarse > max_coarse_ || (h.flags & ~RawHit::kEdgeFlag) != 0) {
      std::uint64_t offset = data_start_ + records_ * kRawRecordSize;
      std::ostringstream msg;
      msg << path_ << ": invalid record at byte offset " << offset << " (pixel " << h.pixel
          << ", fine " << int(h.fine) << ", coarse " << h.coarse << ", flags "
          << int(h.flags) << ")";
      throw IoError(msg.str());
    }
    out.push_back(h);
    buf_pos_ += kRawRecordSize;
    ++records_;
    ++n;
  }
  return n;
}

std::pair<SensorConfig, std::vector<RawHit>> read_raw(const std::string& path) {
  RawReader reader(path);
  std::vector<RawHit> hits;
  while (reader.read_chunk(hits, kIoBufRecords) != 0) {
  }
  return {reader.config(), std::move(hits)};
}

TruthCsvWriter::TruthCsvWriter(const std::string& path) : path_(path) {
  file_ = std::fopen(path.c_str(), "wb");
  if (!file_) throw IoError("cannot open " + path + " for writing");
  std::fputs("pair_id,kind,emission_time_ps,wavelength_nm,pixel\n", file_);
}

TruthCsvWriter::~TruthCsvWriter() {
  if (file_) std::fclose(file_);
}

void TruthCsvWriter::write(const TruthRecord& r) {
  if (!file_) throw IoError("truth writer already closed");
  char line[128];
  int n = 0;
  if (r.pair_id)
    n += std::snprintf(line + n, sizeof(line) - n, "%" PRIu64, *r.pair_id);
  n += std::snprintf(line + n, sizeof(line) - n, ",%s,",
                     r.kind == TruthRecord::Kind::photon ? "photon" : "dark");
  n += std::snprintf(line + n, sizeof(line) - n, "%.17g,", r.emission_time_ps);
  if (r.wavelength_nm)
    n += std::snprintf(line + n, sizeof(line) - n, "%.17g", *r.wavelength_nm);
  if (r.pixel)
    n += std::snprintf(line + n, sizeof(line) - n, ",%u\n", unsigned(*r.pixel));
  else
    n += std::snprintf(line + n, sizeof(line) - n, ",missed\n");
  std::fputs(line, file_);
  ++count_;
}

void TruthCsvWriter::write(std::span<const TruthRecord> records) {
  for (const TruthRecord& r : records) write(r);
}

void TruthCsvWriter::close() {
  if (!file_) return;
  int rc = std::fclose(file_);
  file_ = nullptr;
  if (rc != 0) throw IoError("failed closing " + path_);
}

std::vector<TruthRecord> read_truth_csv(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path);
  std::vector<TruthRecord> out;
  char line[256];
  bool header = true;
  while (std::fgets(line, sizeof(line), f)) {
    if (header) {
      header = false;
      continue;
    }
    std::string s(line);
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    if (s.empty()) continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    for (int k = 0; k < 5; ++k) {
      std::size_t comma = s.find(',', pos);
      fields.push_back(s.substr(pos, comma == std::string::npos ? comma : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (fields.size() != 5) {
      std::fclose(f);
      throw IoError(path + ": malformed truth row '" + s + "'");
    }
    TruthRecord r;
    if (!fields[0].empty()) r.pair_id = std::stoull(fields[0]);
    r.kind = fields[1] == "dark" ? TruthRecord::Kind::dark : TruthRecord::Kind::photon;
    r.emission_time_ps = std::stod(fields[2]);
    if (!fields[3].empty()) r.wavelength_nm = std::stod(fields[3]);
    if (fields[4] != "missed") r.pixel = static_cast<std::uint16_t>(std::stoul(fields[4]));
    out.push_back(r);
  }
  std::fclose(f);
  return out;
}

std::string digest_bytes(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016" PRIx64, h);
  return buf;
}

std::string digest_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  unsigned char buf[1 << 16];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0)
    for (std::size_t i = 0; i < got; ++i) {
      h ^= buf[i];
      h *= 0x100000001b3ULL;
    }
  std::fclose(f);
  char out[32];
  std::snprintf(out, sizeof(out), "fnv1a64:%016" PRIx64, h);
  return out;
}

} // namespace pspd

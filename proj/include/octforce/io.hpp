#pragma once

// Binary containers and JSON sidecars.
//
//   OCTF v1 / OCTA v1  "OCTF"|"OCTA", u32 version, u32 N_t, u32 record_len,
//                      u32 id_len + UTF-8 needle id, u64 seed,
//                      N_t x (record_len f32 samples, f32 force)
//   OCTW v1            "OCTW", u32 version, u32 count,
//                      count x (u32 name_len + name, u32 rank, rank x u32 dim, f64 data)
//
// All integers and floats are little-endian regardless of host order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "octforce/error.hpp"
#include "octforce/needle_sim.hpp"
#include "octforce/resnet1d.hpp"

namespace octforce {

using json = nlohmann::json;

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::string_view kRawMagic = "OCTF";
inline constexpr std::string_view kReconMagic = "OCTA";
inline constexpr std::string_view kWeightsMagic = "OCTW";

namespace detail {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  template <class U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  void u32(std::size_t v, std::string_view what) {
    require(v <= UINT32_MAX, ErrorKind::Format, std::string(what) + " does not fit in u32");
    uint(static_cast<std::uint32_t>(v));
  }
  void u64(std::uint64_t v) { uint(v); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

  void str(std::string_view s) {
    u32(s.size(), "string length");
    bytes(s);
  }

  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> buf, std::string path) : buf_(std::move(buf)), path_(std::move(path)) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  template <class U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::uint32_t u32() { return uint<std::uint32_t>(); }
  std::uint64_t u64() { return uint<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str() { return std::string(bytes(u32())); }

  std::size_t remaining() const { return buf_.size() - pos_; }

  [[noreturn]] void bad(const std::string& msg) const { fail(ErrorKind::Format, path_ + ": " + msg); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) bad("truncated file (needed " + std::to_string(n) + " more bytes)");
  }

  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace detail

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string() + " for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<char>(text.begin(), text.end()));
}

/// Same basename, ".json" extension.
inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  return p.replace_extension(".json");
}

// ---- JSON mappings ----

inline json to_json(const NeedleModel& m) {
  json j;
  j["spring_constant"] = m.spring_constant;
  j["rest_gap"] = m.rest_gap;
  j["reflectivity"] = m.reflectivity;
  j["source_center"] = m.source_center;
  j["source_bandwidth"] = m.source_bandwidth;
  j["chirp_coeffs"] = m.chirp_coeffs;
  j["noise_sigma"] = m.noise_sigma;
  j["saturation_force"] = m.saturation_force ? json(*m.saturation_force) : json(nullptr);
  j["drift_rate"] = m.drift_rate;
  return j;
}

/// Missing keys keep their default-model values.
inline NeedleModel needle_model_from_json(const json& j) {
  require(j.is_object(), ErrorKind::Config, "needle model must be a JSON object");
  NeedleModel m = NeedleModel::defaults();
  try {
    if (j.contains("spring_constant")) m.spring_constant = j.at("spring_constant").get<double>();
    if (j.contains("rest_gap")) m.rest_gap = j.at("rest_gap").get<double>();
    if (j.contains("reflectivity")) m.reflectivity = j.at("reflectivity").get<double>();
    if (j.contains("source_center")) m.source_center = j.at("source_center").get<double>();
    if (j.contains("source_bandwidth")) m.source_bandwidth = j.at("source_bandwidth").get<double>();
    if (j.contains("chirp_coeffs")) m.chirp_coeffs = j.at("chirp_coeffs").get<std::array<double, 4>>();
    if (j.contains("noise_sigma")) m.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("saturation_force")) {
      const auto& s = j.at("saturation_force");
      m.saturation_force = s.is_null() ? std::nullopt : std::optional<double>(s.get<double>());
    }
    if (j.contains("drift_rate")) m.drift_rate = j.at("drift_rate").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("needle model: ") + e.what());
  }
  m.validate();
  return m;
}

inline json to_json(const ArchSpec& s) {
  return json{{"variant", std::string(to_string(s.variant))},
              {"input_len", s.input_len},
              {"stem_channels", s.stem_channels},
              {"block_counts", s.block_counts},
              {"stage_channels", s.stage_channels}};
}

inline ArchSpec arch_spec_from_json(const json& j) {
  try {
    ArchSpec s = ArchSpec::make(parse_variant(j.at("variant").get<std::string>()),
                                j.at("input_len").get<std::size_t>());
    if (j.contains("stem_channels")) s.stem_channels = j.at("stem_channels").get<std::size_t>();
    if (j.contains("block_counts")) s.block_counts = j.at("block_counts").get<std::vector<std::size_t>>();
    if (j.contains("stage_channels"))
      s.stage_channels = j.at("stage_channels").get<std::vector<std::size_t>>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("arch spec: ") + e.what());
  }
}

inline json read_json(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---- OCTF / OCTA ----

inline std::vector<char> encode_dataset(const MScanDataset& ds) {
  ds.validate();
  detail::ByteWriter w;
  w.bytes(ds.record_length == kAScanLength ? kReconMagic : kRawMagic);
  w.u32(kFormatVersion, "version");
  w.u32(ds.size(), "N_t");
  w.u32(ds.record_length, "record length");
  w.str(ds.needle_id);
  w.u64(ds.rng_seed);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    for (float v : ds.record(n)) w.f32(v);
    w.f32(ds.forces[n]);
  }
  return w.buffer();
}

/// Writes the container plus, when model parameters are present, the JSON
/// sidecar next to it.
inline void write_dataset(const std::filesystem::path& path, const MScanDataset& ds) {
  require(ds.record_length == kSpectrumLength || ds.record_length == kAScanLength, ErrorKind::Format,
          "record length must be 1024 or 512");
  write_file(path, encode_dataset(ds));
  json side{{"needle_id", ds.needle_id}, {"rng_seed", ds.rng_seed}, {"record_length", ds.record_length}};
  side["model"] = ds.model_params ? to_json(*ds.model_params) : json(nullptr);
  write_json(sidecar_path(path), side);
}

inline MScanDataset decode_dataset(std::vector<char> bytes, const std::string& name) {
  detail::ByteReader r(std::move(bytes), name);
  const auto magic = r.bytes(4);
  std::size_t expected_len = 0;
  if (magic == kRawMagic)
    expected_len = kSpectrumLength;
  else if (magic == kReconMagic)
    expected_len = kAScanLength;
  else
    r.bad("bad magic '" + std::string(magic) + "', expected OCTF or OCTA");
  const auto version = r.u32();
  if (version != kFormatVersion) r.bad("unsupported version " + std::to_string(version));
  MScanDataset ds;
  const std::size_t n = r.u32();
  ds.record_length = r.u32();
  if (ds.record_length != expected_len)
    r.bad(std::string(magic) + " record length must be " + std::to_string(expected_len) + ", got " +
          std::to_string(ds.record_length));
  ds.needle_id = r.str();
  ds.rng_seed = r.u64();
  if (r.remaining() != n * (ds.record_length + 1) * 4)
    r.bad("payload size does not match N_t = " + std::to_string(n));
  ds.samples.reserve(n * ds.record_length);
  ds.forces.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < ds.record_length; ++j) ds.samples.push_back(r.f32());
    ds.forces.push_back(r.f32());
  }
  return ds;
}

/// Reads the container and, if present, the sidecar's model parameters.
inline MScanDataset read_dataset(const std::filesystem::path& path) {
  MScanDataset ds = decode_dataset(read_file(path), path.string());
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    const json j = read_json(side);
    if (j.contains("model") && !j.at("model").is_null()) ds.model_params = needle_model_from_json(j.at("model"));
  }
  return ds;
}

// ---- OCTW ----

struct WeightEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

inline std::vector<char> encode_weights(const std::vector<WeightEntry>& entries) {
  detail::ByteWriter w;
  w.bytes(kWeightsMagic);
  w.u32(kFormatVersion, "version");
  w.u32(entries.size(), "entry count");
  for (const auto& e : entries) {
    std::size_t n = 1;
    for (auto d : e.shape) n *= d;
    require(n == e.data.size(), ErrorKind::Shape, "weight entry " + e.name + " data does not match its shape");
    w.str(e.name);
    w.u32(e.shape.size(), "rank");
    for (auto d : e.shape) w.u32(d, "dimension");
    for (double v : e.data) w.f64(v);
  }
  return w.buffer();
}

inline std::vector<WeightEntry> decode_weights(std::vector<char> bytes, const std::string& name) {
  detail::ByteReader r(std::move(bytes), name);
  const auto magic = r.bytes(4);
  if (magic != kWeightsMagic) r.bad("bad magic '" + std::string(magic) + "', expected OCTW");
  const auto version = r.u32();
  if (version != kFormatVersion) r.bad("unsupported version " + std::to_string(version));
  const std::size_t count = r.u32();
  std::vector<WeightEntry> entries(count);
  for (auto& e : entries) {
    e.name = r.str();
    e.shape.resize(r.u32());
    std::size_t n = 1;
    for (auto& d : e.shape) {
      d = r.u32();
      n *= d;
    }
    if (r.remaining() < n * 8) r.bad("truncated data for " + e.name);
    e.data.resize(n);
    for (auto& v : e.data) v = r.f64();
  }
  if (r.remaining() != 0) r.bad("trailing bytes after last entry");
  return entries;
}

inline void write_weights(const std::filesystem::path& path, const std::vector<WeightEntry>& entries) {
  write_file(path, encode_weights(entries));
}

inline std::vector<WeightEntry> read_weights(const std::filesystem::path& path) {
  return decode_weights(read_file(path), path.string());
}

}  // namespace octforce

#pragma once

// On-disk formats: CSV tables, the dataset manifest, checkpoints.
//
// Numbers are written in shortest round-trip form, so a dataset read back is
// bit-identical to the one written and reruns produce byte-identical files.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "pidamage/error.hpp"
#include "pidamage/fleet.hpp"
#include "pidamage/stress_mlp.hpp"

namespace pidamage {

namespace fs = std::filesystem;

inline constexpr std::string_view kHistoriesHeader = "plane_id,cycle_index,delta_s_mpa";
inline constexpr std::string_view kTruthHeader = "plane_id,cycle_index,crack_m";
inline constexpr std::string_view kInspectionsHeader = "plane_id,crack_m";

// Buffered CSV row writer.
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, std::string_view header) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot open " + path.string() + " for writing");
    buf_.append(header);
    buf_.push_back('\n');
  }

  CsvWriter& field(double v) {
    sep();
    char tmp[32];
    auto [end, ec] = std::to_chars(tmp, tmp + sizeof tmp, v);
    buf_.append(tmp, end);
    return *this;
  }
  CsvWriter& field(std::size_t v) {
    sep();
    char tmp[24];
    auto [end, ec] = std::to_chars(tmp, tmp + sizeof tmp, v);
    buf_.append(tmp, end);
    return *this;
  }
  CsvWriter& field(std::string_view v) {
    sep();
    buf_.append(v);
    return *this;
  }
  void end_row() {
    buf_.push_back('\n');
    first_ = true;
    if (buf_.size() > (1u << 20)) flush();
  }
  void close() {
    flush();
    out_.close();
    if (!out_) throw DataError("failed writing " + path_.string());
  }
  ~CsvWriter() {
    if (out_.is_open()) {
      out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    }
  }

 private:
  void sep() {
    if (!first_) buf_.push_back(',');
    first_ = false;
  }
  void flush() {
    out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    buf_.clear();
  }

  fs::path path_;
  std::ofstream out_;
  std::string buf_;
  bool first_ = true;
};

// Line-oriented CSV reader; every failure names the file and line.
class CsvReader {
 public:
  CsvReader(const fs::path& path, std::string_view header) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    text_ = ss.str();
    std::string_view first;
    if (!next_line(first)) fail("missing header");
    if (first != header) fail("expected header '" + std::string(header) + "'");
  }

  // Splits the next non-empty line into exactly `n` fields. False at EOF.
  bool next(std::size_t n, std::vector<std::string_view>& fields) {
    std::string_view line;
    do {
      if (!next_line(line)) return false;
    } while (line.empty());
    fields.clear();
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != n)
      fail("expected " + std::to_string(n) + " fields, found " + std::to_string(fields.size()));
    return true;
  }

  double real(std::string_view f) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || p != f.data() + f.size() || !std::isfinite(v))
      fail("malformed number '" + std::string(f) + "'");
    return v;
  }

  std::size_t integer(std::string_view f) const {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc{} || p != f.data() + f.size())
      fail("malformed integer '" + std::string(f) + "'");
    return v;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path_.string() + ":" + std::to_string(line_) + ": " + what);
  }

 private:
  bool next_line(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    std::size_t end = text_.find('\n', pos_);
    if (end == std::string::npos) end = text_.size();
    line = std::string_view(text_).substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    ++line_;
    return true;
  }

  fs::path path_;
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

// Per-plane series keyed (plane_id, cycle_index), cycle_index starting at 1.
inline void write_series(const fs::path& path, std::string_view header,
                         std::span<const std::vector<double>> series) {
  CsvWriter w(path, header);
  for (std::size_t p = 0; p < series.size(); ++p)
    for (std::size_t c = 0; c < series[p].size(); ++c) {
      w.field(p).field(c + 1).field(series[p][c]);
      w.end_row();
    }
  w.close();
}

// Rows must be grouped by plane with ids 0, 1, 2, ... and cycles 1, 2, ...
inline std::vector<std::vector<double>> read_series(const fs::path& path, std::string_view header) {
  CsvReader r(path, header);
  std::vector<std::vector<double>> out;
  std::vector<std::string_view> f;
  while (r.next(3, f)) {
    const std::size_t plane = r.integer(f[0]);
    const std::size_t cycle = r.integer(f[1]);
    const double v = r.real(f[2]);
    if (plane == out.size()) out.emplace_back();
    if (plane + 1 != out.size()) r.fail("plane ids must be contiguous and ascending");
    if (cycle != out.back().size() + 1) r.fail("cycle indices must run 1, 2, ... per plane");
    out.back().push_back(v);
  }
  if (out.empty()) r.fail("no data rows");
  return out;
}

inline void write_histories(const fs::path& path, std::span<const std::vector<double>> h) {
  write_series(path, kHistoriesHeader, h);
}
inline std::vector<std::vector<double>> read_histories(const fs::path& path) {
  return read_series(path, kHistoriesHeader);
}
inline void write_truth(const fs::path& path, std::span<const std::vector<double>> t) {
  write_series(path, kTruthHeader, t);
}
inline std::vector<std::vector<double>> read_truth(const fs::path& path) {
  return read_series(path, kTruthHeader);
}

inline void write_inspections(const fs::path& path, std::span<const Inspection> obs) {
  CsvWriter w(path, kInspectionsHeader);
  for (const auto& o : obs) {
    w.field(o.plane_id).field(o.crack);
    w.end_row();
  }
  w.close();
}

inline std::vector<Inspection> read_inspections(const fs::path& path) {
  CsvReader r(path, kInspectionsHeader);
  std::vector<Inspection> out;
  std::vector<std::string_view> f;
  while (r.next(2, f)) {
    const Inspection o{r.integer(f[0]), r.real(f[1])};
    if (!(o.crack > 0.0)) r.fail("crack length must be positive");
    if (!out.empty() && o.plane_id <= out.back().plane_id)
      r.fail("plane ids must be strictly ascending");
    out.push_back(o);
  }
  if (out.empty()) r.fail("no data rows");
  return out;
}

// ---- JSON helpers ----

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

template <class Error = DataError>
nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path.string() + ": cannot open file");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline nlohmann::json to_json(const FleetSpec& spec) {
  nlohmann::json missions = nlohmann::json::array();
  for (const auto& m : spec.missions) missions.push_back({{"id", m.id}, {"delta_s", m.delta_s}});
  nlohmann::json mixes = nlohmann::json::array();
  for (const auto& m : spec.mixes) mixes.push_back({{"id", m.id}, {"missions", m.missions}});
  return {{"missions", missions}, {"mixes", mixes}, {"planes_per_mix", spec.planes_per_mix}};
}

inline FleetSpec fleet_spec_from_json(const nlohmann::json& j) {
  FleetSpec spec;
  spec.missions.clear();
  for (const auto& m : j.at("missions"))
    spec.missions.push_back({m.at("id").get<int>(), m.at("delta_s").get<double>()});
  spec.mixes.clear();
  for (const auto& m : j.at("mixes"))
    spec.mixes.push_back({m.at("id").get<int>(), m.at("missions").get<std::array<int, 2>>()});
  spec.planes_per_mix = j.at("planes_per_mix").get<std::size_t>();
  return spec;
}

inline nlohmann::json to_json(const ParisParams& p) {
  return {{"c", p.c}, {"m", p.m}, {"f", p.f}, {"trainable", p.trainable}};
}

inline ParisParams paris_from_json(const nlohmann::json& j) {
  ParisParams p;
  p.c = j.at("c").get<double>();
  p.m = j.at("m").get<double>();
  p.f = j.at("f").get<double>();
  p.trainable = j.at("trainable").get<bool>();
  return p;
}

// Everything needed to regenerate the dataset bit-for-bit.
inline nlohmann::json manifest_json(const FleetDataset& d) {
  return {{"seed", d.seed},
          {"years", d.years},
          {"flights_per_day", d.flights_per_day},
          {"paris", to_json(d.paris)},
          {"a0", d.a0},
          {"a_max", d.a_max},
          {"fleet", to_json(d.spec)},
          {"inspection",
           {{"year", d.inspection_year},
            {"n", d.inspections.size()},
            {"strategy", std::string(to_string(d.strategy))}}},
          {"files",
           {{"histories", "histories.csv"},
            {"truth", "truth.csv"},
            {"inspections", "inspections.csv"}}}};
}

// FNV-1a over the canonical (compact, key-sorted) manifest text, as 16 hex digits.
inline std::string manifest_hash(const nlohmann::json& manifest) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : manifest.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

inline void save_dataset(const FleetDataset& d, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  write_histories(dir / "histories.csv", d.histories);
  write_truth(dir / "truth.csv", d.true_crack);
  write_inspections(dir / "inspections.csv", d.inspections);
  write_json(dir / "manifest.json", manifest_json(d));
}

inline FleetDataset load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  const auto m = read_json(mpath);
  FleetDataset d;
  try {
    d.seed = m.at("seed").get<std::uint64_t>();
    d.years = m.at("years").get<std::size_t>();
    d.flights_per_day = m.at("flights_per_day").get<std::size_t>();
    d.paris = paris_from_json(m.at("paris"));
    d.a0 = m.at("a0").get<double>();
    d.a_max = m.at("a_max").get<double>();
    d.spec = fleet_spec_from_json(m.at("fleet"));
    d.inspection_year = m.at("inspection").at("year").get<std::size_t>();
    d.strategy = parse_strategy(m.at("inspection").at("strategy").get<std::string>());
    d.spec.validate();
    d.paris.validate();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(mpath.string() + ": " + e.what());
  } catch (const ContractViolation& e) {
    throw DataError(mpath.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(mpath.string() + ": " + e.what());
  }
  if (d.inspection_year < 1 || d.inspection_year > d.years)
    throw DataError(mpath.string() + ": inspection year outside the simulated years");
  d.airplanes = build_fleet(d.seed, d.spec);
  d.histories = read_histories(dir / "histories.csv");
  d.true_crack = read_truth(dir / "truth.csv");
  d.inspections = read_inspections(dir / "inspections.csv");

  const std::size_t cycles = cycles_for(d.years, d.flights_per_day);
  auto check_shape = [&](const std::vector<std::vector<double>>& s, const char* file) {
    if (s.size() != d.airplanes.size())
      throw DataError((dir / file).string() + ": expected " + std::to_string(d.airplanes.size()) +
                      " planes, found " + std::to_string(s.size()));
    for (std::size_t p = 0; p < s.size(); ++p)
      if (s[p].size() != cycles)
        throw DataError((dir / file).string() + ": plane " + std::to_string(p) + " has " +
                        std::to_string(s[p].size()) + " cycles, expected " +
                        std::to_string(cycles));
  };
  check_shape(d.histories, "histories.csv");
  check_shape(d.true_crack, "truth.csv");
  for (const auto& o : d.inspections)
    if (o.plane_id >= d.airplanes.size())
      throw DataError((dir / "inspections.csv").string() + ": unknown plane id " +
                      std::to_string(o.plane_id));
  return d;
}

// Network plus the hash of the dataset it was trained on.
inline nlohmann::json checkpoint_json(const MlpNetwork& net, const std::string& data_hash) {
  nlohmann::json j = to_json(net);
  j["manifest_hash"] = data_hash;
  return j;
}

struct Checkpoint {
  MlpNetwork network;
  std::string manifest_hash;  // empty when absent
};

inline Checkpoint load_checkpoint(const fs::path& path) {
  const auto j = read_json(path);
  try {
    Checkpoint c{mlp_from_json(j), j.value("manifest_hash", std::string{})};
    return c;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace pidamage

#pragma once

// Evaluator outputs as CSV, one file per figure, plus an index.json mapping
// figure ids to file names.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pidamage/evaluator.hpp"
#include "pidamage/io.hpp"

namespace pidamage {

inline void write_scatter(const fs::path& path, const EvalSummary* before, const EvalSummary& after) {
  CsvWriter w(path, "actual_m,predicted_m,phase");
  auto rows = [&](const EvalSummary& s, std::string_view phase) {
    for (const auto& p : s.scatter) {
      w.field(p.actual).field(p.predicted).field(phase);
      w.end_row();
    }
  };
  if (before) rows(*before, "before");
  rows(after, "after");
  w.close();
}

inline void write_ratio_band(const fs::path& path, const RatioBand& band) {
  CsvWriter w(path, "cycle,ratio_min,ratio_max");
  for (std::size_t c = 0; c < band.min.size(); ++c) {
    w.field(c + 1).field(band.min[c]).field(band.max[c]);
    w.end_row();
  }
  w.close();
}

inline void write_size_sweep(const fs::path& path, std::span<const SizeSweepPoint> pts) {
  CsvWriter w(path, "n_train,fleet_mse");
  for (const auto& p : pts) {
    w.field(p.n_train).field(p.fleet_mse);
    w.end_row();
  }
  w.close();
}

inline void write_distribution_sweep(const fs::path& path,
                                     std::span<const DistributionSweepPoint> pts) {
  CsvWriter w(path, "case,fleet_mse,ratio_min,ratio_max");
  for (const auto& p : pts) {
    w.field(to_string(p.strategy))
        .field(p.summary.mse)
        .field(p.summary.ratio_min)
        .field(p.summary.ratio_max);
    w.end_row();
  }
  w.close();
}

struct UnreliabilitySeries {
  double a_th = 0.0;
  std::vector<double> proportion;  // per cycle
};

inline void write_unreliability(const fs::path& path, std::span<const UnreliabilitySeries> series) {
  CsvWriter w(path, "cycle,a_th,proportion");
  for (const auto& s : series)
    for (std::size_t c = 0; c < s.proportion.size(); ++c) {
      w.field(c + 1).field(s.a_th).field(s.proportion[c]);
      w.end_row();
    }
  w.close();
}

// Adds or replaces one entry of <dir>/index.json.
inline void update_index(const fs::path& dir, const std::string& figure, const std::string& file) {
  const fs::path path = dir / "index.json";
  nlohmann::json index = nlohmann::json::object();
  if (fs::exists(path)) index = read_json(path);
  if (!index.is_object()) throw DataError(path.string() + ": expected an object");
  index[figure] = file;
  write_json(path, index);
}

}  // namespace pidamage

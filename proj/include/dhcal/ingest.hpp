#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dhcal/errors.hpp"
#include "dhcal/hysteresis.hpp"

namespace dhcal {

/// One 1 Hz scan of the lab instrumentation: trunk flow meters FT1..FTn
/// (FTi measures everything still in the trunk at position i), the two
/// root pressures, and the commanded set-points.
struct RawRecord {
  double t = 0.0;
  std::vector<double> ft;
  double pt1 = 0.0, pt2 = 0.0;
  std::vector<double> v;
};

enum class Provenance { exciting, realistic, synthetic };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::exciting: return "exciting";
    case Provenance::realistic: return "realistic";
    case Provenance::synthetic: return "synthetic";
  }
  return "?";
}

inline std::optional<Provenance> provenance_from_string(std::string_view s) {
  if (s == "exciting") return Provenance::exciting;
  if (s == "realistic") return Provenance::realistic;
  if (s == "synthetic") return Provenance::synthetic;
  return std::nullopt;
}

/// One steady-state load condition: window-averaged root pressure
/// difference, set-points (possibly deadband-filtered) and consumer flows.
struct Sample {
  double t = 0.0;  // window start time, s
  double dp0 = 0.0;
  std::vector<double> v;
  std::vector<double> q;
};

/// An ordered list of steady-state samples plus provenance metadata.
/// `time_scale` records compressed-time experiments (lab seconds per
/// reference second stay in the stamps; the factor is metadata only).
struct Dataset {
  std::string topology_ref;
  Provenance provenance = Provenance::synthetic;
  double time_scale = 1.0;
  std::vector<Sample> samples;

  std::size_t consumer_count() const {
    return samples.empty() ? 0 : samples.front().v.size();
  }
};

/// Per-consumer draws from the telescoping trunk meters:
/// q_i = FT_i - FT_{i+1}, with the last meter reading the last consumer
/// directly.  Negative differences pass through; windowing deals with them.
inline std::vector<double> consumer_flows(const RawRecord& raw) {
  if (raw.ft.empty()) throw DataError("record has no flow readings");
  std::vector<double> q(raw.ft.size());
  for (std::size_t i = 0; i + 1 < raw.ft.size(); ++i)
    q[i] = raw.ft[i] - raw.ft[i + 1];
  q.back() = raw.ft.back();
  return q;
}

/// Root pressure difference PT1 - PT2; negative values mean the pump is
/// off and are rejected later, at windowing.
inline double root_dp(const RawRecord& raw) { return raw.pt1 - raw.pt2; }

struct WindowingOptions {
  double window = 40.0;    // s
  double discard = 10.0;   // s dropped at each window start
  double max_gap = 2.0;    // s; larger cadence holes invalidate the window
  double negative_clip = 0.05;  // l/min; worse negatives reject the window
};

struct RejectedWindow {
  double window_start = 0.0;
  std::string reason;
};

/// Steady-state extraction: partitions the stream into consecutive
/// fixed-length windows, drops the settling head of each, and emits
/// per-window means.  A window is rejected (logged, not emitted) for
/// cadence holes, a nonpositive mean pressure difference, or a negative
/// mean flow beyond the sensor noise floor; small negatives clip to zero.
/// The trailing partial window is dropped.
inline Dataset windowed_samples(const std::vector<RawRecord>& records,
                                double window, double discard,
                                const WindowingOptions& opt = {},
                                std::vector<RejectedWindow>* rejects = nullptr) {
  if (!(window > discard && discard >= 0.0))
    throw std::invalid_argument("need window > discard >= 0");
  Dataset out;
  if (records.empty()) return out;

  const std::size_t n = records.front().ft.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const RawRecord& r = records[i];
    if (r.ft.size() != n || r.v.size() != n)
      throw DataError("record at t=" + std::to_string(r.t) +
                      " changes channel count");
    for (double f : r.ft)
      if (!std::isfinite(f))
        throw DataError("non-finite flow reading at t=" + std::to_string(r.t));
    if (!std::isfinite(r.pt1) || !std::isfinite(r.pt2))
      throw DataError("non-finite pressure reading at t=" +
                      std::to_string(r.t));
    for (double vv : r.v)
      if (!(vv >= 0.0 && vv <= 1.0))
        throw DataError("set-point outside [0, 1] at t=" + std::to_string(r.t));
    if (i > 0 && !(r.t > records[i - 1].t))
      throw DataError("timestamps not strictly increasing at t=" +
                      std::to_string(r.t));
  }

  auto reject = [&](double start, std::string reason) {
    if (rejects) rejects->push_back({start, std::move(reason)});
  };

  const double t0 = records.front().t;
  const double t_end = records.back().t + 1.0;  // a 1 Hz scan covers [t, t+1)
  std::size_t cursor = 0;
  for (int w = 0;; ++w) {
    const double start = t0 + w * window;
    const double stop = start + window;
    if (stop > t_end + 1e-9) break;

    while (cursor < records.size() && records[cursor].t < start) ++cursor;
    std::size_t first = cursor, last = first;
    while (last < records.size() && records[last].t < stop) ++last;

    // Cadence audit over the whole window span, ends included.
    bool gap = first == last;
    double prev = start;
    for (std::size_t i = first; i < last && !gap; ++i) {
      if (records[i].t - prev > opt.max_gap) gap = true;
      prev = records[i].t;
    }
    if (!gap && stop - prev > opt.max_gap) gap = true;
    if (gap) {
      reject(start, "cadence gap exceeds " + std::to_string(opt.max_gap) +
                        " s");
      cursor = last;
      continue;
    }

    Sample s;
    s.t = start;
    s.v.assign(n, 0.0);
    s.q.assign(n, 0.0);
    int count = 0;
    for (std::size_t i = first; i < last; ++i) {
      if (records[i].t < start + discard) continue;
      const auto q = consumer_flows(records[i]);
      for (std::size_t c = 0; c < n; ++c) {
        s.v[c] += records[i].v[c];
        s.q[c] += q[c];
      }
      s.dp0 += root_dp(records[i]);
      ++count;
    }
    cursor = last;
    if (count == 0) {
      reject(start, "no records after discard interval");
      continue;
    }
    s.dp0 /= count;
    for (std::size_t c = 0; c < n; ++c) {
      s.v[c] /= count;
      s.q[c] /= count;
    }

    if (!(s.dp0 > 0.0)) {
      reject(start, "nonpositive pressure difference (pump off)");
      continue;
    }
    bool bad_flow = false;
    for (std::size_t c = 0; c < n && !bad_flow; ++c) {
      if (s.q[c] < -opt.negative_clip) {
        reject(start, "mean flow " + std::to_string(s.q[c]) + " at consumer " +
                          std::to_string(c + 1) + " below noise floor");
        bad_flow = true;
      } else if (s.q[c] < 0.0) {
        s.q[c] = 0.0;
      }
    }
    if (bad_flow) continue;
    out.samples.push_back(std::move(s));
  }
  return out;
}

/// Deadband-filters the commanded set-points of a raw stream in place,
/// channel by channel (the pre-windowing default order).
inline std::vector<RawRecord> apply_deadband(std::vector<RawRecord> records,
                                             double delta) {
  if (records.empty() || delta == 0.0) return records;
  const std::size_t n = records.front().v.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> series(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) series[i] = records[i].v[c];
    const auto filtered = filter_setpoint_values(series, delta);
    for (std::size_t i = 0; i < records.size(); ++i) records[i].v[c] = filtered[i];
  }
  return records;
}

/// Same filter applied after windowing, on the sample sequence (the
/// alternative order, behind a pipeline flag).
inline Dataset apply_deadband(Dataset dataset, double delta) {
  if (dataset.samples.empty() || delta == 0.0) return dataset;
  const std::size_t n = dataset.samples.front().v.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> series(dataset.samples.size());
    for (std::size_t i = 0; i < series.size(); ++i)
      series[i] = dataset.samples[i].v[c];
    const auto filtered = filter_setpoint_values(series, delta);
    for (std::size_t i = 0; i < series.size(); ++i)
      dataset.samples[i].v[c] = filtered[i];
  }
  return dataset;
}

namespace csv_detail {

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  out.push_back(cell);
  for (auto& c : out) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.erase(c.begin());
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t')) c.pop_back();
  }
  return out;
}

inline double parse_double(const std::string& cell, const std::string& what) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end)
    throw DataError("cannot parse '" + cell + "' as a number in " + what);
  if (std::isnan(value)) throw DataError("NaN value in " + what);
  return value;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace csv_detail

/// Header-name bridge for raw CSVs whose columns follow a different naming
/// scheme; matching is case-insensitive.
struct ColumnMap {
  std::string t = "t";
  std::string ft_prefix = "ft";
  std::string pt1 = "pt1";
  std::string pt2 = "pt2";
  std::string v_prefix = "v";
};

/// Reads the raw schema `t,ft1..ftN,pt1,pt2,v1..vN`.  The consumer count
/// is inferred from the header; a missing column is named in the error.
inline std::vector<RawRecord> load_raw_csv(std::istream& in,
                                           const ColumnMap& map = {}) {
  std::string line;
  do {
    if (!std::getline(in, line)) throw DataError("raw CSV is empty");
  } while (!line.empty() && line[0] == '#');
  const auto header = csv_detail::split(line);

  int t_col = -1, pt1_col = -1, pt2_col = -1;
  std::vector<int> ft_cols, v_cols;
  auto index_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (csv_detail::lower(header[i]) == csv_detail::lower(name))
        return static_cast<int>(i);
    return -1;
  };
  t_col = index_of(map.t);
  pt1_col = index_of(map.pt1);
  pt2_col = index_of(map.pt2);
  for (int k = 1;; ++k) {
    const int c = index_of(map.ft_prefix + std::to_string(k));
    if (c < 0) break;
    ft_cols.push_back(c);
  }
  for (int k = 1;; ++k) {
    const int c = index_of(map.v_prefix + std::to_string(k));
    if (c < 0) break;
    v_cols.push_back(c);
  }
  if (t_col < 0) throw DataError("raw CSV is missing column '" + map.t + "'");
  if (pt1_col < 0)
    throw DataError("raw CSV is missing column '" + map.pt1 + "'");
  if (pt2_col < 0)
    throw DataError("raw CSV is missing column '" + map.pt2 + "'");
  if (ft_cols.empty())
    throw DataError("raw CSV is missing column '" + map.ft_prefix + "1'");
  if (v_cols.size() != ft_cols.size())
    throw DataError("raw CSV has " + std::to_string(ft_cols.size()) +
                    " flow columns but " + std::to_string(v_cols.size()) +
                    " set-point columns");

  std::vector<RawRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = csv_detail::split(line);
    if (cells.size() < header.size())
      throw DataError("raw CSV line " + std::to_string(lineno) +
                      " has too few cells");
    const std::string where = "line " + std::to_string(lineno);
    RawRecord r;
    r.t = csv_detail::parse_double(cells[t_col], where);
    r.pt1 = csv_detail::parse_double(cells[pt1_col], where);
    r.pt2 = csv_detail::parse_double(cells[pt2_col], where);
    for (int c : ft_cols) r.ft.push_back(csv_detail::parse_double(cells[c], where));
    for (int c : v_cols) r.v.push_back(csv_detail::parse_double(cells[c], where));
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<RawRecord> load_raw_csv(const std::string& path,
                                           const ColumnMap& map = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return load_raw_csv(in, map);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void save_raw_csv(const std::vector<RawRecord>& records,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  const std::size_t n = records.empty() ? 0 : records.front().ft.size();
  out << "t";
  for (std::size_t i = 1; i <= n; ++i) out << ",ft" << i;
  out << ",pt1,pt2";
  for (std::size_t i = 1; i <= n; ++i) out << ",v" << i;
  out << "\n";
  for (const RawRecord& r : records) {
    out << csv_detail::format_double(r.t);
    for (double f : r.ft) out << ',' << csv_detail::format_double(f);
    out << ',' << csv_detail::format_double(r.pt1) << ','
        << csv_detail::format_double(r.pt2);
    for (double vv : r.v) out << ',' << csv_detail::format_double(vv);
    out << "\n";
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

/// Writes the processed schema `t,dp0,v1..vN,q1..qN` preceded by one
/// metadata comment; numbers keep full precision so round-trips are
/// lossless.
inline void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  const std::size_t n = dataset.consumer_count();
  out << "# provenance=" << to_string(dataset.provenance)
      << " time_scale=" << csv_detail::format_double(dataset.time_scale);
  if (!dataset.topology_ref.empty()) out << " topology=" << dataset.topology_ref;
  out << "\n";
  out << "t,dp0";
  for (std::size_t i = 1; i <= n; ++i) out << ",v" << i;
  for (std::size_t i = 1; i <= n; ++i) out << ",q" << i;
  out << "\n";
  for (const Sample& s : dataset.samples) {
    out << csv_detail::format_double(s.t) << ','
        << csv_detail::format_double(s.dp0);
    for (double vv : s.v) out << ',' << csv_detail::format_double(vv);
    for (double qq : s.q) out << ',' << csv_detail::format_double(qq);
    out << "\n";
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

struct LoadOptions {
  WindowingOptions windowing;
  ColumnMap columns;
  std::vector<RejectedWindow>* rejects = nullptr;
};

/// Loads either schema.  A processed file is returned as-is; a raw file
/// runs through consumer_flows/root_dp and windowing with the options
/// given (defaults: 40 s windows, 10 s discard).
inline Dataset load_dataset(const std::string& path,
                            const LoadOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  Dataset meta;
  std::string line;
  bool saw_meta = false;
  std::streampos data_start = in.tellg();
  while (std::getline(in, line)) {
    if (line.empty()) {
      data_start = in.tellg();
      continue;
    }
    if (line[0] == '#') {
      // Parse `key=value` tokens from the metadata comment.
      std::istringstream ls(line.substr(1));
      std::string token;
      while (ls >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq), val = token.substr(eq + 1);
        if (key == "provenance") {
          if (auto p = provenance_from_string(val)) meta.provenance = *p;
        } else if (key == "time_scale") {
          meta.time_scale = csv_detail::parse_double(val, "metadata");
        } else if (key == "topology") {
          meta.topology_ref = val;
        }
      }
      saw_meta = true;
      data_start = in.tellg();
      continue;
    }
    break;
  }

  const auto header = csv_detail::split(line);
  const bool processed =
      header.size() >= 2 && csv_detail::lower(header[1]) == "dp0";
  if (!processed) {
    in.clear();
    in.seekg(data_start);
    const auto records = load_raw_csv(in, opt.columns);
    Dataset d = windowed_samples(records, opt.windowing.window,
                                 opt.windowing.discard, opt.windowing,
                                 opt.rejects);
    if (saw_meta) {
      d.provenance = meta.provenance;
      d.time_scale = meta.time_scale;
      d.topology_ref = meta.topology_ref;
    } else {
      d.provenance = Provenance::exciting;
    }
    return d;
  }

  // Processed schema: t,dp0,v1..vN,q1..qN.
  if ((header.size() - 2) % 2 != 0)
    throw DataError(path + ": processed CSV has unpaired v/q columns");
  const std::size_t n = (header.size() - 2) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    if (csv_detail::lower(header[2 + i]) != "v" + std::to_string(i + 1))
      throw DataError(path + ": expected column v" + std::to_string(i + 1) +
                      ", found '" + header[2 + i] + "'");
    if (csv_detail::lower(header[2 + n + i]) != "q" + std::to_string(i + 1))
      throw DataError(path + ": expected column q" + std::to_string(i + 1) +
                      ", found '" + header[2 + n + i] + "'");
  }

  Dataset d = meta;
  std::size_t lineno = 1;
  double prev_t = 0.0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = csv_detail::split(line);
    if (cells.size() < header.size())
      throw DataError(path + ": line " + std::to_string(lineno) +
                      " has too few cells");
    const std::string where = path + " line " + std::to_string(lineno);
    Sample s;
    s.t = csv_detail::parse_double(cells[0], where);
    s.dp0 = csv_detail::parse_double(cells[1], where);
    for (std::size_t i = 0; i < n; ++i)
      s.v.push_back(csv_detail::parse_double(cells[2 + i], where));
    for (std::size_t i = 0; i < n; ++i)
      s.q.push_back(csv_detail::parse_double(cells[2 + n + i], where));
    if (!d.samples.empty() && !(s.t > prev_t))
      throw DataError(path + ": timestamps not strictly increasing at line " +
                      std::to_string(lineno));
    prev_t = s.t;
    d.samples.push_back(std::move(s));
  }
  return d;
}

/// Writes one rejected window per line: `window_start reason`.
inline void save_reject_log(const std::vector<RejectedWindow>& rejects,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& r : rejects)
    out << csv_detail::format_double(r.window_start) << ' ' << r.reason << "\n";
}

}  // namespace dhcal

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dhcal/components.hpp"
#include "dhcal/errors.hpp"
#include "dhcal/ingest.hpp"

namespace dhcal {

enum class Direction { unlabeled, opening, closing, unchanged };

inline const char* to_string(Direction d) {
  switch (d) {
    case Direction::unlabeled: return "unlabeled";
    case Direction::opening: return "opening";
    case Direction::closing: return "closing";
    case Direction::unchanged: return "unchanged";
  }
  return "?";
}

/// Sign of the set-point move into each sample, per valve.  The first
/// sample has no predecessor and stays unlabeled.
inline std::vector<std::vector<Direction>> direction_split(
    const Dataset& dataset) {
  const std::size_t V = dataset.consumer_count();
  std::vector<std::vector<Direction>> label(
      V, std::vector<Direction>(dataset.samples.size(), Direction::unlabeled));
  for (std::size_t t = 1; t < dataset.samples.size(); ++t)
    for (std::size_t i = 0; i < V; ++i) {
      const double dv = dataset.samples[t].v[i] - dataset.samples[t - 1].v[i];
      label[i][t] = dv > 0.0   ? Direction::opening
                    : dv < 0.0 ? Direction::closing
                               : Direction::unchanged;
    }
  return label;
}

namespace eval_detail {

/// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> sorted, double p) {
  if (sorted.empty()) return std::nan("");
  if (sorted.size() == 1) return sorted[0];
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace eval_detail

struct ValveReport {
  // Parallel arrays, one entry per evaluated sample.
  std::vector<double> t, setpoint, observed, predicted, error;
  std::vector<Direction> direction;
  std::vector<char> in_band;  // set-point inside the training band

  double mean_flow = 0.0;   // mean observed draw
  double mean_error = 0.0;
  double mae = 0.0;
  // 5th, 25th, 50th, 75th, 95th error quantiles.
  std::array<double, 5> quantiles{};
  double within_band_fraction = 0.0;  // |error| <= report band
  std::optional<std::pair<double, double>> train_band;  // 5th/95th set-points
};

struct PredictionReport {
  double band = 0.2;  // l/min
  std::vector<ValveReport> valves;
  std::size_t samples_used = 0, samples_skipped = 0;
};

/// Builds the full diagnostic report.  Failed predictions (empty rows)
/// are skipped, not fatal; a training dataset adds per-valve set-point
/// coverage bands from its 5th/95th quantiles.
inline PredictionReport error_report(
    const Dataset& dataset, const std::vector<std::vector<double>>& predictions,
    const Dataset* training = nullptr, double band = 0.2) {
  if (predictions.size() != dataset.samples.size())
    throw DataError("prediction rows (" + std::to_string(predictions.size()) +
                    ") do not align with samples (" +
                    std::to_string(dataset.samples.size()) + ")");
  if (!(band > 0.0)) throw std::invalid_argument("band must be positive");
  const std::size_t V = dataset.consumer_count();
  for (std::size_t t = 0; t < predictions.size(); ++t)
    if (!predictions[t].empty() && predictions[t].size() != V)
      throw DataError("prediction row " + std::to_string(t) +
                      " has the wrong consumer count");

  PredictionReport rep;
  rep.band = band;
  rep.valves.resize(V);

  const auto labels = direction_split(dataset);
  for (std::size_t i = 0; i < V; ++i) {
    if (training) {
      std::vector<double> vs;
      for (const Sample& s : training->samples) vs.push_back(s.v.at(i));
      std::sort(vs.begin(), vs.end());
      if (!vs.empty())
        rep.valves[i].train_band = {eval_detail::quantile(vs, 0.05),
                                    eval_detail::quantile(vs, 0.95)};
    }
  }

  for (std::size_t t = 0; t < dataset.samples.size(); ++t) {
    if (predictions[t].empty()) {
      ++rep.samples_skipped;
      continue;
    }
    ++rep.samples_used;
    const Sample& s = dataset.samples[t];
    for (std::size_t i = 0; i < V; ++i) {
      ValveReport& vr = rep.valves[i];
      vr.t.push_back(s.t);
      vr.setpoint.push_back(s.v[i]);
      vr.observed.push_back(s.q[i]);
      vr.predicted.push_back(predictions[t][i]);
      vr.error.push_back(s.q[i] - predictions[t][i]);
      vr.direction.push_back(labels[i][t]);
      const bool in = !vr.train_band ||
                      (s.v[i] >= vr.train_band->first &&
                       s.v[i] <= vr.train_band->second);
      vr.in_band.push_back(in ? 1 : 0);
    }
  }

  for (ValveReport& vr : rep.valves) {
    const std::size_t n = vr.error.size();
    if (n == 0) continue;
    double flow = 0.0, err = 0.0, abs_err = 0.0, within = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      flow += vr.observed[k];
      err += vr.error[k];
      abs_err += std::abs(vr.error[k]);
      if (std::abs(vr.error[k]) <= band) within += 1.0;
    }
    vr.mean_flow = flow / static_cast<double>(n);
    vr.mean_error = err / static_cast<double>(n);
    vr.mae = abs_err / static_cast<double>(n);
    vr.within_band_fraction = within / static_cast<double>(n);
    std::vector<double> sorted = vr.error;
    std::sort(sorted.begin(), sorted.end());
    const double ps[5] = {0.05, 0.25, 0.5, 0.75, 0.95};
    for (int k = 0; k < 5; ++k)
      vr.quantiles[static_cast<std::size_t>(k)] =
          eval_detail::quantile(sorted, ps[k]);
  }
  return rep;
}

/// Mean error while opening minus mean error while closing, per valve;
/// absent when either movement class has no samples.
inline std::vector<std::optional<double>> hysteresis_gap(
    const PredictionReport& report) {
  std::vector<std::optional<double>> gaps;
  for (const ValveReport& vr : report.valves) {
    double open_sum = 0.0, close_sum = 0.0;
    std::size_t open_n = 0, close_n = 0;
    for (std::size_t k = 0; k < vr.error.size(); ++k) {
      if (vr.direction[k] == Direction::opening) {
        open_sum += vr.error[k];
        ++open_n;
      } else if (vr.direction[k] == Direction::closing) {
        close_sum += vr.error[k];
        ++close_n;
      }
    }
    if (open_n == 0 || close_n == 0)
      gaps.push_back(std::nullopt);
    else
      gaps.push_back(open_sum / static_cast<double>(open_n) -
                     close_sum / static_cast<double>(close_n));
  }
  return gaps;
}

/// Writes plot-ready data files into `dir`: per-valve error scatter,
/// fixed-width error histograms, optional admittance curves on a 0.01
/// set-point grid, and a summary.json tying it together.  All numbers
/// are full precision, so downstream recomputation is exact.
inline void export_plots(const PredictionReport& report, const std::string& dir,
                         const HydraulicModel* model = nullptr) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir))
    throw Error("cannot create output directory '" + dir + "'");

  const auto gaps = hysteresis_gap(report);
  nlohmann::json summary;
  summary["band"] = report.band;
  summary["samples_used"] = report.samples_used;
  summary["samples_skipped"] = report.samples_skipped;
  summary["valves"] = nlohmann::json::array();

  for (std::size_t i = 0; i < report.valves.size(); ++i) {
    const ValveReport& vr = report.valves[i];
    const std::string tag = "v" + std::to_string(i + 1);

    {
      std::ofstream out(fs::path(dir) / ("errors_" + tag + ".csv"));
      if (!out) throw Error("cannot write errors file for " + tag);
      out << "t,v,q,qhat,e,direction,in_band\n";
      for (std::size_t k = 0; k < vr.error.size(); ++k)
        out << csv_detail::format_double(vr.t[k]) << ','
            << csv_detail::format_double(vr.setpoint[k]) << ','
            << csv_detail::format_double(vr.observed[k]) << ','
            << csv_detail::format_double(vr.predicted[k]) << ','
            << csv_detail::format_double(vr.error[k]) << ','
            << to_string(vr.direction[k]) << ','
            << (vr.in_band[k] ? '1' : '0') << "\n";
    }

    {
      std::ofstream out(fs::path(dir) / ("hist_" + tag + ".csv"));
      if (!out) throw Error("cannot write histogram for " + tag);
      out << "bin_lo,bin_hi,count\n";
      if (!vr.error.empty()) {
        const double width = 0.05;
        const auto [lo_it, hi_it] =
            std::minmax_element(vr.error.begin(), vr.error.end());
        const auto first = static_cast<long>(std::floor(*lo_it / width));
        const auto last = static_cast<long>(std::floor(*hi_it / width));
        for (long b = first; b <= last; ++b) {
          const double lo = width * static_cast<double>(b);
          const double hi = lo + width;
          std::size_t count = 0;
          for (double e : vr.error)
            if (e >= lo && (e < hi || (b == last && e <= hi))) ++count;
          out << csv_detail::format_double(lo) << ','
              << csv_detail::format_double(hi) << ',' << count << "\n";
        }
      }
    }

    if (model) {
      std::ofstream out(fs::path(dir) / ("curve_" + tag + ".csv"));
      if (!out) throw Error("cannot write curve for " + tag);
      out << "v,admittance\n";
      for (int g = 0; g <= 100; ++g) {
        const double v = static_cast<double>(g) / 100.0;
        const Resistance r = model->valve_resistance_at(i, v);
        const double adm =
            r.is_infinite() ? 0.0
                            : (r.value() == 0.0
                                   ? std::numeric_limits<double>::infinity()
                                   : 1.0 / std::sqrt(r.value()));
        out << csv_detail::format_double(v) << ','
            << csv_detail::format_double(adm) << "\n";
      }
    }

    nlohmann::json jv;
    jv["valve"] = tag;
    jv["count"] = vr.error.size();
    jv["mean_flow"] = vr.mean_flow;
    jv["mean_error"] = vr.mean_error;
    jv["mae"] = vr.mae;
    jv["q05"] = vr.quantiles[0];
    jv["q25"] = vr.quantiles[1];
    jv["q50"] = vr.quantiles[2];
    jv["q75"] = vr.quantiles[3];
    jv["q95"] = vr.quantiles[4];
    jv["within_band_fraction"] = vr.within_band_fraction;
    if (vr.train_band) {
      jv["train_band_lo"] = vr.train_band->first;
      jv["train_band_hi"] = vr.train_band->second;
    } else {
      jv["train_band_lo"] = nullptr;
      jv["train_band_hi"] = nullptr;
    }
    if (gaps[i])
      jv["hysteresis_gap"] = *gaps[i];
    else
      jv["hysteresis_gap"] = nullptr;
    summary["valves"].push_back(jv);
  }

  std::ofstream out(fs::path(dir) / "summary.json");
  if (!out) throw Error("cannot write summary.json");
  out << summary.dump(2) << "\n";

  // Plot rendering is out of scope, so every file ships with a plain
  // description of its columns for whatever tooling picks them up.
  std::ofstream readme(fs::path(dir) / "README.txt");
  if (!readme) throw Error("cannot write README.txt");
  readme
      << "Prediction report export, one file set per valve (v1, v2, ...).\n"
         "All flows in l/min, set-points dimensionless in [0, 1].\n"
         "\n"
         "errors_<valve>.csv   one row per evaluated sample\n"
         "  t          sample timestamp, seconds\n"
         "  v          commanded valve set-point\n"
         "  q          observed consumer flow\n"
         "  qhat       predicted consumer flow\n"
         "  e          prediction error, qhat - q\n"
         "  direction  set-point trend at the sample: opening, closing,\n"
         "             or unchanged (first sample is unchanged)\n"
         "  in_band    1 when v lies inside the training coverage band,\n"
         "             0 otherwise (always 1 without a training dataset)\n"
         "\n"
         "hist_<valve>.csv     error histogram, fixed 0.05 l/min bins\n"
         "  bin_lo, bin_hi     bin edges; a value on the shared edge\n"
         "                     counts toward the upper bin\n"
         "  count              samples in the bin\n"
         "\n"
         "curve_<valve>.csv    written only when a model is supplied\n"
         "  v           set-point grid, 0.00 to 1.00 in steps of 0.01\n"
         "  admittance  valve admittance 1/sqrt(r(v)); 0 when closed\n"
         "\n"
         "summary.json         per-valve statistics: sample count, mean\n"
         "  flow, mean error, mean absolute error, error quantiles (5th,\n"
         "  25th, 50th, 75th, 95th), within-band fraction for the report\n"
         "  band, training coverage band bounds (null without a training\n"
         "  dataset), and the opening-vs-closing hysteresis gap (null\n"
         "  when a direction has no samples).\n";
}

}  // namespace dhcal

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <thread>
#include <vector>

#include "stockflow/commerce/model.hpp"
#include "stockflow/metrics/analysis.hpp"
#include "stockflow/scenario/check.hpp"
#include "stockflow/scenario/output.hpp"

namespace stockflow::scenario {

// Row 3 of every per-class table is the aggregate.
inline constexpr std::size_t aggregate_row = commerce::class_count;
inline constexpr std::size_t row_count = commerce::class_count + 1;

inline std::string row_key(std::size_t row) {
  return row == aggregate_row ? "aggregate" : std::string(commerce::class_key(commerce::all_classes[row]));
}

struct RunSummary {
  std::uint64_t seed = 0;
  std::array<std::array<double, 3>, row_count> tail_mean{};  // [row][metric]
  metrics::LinearFit trend;                                  // aggregate cumulative revenue
  double mean_revenue_throughput = 0.0;                      // aggregate
  double total_revenue = 0.0;
  double total_payers = 0.0;
  double total_visits = 0.0;
};

struct Stats {
  double mean = 0.0;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
};

struct ReplicationSummary {
  std::size_t n_runs = 0;
  std::uint64_t base_seed = 0;
  std::array<std::array<Stats, 3>, row_count> metric{};  // [row][metric] over tail means
  Stats slope, r_squared, total_revenue;
  std::optional<ReferenceBands> reference;
  std::vector<BandVerdict> verdicts;  // replication mean vs widened reference
  std::vector<RunSummary> runs;

  bool pass() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const BandVerdict& v) { return v.pass; });
  }
};

inline RunSummary summarize_run(const metrics::MetricReport& report, std::uint64_t seed) {
  RunSummary s;
  s.seed = seed;
  for (std::size_t row = 0; row < row_count; ++row) {
    const metrics::ClassMetrics& m = row == aggregate_row ? report.aggregate : report.classes[row];
    for (auto k : metrics::all_metrics) s.tail_mean[row][static_cast<std::size_t>(k)] = m.band(k).mean;
  }
  s.trend = report.aggregate.trend;
  s.mean_revenue_throughput = report.aggregate.mean_revenue_throughput;
  s.total_revenue = report.aggregate.total_revenue;
  s.total_payers = report.aggregate.total_payers;
  s.total_visits = report.aggregate.total_visits;
  return s;
}

inline RunSummary run_one(commerce::Scenario scenario, std::uint64_t seed, const metrics::AnalysisOptions& options) {
  scenario.sim.seed = seed;
  const auto run = commerce::run_scenario(scenario);
  return summarize_run(metrics::analyze(run, scenario.sim.record_every, options), seed);
}

/// Runs seeds base_seed .. base_seed + n - 1. Each run owns its model and
/// streams, so `jobs` only changes wall time, never results.
inline ReplicationSummary replicate(const commerce::Scenario& scenario, std::size_t n_runs, std::uint64_t base_seed,
                                    std::size_t jobs = 1, metrics::AnalysisOptions options = {},
                                    std::optional<ReferenceBands> reference = std::nullopt) {
  if (n_runs < 1) throw Error(Errc::OutOfRange, "need at least one seed");
  commerce::require_valid(scenario);
  ReplicationSummary out;
  out.n_runs = n_runs;
  out.base_seed = base_seed;
  out.runs.resize(n_runs);

  jobs = std::clamp<std::size_t>(jobs, 1, n_runs);
  std::vector<std::exception_ptr> failures(jobs);
  {
    std::vector<std::jthread> workers;
    for (std::size_t j = 0; j < jobs; ++j) {
      workers.emplace_back([&, j] {
        try {
          for (std::size_t i = j; i < n_runs; i += jobs) out.runs[i] = run_one(scenario, base_seed + i, options);
        } catch (...) {
          failures[j] = std::current_exception();
        }
      });
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  auto add = [n = static_cast<double>(n_runs)](Stats& s, double x) {
    s.mean += x / n;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  };
  for (const RunSummary& r : out.runs) {
    for (std::size_t row = 0; row < row_count; ++row) {
      for (std::size_t k = 0; k < 3; ++k) add(out.metric[row][k], r.tail_mean[row][k]);
    }
    add(out.slope, r.trend.slope);
    add(out.r_squared, r.trend.r_squared);
    add(out.total_revenue, r.total_revenue);
  }
  // Summation order can push the mean a hair outside [min, max].
  auto tidy = [](Stats& s) { s.mean = std::clamp(s.mean, s.min, s.max); };
  for (auto& row : out.metric) {
    for (auto& s : row) tidy(s);
  }
  tidy(out.slope);
  tidy(out.r_squared);
  tidy(out.total_revenue);

  if (reference) {
    for (const auto& [key, ref] : reference->bands) {
      BandVerdict v;
      v.key = key;
      v.reference = ref;
      v.allowed = widen(ref, reference->tolerance);
      const auto dot = key.find('.');
      const std::string cls = key.substr(0, dot), metric = key.substr(dot + 1);
      for (std::size_t row = 0; row < row_count; ++row) {
        if (row_key(row) != cls) continue;
        for (auto k : metrics::all_metrics) {
          if (metrics::metric_key(k) != metric) continue;
          const double mean = out.metric[row][static_cast<std::size_t>(k)].mean;
          v.observed = Band{mean, mean};
        }
      }
      v.pass = v.observed && contains(v.allowed, *v.observed);
      out.verdicts.push_back(std::move(v));
    }
    out.reference = std::move(reference);
  }
  return out;
}

inline Json to_json(const Stats& s) { return Json{{"mean", s.mean}, {"min", s.min}, {"max", s.max}}; }

inline Json summary_json(const ReplicationSummary& s) {
  Json classes = Json::object();
  Json aggregate;
  for (std::size_t row = 0; row < row_count; ++row) {
    Json metrics_j = Json::object(), bands = Json::object();
    for (auto k : metrics::all_metrics) {
      const Stats& st = s.metric[row][static_cast<std::size_t>(k)];
      metrics_j[std::string(metrics::metric_key(k))] = to_json(st);
      bands[std::string(metrics::metric_key(k))] = {{"lo", st.min}, {"hi", st.max}};
    }
    Json body{{"metrics", metrics_j}, {"bands", bands}};
    if (row == aggregate_row) aggregate = body;
    else classes[row_key(row)] = body;
  }
  Json j{{"schema_version", schema_version},
         {"n_runs", s.n_runs},
         {"base_seed", s.base_seed},
         {"classes", classes},
         {"aggregate", aggregate},
         {"trend", {{"slope", to_json(s.slope)}, {"r_squared", to_json(s.r_squared)}}},
         {"total_revenue", to_json(s.total_revenue)}};
  if (s.reference) {
    Json verdicts = Json::array();
    for (const auto& v : s.verdicts) {
      verdicts.push_back({{"key", v.key},
                          {"observed_mean", v.observed ? Json(v.observed->lo) : Json(nullptr)},
                          {"reference", {v.reference.lo, v.reference.hi}},
                          {"allowed", {v.allowed.lo, v.allowed.hi}},
                          {"pass", v.pass}});
    }
    j["reference_check"] = {{"tolerance", s.reference->tolerance}, {"pass", s.pass()}, {"verdicts", verdicts}};
  }
  return j;
}

/// One row per seed with the tail means of every averaged metric.
inline void write_runs_csv(std::ostream& os, const ReplicationSummary& s) {
  os << "seed";
  for (std::size_t row = 0; row < row_count; ++row) {
    for (auto k : metrics::all_metrics) os << ',' << row_key(row) << '_' << metrics::metric_key(k);
  }
  os << ",trend_slope,trend_intercept,trend_r_squared,mean_revenue_throughput,total_revenue\n";
  for (const RunSummary& r : s.runs) {
    os << r.seed;
    for (const auto& row : r.tail_mean) {
      for (double x : row) os << ',' << format_number(x);
    }
    os << ',' << format_number(r.trend.slope) << ',' << format_number(r.trend.intercept) << ','
       << format_number(r.trend.r_squared) << ',' << format_number(r.mean_revenue_throughput) << ','
       << format_number(r.total_revenue) << '\n';
  }
}

}  // namespace stockflow::scenario

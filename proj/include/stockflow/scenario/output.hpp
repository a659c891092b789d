#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "stockflow/commerce/model.hpp"
#include "stockflow/error.hpp"
#include "stockflow/metrics/analysis.hpp"
#include "stockflow/scenario/document.hpp"

namespace stockflow::scenario {

/// Shortest decimal that round-trips, '.' separator regardless of locale.
inline std::string format_number(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

/// Writes through a sibling temp file and renames, so readers never see a
/// partial file.
inline void write_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  try {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::OutOfRange, "cannot write " + tmp.string());
    body(out);
    out.flush();
    if (!out) throw Error(Errc::OutOfRange, "write failed for " + tmp.string());
  } catch (...) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw;
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(Errc::OutOfRange, "cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_atomic(path, [&](std::ostream& os) { os << text; });
}

namespace detail {

struct Column {
  std::string name;
  std::function<double(std::size_t)> at;
};

inline void add_class_columns(std::vector<Column>& cols, const std::string& prefix, const commerce::ClassRunResult& r,
                              const metrics::ClassMetrics& m) {
  auto series = [&](const char* name, const std::vector<double>& s) {
    cols.push_back({prefix + "_" + name, [&s](std::size_t i) { return s[i]; }});
  };
  series("arrivals", r.arrivals);
  series("browsing", r.browsing);
  series("in_cart", r.in_cart);
  series("payers", r.payers);
  series("exit_no_purchase", r.exit_no_purchase);
  series("exit_abandoned_cart", r.exit_abandoned_cart);
  series("cart_returns", r.cart_returns);
  series("revenue", r.revenue);
  series("cumulative_revenue", m.cumulative_revenue);
  series("buy_to_visit", m.buy_to_visit);
  series("revenue_throughput", m.revenue_throughput);
  series("potential_loss_throughput", m.potential_loss_throughput);
  series("buy_to_visit_avg", m.average(metrics::Metric::BuyToVisit));
  series("revenue_throughput_avg", m.average(metrics::Metric::RevenueThroughput));
  series("potential_loss_throughput_avg", m.average(metrics::Metric::PotentialLossThroughput));
}

}  // namespace detail

/// Tidy time-series table: one row per record point, a fixed column set per
/// schema version.
inline void write_series_csv(std::ostream& os, const commerce::ScenarioRun& run, const metrics::MetricReport& report) {
  std::vector<detail::Column> cols;
  cols.push_back({"time", [&](std::size_t i) { return run.times[i]; }});
  for (auto c : commerce::all_classes) {
    detail::add_class_columns(cols, std::string(commerce::class_key(c)), run.of(c), report.of(c));
  }
  detail::add_class_columns(cols, "aggregate", run.aggregate, report.aggregate);
  cols.push_back({"population_new_shoppers", [&](std::size_t i) { return run.new_shoppers[i]; }});
  for (auto c : commerce::all_classes) {
    const auto& s = run.population[commerce::index_of(c)];
    cols.push_back({"population_" + std::string(commerce::class_key(c)), [&s](std::size_t i) { return s[i]; }});
  }

  for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << cols[k].name;
  os << '\n';
  for (std::size_t i = 0; i < run.times.size(); ++i) {
    for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << format_number(cols[k].at(i));
    os << '\n';
  }
}

inline Json to_json(const metrics::LinearFit& f) {
  return Json{{"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared}};
}

inline Json to_json(const metrics::SteadyStateBand& b) {
  return Json{{"lo", b.lo}, {"hi", b.hi}, {"window_fraction", b.window_fraction}, {"mean", b.mean}};
}

inline Json summary_json(const metrics::ClassMetrics& m) {
  Json bands = Json::object();
  for (auto k : metrics::all_metrics) bands[std::string(metrics::metric_key(k))] = to_json(m.band(k));
  return Json{{"total_revenue", m.total_revenue},
              {"total_payers", m.total_payers},
              {"total_visits", m.total_visits},
              {"mean_revenue_throughput", m.mean_revenue_throughput},
              {"trend", to_json(m.trend)},
              {"bands", bands}};
}

/// Scalar part of a MetricReport: totals, trend fits and steady bands.
inline Json report_summary_json(const metrics::MetricReport& r) {
  Json classes = Json::object();
  for (auto c : commerce::all_classes) classes[std::string(commerce::class_key(c))] = summary_json(r.of(c));
  return Json{{"window", r.options.window},
              {"tail_fraction", r.options.tail_fraction},
              {"expected_order_value", r.expected_order_value},
              {"classes", classes},
              {"aggregate", summary_json(r.aggregate)}};
}

inline Json report_json(const metrics::MetricReport& r, std::uint64_t seed) {
  Json j{{"schema_version", schema_version}, {"seed", seed}};
  j.update(report_summary_json(r));
  return j;
}

}  // namespace stockflow::scenario

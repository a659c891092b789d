#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stockflow/commerce/model.hpp"
#include "stockflow/error.hpp"

namespace stockflow::metrics {

using Series = std::vector<double>;

inline Series prefix_sum(std::span<const double> values) {
  Series out(values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = acc += values[i];
  return out;
}

/// CR_T: running total of per-step revenue.
inline Series cumulative_revenue(std::span<const double> revenue) {
  for (std::size_t i = 0; i < revenue.size(); ++i) {
    if (!(revenue[i] >= 0.0)) {
      throw Error(Errc::NegativeRevenue, "revenue[" + std::to_string(i) + "] = " + std::to_string(revenue[i]));
    }
  }
  return prefix_sum(revenue);
}

/// Buy-to-visit ratio in percent; 0 where no visit has happened yet.
inline Series buy_to_visit(std::span<const double> cumulative_payers, std::span<const double> cumulative_visits) {
  if (cumulative_payers.size() != cumulative_visits.size()) {
    throw Error(Errc::MisalignedSeries, "payers and visits differ in length");
  }
  Series out(cumulative_payers.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (cumulative_visits[i] > 0.0) out[i] = 100.0 * cumulative_payers[i] / cumulative_visits[i];
  }
  return out;
}

inline Series revenue_throughput(std::span<const double> revenue, double dt) {
  Series out(revenue.begin(), revenue.end());
  for (double& x : out) x /= dt;
  return out;
}

inline Series potential_loss_throughput(std::span<const double> abandon_flow, double expected_cart_value, double dt) {
  Series out(abandon_flow.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = abandon_flow[i] * expected_cart_value / dt;
  return out;
}

/// Element t is the mean of the last min(window, t + 1) samples.
inline Series trailing_average(std::span<const double> series, std::size_t window) {
  if (window < 1) throw Error(Errc::OutOfRange, "window must be >= 1");
  Series out(series.size());
  for (std::size_t t = 0; t < series.size(); ++t) {
    const std::size_t first = t + 1 >= window ? t + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t u = first; u <= t; ++u) sum += series[u];
    out[t] = sum / static_cast<double>(t + 1 - first);
  }
  return out;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares of values on times, with R^2 = 1 - SS_res/SS_tot.
/// A constant target fitted exactly counts as R^2 = 1.
inline LinearFit linear_fit(std::span<const double> times, std::span<const double> values) {
  if (times.size() != values.size()) throw Error(Errc::MisalignedSeries, "times and values differ in length");
  const std::size_t n = times.size();
  if (n < 2 || std::all_of(times.begin(), times.end(), [&](double t) { return t == times[0]; })) {
    throw Error(Errc::DegenerateInput, "need at least two distinct time points");
  }
  double mt = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mt += times[i];
    mv += values[i];
  }
  mt /= static_cast<double>(n);
  mv /= static_cast<double>(n);
  double stt = 0.0, stv = 0.0, svv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = times[i] - mt, dv = values[i] - mv;
    stt += dt * dt;
    stv += dt * dv;
    svv += dv * dv;
  }
  LinearFit fit;
  fit.slope = stv / stt;
  fit.intercept = mv - fit.slope * mt;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = values[i] - (fit.intercept + fit.slope * times[i]);
    ss_res += r * r;
  }
  if (svv == 0.0) {
    fit.r_squared = 1.0;
  } else {
    fit.r_squared = std::clamp(1.0 - ss_res / svv, 0.0, 1.0);
  }
  return fit;
}

struct SteadyStateBand {
  double lo = 0.0;
  double hi = 0.0;
  double window_fraction = 1.0;
  double mean = 0.0;  // mean over the same tail
};

/// Min/max (and mean) over the trailing ceil(tail_fraction * n) samples of
/// the trailing-averaged series.
inline SteadyStateBand steady_state_band(std::span<const double> series, double tail_fraction, std::size_t window = 1) {
  if (series.empty()) throw Error(Errc::EmptySeries, "steady-state band of an empty series");
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) throw Error(Errc::OutOfRange, "tail_fraction must be in (0, 1]");
  const Series averaged = trailing_average(series, window);
  const auto n = averaged.size();
  const auto tail = std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(n))));
  const auto first = averaged.begin() + static_cast<std::ptrdiff_t>(n - std::max<std::size_t>(tail, 1));
  const auto [lo, hi] = std::minmax_element(first, averaged.end());
  double sum = 0.0;
  for (auto it = first; it != averaged.end(); ++it) sum += *it;
  return {*lo, *hi, tail_fraction, sum / static_cast<double>(averaged.end() - first)};
}

enum class Metric { BuyToVisit, RevenueThroughput, PotentialLossThroughput };

inline constexpr std::array<Metric, 3> all_metrics{Metric::BuyToVisit, Metric::RevenueThroughput,
                                                   Metric::PotentialLossThroughput};

constexpr std::string_view metric_key(Metric m) noexcept {
  switch (m) {
    case Metric::BuyToVisit: return "buy_to_visit";
    case Metric::RevenueThroughput: return "revenue_throughput";
    case Metric::PotentialLossThroughput: return "potential_loss_throughput";
  }
  return "?";
}

struct AnalysisOptions {
  std::size_t window = 60;
  double tail_fraction = 0.5;
};

struct ClassMetrics {
  Series cumulative_revenue;
  Series cumulative_payers;
  Series cumulative_visits;
  Series buy_to_visit;
  Series revenue_throughput;
  Series potential_loss_throughput;
  std::array<Series, 3> averaged;  // trailing averages, indexed by Metric
  std::array<SteadyStateBand, 3> bands;
  LinearFit trend;  // of cumulative revenue over time
  double mean_revenue_throughput = 0.0;  // over all steps (t > 0)
  double total_revenue = 0.0;
  double total_payers = 0.0;
  double total_visits = 0.0;

  const Series& raw(Metric m) const {
    switch (m) {
      case Metric::BuyToVisit: return buy_to_visit;
      case Metric::RevenueThroughput: return revenue_throughput;
      case Metric::PotentialLossThroughput: return potential_loss_throughput;
    }
    return buy_to_visit;
  }
  const Series& average(Metric m) const { return averaged[static_cast<std::size_t>(m)]; }
  const SteadyStateBand& band(Metric m) const { return bands[static_cast<std::size_t>(m)]; }
};

struct MetricReport {
  std::vector<double> times;
  commerce::PerClass<ClassMetrics> classes;
  ClassMetrics aggregate;
  AnalysisOptions options;
  double expected_order_value = 0.0;

  const ClassMetrics& of(commerce::CustomerClass c) const { return classes[commerce::index_of(c)]; }
};

inline ClassMetrics analyze_class(const commerce::ClassRunResult& r, std::span<const double> times, double interval,
                                  double cart_value, const AnalysisOptions& opt) {
  ClassMetrics m;
  m.cumulative_revenue = cumulative_revenue(r.revenue);
  m.cumulative_payers = prefix_sum(r.payers);
  m.cumulative_visits = prefix_sum(r.arrivals);
  m.buy_to_visit = buy_to_visit(m.cumulative_payers, m.cumulative_visits);
  m.revenue_throughput = revenue_throughput(r.revenue, interval);
  m.potential_loss_throughput = potential_loss_throughput(r.unconverted_carts(), cart_value, interval);
  for (Metric k : all_metrics) {
    const auto i = static_cast<std::size_t>(k);
    m.averaged[i] = trailing_average(m.raw(k), opt.window);
    m.bands[i] = steady_state_band(m.raw(k), opt.tail_fraction, opt.window);
  }
  m.trend = linear_fit(times, m.cumulative_revenue);
  if (m.revenue_throughput.size() > 1) {
    double sum = 0.0;
    for (std::size_t i = 1; i < m.revenue_throughput.size(); ++i) sum += m.revenue_throughput[i];
    m.mean_revenue_throughput = sum / static_cast<double>(m.revenue_throughput.size() - 1);
  }
  m.total_revenue = m.cumulative_revenue.empty() ? 0.0 : m.cumulative_revenue.back();
  m.total_payers = m.cumulative_payers.empty() ? 0.0 : m.cumulative_payers.back();
  m.total_visits = m.cumulative_visits.empty() ? 0.0 : m.cumulative_visits.back();
  return m;
}

/// Full metric report of a completed scenario run. Potential loss values
/// every unconverted cart at the catalog's expected order value.
inline MetricReport analyze(const commerce::ScenarioRun& run, std::size_t record_every = 1, AnalysisOptions opt = {}) {
  MetricReport report;
  report.times = run.times;
  report.options = opt;
  report.expected_order_value = run.expected_order_value;
  const double interval = run.dt * static_cast<double>(record_every);
  for (commerce::CustomerClass c : commerce::all_classes) {
    report.classes[commerce::index_of(c)] =
        analyze_class(run.of(c), run.times, interval, run.expected_order_value, opt);
  }
  report.aggregate = analyze_class(run.aggregate, run.times, interval, run.expected_order_value, opt);
  return report;
}

}  // namespace stockflow::metrics

#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stockflow/commerce/model.hpp"
#include "stockflow/metrics/analysis.hpp"
#include "stockflow/scenario/document.hpp"
#include "stockflow/scenario/output.hpp"

#ifndef STOCKFLOW_VERSION
#define STOCKFLOW_VERSION "0.0.0"
#endif

namespace stockflow::service {

using scenario::Json;

struct ServiceConfig {
  std::size_t max_steps = 100000;
};

struct Response {
  int status = 200;
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
};

inline Response json_response(int status, const Json& body) { return {status, body.dump(), {}}; }

inline Response error_response(int status, const std::vector<commerce::FieldError>& errors) {
  Json list = Json::array();
  for (const auto& e : errors) list.push_back(scenario::to_json(e));
  return json_response(status, Json{{"errors", list}});
}

inline Response error_response(int status, Errc code, std::string field, std::string message) {
  return error_response(status, {{code, std::move(field), std::move(message), std::nullopt, std::nullopt}});
}

inline Response handle_health() { return json_response(200, Json{{"status", "ok"}, {"version", STOCKFLOW_VERSION}}); }

inline Response handle_defaults() {
  static const std::string body = scenario::defaults_document().dump();
  return {200, body, {}};
}

struct SimulateRequest {
  scenario::ScenarioFile scenario;
  std::optional<std::uint64_t> seed;
  std::size_t downsample_every = 1;
};

/// Parses and validates a request body with the same rules as the CLI
/// loader. Throws scenario::ScenarioError.
inline SimulateRequest parse_simulate_request(std::string_view body) {
  const Json doc = scenario::detail::parse_text(body);
  scenario::detail::Reader reader;
  SimulateRequest req;
  Json scenario_doc = Json::object();
  if (reader.object(doc, "")) {
    for (const auto& [key, value] : doc.items()) {
      if (key == "scenario") {
        scenario_doc = value;
      } else if (key == "seed") {
        std::uint64_t seed = 0;
        reader.unsigned_integer(value, key, seed);
        req.seed = seed;
      } else if (key == "downsample_every") {
        std::uint64_t every = 1;
        reader.unsigned_integer(value, key, every);
        if (every < 1) reader.fail(Errc::RangeViolation, key, "downsample_every must be >= 1");
        req.downsample_every = static_cast<std::size_t>(every);
      } else {
        reader.fail(Errc::UnknownField, key, "unknown field");
      }
    }
  }
  if (!reader.errors.empty()) throw scenario::ScenarioError(std::move(reader.errors));
  req.scenario = scenario::parse_scenario_document(scenario_doc, {.allow_reference_bands = false});
  return req;
}

inline std::vector<std::size_t> downsample_indices(std::size_t n, std::size_t every) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; i += every) idx.push_back(i);
  if (n > 0 && idx.back() != n - 1) idx.push_back(n - 1);
  return idx;
}

namespace detail {

inline Json pick(const std::vector<double>& s, const std::vector<std::size_t>& idx) {
  Json out = Json::array();
  for (std::size_t i : idx) out.push_back(s[i]);
  return out;
}

inline Json class_series(const commerce::ClassRunResult& r, const metrics::ClassMetrics& m,
                         const std::vector<std::size_t>& idx) {
  using metrics::Metric;
  return Json{{"arrivals", pick(r.arrivals, idx)},
              {"browsing", pick(r.browsing, idx)},
              {"in_cart", pick(r.in_cart, idx)},
              {"payers", pick(r.payers, idx)},
              {"revenue", pick(r.revenue, idx)},
              {"cumulative_revenue", pick(m.cumulative_revenue, idx)},
              {"buy_to_visit", pick(m.buy_to_visit, idx)},
              {"revenue_throughput", pick(m.revenue_throughput, idx)},
              {"potential_loss_throughput", pick(m.potential_loss_throughput, idx)},
              {"buy_to_visit_avg", pick(m.average(Metric::BuyToVisit), idx)},
              {"revenue_throughput_avg", pick(m.average(Metric::RevenueThroughput), idx)},
              {"potential_loss_throughput_avg", pick(m.average(Metric::PotentialLossThroughput), idx)}};
}

inline std::uint64_t fresh_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

}  // namespace detail

/// POST /api/simulate. The summary is always computed at full resolution;
/// downsampling only thins the returned series. Run time goes in the
/// X-Run-Millis header so equal requests produce equal bodies.
inline Response handle_simulate(std::string_view body, const ServiceConfig& config = {}) {
  SimulateRequest req;
  try {
    req = parse_simulate_request(body);
  } catch (const scenario::ScenarioError& e) {
    return error_response(400, e.errors());
  }
  commerce::Scenario sc = req.scenario.scenario;
  const double steps = sc.sim.horizon / sc.sim.dt;
  if (steps > static_cast<double>(config.max_steps)) {
    return error_response(413, Errc::RangeViolation, "scenario.sim.horizon",
                          "run of " + std::to_string(static_cast<std::uint64_t>(steps)) + " steps exceeds the cap of " +
                              std::to_string(config.max_steps));
  }
  sc.sim.seed = req.seed ? *req.seed : detail::fresh_seed();

  const auto started = std::chrono::steady_clock::now();
  commerce::ScenarioRun run;
  metrics::MetricReport report;
  try {
    run = commerce::run_scenario(sc);
    report = metrics::analyze(run, sc.sim.record_every);
  } catch (const Error& e) {
    if (e.code() == Errc::NonfiniteState) return error_response(422, e.code(), "", e.what());
    return error_response(400, e.code(), "", e.what());
  }
  const auto millis =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  const auto idx = downsample_indices(run.times.size(), req.downsample_every);
  Json classes = Json::object();
  for (auto c : commerce::all_classes) {
    classes[std::string(commerce::class_key(c))] = detail::class_series(run.of(c), report.of(c), idx);
  }
  Json out{{"seed_used", sc.sim.seed},
           {"downsample_every", req.downsample_every},
           {"times", detail::pick(run.times, idx)},
           {"classes", classes},
           {"aggregate", detail::class_series(run.aggregate, report.aggregate, idx)},
           {"summary", scenario::report_summary_json(report)}};
  Response r = json_response(200, out);
  r.headers.emplace_back("X-Run-Millis", scenario::format_number(millis));
  return r;
}

}  // namespace stockflow::service

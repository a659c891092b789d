// stockflow: batch front end for the e-commerce stock-and-flow simulator.
//
//   stockflow run       --scenario <path> --seed <u64> --out <dir>
//   stockflow replicate --scenario <path> --seeds <n> --base-seed <u64> --out <dir>
//   stockflow check     --report <path> --reference <path> --tolerance <float>
//   stockflow defaults
//
// Exit codes: 0 success, 1 validation failure or failed check, 2 runtime failure.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "stockflow/commerce/model.hpp"
#include "stockflow/metrics/analysis.hpp"
#include "stockflow/scenario/check.hpp"
#include "stockflow/scenario/document.hpp"
#include "stockflow/scenario/output.hpp"
#include "stockflow/scenario/replicate.hpp"

namespace fs = std::filesystem;
using namespace stockflow;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_invalid = 1;
constexpr int exit_runtime = 2;

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("STOCKFLOW_SEED");
  if (!raw || !*raw) return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(raw, &used, 10);
    if (used != std::string(raw).size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw scenario::ScenarioError({{Errc::ParseError, "STOCKFLOW_SEED", "not an unsigned integer", std::nullopt, std::nullopt}});
  }
}

scenario::ScenarioFile load(const std::string& path) {
  return path.empty() ? scenario::default_scenario_file() : scenario::load_scenario_file(path);
}

void print_errors(const scenario::ScenarioError& e) {
  for (const auto& f : e.errors()) {
    std::cerr << "error: " << to_string(f.code) << ' ' << (f.field.empty() ? "<document>" : f.field) << ": " << f.message
              << '\n';
  }
}

template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const scenario::ScenarioError& e) {
    print_errors(e);
    return exit_invalid;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::RangeViolation || e.code() == Errc::ParseError ? exit_invalid : exit_runtime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_runtime;
  }
}

struct RunArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::size_t window = 60;
  double tail_fraction = 0.5;
};

int cmd_run(const RunArgs& a) {
  scenario::ScenarioFile file = load(a.scenario);
  commerce::Scenario sc = file.scenario;
  if (a.seed) sc.sim.seed = *a.seed;
  else if (auto s = env_seed()) sc.sim.seed = *s;

  const commerce::ScenarioRun run = commerce::run_scenario(sc);
  const metrics::MetricReport report = metrics::analyze(run, sc.sim.record_every, {a.window, a.tail_fraction});

  fs::create_directories(a.out);
  scenario::write_atomic(fs::path(a.out) / "series.csv",
                         [&](std::ostream& os) { scenario::write_series_csv(os, run, report); });
  scenario::write_text_atomic(fs::path(a.out) / "report.json", scenario::report_json(report, sc.sim.seed).dump(2) + "\n");

  const auto& agg = report.aggregate;
  std::cout << "seed " << sc.sim.seed << ": total revenue $" << scenario::format_number(agg.total_revenue)
            << ", trend " << scenario::format_number(agg.trend.slope) << " * t + "
            << scenario::format_number(agg.trend.intercept) << " (R^2 " << scenario::format_number(agg.trend.r_squared)
            << ")\n";
  return exit_ok;
}

struct ReplicateArgs {
  std::string scenario;
  std::size_t seeds = 100;
  std::optional<std::uint64_t> base_seed;
  std::string out = ".";
  std::size_t jobs = 1;
  std::size_t window = 60;
  double tail_fraction = 0.5;
};

int cmd_replicate(const ReplicateArgs& a) {
  scenario::ScenarioFile file = load(a.scenario);
  std::uint64_t base = file.scenario.sim.seed;
  if (a.base_seed) base = *a.base_seed;
  else if (auto s = env_seed()) base = *s;

  const auto summary = scenario::replicate(file.scenario, a.seeds, base, a.jobs, {a.window, a.tail_fraction},
                                           file.reference_bands);
  fs::create_directories(a.out);
  scenario::write_text_atomic(fs::path(a.out) / "summary.json", scenario::summary_json(summary).dump(2) + "\n");
  scenario::write_atomic(fs::path(a.out) / "runs.csv", [&](std::ostream& os) { scenario::write_runs_csv(os, summary); });

  std::cout << summary.n_runs << " runs from seed " << base << "\n";
  for (std::size_t row = 0; row < scenario::row_count; ++row) {
    for (auto k : metrics::all_metrics) {
      const auto& st = summary.metric[row][static_cast<std::size_t>(k)];
      std::cout << "  " << std::left << std::setw(44) << (scenario::row_key(row) + "." + std::string(metrics::metric_key(k)))
                << " mean " << scenario::format_number(st.mean) << "  [" << scenario::format_number(st.min) << ", "
                << scenario::format_number(st.max) << "]\n";
    }
  }
  if (summary.reference) {
    std::cout << "reference bands (tolerance " << summary.reference->tolerance << "): "
              << (summary.pass() ? "all replication means inside" : "some replication means outside") << "\n";
  }
  return exit_ok;
}

struct CheckArgs {
  std::string report;
  std::string reference;
  double tolerance = 0.0;
};

std::string brief(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

int cmd_check(const CheckArgs& a) {
  const scenario::Json report = scenario::detail::parse_text(scenario::read_file(a.report));
  const scenario::ReferenceBands reference =
      scenario::parse_reference_bands(scenario::detail::parse_text(scenario::read_file(a.reference)));
  const auto verdicts = scenario::check_bands(report, reference, a.tolerance);

  bool ok = true;
  std::cout << std::left << std::setw(44) << "metric" << std::setw(28) << "observed" << std::setw(28) << "allowed"
            << "verdict\n";
  for (const auto& v : verdicts) {
    const std::string observed =
        v.observed ? "[" + brief(v.observed->lo) + ", " + brief(v.observed->hi) + "]" : "missing";
    const std::string allowed = "[" + brief(v.allowed.lo) + ", " + brief(v.allowed.hi) + "]";
    std::cout << std::setw(44) << v.key << std::setw(28) << observed << std::setw(28) << allowed
              << (v.pass ? "PASS" : "FAIL") << '\n';
    ok = ok && v.pass;
  }
  if (!ok) {
    std::cerr << "out of band:";
    for (const auto& v : verdicts) {
      if (!v.pass) std::cerr << ' ' << v.key;
    }
    std::cerr << '\n';
  }
  return ok ? exit_ok : exit_invalid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stock-and-flow simulator of e-commerce shopping sessions and business metrics"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run one scenario and write series.csv and report.json");
  run->add_option("--scenario", run_args.scenario, "Scenario file (defaults to the shipped scenario)");
  run->add_option("--seed", run_args.seed, "Root seed (overrides STOCKFLOW_SEED and the file)");
  run->add_option("--out", run_args.out, "Output directory")->capture_default_str();
  run->add_option("--window", run_args.window, "Trailing-average window in steps")->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--tail-fraction", run_args.tail_fraction, "Share of samples forming the steady-state band")
      ->capture_default_str()
      ->check(CLI::Range(1e-9, 1.0));

  ReplicateArgs rep_args;
  auto* rep = app.add_subcommand("replicate", "Run a scenario under consecutive seeds and summarize");
  rep->add_option("--scenario", rep_args.scenario, "Scenario file (defaults to the shipped scenario)");
  rep->add_option("--seeds", rep_args.seeds, "Number of seeds")->capture_default_str()->check(CLI::PositiveNumber);
  rep->add_option("--base-seed", rep_args.base_seed, "First seed (overrides STOCKFLOW_SEED and the file)");
  rep->add_option("--out", rep_args.out, "Output directory")->capture_default_str();
  rep->add_option("--jobs", rep_args.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  rep->add_option("--window", rep_args.window, "Trailing-average window in steps")->capture_default_str()->check(CLI::PositiveNumber);
  rep->add_option("--tail-fraction", rep_args.tail_fraction, "Share of samples forming the steady-state band")
      ->capture_default_str()
      ->check(CLI::Range(1e-9, 1.0));

  CheckArgs check_args;
  auto* check = app.add_subcommand("check", "Compare report bands against reference bands");
  check->add_option("--report", check_args.report, "report.json or summary.json")->required();
  check->add_option("--reference", check_args.reference, "Reference bands file")->required();
  check->add_option("--tolerance", check_args.tolerance, "Relative widening of the reference bands")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);

  auto* defaults = app.add_subcommand("defaults", "Print the default scenario document");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_invalid;
  }

  if (*run) return guarded([&] { return cmd_run(run_args); });
  if (*rep) return guarded([&] { return cmd_replicate(rep_args); });
  if (*check) return guarded([&] { return cmd_check(check_args); });
  if (*defaults) {
    return guarded([] {
      std::cout << scenario::to_json(scenario::default_scenario_file()).dump(2) << '\n';
      return exit_ok;
    });
  }
  return exit_invalid;
}

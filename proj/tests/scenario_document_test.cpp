#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stockflow/scenario/check.hpp"
#include "stockflow/scenario/document.hpp"
#include "stockflow/scenario/output.hpp"
#include "stockflow/scenario/replicate.hpp"

using namespace stockflow;
using namespace stockflow::scenario;
namespace fs = std::filesystem;

namespace {

const fs::path data_dir = STOCKFLOW_DATA_DIR;

std::vector<commerce::FieldError> errors_of(std::string_view text) {
  try {
    parse_scenario_text(text);
  } catch (const ScenarioError& e) {
    return e.errors();
  }
  return {};
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stockflow_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(LoadScenario, ShippedDefaults) {
  const commerce::Scenario s = load_scenario(data_dir / "default.scenario.json");
  EXPECT_EQ(s.total_intensity, 1.1);
  EXPECT_EQ(s.control1_pct, 24.0);
  EXPECT_EQ(s.control2_pct, 80.263);
  EXPECT_EQ(s.behavior(commerce::CustomerClass::Tightwad).session_intensity, 5.5);
  EXPECT_EQ(s.behavior(commerce::CustomerClass::AverageSpender).session_intensity, 3.5);
  EXPECT_EQ(s.behavior(commerce::CustomerClass::Spendthrift).session_intensity, 1.5);
  EXPECT_EQ(s.behavior(commerce::CustomerClass::Spendthrift).buy_rate_sigma, 1.66666);
  EXPECT_EQ(s.catalog.items.size(), 3u);
  EXPECT_EQ(s.sim.horizon, 720.0);
  EXPECT_EQ(s, default_scenario());
}

TEST(LoadScenario, ShippedFileCarriesReferenceBands) {
  const ScenarioFile f = load_scenario_file(data_dir / "default.scenario.json");
  ASSERT_TRUE(f.reference_bands);
  EXPECT_EQ(f.reference_bands->tolerance, 0.3);
  EXPECT_EQ(f.reference_bands->bands.size(), 9u);
  EXPECT_EQ(f.reference_bands->bands.at("spendthrift.buy_to_visit"), (Band{14.0, 14.5}));
  EXPECT_EQ(parse_reference_bands(detail::parse_text(read_file(data_dir / "reference_bands.json"))), *f.reference_bands);
}

TEST(LoadScenario, EmptyDocumentGivesDefaults) {
  EXPECT_EQ(parse_scenario_text("{}").scenario, default_scenario());
  EXPECT_FALSE(parse_scenario_text("{}").reference_bands);
}

TEST(LoadScenario, PartialOverlayKeepsOtherDefaults) {
  const auto s = parse_scenario_text(R"({"scenario": {"classes": {"spendthrift": {"add_to_cart_rate": 40}}}})").scenario;
  EXPECT_EQ(s.behavior(commerce::CustomerClass::Spendthrift).add_to_cart_rate, 40.0);
  commerce::Scenario expected = default_scenario();
  expected.behavior(commerce::CustomerClass::Spendthrift).add_to_cart_rate = 40.0;
  EXPECT_EQ(s, expected);
}

TEST(LoadScenario, RangeViolationNamesTableRange) {
  const auto errors = errors_of(R"({"scenario": {"classes": {"spendthrift": {"add_to_cart_rate": 80}}}})");
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0].code, Errc::RangeViolation);
  EXPECT_EQ(errors[0].field, "scenario.classes.spendthrift.add_to_cart_rate");
  EXPECT_NE(errors[0].message.find("[30.0, 70.0]"), std::string::npos);
  EXPECT_EQ(errors[0].min, 30.0);
  EXPECT_EQ(errors[0].max, 70.0);
}

TEST(LoadScenario, EveryViolationReported) {
  const auto errors = errors_of(R"({"scenario": {"total_intensity": 51, "control1_pct": -1,
      "classes": {"tightwad": {"add_to_cart_rate": 10.5}}}})");
  EXPECT_EQ(errors.size(), 3u);
}

TEST(LoadScenario, UnknownFields) {
  for (const char* doc : {R"({"extra": 1})", R"({"scenario": {"lambda": 1}})",
                          R"({"scenario": {"classes": {"tightwad": {"speed": 1}}}})",
                          R"({"scenario": {"classes": {"bargain_hunter": {}}}})",
                          R"({"scenario": {"sim": {"steps": 10}}})",
                          R"({"scenario": {"catalog": [{"buy_probability": 1, "price": 1, "sku": "x"}]}})"}) {
    const auto errors = errors_of(doc);
    ASSERT_FALSE(errors.empty()) << doc;
    EXPECT_EQ(errors[0].code, Errc::UnknownField) << doc;
  }
}

TEST(LoadScenario, WrongTypes) {
  for (const char* doc : {R"({"scenario": {"total_intensity": "fast"}})", R"({"scenario": {"sim": {"seed": -3}}})",
                          R"({"scenario": {"session_source": "somewhere"}})", R"({"scenario": []})", R"([])",
                          R"({"schema_version": 2})"}) {
    const auto errors = errors_of(doc);
    ASSERT_FALSE(errors.empty()) << doc;
    EXPECT_EQ(errors[0].code, Errc::ParseError) << doc;
  }
}

TEST(LoadScenario, SyntaxErrorReportsLine) {
  const auto errors = errors_of("{\n  \"scenario\": {\n    \"total_intensity\": 1.1,,\n  }\n}");
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0].code, Errc::ParseError);
  EXPECT_NE(errors[0].message.find("line 3"), std::string::npos) << errors[0].message;
}

TEST(LoadScenario, CatalogChecks) {
  EXPECT_FALSE(errors_of(R"({"scenario": {"catalog": []}})").empty());
  EXPECT_FALSE(errors_of(R"({"scenario": {"catalog": [{"buy_probability": 0.5, "price": 1}]}})").empty());
  EXPECT_FALSE(errors_of(R"({"scenario": {"catalog": [{"buy_probability": 1, "price": -1}]}})").empty());
  EXPECT_TRUE(errors_of(R"({"scenario": {"catalog": [{"buy_probability": 1, "price": 9}]}})").empty());
}

TEST(LoadScenario, MissingFile) {
  EXPECT_THROW(load_scenario("/nonexistent/file.json"), Error);
}

TEST(RoundTrip, DefaultAndPerturbed) {
  ScenarioFile f = default_scenario_file();
  EXPECT_EQ(parse_scenario_document(to_json(f)), f);

  f.scenario.total_intensity = 0.3;
  f.scenario.session_source = commerce::SessionSource::OperatingProfile;
  f.scenario.behavior(commerce::CustomerClass::AverageSpender).buy_rate_sigma = 0.12345;
  f.scenario.catalog.items = {{0.25, 1.1}, {0.75, 3.3}};
  f.scenario.sim = {0.5, 100.0, 18446744073709551615ull, 4};
  f.reference_bands.reset();
  const std::string text = to_json(f).dump(2);
  EXPECT_EQ(parse_scenario_text(text), f);
}

TEST(Defaults, DocumentCarriesRangesAndSteps) {
  const Json d = defaults_document();
  EXPECT_EQ(d["scenario"]["scenario"]["total_intensity"], 1.1);
  EXPECT_FALSE(d["scenario"].contains("reference_bands"));
  const Json& lambda = d["ranges"]["scenario.total_intensity"];
  EXPECT_EQ(lambda["min"], 0.0);
  EXPECT_EQ(lambda["max"], 50.0);
  EXPECT_EQ(lambda["step"], 0.1);
  EXPECT_EQ(d["ranges"]["scenario.control1_pct"]["step"], 0.001);
  EXPECT_EQ(d["ranges"]["scenario.classes.spendthrift.add_to_cart_rate"]["min"], 30.0);
  EXPECT_EQ(d["ranges"]["scenario.classes.tightwad.buy_rate_sigma"]["step"], 0.00001);
  // The scenario inside round-trips through the loader.
  EXPECT_EQ(parse_scenario_document(d["scenario"]).scenario, default_scenario());
}

// ---- check ----------------------------------------------------------------

namespace {

Json report_with(const std::string& cls, const std::string& metric, double lo, double hi) {
  Json j;
  j["classes"][cls]["bands"][metric] = {{"lo", lo}, {"hi", hi}};
  return j;
}

ReferenceBands reference(const std::string& key, double lo, double hi) {
  ReferenceBands r;
  r.bands[key] = {lo, hi};
  return r;
}

bool all_pass(const std::vector<BandVerdict>& v) {
  return std::all_of(v.begin(), v.end(), [](const BandVerdict& x) { return x.pass; });
}

}  // namespace

TEST(Check, Containment) {
  const auto ref = reference("spendthrift.buy_to_visit", 14.0, 14.5);
  EXPECT_TRUE(all_pass(check_bands(report_with("spendthrift", "buy_to_visit", 14.1, 14.4), ref, 0.0)));
  EXPECT_FALSE(all_pass(check_bands(report_with("spendthrift", "buy_to_visit", 20.0, 22.0), ref, 0.3)));
  EXPECT_TRUE(all_pass(check_bands(report_with("spendthrift", "buy_to_visit", 14.0, 14.5), ref, 0.0)));
}

TEST(Check, WideningIsRelative) {
  EXPECT_EQ(widen({14.0, 14.5}, 0.3), (Band{14.0 * 0.7, 14.5 * 1.3}));
  const auto ref = reference("tightwad.potential_loss_throughput", 1.75, 1.85);
  EXPECT_TRUE(all_pass(check_bands(report_with("tightwad", "potential_loss_throughput", 1.3, 2.4), ref, 0.3)));
}

TEST(Check, MissingMetricFails) {
  const auto v = check_bands(Json::object(), reference("tightwad.buy_to_visit", 0.0, 1.0), 0.5);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_FALSE(v[0].pass);
  EXPECT_FALSE(v[0].observed);
}

TEST(Check, ReportJsonFeedsCheck) {
  const auto run = commerce::run_scenario(default_scenario());
  const Json report = report_json(metrics::analyze(run), 42);
  const auto v = check_bands(report, *default_scenario_file().reference_bands, 100.0);
  EXPECT_EQ(v.size(), 9u);
  for (const auto& x : v) EXPECT_TRUE(x.observed) << x.key;
}

TEST(Check, RejectsBadBandDocuments) {
  EXPECT_THROW(parse_reference_bands(Json::parse(R"({"tolerance": 0.1, "bands": {"nobody.buy_to_visit": {"lo": 0, "hi": 1}}})")),
               ScenarioError);
  EXPECT_THROW(parse_reference_bands(Json::parse(R"({"bands": {"tightwad.buy_to_visit": {"lo": 2, "hi": 1}}})")),
               ScenarioError);
}

// ---- output files ---------------------------------------------------------

TEST(Output, SeriesCsvShape) {
  const auto run = commerce::run_scenario(default_scenario());
  std::ostringstream os;
  write_series_csv(os, run, metrics::analyze(run));
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  const auto arity = std::count(line.begin(), line.end(), ',');
  EXPECT_EQ(line.rfind("time,", 0), 0u);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    ASSERT_EQ(std::count(line.begin(), line.end(), ','), arity);
  }
  EXPECT_EQ(rows, 721u);
}

TEST(Output, AtomicWriteLeavesNoPartialFile) {
  const fs::path dir = temp_dir("atomic");
  const fs::path target = dir / "out.txt";
  EXPECT_THROW(write_atomic(target, [](std::ostream& os) {
                 os << "half";
                 throw std::runtime_error("boom");
               }),
               std::runtime_error);
  EXPECT_FALSE(fs::exists(target));
  EXPECT_TRUE(fs::is_empty(dir));
  write_text_atomic(target, "whole\n");
  EXPECT_EQ(read_file(target), "whole\n");
}

TEST(Output, FormatNumberRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, 0.0}) {
    EXPECT_EQ(std::stod(format_number(x)), x);
  }
}

// ---- replication ----------------------------------------------------------

TEST(Replicate, SingleSeedHasDegenerateStats) {
  const auto s = replicate(default_scenario(), 1, 7);
  for (const auto& row : s.metric) {
    for (const Stats& st : row) {
      EXPECT_EQ(st.min, st.mean);
      EXPECT_EQ(st.max, st.mean);
    }
  }
}

TEST(Replicate, JobsDoNotChangeResults) {
  const auto a = replicate(default_scenario(), 6, 100, 1);
  const auto b = replicate(default_scenario(), 6, 100, 3);
  std::ostringstream ca, cb;
  write_runs_csv(ca, a);
  write_runs_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(summary_json(a).dump(), summary_json(b).dump());
}

TEST(Replicate, DisjointSeedRangesAreIndependent) {
  const auto a = replicate(default_scenario(), 8, 1000);
  const auto b = replicate(default_scenario(), 8, 2000);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(a.runs[i].seed, 1000 + i);
    EXPECT_NE(a.runs[i].total_revenue, b.runs[i].total_revenue);
  }
  // Same population, so the two means agree to within their spread.
  const auto& sa = a.metric[aggregate_row][1];
  const auto& sb = b.metric[aggregate_row][1];
  EXPECT_LE(sa.min, sb.max);
  EXPECT_LE(sb.min, sa.max);
}

TEST(Replicate, MeanBetweenMinAndMax) {
  const auto s = replicate(default_scenario(), 5, 3, 2, {}, default_scenario_file().reference_bands);
  for (const auto& row : s.metric) {
    for (const Stats& st : row) {
      EXPECT_LE(st.min, st.mean);
      EXPECT_LE(st.mean, st.max);
    }
  }
  EXPECT_EQ(s.verdicts.size(), 9u);
  const Json j = summary_json(s);
  EXPECT_TRUE(j.contains("reference_check"));
  EXPECT_EQ(check_bands(j, *s.reference, 10.0).size(), 9u);
}

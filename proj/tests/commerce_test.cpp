#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "stockflow/commerce/model.hpp"
#include "stockflow/scenario/document.hpp"
#include "support/recurrence_oracle.hpp"

using namespace stockflow;
using namespace stockflow::commerce;

namespace {

Catalog table1() { return Catalog{{{0.3, 6.0}, {0.1, 10.0}, {0.6, 2.0}}}; }

Scenario defaults() { return scenario::default_scenario(); }

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

Errc error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::ParseError;
}

}  // namespace

// ---- operating profile --------------------------------------------------

TEST(ClassSplit, DefaultControlsGiveSixtyOnePercent) {
  const OperatingProfile p = class_split(24.0, 80.263);
  EXPECT_NEAR(p[CustomerClass::Tightwad], 0.24, 1e-4);
  EXPECT_NEAR(p[CustomerClass::AverageSpender], 0.61, 1e-4);
  EXPECT_NEAR(p[CustomerClass::Spendthrift], 0.15, 1e-4);
  EXPECT_NEAR(p.p[0] + p.p[1] + p.p[2], 1.0, 1e-9);
}

TEST(ClassSplit, BoundaryAndSymmetricCases) {
  EXPECT_EQ(class_split(100.0, 50.0), (OperatingProfile{{1.0, 0.0, 0.0}}));
  EXPECT_EQ(class_split(50.0, 50.0), (OperatingProfile{{0.5, 0.25, 0.25}}));
  EXPECT_EQ(class_split(0.0, 100.0), (OperatingProfile{{0.0, 1.0, 0.0}}));
}

TEST(ClassSplit, SumsToOneAcrossGrid) {
  for (double c1 = 0.0; c1 <= 100.0; c1 += 3.7) {
    for (double c2 = 0.0; c2 <= 100.0; c2 += 4.3) {
      const OperatingProfile p = class_split(c1, c2);
      EXPECT_NEAR(p.p[0] + p.p[1] + p.p[2], 1.0, 1e-12);
      for (double x : p.p) EXPECT_GE(x, 0.0);
    }
  }
}

TEST(ClassSplit, RepresentationDoesNotMatter) {
  const auto a = scenario::parse_scenario_text(R"({"scenario": {"control1_pct": 24}})").scenario;
  const auto b = scenario::parse_scenario_text(R"({"scenario": {"control1_pct": 24.000}})").scenario;
  EXPECT_EQ(class_split(a.control1_pct, a.control2_pct), class_split(b.control1_pct, b.control2_pct));
}

TEST(ClassSplit, OutOfRange) {
  EXPECT_EQ(error_code([] { class_split(-1.0, 50.0); }), Errc::OutOfRange);
  EXPECT_EQ(error_code([] { class_split(50.0, 100.5); }), Errc::OutOfRange);
  EXPECT_EQ(error_code([] { class_split(std::nan(""), 0.0); }), Errc::OutOfRange);
}

TEST(Intensity, ProductOfTotalAndShare) {
  EXPECT_NEAR(per_class_intensity(1.1, 0.24), 0.264, 1e-15);
  EXPECT_EQ(per_class_intensity(7.0, 0.0), 0.0);
  EXPECT_EQ(per_class_intensity(0.0, 0.61), 0.0);
}

// ---- catalog and revenue ------------------------------------------------

TEST(Catalog, ExpectedOrderValueOfTable1) {
  EXPECT_NEAR(expected_order_value(table1()), 0.3 * 6 + 0.1 * 10 + 0.6 * 2, 1e-12);
  EXPECT_NEAR(expected_order_value(table1()), 4.0, 1e-12);
  EXPECT_EQ(expected_order_value(Catalog{{{1.0, 7.5}}}), 7.5);
  EXPECT_EQ(expected_order_value(Catalog{{{0.5, 0.0}, {0.5, 0.0}}}), 0.0);
}

TEST(Catalog, Errors) {
  EXPECT_EQ(error_code([] { expected_order_value(Catalog{}); }), Errc::EmptyCatalog);
  EXPECT_EQ(error_code([] { expected_order_value(Catalog{{{0.5, 1.0}, {0.4, 1.0}}}); }), Errc::UnnormalizedCatalog);
  EXPECT_EQ(error_code([] { revenue_at(3.0, Catalog{}); }), Errc::EmptyCatalog);
}

TEST(Revenue, PayersTimesOrderValue) {
  EXPECT_NEAR(revenue_at(10.0, table1()), 10.0 * expected_order_value(table1()), 1e-12);
  EXPECT_NEAR(revenue_at(10.0, table1()), 40.0, 1e-12);
  EXPECT_EQ(revenue_at(0.0, table1()), 0.0);
  EXPECT_EQ(revenue_at(3.0, Catalog{{{1.0, 2.0}}}), 6.0);
}

TEST(NaiveIncome, Product) {
  EXPECT_DOUBLE_EQ(naive_income(50.0, 0.02, 1000.0), 1000.0);
  EXPECT_EQ(naive_income(123.0, 0.0, 456.0), 0.0);
  EXPECT_DOUBLE_EQ(naive_income(4.0, 0.1425, 10000.0), 5700.0);
}

// ---- model construction -------------------------------------------------

TEST(BuildModel, DefaultScenarioValidates) {
  const sd::ValidatedModel m = build_model(defaults());
  EXPECT_TRUE(sd::validate_model(m.model()).empty());
  // 3 classes x 3 stocks, plus the population stocks.
  EXPECT_EQ(m.stock_count(), 9u + 4u);
}

TEST(BuildModel, RangeViolationNamesField) {
  Scenario s = defaults();
  s.behavior(CustomerClass::Spendthrift).add_to_cart_rate = 80.0;
  try {
    build_model(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RangeViolation);
    EXPECT_NE(std::string(e.what()).find("classes.spendthrift.add_to_cart_rate"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[30.0, 70.0]"), std::string::npos);
  }
}

TEST(BuildModel, NullWorkloadMovesNothing) {
  Scenario s = defaults();
  s.total_intensity = 0.0;
  for (auto c : all_classes) s.behavior(c).session_intensity = 0.0;
  const ScenarioRun run = run_scenario(s);
  for (const auto& series : run.raw.flows) {
    for (double x : series) ASSERT_EQ(x, 0.0);
  }
  EXPECT_EQ(sum(run.aggregate.revenue), 0.0);
}

TEST(BuildModel, NoAddToCartMeansNoPayers) {
  // Only the Tightwad range includes 0; the other classes keep their
  // defaults and act as a control.
  Scenario s = defaults();
  s.behavior(CustomerClass::Tightwad).add_to_cart_rate = 0.0;
  const ScenarioRun run = run_scenario(s);
  const auto& t = run.of(CustomerClass::Tightwad);
  for (double x : t.payers) ASSERT_EQ(x, 0.0);
  EXPECT_EQ(sum(t.revenue), 0.0);
  EXPECT_GT(sum(run.of(CustomerClass::Spendthrift).revenue), 0.0);
}

TEST(BuildModel, OperatingProfileSessionSource) {
  Scenario s = defaults();
  s.session_source = SessionSource::OperatingProfile;
  const OperatingProfile p = class_split(s.control1_pct, s.control2_pct);
  for (auto c : all_classes) EXPECT_DOUBLE_EQ(session_intensity(s, c), s.total_intensity * p[c]);

  const ScenarioRun a = run_scenario(s, {.expected_arrivals = true});
  for (auto c : all_classes) {
    const auto& arrivals = a.of(c).arrivals;
    for (std::size_t t = 1; t < arrivals.size(); ++t) ASSERT_DOUBLE_EQ(arrivals[t], s.total_intensity * p[c]);
  }
}

// ---- runs ---------------------------------------------------------------

TEST(RunScenario, Deterministic) {
  const Scenario s = defaults();
  const ScenarioRun a = run_scenario(s), b = run_scenario(s);
  for (auto c : all_classes) EXPECT_EQ(a.of(c), b.of(c));
  EXPECT_EQ(a, b);
}

TEST(RunScenario, SeedsDiffer) {
  Scenario s = defaults();
  const ScenarioRun a = run_scenario(s);
  s.sim.seed += 1;
  EXPECT_NE(a.aggregate.revenue, run_scenario(s).aggregate.revenue);
}

TEST(RunScenario, AggregateIsExactSumOfClasses) {
  const ScenarioRun run = run_scenario(defaults());
  const auto& t = run.of(CustomerClass::Tightwad).revenue;
  const auto& as = run.of(CustomerClass::AverageSpender).revenue;
  const auto& sp = run.of(CustomerClass::Spendthrift).revenue;
  ASSERT_EQ(run.aggregate.revenue.size(), 721u);
  for (std::size_t i = 0; i < t.size(); ++i) ASSERT_EQ(run.aggregate.revenue[i], t[i] + as[i] + sp[i]) << i;
}

TEST(RunScenario, RevenueIsPayersTimesOrderValue) {
  const ScenarioRun run = run_scenario(defaults());
  const double eov = 0.3 * 6 + 0.1 * 10 + 0.6 * 2;
  for (auto c : all_classes) {
    const auto& r = run.of(c);
    for (std::size_t i = 0; i < r.revenue.size(); ++i) ASSERT_NEAR(r.revenue[i], r.payers[i] * eov, 1e-12 * (1 + r.revenue[i]));
  }
}

TEST(RunScenario, MatchesHandWrittenRecurrence) {
  Scenario s = defaults();
  for (auto c : all_classes) s.behavior(c).buy_rate_sigma = 0.0;
  const ScenarioRun run = run_scenario(s, {.expected_arrivals = true});
  const double eov = 0.3 * 6 + 0.1 * 10 + 0.6 * 2;
  for (auto c : all_classes) {
    const ClassBehavior& b = s.behavior(c);
    const oracle::ClassTrace want = oracle::simulate({b.session_intensity, b.add_to_cart_rate, b.buy_rate_mu,
                                                      b.browse_exit_rate, b.cart_abandon_split, b.post_action_return_rate},
                                                     eov, 720);
    const ClassRunResult& got = run.of(c);
    ASSERT_EQ(got.revenue.size(), want.revenue.size());
    for (std::size_t t = 0; t < want.revenue.size(); ++t) {
      ASSERT_NEAR(got.revenue[t], want.revenue[t], 1e-9) << class_key(c) << " t=" << t;
      ASSERT_NEAR(got.browsing[t], want.browsing[t], 1e-9) << class_key(c) << " t=" << t;
      ASSERT_NEAR(got.in_cart[t], want.cart[t], 1e-9) << class_key(c) << " t=" << t;
    }
  }
}

TEST(RunScenario, EntityConservationPerClass) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Scenario s = defaults();
    s.sim.seed = seed;
    const ScenarioRun run = run_scenario(s);
    for (auto c : all_classes) {
      const ClassRunResult& r = run.of(c);
      double arrived = 0.0, left = 0.0;
      for (std::size_t t = 0; t < r.arrivals.size(); ++t) {
        arrived += r.arrivals[t];
        left += r.payers[t] + r.exit_no_purchase[t] + r.exit_abandoned_cart[t];
        ASSERT_GE(r.browsing[t], 0.0);
        ASSERT_GE(r.in_cart[t], 0.0);
        ASSERT_NEAR(arrived, r.browsing[t] + r.in_cart[t] + left, 1e-9 * std::max(1.0, arrived))
            << class_key(c) << " seed " << seed << " t " << t;
      }
    }
  }
}

TEST(RunScenario, PopulationSplitFollowsProfile) {
  const Scenario s = defaults();
  const ScenarioRun run = run_scenario(s);
  const OperatingProfile p = class_split(s.control1_pct, s.control2_pct);
  const auto& arrivals = run.raw.flow(ids::population_arrivals);
  // Each step's new shoppers are split one step later.
  const double split_total = sum(arrivals) - arrivals.back();
  double population_total = 0.0;
  for (auto c : all_classes) {
    const double pop = run.population[index_of(c)].back();
    EXPECT_NEAR(pop, p[c] * split_total, 1e-9 * std::max(1.0, split_total)) << class_key(c);
    population_total += pop;
  }
  EXPECT_NEAR(population_total + run.new_shoppers.back(), sum(arrivals), 1e-9 * sum(arrivals));
}

TEST(RunScenario, RevenueLinearInPrices) {
  const Scenario base = defaults();
  const ScenarioRun a = run_scenario(base);
  for (double factor : {2.0, 0.5, 4.0, 3.0}) {
    Scenario s = base;
    for (Item& item : s.catalog.items) item.price *= factor;
    const ScenarioRun b = run_scenario(s);
    for (auto c : all_classes) {
      ASSERT_EQ(a.of(c).payers, b.of(c).payers);
      const auto& ra = a.of(c).revenue;
      const auto& rb = b.of(c).revenue;
      for (std::size_t t = 0; t < ra.size(); ++t) {
        if (factor == 3.0) {
          // Not a power of two, so the order value itself may round.
          ASSERT_NEAR(rb[t], factor * ra[t], 4e-16 * rb[t]);
        } else {
          ASSERT_EQ(rb[t], factor * ra[t]);
        }
      }
    }
  }
}

TEST(RunScenario, MoreAddToCartNeverLowersPayers) {
  const PerClass<std::array<double, 2>> range{{{0.0, 10.0}, {10.0, 30.0}, {30.0, 70.0}}};
  for (auto c : all_classes) {
    double previous = -1.0;
    for (int i = 0; i < 20; ++i) {
      Scenario s = defaults();
      s.sim.seed = 99;
      const auto [lo, hi] = range[index_of(c)];
      s.behavior(c).add_to_cart_rate = lo + (hi - lo) * i / 19.0;
      const double payers = sum(run_scenario(s).of(c).payers);
      ASSERT_GE(payers, previous) << class_key(c) << " rate " << s.behavior(c).add_to_cart_rate;
      previous = payers;
    }
  }
}

TEST(RunScenario, NaiveIncomeIdentity) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Scenario s = defaults();
    s.sim.seed = seed;
    const ScenarioRun run = run_scenario(s);
    for (const ClassRunResult* r : {&run.classes[0], &run.classes[1], &run.classes[2], &run.aggregate}) {
      const double revenue = sum(r->revenue), payers = sum(r->payers), visits = sum(r->arrivals);
      if (payers <= 0.0) continue;
      const double aov = revenue / payers, cr = payers / visits;
      EXPECT_NEAR(naive_income(aov, cr, visits), revenue, 1e-9 * revenue);
    }
  }
}

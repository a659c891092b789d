#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "stockflow/commerce/scenario.hpp"
#include "stockflow/error.hpp"
#include "stockflow/sd/engine.hpp"
#include "stockflow/sd/model.hpp"

namespace stockflow::commerce {

struct OperatingProfile {
  PerClass<double> p{};

  double operator[](CustomerClass c) const { return p[index_of(c)]; }
  bool operator==(const OperatingProfile&) const = default;
};

/// Splits the population with two cascaded percentages: control1 goes to
/// Tightwads, control2 of the remainder to Average Spenders, the rest to
/// Spendthrifts.
inline OperatingProfile class_split(double control1_pct, double control2_pct) {
  auto in_range = [](double x) { return x >= 0.0 && x <= 100.0; };
  if (!in_range(control1_pct) || !in_range(control2_pct)) {
    throw Error(Errc::OutOfRange, "control percentages must lie in [0, 100]");
  }
  const double p1 = control1_pct / 100.0;
  const double p2 = (1.0 - p1) * control2_pct / 100.0;
  const double p3 = (1.0 - p1) - p2;
  return {{p1, p2, p3}};
}

inline double per_class_intensity(double lambda_total, double p_i) { return lambda_total * p_i; }

/// Sum of b_i * Pr_i: the expected dollars per paid order.
inline double expected_order_value(const Catalog& catalog) {
  if (catalog.items.empty()) throw Error(Errc::EmptyCatalog, "catalog has no items");
  double total_p = 0.0, value = 0.0;
  for (const Item& item : catalog.items) {
    total_p += item.buy_probability;
    value += item.buy_probability * item.price;
  }
  if (!(std::abs(total_p - 1.0) <= catalog_sum_tolerance)) {
    throw Error(Errc::UnnormalizedCatalog, "buy probabilities sum to " + std::to_string(total_p));
  }
  return value;
}

inline double revenue_at(double payers, const Catalog& catalog) { return payers * expected_order_value(catalog); }

/// Income = average order value * conversion rate * visitors.
inline double naive_income(double aov, double cr, double visitors) { return aov * cr * visitors; }

/// Primitive ids used by build_model.
namespace ids {
inline std::string stock(CustomerClass c, std::string_view what) { return std::string(class_key(c)) + "." + std::string(what); }
inline std::string flow(CustomerClass c, std::string_view what) { return std::string(class_key(c)) + "." + std::string(what); }
inline const std::string new_shoppers = "population.new_shoppers";
inline const std::string population_arrivals = "population.arrivals";
inline std::string population(CustomerClass c) { return "population." + std::string(class_key(c)); }
inline std::string population_split(CustomerClass c) { return "population.to_" + std::string(class_key(c)); }
inline const std::string expected_order_value = "catalog.expected_order_value";
}  // namespace ids

struct BuildOptions {
  // Replace Poisson arrivals with constant flows at the same mean.
  bool expected_arrivals = false;
};

inline double session_intensity(const Scenario& s, CustomerClass c) {
  if (s.session_source == SessionSource::ClassIntensity) return s.behavior(c).session_intensity;
  return per_class_intensity(s.total_intensity, class_split(s.control1_pct, s.control2_pct)[c]);
}

/// Builds the stock-and-flow model of a scenario:
///
///   boundary -> browsing -> cart -> paid -> boundary
///                  |  ^       |
///                  v  |       v
///        exit (no purchase)  exit (abandoned cart)
///
/// per class, plus the population-accounting split of total arrivals into
/// the three class populations. Throws Errc::RangeViolation on bad input.
inline sd::ValidatedModel build_model(const Scenario& scenario, BuildOptions options = {}) {
  require_valid(scenario);
  using namespace sd;
  Model m;

  m.add(Variable{ids::expected_order_value, "Expected order value", expected_order_value(scenario.catalog)});

  // Operating profile: total arrivals split into class populations.
  const OperatingProfile profile = class_split(scenario.control1_pct, scenario.control2_pct);
  m.add(Stock{ids::new_shoppers, "New e-Shoppers", 0.0});
  m.add(Flow{ids::population_arrivals, "New e-Shopper arrivals", std::nullopt, ids::new_shoppers,
             options.expected_arrivals ? RateSpec{Constant{scenario.total_intensity}}
                                       : RateSpec{Poisson{scenario.total_intensity}}});
  for (CustomerClass c : all_classes) {
    m.add(Stock{ids::population(c), std::string(class_key(c)) + " e-Shoppers", 0.0});
    m.add(Flow{ids::population_split(c), "split", ids::new_shoppers, ids::population(c),
               FractionOfStock{ids::new_shoppers, 100.0 * profile[c]}});
  }

  for (CustomerClass c : all_classes) {
    const ClassBehavior& b = scenario.behavior(c);
    const std::string browsing = ids::stock(c, "browsing");
    const std::string cart = ids::stock(c, "cart");
    const std::string paid = ids::stock(c, "paid");
    const std::string buy = ids::flow(c, "buy");
    const double lambda = session_intensity(scenario, c);

    m.add(Stock{browsing, "Browse/Search", 0.0});
    m.add(Stock{cart, "Items in cart", 0.0});
    m.add(Stock{paid, "Pay items in cart", 0.0});

    m.add(Flow{ids::flow(c, "arrivals"), "Session initiations", std::nullopt, browsing,
               options.expected_arrivals ? RateSpec{Constant{lambda}} : RateSpec{Poisson{lambda}}});
    m.add(Flow{ids::flow(c, "add_to_cart"), "Add to cart", browsing, cart, FractionOfStock{browsing, b.add_to_cart_rate}});
    m.add(Flow{ids::flow(c, "browse_exit"), "Terminate session", browsing, std::nullopt,
               FractionOfStock{browsing, b.browse_exit_rate}});
    m.add(Flow{buy, "Buy", cart, paid, NormalFraction{cart, b.buy_rate_mu, b.buy_rate_sigma, 0.0, 100.0}});
    // A share of the cart holders who did not pay this step leaves the site.
    const double split = b.cart_abandon_split;
    m.add(Flow{ids::flow(c, "cart_abandon"), "Leave with non-empty cart", cart, std::nullopt,
               ExpressionRate{[split, cart, buy](const EvalContext& ctx) {
                 return split * std::max(0.0, ctx.level(cart) - ctx.flow(buy));
               }}});
    m.add(Link{buy, ids::flow(c, "cart_abandon")});
    m.add(Flow{ids::flow(c, "cart_return"), "Continue browsing", cart, browsing,
               FractionOfStock{cart, b.post_action_return_rate}});
    // Payers are counted on the inflow; the stock only holds them for a step.
    m.add(Flow{ids::flow(c, "paid_drain"), "Session complete", paid, std::nullopt, FractionOfStock{paid, 100.0}});
  }
  return ValidatedModel(std::move(m));
}

/// Per-class series, one entry per record point (index 0 is t = 0).
struct ClassRunResult {
  std::vector<double> arrivals;             // entities/step
  std::vector<double> browsing;             // stock level
  std::vector<double> in_cart;              // stock level
  std::vector<double> payers;               // C_t, entities paying during the step
  std::vector<double> exit_no_purchase;     // entities/step
  std::vector<double> exit_abandoned_cart;  // entities/step leaving the site with a cart
  std::vector<double> cart_returns;         // entities/step dropping the cart to browse on
  std::vector<double> revenue;              // R_t, dollars/step

  bool operator==(const ClassRunResult&) const = default;

  /// Carts left without payment during the step, whether the customer
  /// leaves or browses on. This is the potential-loss flow.
  std::vector<double> unconverted_carts() const {
    std::vector<double> out(exit_abandoned_cart.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = exit_abandoned_cart[i] + cart_returns[i];
    return out;
  }
};

struct ScenarioRun {
  std::vector<double> times;
  PerClass<ClassRunResult> classes;
  ClassRunResult aggregate;  // element-wise sum over classes
  std::vector<double> new_shoppers;
  PerClass<std::vector<double>> population;
  double expected_order_value = 0.0;
  double dt = 1.0;
  sd::RunResult raw;

  const ClassRunResult& of(CustomerClass c) const { return classes[index_of(c)]; }
  bool operator==(const ScenarioRun&) const = default;
};

namespace detail {

inline void accumulate(std::vector<double>& into, const std::vector<double>& add) {
  if (into.empty()) into.assign(add.size(), 0.0);
  for (std::size_t i = 0; i < add.size(); ++i) into[i] += add[i];
}

}  // namespace detail

inline ScenarioRun run_scenario(const Scenario& scenario, BuildOptions options = {}) {
  const sd::ValidatedModel model = build_model(scenario, options);
  ScenarioRun out;
  out.raw = sd::run(model, scenario.sim);
  out.times = out.raw.times;
  out.dt = scenario.sim.dt;
  out.expected_order_value = expected_order_value(scenario.catalog);
  out.new_shoppers = out.raw.stock(ids::new_shoppers);

  for (CustomerClass c : all_classes) {
    ClassRunResult& r = out.classes[index_of(c)];
    r.arrivals = out.raw.flow(ids::flow(c, "arrivals"));
    r.browsing = out.raw.stock(ids::stock(c, "browsing"));
    r.in_cart = out.raw.stock(ids::stock(c, "cart"));
    r.payers = out.raw.flow(ids::flow(c, "buy"));
    r.exit_no_purchase = out.raw.flow(ids::flow(c, "browse_exit"));
    r.exit_abandoned_cart = out.raw.flow(ids::flow(c, "cart_abandon"));
    r.cart_returns = out.raw.flow(ids::flow(c, "cart_return"));
    r.revenue.resize(r.payers.size());
    for (std::size_t t = 0; t < r.payers.size(); ++t) r.revenue[t] = r.payers[t] * out.expected_order_value;
    out.population[index_of(c)] = out.raw.stock(ids::population(c));
  }

  ClassRunResult& agg = out.aggregate;
  for (const ClassRunResult& r : out.classes) {
    detail::accumulate(agg.arrivals, r.arrivals);
    detail::accumulate(agg.browsing, r.browsing);
    detail::accumulate(agg.in_cart, r.in_cart);
    detail::accumulate(agg.payers, r.payers);
    detail::accumulate(agg.exit_no_purchase, r.exit_no_purchase);
    detail::accumulate(agg.exit_abandoned_cart, r.exit_abandoned_cart);
    detail::accumulate(agg.cart_returns, r.cart_returns);
    detail::accumulate(agg.revenue, r.revenue);
  }
  return out;
}

}  // namespace stockflow::commerce

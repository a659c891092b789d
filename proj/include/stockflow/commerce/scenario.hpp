#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stockflow/error.hpp"
#include "stockflow/sd/model.hpp"

namespace stockflow::commerce {

enum class CustomerClass : std::size_t { Tightwad = 0, AverageSpender = 1, Spendthrift = 2 };

inline constexpr std::size_t class_count = 3;
inline constexpr std::array<CustomerClass, class_count> all_classes{
    CustomerClass::Tightwad, CustomerClass::AverageSpender, CustomerClass::Spendthrift};

constexpr std::string_view class_key(CustomerClass c) noexcept {
  switch (c) {
    case CustomerClass::Tightwad: return "tightwad";
    case CustomerClass::AverageSpender: return "average_spender";
    case CustomerClass::Spendthrift: return "spendthrift";
  }
  return "?";
}

constexpr std::size_t index_of(CustomerClass c) noexcept { return static_cast<std::size_t>(c); }

template <typename T>
using PerClass = std::array<T, class_count>;

struct Item {
  double buy_probability = 0.0;
  double price = 0.0;

  bool operator==(const Item&) const = default;
};

struct Catalog {
  std::vector<Item> items;

  bool operator==(const Catalog&) const = default;
};

/// Session behaviour of one customer class. Percentages are per step.
struct ClassBehavior {
  double session_intensity = 0.0;        // sessions/s
  double add_to_cart_rate = 0.0;         // % of browsers adding to the cart
  double buy_rate_mu = 0.0;              // % of cart holders paying (normal mean)
  double buy_rate_sigma = 0.0;           // normal std-dev, %
  double browse_exit_rate = 0.0;         // % of browsers ending the session
  double cart_abandon_split = 0.0;       // share of non-buying cart holders who leave the site
  double post_action_return_rate = 0.0;  // % of cart holders dropping the cart and browsing on

  bool operator==(const ClassBehavior&) const = default;
};

/// Where per-class session initiations come from. ClassIntensity uses each
/// class's own session_intensity; OperatingProfile uses total_intensity * p_i.
enum class SessionSource { ClassIntensity, OperatingProfile };

constexpr std::string_view to_string(SessionSource s) noexcept {
  return s == SessionSource::ClassIntensity ? "class_intensity" : "operating_profile";
}

struct Scenario {
  double total_intensity = 0.0;
  double control1_pct = 0.0;
  double control2_pct = 0.0;
  SessionSource session_source = SessionSource::ClassIntensity;
  PerClass<ClassBehavior> behaviors{};
  Catalog catalog;
  sd::SimConfig sim;

  const ClassBehavior& behavior(CustomerClass c) const { return behaviors[index_of(c)]; }
  ClassBehavior& behavior(CustomerClass c) { return behaviors[index_of(c)]; }

  bool operator==(const Scenario&) const = default;
};

/// Slider metadata for one adjustable field. `path` is relative to the
/// scenario object of a scenario document.
struct FieldRange {
  std::string path;
  double min;
  double max;
  double step;
};

/// Every bounded numeric scenario field, in document order. The UI builds
/// its controls from this list; the validator checks against it.
inline std::vector<FieldRange> field_ranges() {
  std::vector<FieldRange> r{
      {"total_intensity", 0.0, 50.0, 0.1},
      {"control1_pct", 0.0, 100.0, 0.001},
      {"control2_pct", 0.0, 100.0, 0.001},
  };
  constexpr PerClass<std::array<double, 2>> add_to_cart{{{0.0, 10.0}, {10.0, 30.0}, {30.0, 70.0}}};
  for (CustomerClass c : all_classes) {
    const std::string base = "classes." + std::string(class_key(c)) + ".";
    r.push_back({base + "session_intensity", 0.0, 50.0, 0.1});
    r.push_back({base + "add_to_cart_rate", add_to_cart[index_of(c)][0], add_to_cart[index_of(c)][1], 0.1});
    r.push_back({base + "buy_rate_mu", 0.0, 100.0, 0.001});
    r.push_back({base + "buy_rate_sigma", 0.0, 100.0, 0.00001});
    r.push_back({base + "browse_exit_rate", 0.0, 100.0, 0.1});
    r.push_back({base + "cart_abandon_split", 0.0, 1.0, 0.001});
    r.push_back({base + "post_action_return_rate", 0.0, 100.0, 0.1});
  }
  return r;
}

struct FieldError {
  Errc code;
  std::string field;
  std::string message;
  std::optional<double> min;
  std::optional<double> max;
};

inline std::string format_range(double lo, double hi) {
  auto fmt = [](double x) {
    std::string s = std::to_string(x);
    // Trim to one decimal at least: 10.000000 -> 10.0
    while (s.size() > 2 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
    return s;
  };
  return "[" + fmt(lo) + ", " + fmt(hi) + "]";
}

namespace detail {

inline const double* field_ptr(const Scenario& s, std::string_view path) {
  if (path == "total_intensity") return &s.total_intensity;
  if (path == "control1_pct") return &s.control1_pct;
  if (path == "control2_pct") return &s.control2_pct;
  for (CustomerClass c : all_classes) {
    const std::string base = "classes." + std::string(class_key(c)) + ".";
    if (!path.starts_with(base)) continue;
    const std::string_view leaf = path.substr(base.size());
    const ClassBehavior& b = s.behavior(c);
    if (leaf == "session_intensity") return &b.session_intensity;
    if (leaf == "add_to_cart_rate") return &b.add_to_cart_rate;
    if (leaf == "buy_rate_mu") return &b.buy_rate_mu;
    if (leaf == "buy_rate_sigma") return &b.buy_rate_sigma;
    if (leaf == "browse_exit_rate") return &b.browse_exit_rate;
    if (leaf == "cart_abandon_split") return &b.cart_abandon_split;
    if (leaf == "post_action_return_rate") return &b.post_action_return_rate;
  }
  return nullptr;
}

}  // namespace detail

inline constexpr double catalog_sum_tolerance = 1e-9;

/// Range checks shared by the CLI loader, the HTTP service and build_model.
/// Returns every violation; empty means valid.
inline std::vector<FieldError> check_ranges(const Scenario& s) {
  std::vector<FieldError> errors;
  for (const FieldRange& r : field_ranges()) {
    const double v = *detail::field_ptr(s, r.path);
    if (!(std::isfinite(v) && v >= r.min && v <= r.max)) {
      errors.push_back({Errc::RangeViolation, r.path,
                        "value " + std::to_string(v) + " outside allowed range " + format_range(r.min, r.max), r.min,
                        r.max});
    }
  }

  if (s.catalog.items.empty()) {
    errors.push_back({Errc::RangeViolation, "catalog", "catalog needs at least one item", std::nullopt, std::nullopt});
  }
  double total = 0.0;
  for (std::size_t i = 0; i < s.catalog.items.size(); ++i) {
    const Item& item = s.catalog.items[i];
    const std::string base = "catalog[" + std::to_string(i) + "].";
    if (!(item.buy_probability >= 0.0 && item.buy_probability <= 1.0)) {
      errors.push_back({Errc::RangeViolation, base + "buy_probability", "buy probability outside allowed range [0.0, 1.0]",
                        0.0, 1.0});
    }
    if (!(std::isfinite(item.price) && item.price >= 0.0)) {
      errors.push_back({Errc::RangeViolation, base + "price", "price must be finite and >= 0", 0.0, std::nullopt});
    }
    total += item.buy_probability;
  }
  if (!s.catalog.items.empty() && !(std::abs(total - 1.0) <= catalog_sum_tolerance)) {
    errors.push_back({Errc::RangeViolation, "catalog",
                      "buy probabilities sum to " + std::to_string(total) + ", expected 1", std::nullopt, std::nullopt});
  }

  const sd::SimConfig& sim = s.sim;
  if (!(std::isfinite(sim.dt) && sim.dt > 0.0)) {
    errors.push_back({Errc::RangeViolation, "sim.dt", "dt must be > 0", 0.0, std::nullopt});
  } else if (!(std::isfinite(sim.horizon) && sim.horizon >= sim.dt)) {
    errors.push_back({Errc::RangeViolation, "sim.horizon", "horizon must be >= dt", sim.dt, std::nullopt});
  } else {
    const double steps = sim.horizon / sim.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
      errors.push_back({Errc::RangeViolation, "sim.horizon", "horizon must be a whole number of dt steps",
                        std::nullopt, std::nullopt});
    }
  }
  if (sim.record_every < 1) {
    errors.push_back({Errc::RangeViolation, "sim.record_every", "record_every must be >= 1", 1.0, std::nullopt});
  }
  return errors;
}

inline void require_valid(const Scenario& s) {
  const auto errors = check_ranges(s);
  if (errors.empty()) return;
  std::string msg;
  for (const auto& e : errors) msg += (msg.empty() ? "" : "; ") + e.field + ": " + e.message;
  throw Error(Errc::RangeViolation, msg);
}

}  // namespace stockflow::commerce

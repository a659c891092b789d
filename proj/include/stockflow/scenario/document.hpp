#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stockflow/commerce/scenario.hpp"
#include "stockflow/error.hpp"
#include "stockflow/metrics/analysis.hpp"
#include "stockflow/scenario/default_scenario_data.hpp"

namespace stockflow::scenario {

using Json = nlohmann::ordered_json;
using commerce::FieldError;

inline constexpr int schema_version = 1;

/// Thrown when a scenario document fails to parse or validate. Carries every
/// field-level problem found, not just the first.
class ScenarioError : public Error {
 public:
  explicit ScenarioError(std::vector<FieldError> errors)
      : Error(errors.empty() ? Errc::ParseError : errors.front().code, summarize(errors)), errors_(std::move(errors)) {}

  const std::vector<FieldError>& errors() const noexcept { return errors_; }

 private:
  static std::string summarize(const std::vector<FieldError>& errors) {
    std::string msg;
    for (const auto& e : errors) {
      msg += (msg.empty() ? "" : "; ") + std::string(to_string(e.code)) + " " + (e.field.empty() ? "<document>" : e.field) +
             ": " + e.message;
    }
    return msg;
  }

  std::vector<FieldError> errors_;
};

struct Band {
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const Band&) const = default;
};

/// Expected steady-state bands keyed "<class>.<metric>", e.g.
/// "spendthrift.buy_to_visit"; "aggregate" is accepted as a class.
struct ReferenceBands {
  double tolerance = 0.0;
  std::map<std::string, Band> bands;

  bool operator==(const ReferenceBands&) const = default;
};

struct ScenarioFile {
  int schema_version = scenario::schema_version;
  commerce::Scenario scenario;
  std::optional<ReferenceBands> reference_bands;

  bool operator==(const ScenarioFile&) const = default;
};

inline bool is_band_key(std::string_view key) {
  const auto dot = key.find('.');
  if (dot == std::string_view::npos) return false;
  const auto cls = key.substr(0, dot), metric = key.substr(dot + 1);
  bool cls_ok = cls == "aggregate";
  for (auto c : commerce::all_classes) cls_ok = cls_ok || cls == commerce::class_key(c);
  bool metric_ok = false;
  for (auto m : metrics::all_metrics) metric_ok = metric_ok || metric == metrics::metric_key(m);
  return cls_ok && metric_ok;
}

namespace detail {

class Reader {
 public:
  std::vector<FieldError> errors;

  void fail(Errc code, std::string field, std::string message) {
    errors.push_back({code, std::move(field), std::move(message), std::nullopt, std::nullopt});
  }

  bool object(const Json& j, const std::string& path) {
    if (j.is_object()) return true;
    fail(Errc::ParseError, path, "expected an object");
    return false;
  }

  void number(const Json& j, const std::string& path, double& out) {
    if (j.is_number()) {
      out = j.get<double>();
    } else {
      fail(Errc::ParseError, path, "expected a number");
    }
  }

  void unsigned_integer(const Json& j, const std::string& path, std::uint64_t& out) {
    if (j.is_number_unsigned()) {
      out = j.get<std::uint64_t>();
    } else {
      fail(Errc::ParseError, path, "expected a non-negative integer");
    }
  }

  void behavior(const Json& j, const std::string& path, commerce::ClassBehavior& b) {
    if (!object(j, path)) return;
    for (const auto& [key, value] : j.items()) {
      const std::string p = path + "." + key;
      if (key == "session_intensity") number(value, p, b.session_intensity);
      else if (key == "add_to_cart_rate") number(value, p, b.add_to_cart_rate);
      else if (key == "buy_rate_mu") number(value, p, b.buy_rate_mu);
      else if (key == "buy_rate_sigma") number(value, p, b.buy_rate_sigma);
      else if (key == "browse_exit_rate") number(value, p, b.browse_exit_rate);
      else if (key == "cart_abandon_split") number(value, p, b.cart_abandon_split);
      else if (key == "post_action_return_rate") number(value, p, b.post_action_return_rate);
      else fail(Errc::UnknownField, p, "unknown field");
    }
  }

  void catalog(const Json& j, const std::string& path, commerce::Catalog& c) {
    if (!j.is_array()) {
      fail(Errc::ParseError, path, "expected an array of items");
      return;
    }
    c.items.clear();
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string p = path + "[" + std::to_string(i) + "]";
      commerce::Item item;
      if (!object(j[i], p)) continue;
      for (const char* required : {"buy_probability", "price"}) {
        if (!j[i].contains(required)) fail(Errc::ParseError, p + "." + required, "missing required field");
      }
      for (const auto& [key, value] : j[i].items()) {
        if (key == "buy_probability") number(value, p + "." + key, item.buy_probability);
        else if (key == "price") number(value, p + "." + key, item.price);
        else fail(Errc::UnknownField, p + "." + key, "unknown field");
      }
      c.items.push_back(item);
    }
  }

  void sim(const Json& j, const std::string& path, sd::SimConfig& s) {
    if (!object(j, path)) return;
    for (const auto& [key, value] : j.items()) {
      const std::string p = path + "." + key;
      if (key == "dt") number(value, p, s.dt);
      else if (key == "horizon") number(value, p, s.horizon);
      else if (key == "seed") unsigned_integer(value, p, s.seed);
      else if (key == "record_every") {
        std::uint64_t every = s.record_every;
        unsigned_integer(value, p, every);
        s.record_every = static_cast<std::size_t>(every);
      } else {
        fail(Errc::UnknownField, p, "unknown field");
      }
    }
  }

  /// Overlays the fields present in `j` onto `s`.
  void scenario(const Json& j, const std::string& path, commerce::Scenario& s) {
    if (!object(j, path)) return;
    for (const auto& [key, value] : j.items()) {
      const std::string p = path + "." + key;
      if (key == "total_intensity") number(value, p, s.total_intensity);
      else if (key == "control1_pct") number(value, p, s.control1_pct);
      else if (key == "control2_pct") number(value, p, s.control2_pct);
      else if (key == "session_source") {
        if (value == "class_intensity") s.session_source = commerce::SessionSource::ClassIntensity;
        else if (value == "operating_profile") s.session_source = commerce::SessionSource::OperatingProfile;
        else fail(Errc::ParseError, p, "expected \"class_intensity\" or \"operating_profile\"");
      } else if (key == "classes") {
        if (!object(value, p)) continue;
        for (const auto& [cls, body] : value.items()) {
          auto it = std::find_if(commerce::all_classes.begin(), commerce::all_classes.end(),
                                 [&](auto c) { return commerce::class_key(c) == cls; });
          if (it == commerce::all_classes.end()) fail(Errc::UnknownField, p + "." + cls, "unknown customer class");
          else behavior(body, p + "." + cls, s.behavior(*it));
        }
      } else if (key == "catalog") {
        catalog(value, p, s.catalog);
      } else if (key == "sim") {
        sim(value, p, s.sim);
      } else {
        fail(Errc::UnknownField, p, "unknown field");
      }
    }
  }

  void bands(const Json& j, const std::string& path, ReferenceBands& out) {
    if (!object(j, path)) return;
    for (const auto& [key, value] : j.items()) {
      const std::string p = path + "." + key;
      if (key == "tolerance") {
        number(value, p, out.tolerance);
        if (!(out.tolerance >= 0.0)) fail(Errc::RangeViolation, p, "tolerance must be >= 0");
      } else if (key == "bands") {
        if (!object(value, p)) continue;
        for (const auto& [name, band] : value.items()) {
          const std::string bp = p + "." + name;
          if (!is_band_key(name)) {
            fail(Errc::UnknownField, bp, "expected <class>.<metric>");
            continue;
          }
          if (!object(band, bp)) continue;
          Band b;
          for (const char* required : {"lo", "hi"}) {
            if (!band.contains(required)) fail(Errc::ParseError, bp + "." + required, "missing required field");
          }
          for (const auto& [bk, bv] : band.items()) {
            if (bk == "lo") number(bv, bp + ".lo", b.lo);
            else if (bk == "hi") number(bv, bp + ".hi", b.hi);
            else fail(Errc::UnknownField, bp + "." + bk, "unknown field");
          }
          if (b.lo > b.hi) fail(Errc::RangeViolation, bp, "lo must not exceed hi");
          out.bands[name] = b;
        }
      } else {
        fail(Errc::UnknownField, p, "unknown field");
      }
    }
  }
};

inline Json parse_text(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ScenarioError({{Errc::ParseError, "",
                          "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + e.what(),
                          std::nullopt, std::nullopt}});
  }
}

}  // namespace detail

struct ParseOptions {
  bool allow_reference_bands = true;
};

inline ScenarioFile default_scenario_file();

/// Parses a scenario document; fields absent from `doc` keep the values of
/// the shipped default scenario. Throws ScenarioError listing every problem.
inline ScenarioFile parse_scenario_document(const Json& doc, ParseOptions options = {},
                                            const ScenarioFile* base = nullptr) {
  ScenarioFile out = base ? *base : default_scenario_file();
  out.reference_bands.reset();
  detail::Reader reader;
  if (reader.object(doc, "")) {
    for (const auto& [key, value] : doc.items()) {
      if (key == "schema_version") {
        if (!value.is_number_integer() || value.get<long long>() != schema_version) {
          reader.fail(Errc::ParseError, key, "unsupported schema_version (expected " + std::to_string(schema_version) + ")");
        }
      } else if (key == "scenario") {
        reader.scenario(value, key, out.scenario);
      } else if (key == "reference_bands" && options.allow_reference_bands) {
        ReferenceBands bands;
        reader.bands(value, key, bands);
        out.reference_bands = std::move(bands);
      } else {
        reader.fail(Errc::UnknownField, key, "unknown field");
      }
    }
  }
  if (reader.errors.empty()) {
    for (FieldError e : commerce::check_ranges(out.scenario)) {
      e.field = "scenario." + e.field;
      reader.errors.push_back(std::move(e));
    }
  }
  if (!reader.errors.empty()) throw ScenarioError(std::move(reader.errors));
  return out;
}

inline ScenarioFile parse_scenario_text(std::string_view text, ParseOptions options = {}) {
  return parse_scenario_document(detail::parse_text(text), options);
}

inline ScenarioFile default_scenario_file() {
  static const ScenarioFile defaults = [] {
    const ScenarioFile empty{};
    return parse_scenario_document(detail::parse_text(detail::default_scenario_json), {}, &empty);
  }();
  return defaults;
}

inline commerce::Scenario default_scenario() { return default_scenario_file().scenario; }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ParseError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ScenarioFile load_scenario_file(const std::filesystem::path& path) { return parse_scenario_text(read_file(path)); }

inline commerce::Scenario load_scenario(const std::filesystem::path& path) { return load_scenario_file(path).scenario; }

inline Json to_json(const commerce::ClassBehavior& b) {
  return Json{{"session_intensity", b.session_intensity},     {"add_to_cart_rate", b.add_to_cart_rate},
              {"buy_rate_mu", b.buy_rate_mu},                 {"buy_rate_sigma", b.buy_rate_sigma},
              {"browse_exit_rate", b.browse_exit_rate},       {"cart_abandon_split", b.cart_abandon_split},
              {"post_action_return_rate", b.post_action_return_rate}};
}

inline Json to_json(const commerce::Scenario& s) {
  Json classes = Json::object();
  for (auto c : commerce::all_classes) classes[std::string(commerce::class_key(c))] = to_json(s.behavior(c));
  Json catalog = Json::array();
  for (const auto& item : s.catalog.items) catalog.push_back({{"buy_probability", item.buy_probability}, {"price", item.price}});
  return Json{{"total_intensity", s.total_intensity},
              {"control1_pct", s.control1_pct},
              {"control2_pct", s.control2_pct},
              {"session_source", std::string(commerce::to_string(s.session_source))},
              {"classes", classes},
              {"catalog", catalog},
              {"sim", {{"dt", s.sim.dt}, {"horizon", s.sim.horizon}, {"seed", s.sim.seed}, {"record_every", s.sim.record_every}}}};
}

inline Json to_json(const ReferenceBands& r) {
  Json bands = Json::object();
  for (const auto& [k, b] : r.bands) bands[k] = {{"lo", b.lo}, {"hi", b.hi}};
  return Json{{"tolerance", r.tolerance}, {"bands", bands}};
}

inline Json to_json(const ScenarioFile& f) {
  Json j{{"schema_version", f.schema_version}, {"scenario", to_json(f.scenario)}};
  if (f.reference_bands) j["reference_bands"] = to_json(*f.reference_bands);
  return j;
}

inline Json to_json(const FieldError& e) {
  Json j{{"code", std::string(to_string(e.code))}, {"field", e.field}, {"message", e.message}};
  if (e.min) j["min"] = *e.min;
  if (e.max) j["max"] = *e.max;
  return j;
}

/// Default scenario plus {min, max, step} for every adjustable field, keyed
/// by document path ("scenario.total_intensity", ...).
inline Json defaults_document() {
  ScenarioFile f = default_scenario_file();
  f.reference_bands.reset();
  Json ranges = Json::object();
  for (const auto& r : commerce::field_ranges()) {
    ranges["scenario." + r.path] = {{"min", r.min}, {"max", r.max}, {"step", r.step}};
  }
  return Json{{"scenario", to_json(f)}, {"ranges", ranges}};
}

}  // namespace stockflow::scenario

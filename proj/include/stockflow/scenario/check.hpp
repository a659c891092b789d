#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stockflow/error.hpp"
#include "stockflow/scenario/document.hpp"

namespace stockflow::scenario {

struct BandVerdict {
  std::string key;  // "<class>.<metric>"
  std::optional<Band> observed;
  Band reference;
  Band allowed;  // reference widened by the tolerance
  bool pass = false;
};

/// Reference band widened by a relative tolerance: [lo (1 - tol), hi (1 + tol)].
inline Band widen(const Band& b, double tolerance) { return {b.lo * (1.0 - tolerance), b.hi * (1.0 + tolerance)}; }

inline bool contains(const Band& outer, const Band& inner) { return inner.lo >= outer.lo && inner.hi <= outer.hi; }

/// Observed band "<class>.<metric>" from a report.json or summary.json
/// document; both carry classes.<class>.bands.<metric>.{lo,hi}.
inline std::optional<Band> observed_band(const Json& report, const std::string& key) {
  const auto dot = key.find('.');
  const std::string cls = key.substr(0, dot), metric = key.substr(dot + 1);
  const Json* node = nullptr;
  if (cls == "aggregate") {
    if (report.contains("aggregate")) node = &report["aggregate"];
  } else if (report.contains("classes") && report["classes"].contains(cls)) {
    node = &report["classes"][cls];
  }
  if (!node || !node->contains("bands") || !(*node)["bands"].contains(metric)) return std::nullopt;
  const Json& b = (*node)["bands"][metric];
  if (!b.contains("lo") || !b.contains("hi") || !b["lo"].is_number() || !b["hi"].is_number()) return std::nullopt;
  return Band{b["lo"].get<double>(), b["hi"].get<double>()};
}

/// One verdict per reference band; a metric missing from the report fails.
inline std::vector<BandVerdict> check_bands(const Json& report, const ReferenceBands& reference, double tolerance) {
  std::vector<BandVerdict> out;
  for (const auto& [key, ref] : reference.bands) {
    BandVerdict v;
    v.key = key;
    v.reference = ref;
    v.allowed = widen(ref, tolerance);
    v.observed = observed_band(report, key);
    v.pass = v.observed && contains(v.allowed, *v.observed);
    out.push_back(std::move(v));
  }
  return out;
}

/// Accepts either a bare reference-bands document ({"tolerance", "bands"})
/// or a scenario file that carries reference_bands.
inline ReferenceBands parse_reference_bands(const Json& doc) {
  if (doc.is_object() && doc.contains("reference_bands")) {
    ScenarioFile f = parse_scenario_document(doc);
    return *f.reference_bands;
  }
  detail::Reader reader;
  ReferenceBands out;
  reader.bands(doc, "", out);
  if (!reader.errors.empty()) throw ScenarioError(std::move(reader.errors));
  return out;
}

}  // namespace stockflow::scenario

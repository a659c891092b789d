#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

namespace stockflow::sd {

using Id = std::string;

class EvalContext;

/// User-supplied rate or variable equation. Reads time, stock levels, and
/// (through links) variable values and other flows' requested rates.
using Expression = std::function<double(const EvalContext&)>;

struct Stock {
  Id id;
  std::string name;
  double initial_level = 0.0;
};

// Rate variants. All rates are per unit of simulated time; a flow moves
// rate * dt during one step. "Per step" in the docs below assumes dt = 1.

/// Fixed amount per step.
struct Constant {
  double value = 0.0;
};

/// percent/100 of the referenced stock per step.
struct FractionOfStock {
  Id stock;
  double percent = 0.0;
};

/// Integer count per step drawn from Poisson(intensity * dt).
struct Poisson {
  double intensity = 0.0;
};

/// Like FractionOfStock, but the percentage is redrawn every step from
/// N(mu, sigma) clipped into [lo, hi].
struct NormalFraction {
  Id stock;
  double mu = 0.0;
  double sigma = 0.0;
  double lo = 0.0;
  double hi = 100.0;
};

struct ExpressionRate {
  Expression fn;
};

using RateSpec = std::variant<Constant, FractionOfStock, Poisson, NormalFraction, ExpressionRate>;

/// Flow between two stocks; std::nullopt on either end is the model boundary.
struct Flow {
  Id id;
  std::string name;
  std::optional<Id> source;
  std::optional<Id> target;
  RateSpec rate;
};

struct Variable {
  Id id;
  std::string name;
  std::variant<double, Expression> definition = 0.0;
  // Value returned by previous() during the first step.
  double initial_previous = 0.0;
};

struct Link {
  Id from;
  Id to;
};

/// Plain description of a stock-and-flow graph. Nothing is checked on
/// insertion; validate_model() reports every defect at once.
class Model {
 public:
  Model& add(Stock s) {
    stocks_.push_back(std::move(s));
    return *this;
  }
  Model& add(Flow f) {
    flows_.push_back(std::move(f));
    return *this;
  }
  Model& add(Variable v) {
    variables_.push_back(std::move(v));
    return *this;
  }
  Model& add(Link l) {
    links_.push_back(std::move(l));
    return *this;
  }

  const std::vector<Stock>& stocks() const noexcept { return stocks_; }
  const std::vector<Flow>& flows() const noexcept { return flows_; }
  const std::vector<Variable>& variables() const noexcept { return variables_; }
  const std::vector<Link>& links() const noexcept { return links_; }

  bool empty() const noexcept {
    return stocks_.empty() && flows_.empty() && variables_.empty() && links_.empty();
  }

 private:
  std::vector<Stock> stocks_;
  std::vector<Flow> flows_;
  std::vector<Variable> variables_;
  std::vector<Link> links_;
};

struct SimConfig {
  double dt = 1.0;
  double horizon = 720.0;
  std::uint64_t seed = 0;
  std::size_t record_every = 1;

  bool operator==(const SimConfig&) const = default;
};

enum class DefectKind {
  DanglingReference,
  DependencyCycle,
  NegativeConstant,
  InvalidRate,
  DuplicateId,
  InvalidFlow,
};

constexpr std::string_view to_string(DefectKind k) noexcept {
  switch (k) {
    case DefectKind::DanglingReference: return "DANGLING_REFERENCE";
    case DefectKind::DependencyCycle: return "DEPENDENCY_CYCLE";
    case DefectKind::NegativeConstant: return "NEGATIVE_CONSTANT";
    case DefectKind::InvalidRate: return "INVALID_RATE";
    case DefectKind::DuplicateId: return "DUPLICATE_ID";
    case DefectKind::InvalidFlow: return "INVALID_FLOW";
  }
  return "UNKNOWN";
}

struct Defect {
  DefectKind kind;
  Id primitive;
  std::string message;
};

using ValidationReport = std::vector<Defect>;

namespace detail {

// Tarjan SCC over the variable/flow dependency graph. Returns every
// component that forms a cycle (size > 1, or a node linked to itself).
inline std::vector<std::vector<std::size_t>> find_cycles(const std::vector<std::vector<std::size_t>>& adj) {
  const std::size_t n = adj.size();
  constexpr std::size_t unvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, unvisited), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> cycles;
  std::size_t counter = 0;

  // Iterative to keep deep chains off the call stack.
  struct Frame {
    std::size_t node;
    std::size_t edge;
  };
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != unvisited) continue;
    std::vector<Frame> frames{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!frames.empty()) {
      Frame& f = frames.back();
      if (f.edge < adj[f.node].size()) {
        std::size_t next = adj[f.node][f.edge++];
        if (index[next] == unvisited) {
          index[next] = low[next] = counter++;
          stack.push_back(next);
          on_stack[next] = true;
          frames.push_back({next, 0});
        } else if (on_stack[next]) {
          low[f.node] = std::min(low[f.node], index[next]);
        }
        continue;
      }
      const std::size_t v = f.node;
      frames.pop_back();
      if (!frames.empty()) low[frames.back().node] = std::min(low[frames.back().node], low[v]);
      if (low[v] != index[v]) continue;
      std::vector<std::size_t> component;
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        component.push_back(w);
      } while (w != v);
      bool self_loop = false;
      for (std::size_t e : adj[v]) self_loop = self_loop || e == v;
      if (component.size() > 1 || self_loop) cycles.push_back(std::move(component));
    }
  }
  return cycles;
}

inline bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

}  // namespace detail

/// Lists every defect in `model`. An empty report means the model can run.
inline ValidationReport validate_model(const Model& model) {
  ValidationReport report;
  auto defect = [&](DefectKind k, const Id& id, std::string msg) {
    report.push_back({k, id, std::move(msg)});
  };

  std::unordered_set<Id> all_ids, stock_ids;
  auto claim = [&](const Id& id) {
    if (!all_ids.insert(id).second) defect(DefectKind::DuplicateId, id, "id '" + id + "' is used more than once");
  };
  for (const auto& s : model.stocks()) {
    claim(s.id);
    stock_ids.insert(s.id);
    if (!detail::finite_nonneg(s.initial_level)) {
      defect(DefectKind::NegativeConstant, s.id, "initial level must be finite and >= 0");
    }
  }
  for (const auto& v : model.variables()) claim(v.id);
  for (const auto& f : model.flows()) claim(f.id);

  auto check_stock_ref = [&](const Id& owner, const Id& ref) {
    if (!stock_ids.contains(ref)) {
      defect(DefectKind::DanglingReference, owner, "references unknown stock '" + ref + "'");
    }
  };

  for (const auto& f : model.flows()) {
    if (f.source) check_stock_ref(f.id, *f.source);
    if (f.target) check_stock_ref(f.id, *f.target);
    if (f.source == f.target) {
      defect(DefectKind::InvalidFlow, f.id, "source and target must differ");
    }
    std::visit(
        [&](const auto& r) {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, Constant>) {
            if (!detail::finite_nonneg(r.value)) defect(DefectKind::NegativeConstant, f.id, "constant rate must be >= 0");
          } else if constexpr (std::is_same_v<R, FractionOfStock>) {
            check_stock_ref(f.id, r.stock);
            if (!(r.percent >= 0.0 && r.percent <= 100.0)) {
              defect(DefectKind::InvalidRate, f.id, "fraction percent must be in [0, 100]");
            }
          } else if constexpr (std::is_same_v<R, Poisson>) {
            if (!detail::finite_nonneg(r.intensity)) defect(DefectKind::NegativeConstant, f.id, "poisson intensity must be >= 0");
          } else if constexpr (std::is_same_v<R, NormalFraction>) {
            check_stock_ref(f.id, r.stock);
            if (!(r.sigma >= 0.0) || !(r.lo <= r.hi) || !std::isfinite(r.mu)) {
              defect(DefectKind::InvalidRate, f.id, "normal fraction needs sigma >= 0 and lo <= hi");
            }
          } else {
            if (!r.fn) defect(DefectKind::InvalidRate, f.id, "expression rate has no function");
          }
        },
        f.rate);
  }

  for (const auto& v : model.variables()) {
    if (const auto* fn = std::get_if<Expression>(&v.definition); fn && !*fn) {
      defect(DefectKind::InvalidRate, v.id, "variable expression has no function");
    }
  }

  // Dependency graph over computed primitives (variables and flows).
  std::unordered_map<Id, std::size_t> node_of;
  std::vector<Id> node_ids;
  for (const auto& v : model.variables()) {
    if (node_of.emplace(v.id, node_ids.size()).second) node_ids.push_back(v.id);
  }
  for (const auto& f : model.flows()) {
    if (node_of.emplace(f.id, node_ids.size()).second) node_ids.push_back(f.id);
  }
  std::vector<std::vector<std::size_t>> adj(node_ids.size());
  for (const auto& l : model.links()) {
    bool ok = true;
    for (const Id* end : {&l.from, &l.to}) {
      if (!all_ids.contains(*end)) {
        defect(DefectKind::DanglingReference, l.from + "->" + l.to, "link endpoint '" + *end + "' does not exist");
        ok = false;
      }
    }
    if (!ok) continue;
    auto a = node_of.find(l.from), b = node_of.find(l.to);
    if (a != node_of.end() && b != node_of.end()) adj[a->second].push_back(b->second);
  }
  for (const auto& cycle : detail::find_cycles(adj)) {
    std::string members;
    for (std::size_t n : cycle) members += (members.empty() ? "" : ", ") + node_ids[n];
    defect(DefectKind::DependencyCycle, node_ids[cycle.front()], "dependency cycle among {" + members + "}");
  }
  return report;
}

}  // namespace stockflow::sd

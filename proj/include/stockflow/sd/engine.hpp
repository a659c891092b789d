#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stockflow/error.hpp"
#include "stockflow/sd/model.hpp"
#include "stockflow/sd/random.hpp"

namespace stockflow::sd {

/// Index-based, immutable form of a Model that passed validation.
class ValidatedModel {
 public:
  static constexpr std::size_t boundary = static_cast<std::size_t>(-1);

  /// Throws Errc::UnvalidatedModel (listing the defects) if `model` is invalid.
  explicit ValidatedModel(Model model) : model_(std::move(model)) {
    const ValidationReport report = validate_model(model_);
    if (!report.empty()) {
      std::string msg = std::to_string(report.size()) + " defect(s):";
      for (const auto& d : report) msg += " [" + std::string(to_string(d.kind)) + " " + d.primitive + ": " + d.message + "]";
      throw Error(Errc::UnvalidatedModel, msg);
    }
    compile();
  }

  const Model& model() const noexcept { return model_; }
  std::size_t stock_count() const noexcept { return model_.stocks().size(); }
  std::size_t flow_count() const noexcept { return model_.flows().size(); }
  std::size_t variable_count() const noexcept { return model_.variables().size(); }

  std::size_t stock_index(std::string_view id) const { return lookup(stock_index_, id, "stock"); }
  std::size_t flow_index(std::string_view id) const { return lookup(flow_index_, id, "flow"); }
  std::size_t variable_index(std::string_view id) const { return lookup(variable_index_, id, "variable"); }

  std::size_t flow_source(std::size_t f) const noexcept { return flow_source_[f]; }
  std::size_t flow_target(std::size_t f) const noexcept { return flow_target_[f]; }

  std::vector<double> initial_levels() const {
    std::vector<double> levels;
    levels.reserve(stock_count());
    for (const auto& s : model_.stocks()) levels.push_back(s.initial_level);
    return levels;
  }

  std::vector<double> initial_previous() const {
    std::vector<double> prev;
    prev.reserve(variable_count());
    for (const auto& v : model_.variables()) prev.push_back(v.initial_previous);
    return prev;
  }

 private:
  friend class EvalContext;
  friend struct StepKernel;

  // Computed node: variables occupy [0, nv), flows [nv, nv + nf).
  struct Node {
    bool is_flow;
    std::size_t index;
  };

  static std::size_t lookup(const std::unordered_map<std::string, std::size_t>& m, std::string_view id,
                            const char* what) {
    auto it = m.find(std::string(id));
    if (it == m.end()) throw Error(Errc::MissingLink, std::string("unknown ") + what + " '" + std::string(id) + "'");
    return it->second;
  }

  std::size_t node_of_variable(std::size_t v) const noexcept { return v; }
  std::size_t node_of_flow(std::size_t f) const noexcept { return variable_count() + f; }

  bool linked(std::size_t from_node, std::size_t to_node) const {
    const auto& in = inbound_[to_node];
    return std::binary_search(in.begin(), in.end(), from_node);
  }

  void compile() {
    const auto& stocks = model_.stocks();
    const auto& flows = model_.flows();
    const auto& vars = model_.variables();
    for (std::size_t i = 0; i < stocks.size(); ++i) stock_index_.emplace(stocks[i].id, i);
    for (std::size_t i = 0; i < flows.size(); ++i) flow_index_.emplace(flows[i].id, i);
    for (std::size_t i = 0; i < vars.size(); ++i) variable_index_.emplace(vars[i].id, i);

    for (const auto& f : flows) {
      flow_source_.push_back(f.source ? stock_index_.at(*f.source) : boundary);
      flow_target_.push_back(f.target ? stock_index_.at(*f.target) : boundary);
      std::size_t ref = boundary;
      if (const auto* r = std::get_if<FractionOfStock>(&f.rate)) ref = stock_index_.at(r->stock);
      if (const auto* r = std::get_if<NormalFraction>(&f.rate)) ref = stock_index_.at(r->stock);
      rate_stock_.push_back(ref);
    }
    inflows_.resize(stocks.size());
    outflows_.resize(stocks.size());
    for (std::size_t f = 0; f < flows.size(); ++f) {
      if (flow_target_[f] != boundary) inflows_[flow_target_[f]].push_back(f);
      if (flow_source_[f] != boundary) outflows_[flow_source_[f]].push_back(f);
    }
    // Per-stock sums run in id order, keeping results bit-identical under
    // any insertion order.
    auto flow_by_id = [&](std::size_t a, std::size_t b) { return flows[a].id < flows[b].id; };
    for (auto& list : inflows_) std::sort(list.begin(), list.end(), flow_by_id);
    for (auto& list : outflows_) std::sort(list.begin(), list.end(), flow_by_id);

    // Topological order over links; ties broken by id so the order does not
    // depend on insertion order.
    const std::size_t n = vars.size() + flows.size();
    auto node_id = [&](std::size_t node) -> const Id& {
      return node < vars.size() ? vars[node].id : flows[node - vars.size()].id;
    };
    auto node_index = [&](const Id& id) -> std::size_t {
      if (auto it = variable_index_.find(id); it != variable_index_.end()) return node_of_variable(it->second);
      if (auto it = flow_index_.find(id); it != flow_index_.end()) return node_of_flow(it->second);
      return boundary;
    };
    inbound_.assign(n, {});
    std::vector<std::vector<std::size_t>> out(n);
    std::vector<std::size_t> indegree(n, 0);
    for (const auto& l : model_.links()) {
      const std::size_t a = node_index(l.from), b = node_index(l.to);
      if (a == boundary || b == boundary) continue;
      inbound_[b].push_back(a);
      out[a].push_back(b);
      ++indegree[b];
    }
    for (auto& in : inbound_) std::sort(in.begin(), in.end());

    auto by_id = [&](std::size_t a, std::size_t b) { return node_id(a) > node_id(b); };
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i) {
      if (indegree[i] == 0) ready.push_back(i);
    }
    std::make_heap(ready.begin(), ready.end(), by_id);
    while (!ready.empty()) {
      std::pop_heap(ready.begin(), ready.end(), by_id);
      const std::size_t node = ready.back();
      ready.pop_back();
      order_.push_back(node < vars.size() ? Node{false, node} : Node{true, node - vars.size()});
      for (std::size_t next : out[node]) {
        if (--indegree[next] == 0) {
          ready.push_back(next);
          std::push_heap(ready.begin(), ready.end(), by_id);
        }
      }
    }
  }

  Model model_;
  std::unordered_map<std::string, std::size_t> stock_index_, flow_index_, variable_index_;
  std::vector<std::size_t> flow_source_, flow_target_, rate_stock_;
  std::vector<std::vector<std::size_t>> inflows_, outflows_;
  std::vector<std::vector<std::size_t>> inbound_;
  std::vector<Node> order_;
};

/// Read-only view handed to expressions while one primitive is evaluated.
/// Variable values and flow rates of the current step are visible only
/// through a declared link, which is what makes evaluation order-free.
class EvalContext {
 public:
  double time() const noexcept { return time_; }

  double level(std::string_view stock) const { return levels_[model_->stock_index(stock)]; }

  double value(std::string_view variable) const {
    const std::size_t v = model_->variable_index(variable);
    require_link(model_->node_of_variable(v), variable);
    return values_[v];
  }

  /// Value of `variable` from the previous step (initial_previous at t = 0).
  /// Needs no link, so a variable may refer to its own past.
  double previous(std::string_view variable) const { return previous_[model_->variable_index(variable)]; }

  /// Requested rate (before clamping) of `flow` in the current step.
  double flow(std::string_view flow) const {
    const std::size_t f = model_->flow_index(flow);
    require_link(model_->node_of_flow(f), flow);
    return rates_[f];
  }

 private:
  friend struct StepKernel;

  EvalContext(const ValidatedModel& m, double t, std::span<const double> levels, std::span<const double> previous,
              std::span<const double> values, std::span<const double> rates)
      : model_(&m), time_(t), levels_(levels), previous_(previous), values_(values), rates_(rates) {}

  void require_link(std::size_t from_node, std::string_view name) const {
    if (!model_->linked(from_node, current_)) {
      throw Error(Errc::MissingLink, "'" + std::string(name) + "' is read without a link into the reader");
    }
  }

  const ValidatedModel* model_;
  double time_;
  std::span<const double> levels_, previous_, values_, rates_;
  std::size_t current_ = 0;
};

/// One RNG stream per flow, keyed by flow id.
class RngStreams {
 public:
  RngStreams(const ValidatedModel& m, std::uint64_t seed) {
    streams_.reserve(m.flow_count());
    for (const auto& f : m.model().flows()) streams_.push_back(make_stream(seed, f.id));
  }
  Rng& operator[](std::size_t flow) { return streams_[flow]; }

 private:
  std::vector<Rng> streams_;
};

struct State {
  double time = 0.0;
  std::vector<double> levels;
  std::vector<double> previous;  // variable values from the last step

  static State initial(const ValidatedModel& m) { return {0.0, m.initial_levels(), m.initial_previous()}; }
};

struct StepResult {
  State state;
  std::vector<double> flows;      // realized amount moved during the step
  std::vector<double> variables;  // values evaluated at the start of the step
};

namespace detail {

// Solves A x = b in place by Gaussian elimination with partial pivoting.
// Singular directions are resolved to 0, which only happens for a closed
// loop of empty stocks where every scale is equally consistent.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    if (std::abs(a[col][col]) < 1e-300) continue;
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = a[r][col] / a[col][col];
      if (factor == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
      b[r] -= factor * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    if (std::abs(a[i][i]) < 1e-300) continue;
    double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
    x[i] = acc / a[i][i];
  }
  return x;
}

}  // namespace detail

struct StepKernel {
  // Per-stock outflow scale. A stock whose requested outflow exceeds its
  // level plus realized inflow scales all of its outflows by one factor so
  // it lands at exactly zero. Inflows from other clamped stocks are scaled
  // too, so the factors of the clamped set solve a linear system:
  //   s_k * out_k = level_k + sum over inflows f of amount_f * s_source(f).
  // Clamping only lowers inflows elsewhere, so the clamped set grows
  // monotonically and the loop ends after at most one pass per stock.
  static std::vector<double> outflow_scales(const ValidatedModel& m, std::span<const double> levels,
                                            std::span<const double> amount) {
    const std::size_t ns = m.stock_count();
    std::vector<double> scale(ns, 1.0);
    std::vector<std::size_t> slot(ns, ValidatedModel::boundary);  // position in the clamped set
    std::vector<std::size_t> clamped;
    auto src_scale = [&](std::size_t f) {
      const std::size_t src = m.flow_source(f);
      return src == ValidatedModel::boundary ? 1.0 : scale[src];
    };
    for (std::size_t pass = 0; pass <= ns; ++pass) {
      bool grew = false;
      for (std::size_t k = 0; k < ns; ++k) {
        if (slot[k] != ValidatedModel::boundary) continue;
        double in = 0.0, requested = 0.0;
        for (std::size_t f : m.inflows_[k]) in += amount[f] * src_scale(f);
        for (std::size_t f : m.outflows_[k]) requested += amount[f];
        if (requested > levels[k] + in) {
          slot[k] = clamped.size();
          clamped.push_back(k);
          grew = true;
        }
      }
      if (!grew) break;

      const std::size_t n = clamped.size();
      std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
      std::vector<double> b(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = clamped[i];
        for (std::size_t f : m.outflows_[k]) a[i][i] += amount[f];
        b[i] = levels[k];
        for (std::size_t f : m.inflows_[k]) {
          const std::size_t src = m.flow_source(f);
          if (src != ValidatedModel::boundary && slot[src] != ValidatedModel::boundary) {
            a[i][slot[src]] -= amount[f];
          } else {
            b[i] += amount[f];
          }
        }
      }
      const std::vector<double> x = detail::solve_dense(std::move(a), std::move(b));
      for (std::size_t i = 0; i < n; ++i) scale[clamped[i]] = std::clamp(x[i], 0.0, 1.0);
    }
    return scale;
  }

  // Evaluates variables and requested flow rates at the current state.
  static void evaluate(const ValidatedModel& m, const State& s, double dt, RngStreams& rng, std::vector<double>& values,
                       std::vector<double>& rates) {
    values.assign(m.variable_count(), 0.0);
    rates.assign(m.flow_count(), 0.0);
    EvalContext ctx(m, s.time, s.levels, s.previous, values, rates);
    const auto& vars = m.model().variables();
    const auto& flows = m.model().flows();
    for (const auto& node : m.order_) {
      if (!node.is_flow) {
        ctx.current_ = m.node_of_variable(node.index);
        const auto& def = vars[node.index].definition;
        values[node.index] = std::holds_alternative<double>(def) ? std::get<double>(def) : std::get<Expression>(def)(ctx);
        continue;
      }
      const std::size_t f = node.index;
      ctx.current_ = m.node_of_flow(f);
      const double rate = std::visit(
          [&](const auto& r) -> double {
            using R = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<R, Constant>) {
              return r.value;
            } else if constexpr (std::is_same_v<R, FractionOfStock>) {
              return s.levels[m.rate_stock_[f]] * r.percent / 100.0;
            } else if constexpr (std::is_same_v<R, Poisson>) {
              return static_cast<double>(sample_poisson(rng[f], r.intensity * dt)) / dt;
            } else if constexpr (std::is_same_v<R, NormalFraction>) {
              return s.levels[m.rate_stock_[f]] * sample_truncated_normal(rng[f], r.mu, r.sigma, r.lo, r.hi) / 100.0;
            } else {
              return r.fn(ctx);
            }
          },
          flows[f].rate);
      // Flows are one-directional: negative requests move nothing.
      rates[f] = rate > 0.0 ? rate : (std::isnan(rate) ? rate : 0.0);
    }
  }

  static StepResult advance(const ValidatedModel& m, const State& s, double dt, RngStreams& rng) {
    StepResult out;
    std::vector<double> rates;
    evaluate(m, s, dt, rng, out.variables, rates);

    const std::size_t ns = m.stock_count(), nf = m.flow_count();
    std::vector<double> amount(nf);
    for (std::size_t f = 0; f < nf; ++f) amount[f] = rates[f] * dt;

    const std::vector<double> scale = outflow_scales(m, s.levels, amount);
    auto src_scale = [&](std::size_t f) {
      const std::size_t src = m.flow_source(f);
      return src == ValidatedModel::boundary ? 1.0 : scale[src];
    };

    out.flows.resize(nf);
    for (std::size_t f = 0; f < nf; ++f) out.flows[f] = amount[f] * src_scale(f);

    out.state.levels.resize(ns);
    for (std::size_t k = 0; k < ns; ++k) {
      double in = 0.0, outgoing = 0.0;
      for (std::size_t f : m.inflows_[k]) in += out.flows[f];
      for (std::size_t f : m.outflows_[k]) outgoing += out.flows[f];
      double level = s.levels[k] + (in - outgoing);
      if (!std::isfinite(level)) {
        throw Error(Errc::NonfiniteState, "stock '" + m.model().stocks()[k].id + "' became non-finite at t = " +
                                              std::to_string(s.time + dt));
      }
      // Clamped stocks land at zero; rounding residue is at the ulp level.
      if (scale[k] < 1.0 || level < 0.0) level = 0.0;
      out.state.levels[k] = level;
    }
    out.state.previous = out.variables;
    out.state.time = s.time + dt;
    return out;
  }
};

/// Advances `state` by one explicit Euler step of length dt.
inline StepResult step(const ValidatedModel& model, const State& state, double dt, RngStreams& rng) {
  return StepKernel::advance(model, state, dt, rng);
}

struct RunResult {
  std::vector<double> times;
  std::vector<Id> stock_ids, flow_ids, variable_ids;
  // [primitive][record point]. Flow entries hold the amount moved since
  // the previous record point (0 at t = 0).
  std::vector<std::vector<double>> stocks, flows, variables;

  bool operator==(const RunResult&) const = default;

  const std::vector<double>& stock(std::string_view id) const { return find(stock_ids, stocks, id); }
  const std::vector<double>& flow(std::string_view id) const { return find(flow_ids, flows, id); }
  const std::vector<double>& variable(std::string_view id) const { return find(variable_ids, variables, id); }

 private:
  static const std::vector<double>& find(const std::vector<Id>& ids, const std::vector<std::vector<double>>& series,
                                         std::string_view id) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == id) return series[i];
    }
    throw Error(Errc::MissingLink, "no series named '" + std::string(id) + "'");
  }
};

inline std::size_t step_count(const SimConfig& config) {
  if (!(config.dt > 0.0) || !std::isfinite(config.dt)) throw Error(Errc::OutOfRange, "dt must be > 0");
  if (!(config.horizon >= config.dt)) throw Error(Errc::OutOfRange, "horizon must be >= dt");
  if (config.record_every < 1) throw Error(Errc::OutOfRange, "record_every must be >= 1");
  const double steps = config.horizon / config.dt;
  const double whole = std::round(steps);
  if (std::abs(steps - whole) > 1e-9 * std::max(1.0, steps)) {
    throw Error(Errc::OutOfRange, "horizon must be a whole number of dt steps");
  }
  return static_cast<std::size_t>(whole);
}

inline RunResult run(const ValidatedModel& model, const SimConfig& config) {
  const std::size_t steps = step_count(config);
  const double dt = config.dt;
  RngStreams rng(model, config.seed);

  RunResult result;
  for (const auto& s : model.model().stocks()) result.stock_ids.push_back(s.id);
  for (const auto& f : model.model().flows()) result.flow_ids.push_back(f.id);
  for (const auto& v : model.model().variables()) result.variable_ids.push_back(v.id);
  const std::size_t points = steps / config.record_every + (steps % config.record_every ? 2 : 1);
  result.times.reserve(points);
  result.stocks.assign(model.stock_count(), {});
  result.flows.assign(model.flow_count(), {});
  result.variables.assign(model.variable_count(), {});

  State state = State::initial(model);
  std::vector<double> pending(model.flow_count(), 0.0);
  auto record = [&](std::size_t k, std::span<const double> values) {
    result.times.push_back(static_cast<double>(k) * dt);
    for (std::size_t i = 0; i < state.levels.size(); ++i) result.stocks[i].push_back(state.levels[i]);
    for (std::size_t i = 0; i < pending.size(); ++i) result.flows[i].push_back(pending[i]);
    for (std::size_t i = 0; i < values.size(); ++i) result.variables[i].push_back(values[i]);
    std::fill(pending.begin(), pending.end(), 0.0);
  };

  std::vector<double> values_now;
  for (std::size_t k = 0; k < steps; ++k) {
    StepResult r = step(model, state, dt, rng);
    if (k % config.record_every == 0) record(k, r.variables);
    for (std::size_t i = 0; i < pending.size(); ++i) pending[i] += r.flows[i];
    state = std::move(r.state);
    state.time = static_cast<double>(k + 1) * dt;
  }
  // Variables at the horizon are evaluated on copies of the streams so the
  // final record point draws nothing from the real ones.
  {
    RngStreams scratch = rng;
    std::vector<double> rates;
    StepKernel::evaluate(model, state, dt, scratch, values_now, rates);
    record(steps, values_now);
  }
  return result;
}

/// Validates and runs in one call; throws Errc::UnvalidatedModel on defects.
inline RunResult run(const Model& model, const SimConfig& config) { return run(ValidatedModel(model), config); }

}  // namespace stockflow::sd

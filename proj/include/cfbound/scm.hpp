// Copyright 2026 The cfbound Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Discrete structural causal models and exact counterfactual evaluation.
//
// A Structure fixes the layout derived from a graph whose latent
// cardinalities are resolved: mechanism table strides, the joint exogenous
// grid and the mixed-radix encoding of endogenous configurations. An ScmState
// adds parameters (one probability vector per latent and one deterministic
// table per node) and caches, for every unit u of the joint grid, its weight
// q(u) and its observational configuration V(u).
//
// Mechanism table index for node V: parents in ascending node order, then
// latent parents in ascending latent order, row-major (last index fastest).
// Unit index: latents in declaration order, row-major. Configuration code:
// nodes in graph order, row-major.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cfbound/error.hpp"
#include "cfbound/graph.hpp"
#include "cfbound/text.hpp"

namespace cfbound {

inline constexpr std::uint64_t kDefaultMaxGrid = 10'000'000;
inline constexpr double kSimplexTolerance = 1e-12;

struct MechanismLayout {
  std::vector<std::size_t> parents;
  std::vector<std::size_t> parent_strides;
  std::vector<std::size_t> latents;
  std::vector<std::size_t> latent_strides;
  std::size_t table_size = 1;
};

class Structure {
 public:
  explicit Structure(const Admg& resolved, std::uint64_t max_grid = kDefaultMaxGrid)
      : graph_(resolved) {
    if (!graph_.cardinalities_resolved())
      throw Error(ErrorCode::kInvalidArgument,
                  "latent cardinalities must be resolved before compiling");
    const std::size_t n = graph_.node_count();
    const std::size_t m = graph_.latents().size();
    if (m > kMaxNodes)
      throw Error(ErrorCode::kInvalidArgument,
                  "graph exceeds " + std::to_string(kMaxNodes) + " latents");
    for (std::size_t v = 0; v < n; ++v) cards_.push_back(graph_.cardinality(v));
    for (std::size_t i = 0; i < m; ++i) {
      const auto k = *graph_.latents()[i].cardinality;
      if (k > max_grid)
        throw Error(ErrorCode::kGridLimit, "latent '" + graph_.latents()[i].name +
                                               "' alone exceeds the grid limit");
      latent_cards_.push_back(static_cast<int>(k));
    }

    grid_size_ = 1;
    unit_strides_.assign(m, 1);
    for (std::size_t i = m; i-- > 0;) {
      unit_strides_[i] = grid_size_;
      if (grid_size_ > max_grid / static_cast<std::uint64_t>(latent_cards_[i]))
        throw Error(ErrorCode::kGridLimit,
                    "joint exogenous grid exceeds " + std::to_string(max_grid) +
                        " states");
      grid_size_ *= static_cast<std::uint64_t>(latent_cards_[i]);
    }

    config_count_ = 1;
    config_strides_.assign(n, 1);
    for (std::size_t v = n; v-- > 0;) {
      config_strides_[v] = config_count_;
      if (config_count_ > (std::uint64_t{1} << 62) / static_cast<std::uint64_t>(cards_[v]))
        throw Error(ErrorCode::kOverflow, "endogenous configuration space too large");
      config_count_ *= static_cast<std::uint64_t>(cards_[v]);
    }

    mechanisms_.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
      auto& mech = mechanisms_[v];
      mech.parents = graph_.parents(v);
      mech.latents = graph_.latent_parents(v);
      std::vector<std::size_t> radix;
      for (auto p : mech.parents) radix.push_back(static_cast<std::size_t>(cards_[p]));
      for (auto l : mech.latents) radix.push_back(static_cast<std::size_t>(latent_cards_[l]));
      std::vector<std::size_t> strides(radix.size(), 1);
      std::size_t size = 1;
      for (std::size_t j = radix.size(); j-- > 0;) {
        strides[j] = size;
        if (size > max_grid * 64 / radix[j])
          throw Error(ErrorCode::kGridLimit,
                      "mechanism table for '" + graph_.node_name(v) + "' too large");
        size *= radix[j];
      }
      mech.parent_strides.assign(strides.begin(), strides.begin() + mech.parents.size());
      mech.latent_strides.assign(strides.begin() + mech.parents.size(), strides.end());
      mech.table_size = size;
    }
  }

  const Admg& graph() const { return graph_; }
  std::size_t node_count() const { return cards_.size(); }
  int cardinality(std::size_t v) const { return cards_[v]; }
  const std::vector<std::size_t>& topological_order() const {
    return graph_.topological_order();
  }
  const MechanismLayout& mechanism(std::size_t v) const { return mechanisms_[v]; }

  std::size_t latent_count() const { return latent_cards_.size(); }
  int latent_cardinality(std::size_t i) const { return latent_cards_[i]; }
  std::uint64_t grid_size() const { return grid_size_; }

  void decode_unit(std::uint64_t unit, int* latent_values) const {
    for (std::size_t i = 0; i < latent_cards_.size(); ++i)
      latent_values[i] = static_cast<int>((unit / unit_strides_[i]) %
                                          static_cast<std::uint64_t>(latent_cards_[i]));
  }
  std::uint64_t encode_unit(std::span<const int> latent_values) const {
    std::uint64_t g = 0;
    for (std::size_t i = 0; i < latent_cards_.size(); ++i)
      g += static_cast<std::uint64_t>(latent_values[i]) * unit_strides_[i];
    return g;
  }
  int unit_latent(std::uint64_t unit, std::size_t i) const {
    return static_cast<int>((unit / unit_strides_[i]) %
                            static_cast<std::uint64_t>(latent_cards_[i]));
  }

  std::uint64_t config_count() const { return config_count_; }
  std::uint64_t encode_config(const int* values) const {
    std::uint64_t code = 0;
    for (std::size_t v = 0; v < cards_.size(); ++v)
      code += static_cast<std::uint64_t>(values[v]) * config_strides_[v];
    return code;
  }
  int config_value(std::uint64_t code, std::size_t v) const {
    return static_cast<int>((code / config_strides_[v]) %
                            static_cast<std::uint64_t>(cards_[v]));
  }

  // Table index of node v given endogenous values and latent values.
  std::size_t table_index(std::size_t v, const int* values,
                          const int* latent_values) const {
    const auto& mech = mechanisms_[v];
    std::size_t idx = 0;
    for (std::size_t j = 0; j < mech.parents.size(); ++j)
      idx += static_cast<std::size_t>(values[mech.parents[j]]) * mech.parent_strides[j];
    for (std::size_t j = 0; j < mech.latents.size(); ++j)
      idx += static_cast<std::size_t>(latent_values[mech.latents[j]]) *
             mech.latent_strides[j];
    return idx;
  }

 private:
  Admg graph_;
  std::vector<int> cards_;
  std::vector<int> latent_cards_;
  std::vector<std::uint64_t> unit_strides_;
  std::vector<std::uint64_t> config_strides_;
  std::uint64_t grid_size_ = 1;
  std::uint64_t config_count_ = 1;
  std::vector<MechanismLayout> mechanisms_;
};

using StructurePtr = std::shared_ptr<const Structure>;

inline StructurePtr compile_structure(const Admg& resolved,
                                      std::uint64_t max_grid = kDefaultMaxGrid) {
  return std::make_shared<const Structure>(resolved, max_grid);
}

// Feeds `value` to `child`'s mechanism in place of `parent`'s actual value.
// Used for edge-level (path-specific) interventions.
struct MechanismInput {
  std::size_t child;
  std::size_t parent;
  int value;
};

struct Intervention {
  std::vector<std::pair<std::size_t, int>> forced;  // do(X = x)
  std::vector<MechanismInput> inputs;
};

class ScmState {
 public:
  ScmState(StructurePtr structure, std::vector<std::vector<double>> q,
           std::vector<std::vector<int>> tables)
      : structure_(std::move(structure)), q_(std::move(q)), tables_(std::move(tables)) {
    const auto& s = *structure_;
    if (q_.size() != s.latent_count())
      throw Error(ErrorCode::kInvalidArgument, "one probability vector per latent");
    for (std::size_t i = 0; i < q_.size(); ++i) {
      if (q_[i].size() != static_cast<std::size_t>(s.latent_cardinality(i)))
        throw Error(ErrorCode::kInvalidArgument, "probability vector length mismatch");
      double sum = 0.0;
      for (double p : q_[i]) {
        if (!(p >= 0.0))
          throw Error(ErrorCode::kInvalidArgument, "negative or NaN probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > kSimplexTolerance)
        throw Error(ErrorCode::kInvalidArgument, "probability vector does not sum to 1");
    }
    if (tables_.size() != s.node_count())
      throw Error(ErrorCode::kInvalidArgument, "one mechanism table per node");
    for (std::size_t v = 0; v < tables_.size(); ++v) {
      if (tables_[v].size() != s.mechanism(v).table_size)
        throw Error(ErrorCode::kInvalidArgument, "mechanism table size mismatch");
      for (int x : tables_[v])
        if (x < 0 || x >= s.cardinality(v))
          throw Error(ErrorCode::kInvalidArgument, "mechanism output out of domain");
    }
    build_grid();
  }

  const Structure& structure() const { return *structure_; }
  const StructurePtr& structure_ptr() const { return structure_; }
  const std::vector<double>& q(std::size_t latent) const { return q_[latent]; }
  const std::vector<std::vector<double>>& exogenous() const { return q_; }
  const std::vector<int>& table(std::size_t node) const { return tables_[node]; }
  const std::vector<std::vector<int>>& tables() const { return tables_; }

  std::uint64_t grid_size() const { return weights_.size(); }
  double weight(std::uint64_t unit) const { return weights_[unit]; }
  std::uint64_t observed_code(std::uint64_t unit) const { return codes_[unit]; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<std::uint64_t>& observed_codes() const { return codes_; }

  // Solves the submodel at a unit. `forced[v] >= 0` overrides node v;
  // `inputs` substitute parent values inside individual mechanisms.
  void solve(const int* latent_values, const int* forced,
             std::span<const MechanismInput> inputs, int* out) const {
    const auto& s = *structure_;
    for (auto v : s.topological_order()) {
      if (forced && forced[v] >= 0) {
        out[v] = forced[v];
        continue;
      }
      const auto& mech = s.mechanism(v);
      std::size_t idx = 0;
      for (std::size_t j = 0; j < mech.parents.size(); ++j) {
        const auto p = mech.parents[j];
        int value = out[p];
        for (const auto& in : inputs)
          if (in.child == v && in.parent == p) value = in.value;
        idx += static_cast<std::size_t>(value) * mech.parent_strides[j];
      }
      for (std::size_t j = 0; j < mech.latents.size(); ++j)
        idx += static_cast<std::size_t>(latent_values[mech.latents[j]]) *
               mech.latent_strides[j];
      out[v] = tables_[v][idx];
    }
  }

 private:
  void build_grid() {
    const auto& s = *structure_;
    const auto grid = s.grid_size();
    weights_.resize(grid);
    codes_.resize(grid);
    std::array<int, kMaxNodes> values{};
    std::vector<int> latents(s.latent_count());
    for (std::uint64_t g = 0; g < grid; ++g) {
      s.decode_unit(g, latents.data());
      double w = 1.0;
      for (std::size_t i = 0; i < latents.size(); ++i) w *= q_[i][latents[i]];
      weights_[g] = w;
      solve(latents.data(), nullptr, {}, values.data());
      codes_[g] = s.encode_config(values.data());
    }
  }

  StructurePtr structure_;
  std::vector<std::vector<double>> q_;
  std::vector<std::vector<int>> tables_;
  std::vector<double> weights_;
  std::vector<std::uint64_t> codes_;
};

// Endogenous configuration at unit `unit` under an intervention.
inline std::vector<int> evaluate_unit(const ScmState& scm, std::uint64_t unit,
                                      const Intervention& intervention = {}) {
  const auto& s = scm.structure();
  if (unit >= s.grid_size())
    throw Error(ErrorCode::kInvalidArgument, "unit outside the exogenous grid");
  std::array<int, kMaxNodes> forced;
  forced.fill(-1);
  for (const auto& [v, x] : intervention.forced) {
    if (v >= s.node_count() || x < 0 || x >= s.cardinality(v))
      throw Error(ErrorCode::kInvalidArgument, "intervention out of range");
    forced[v] = x;
  }
  std::vector<int> latents(s.latent_count());
  s.decode_unit(unit, latents.data());
  std::vector<int> out(s.node_count());
  scm.solve(latents.data(), forced.data(), intervention.inputs, out.data());
  return out;
}

// ---------------------------------------------------------------------------
// Counterfactual terms.

struct PotentialOutcome;
using OutcomePtr = std::shared_ptr<const PotentialOutcome>;

// `variable := constant` or `variable := <potential outcome at the same unit>`.
struct Assignment {
  std::size_t variable;
  std::variant<int, OutcomePtr> value;
};

// Value of `variable` in the submodel given by `subscript` (and any
// mechanism-level inputs), e.g. W_{A=0} or Y_{A=1, W=W_{A=0}}.
struct PotentialOutcome {
  std::size_t variable;
  std::vector<Assignment> subscript;
  std::vector<MechanismInput> inputs;
};

struct CounterfactualTerm {
  PotentialOutcome outcome;
  int value;
};

struct Literal {
  std::size_t variable;
  int value;
};

// Conjunction of factual literals; empty means "always".
struct Event {
  std::vector<Literal> literals;

  bool holds(const Structure& s, std::uint64_t code) const {
    for (const auto& l : literals)
      if (s.config_value(code, l.variable) != l.value) return false;
    return true;
  }
};

inline void validate(const Structure& s, const PotentialOutcome& po, int depth = 0) {
  if (depth > 32) throw Error(ErrorCode::kInvalidArgument, "term nesting too deep");
  if (po.variable >= s.node_count())
    throw Error(ErrorCode::kInvalidArgument, "term target out of range");
  std::vector<bool> assigned(s.node_count(), false);
  for (const auto& a : po.subscript) {
    if (a.variable >= s.node_count())
      throw Error(ErrorCode::kInvalidArgument, "subscript variable out of range");
    if (a.variable == po.variable)
      throw Error(ErrorCode::kInvalidArgument,
                  "term target '" + s.graph().node_name(po.variable) +
                      "' appears in its own subscript");
    if (assigned[a.variable])
      throw Error(ErrorCode::kInvalidArgument,
                  "'" + s.graph().node_name(a.variable) + "' assigned twice");
    assigned[a.variable] = true;
    if (const int* c = std::get_if<int>(&a.value)) {
      if (*c < 0 || *c >= s.cardinality(a.variable))
        throw Error(ErrorCode::kInvalidArgument, "subscript value out of domain");
    } else {
      const auto& nested = std::get<OutcomePtr>(a.value);
      if (!nested) throw Error(ErrorCode::kInvalidArgument, "null nested term");
      if (s.cardinality(nested->variable) != s.cardinality(a.variable))
        throw Error(ErrorCode::kInvalidArgument, "nested source domain mismatch");
      validate(s, *nested, depth + 1);
    }
  }
  for (const auto& in : po.inputs) {
    if (in.child >= s.node_count() || in.parent >= s.node_count() ||
        !s.graph().has_edge(in.parent, in.child))
      throw Error(ErrorCode::kInvalidArgument, "mechanism input on a non-edge");
    if (in.value < 0 || in.value >= s.cardinality(in.parent))
      throw Error(ErrorCode::kInvalidArgument, "mechanism input out of domain");
  }
}

inline void validate(const Structure& s, const CounterfactualTerm& term) {
  validate(s, term.outcome);
  if (term.value < 0 || term.value >= s.cardinality(term.outcome.variable))
    throw Error(ErrorCode::kInvalidArgument, "term value out of domain");
}

inline void validate(const Structure& s, const Event& e) {
  std::vector<bool> seen(s.node_count(), false);
  for (const auto& l : e.literals) {
    if (l.variable >= s.node_count() || l.value < 0 ||
        l.value >= s.cardinality(l.variable))
      throw Error(ErrorCode::kInvalidArgument, "event literal out of range");
    if (seen[l.variable])
      throw Error(ErrorCode::kInvalidArgument, "variable repeated in event");
    seen[l.variable] = true;
  }
}

// Value of a potential outcome at the unit whose latent values are given.
inline int eval_outcome(const ScmState& scm, const int* latent_values,
                        const PotentialOutcome& po) {
  std::array<int, kMaxNodes> forced;
  forced.fill(-1);
  for (const auto& a : po.subscript) {
    if (const int* c = std::get_if<int>(&a.value))
      forced[a.variable] = *c;
    else
      forced[a.variable] = eval_outcome(scm, latent_values, *std::get<OutcomePtr>(a.value));
  }
  std::array<int, kMaxNodes> out;
  scm.solve(latent_values, forced.data(), po.inputs, out.data());
  return out[po.variable];
}

inline bool eval_term(const ScmState& scm, std::uint64_t unit,
                      const CounterfactualTerm& term) {
  std::array<int, kMaxNodes> latents;
  scm.structure().decode_unit(unit, latents.data());
  return eval_outcome(scm, latents.data(), term.outcome) == term.value;
}

namespace detail {

struct EventMass {
  double numerator = 0.0;
  double denominator = 0.0;
};

// Accumulates sum_u q(u) 1[given](score(u)) and sum_u q(u) 1[given].
template <typename Score>
EventMass accumulate(const ScmState& scm, const Event& given, Score&& score) {
  const auto& s = scm.structure();
  EventMass mass;
  std::array<int, kMaxNodes> latents;
  const auto& weights = scm.weights();
  const auto& codes = scm.observed_codes();
  for (std::uint64_t g = 0; g < weights.size(); ++g) {
    const double w = weights[g];
    if (w == 0.0 || !given.holds(s, codes[g])) continue;
    s.decode_unit(g, latents.data());
    mass.denominator += w;
    mass.numerator += w * score(latents.data(), codes[g]);
  }
  return mass;
}

inline double checked_ratio(const EventMass& m) {
  if (!(m.denominator > 0.0))
    throw Error(ErrorCode::kZeroMass, "conditioning event has zero probability");
  return m.numerator / m.denominator;
}

}  // namespace detail

// P(term | given) by exact enumeration of the joint exogenous grid.
inline double ctf_probability(const ScmState& scm, const CounterfactualTerm& term,
                              const Event& given = {}) {
  const auto mass = detail::accumulate(scm, given, [&](const int* u, std::uint64_t) {
    return eval_outcome(scm, u, term.outcome) == term.value ? 1.0 : 0.0;
  });
  return detail::checked_ratio(mass);
}

// P(plus | given) - P(minus | given), accumulated unit by unit so that terms
// agreeing at every unit give exactly 0.
inline double ctf_difference(const ScmState& scm, const CounterfactualTerm& plus,
                             const CounterfactualTerm& minus, const Event& given = {}) {
  const auto mass = detail::accumulate(scm, given, [&](const int* u, std::uint64_t) {
    const bool a = eval_outcome(scm, u, plus.outcome) == plus.value;
    const bool b = eval_outcome(scm, u, minus.outcome) == minus.value;
    return static_cast<double>(static_cast<int>(a) - static_cast<int>(b));
  });
  return detail::checked_ratio(mass);
}

// Observational P(target = value | given), read off the cached grid.
inline double observational_probability(const ScmState& scm, Literal target,
                                        const Event& given = {}) {
  const auto& s = scm.structure();
  detail::EventMass m;
  const auto& weights = scm.weights();
  const auto& codes = scm.observed_codes();
  for (std::uint64_t g = 0; g < weights.size(); ++g) {
    if (!given.holds(s, codes[g])) continue;
    m.denominator += weights[g];
    if (s.config_value(codes[g], target.variable) == target.value)
      m.numerator += weights[g];
  }
  return detail::checked_ratio(m);
}

// ---------------------------------------------------------------------------
// Debug dump, for inspecting chain states:
//
//   scm 1
//   latent <name> <K> <q_0> ... <q_{K-1}>
//   table <node> <size> <f_0> ... <f_{size-1}>
//
// Probabilities are written with 17 significant digits, so a dump read back
// with parse_scm_dump reproduces the state exactly.

inline std::string write_scm_dump(const ScmState& scm) {
  const auto& s = scm.structure();
  std::string out = "scm 1\n";
  char buf[40];
  for (std::size_t i = 0; i < s.latent_count(); ++i) {
    out += "latent " + s.graph().latents()[i].name + " " +
           std::to_string(s.latent_cardinality(i));
    for (double p : scm.q(i)) {
      std::snprintf(buf, sizeof buf, " %.17g", p);
      out += buf;
    }
    out += "\n";
  }
  for (std::size_t v = 0; v < s.node_count(); ++v) {
    out += "table " + s.graph().node_name(v) + " " +
           std::to_string(scm.table(v).size());
    for (int x : scm.table(v)) out += " " + std::to_string(x);
    out += "\n";
  }
  return out;
}

inline ScmState parse_scm_dump(std::string_view contents, StructurePtr structure) {
  const auto& s = *structure;
  std::vector<std::vector<double>> q(s.latent_count());
  std::vector<std::vector<int>> f(s.node_count());
  std::vector<bool> seen_q(s.latent_count(), false), seen_f(s.node_count(), false);
  int line_no = 0;
  bool header = false;
  for (auto raw : text::split_lines(contents)) {
    ++line_no;
    const auto tok = text::split_ws(text::trim(raw));
    if (tok.empty()) continue;
    if (!header) {
      if (tok.size() != 2 || tok[0] != "scm" || tok[1] != "1")
        throw Error(ErrorCode::kSyntax, "expected 'scm 1' header", line_no);
      header = true;
      continue;
    }
    if (tok.size() < 3) throw Error(ErrorCode::kSyntax, "truncated line", line_no);
    const auto count = text::parse_int<std::size_t>(tok[2]);
    if (!count || tok.size() != 3 + *count)
      throw Error(ErrorCode::kSyntax, "entry count mismatch", line_no);
    if (tok[0] == "latent") {
      auto i = s.graph().find_latent(tok[1]);
      if (!i) throw Error(ErrorCode::kUnknownVariable, std::string(tok[1]), line_no);
      for (std::size_t j = 3; j < tok.size(); ++j) {
        auto p = text::parse_double(tok[j]);
        if (!p) throw Error(ErrorCode::kSyntax, "bad probability", line_no);
        q[*i].push_back(*p);
      }
      seen_q[*i] = true;
    } else if (tok[0] == "table") {
      auto v = s.graph().find_node(tok[1]);
      if (!v) throw Error(ErrorCode::kUnknownVariable, std::string(tok[1]), line_no);
      for (std::size_t j = 3; j < tok.size(); ++j) {
        auto x = text::parse_int<int>(tok[j]);
        if (!x) throw Error(ErrorCode::kSyntax, "bad table entry", line_no);
        f[*v].push_back(*x);
      }
      seen_f[*v] = true;
    } else {
      throw Error(ErrorCode::kSyntax, "unknown record '" + std::string(tok[0]) + "'",
                  line_no);
    }
  }
  for (bool b : seen_q)
    if (!b) throw Error(ErrorCode::kSyntax, "dump is missing a latent");
  for (bool b : seen_f)
    if (!b) throw Error(ErrorCode::kSyntax, "dump is missing a table");
  return ScmState(std::move(structure), std::move(q), std::move(f));
}

}  // namespace cfbound

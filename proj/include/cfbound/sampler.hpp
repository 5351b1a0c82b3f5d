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

// Gibbs sampler over discrete SCMs compatible with a graph and a dataset.
//
// Each iteration:
//   1. draws the latent unit U^t of every record from its posterior on the
//      joint exogenous grid, P(u | V^t) ∝ 1[V(u) = V^t] q(u);
//   2. redraws every mechanism table uniformly, then overwrites the entries
//      used by (V^t, U^t) so that each record is reproduced;
//   3. draws each q_i from Dirichlet(alpha + occurrence counts of U_i).
//
// Records are written in a fresh random order; when two records demand
// different outputs from one table entry the first write is kept and a
// conflict is counted. A record whose posterior support is empty keeps its
// previous unit and counts a support miss.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfbound/data.hpp"
#include "cfbound/error.hpp"
#include "cfbound/graph.hpp"
#include "cfbound/measures.hpp"
#include "cfbound/scm.hpp"

namespace cfbound {

struct SamplerConfig {
  double alpha = 0.1;
  std::size_t burn_in = 2000;
  std::size_t samples = 4000;
  CardinalityOverrides overrides;
  std::uint64_t seed = 7;
  std::uint64_t max_grid = kDefaultMaxGrid;
  bool memoize_posteriors = true;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
      throw Error(ErrorCode::kInvalidArgument, "alpha must be positive");
    if (samples == 0) throw Error(ErrorCode::kInvalidArgument, "samples must be positive");
    if (max_grid == 0) throw Error(ErrorCode::kInvalidArgument, "max_grid must be positive");
  }
};

using Rng = std::mt19937_64;

// Independent stream for chain `chain_index` under `seed`.
inline Rng chain_rng(std::uint64_t seed, std::uint64_t chain_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chain_index),
                    static_cast<std::uint32_t>(chain_index >> 32), 0x63666264u};
  return Rng(seq);
}

inline double uniform01(Rng& rng) {
  return std::generate_canonical<double, std::numeric_limits<double>::digits>(rng);
}

// Dirichlet(alpha) draw. Gamma variates are formed in log space so that
// small shapes never underflow to an all-zero vector.
inline std::vector<double> sample_dirichlet(Rng& rng, const std::vector<double>& alpha) {
  std::vector<double> logs(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double a = alpha[i];
    if (a >= 1.0) {
      std::gamma_distribution<double> gamma(a, 1.0);
      logs[i] = std::log(gamma(rng));
    } else {
      std::gamma_distribution<double> gamma(a + 1.0, 1.0);
      const double boost = std::log(1.0 - uniform01(rng)) / a;
      logs[i] = std::log(gamma(rng)) + boost;
    }
  }
  const double top = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (auto& l : logs) {
    l = std::exp(l - top);
    sum += l;
  }
  for (auto& l : logs) l /= sum;
  return logs;
}

// Dataset records restricted to the nodes of one graph.
struct ProjectedData {
  std::size_t width = 0;
  std::vector<int> values;              // record-major, graph node order
  std::vector<std::uint64_t> codes;     // configuration code per record
  std::vector<std::size_t> distinct_of;  // record -> distinct configuration
  std::vector<std::uint64_t> distinct_codes;

  std::size_t size() const { return codes.size(); }
  const int* record(std::size_t t) const { return values.data() + t * width; }
};

inline ProjectedData project_dataset(const Dataset& d, const Structure& s) {
  const auto& g = s.graph();
  std::vector<std::size_t> column(g.node_count());
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    const auto& name = g.node_name(v);
    const auto col = d.schema().find(name);
    if (!col)
      throw Error(ErrorCode::kMissingColumn, "dataset has no variable '" + name + "'");
    if (d.schema().at(*col).cardinality() != g.cardinality(v))
      throw Error(ErrorCode::kInvalidArgument,
                  "'" + name + "' has a different domain in the dataset and the graph");
    column[v] = *col;
  }
  ProjectedData p;
  p.width = g.node_count();
  p.values.reserve(d.size() * p.width);
  std::unordered_map<std::uint64_t, std::size_t> index;
  std::vector<int> rec(p.width);
  for (std::size_t t = 0; t < d.size(); ++t) {
    for (std::size_t v = 0; v < p.width; ++v) rec[v] = d.at(t, column[v]);
    p.values.insert(p.values.end(), rec.begin(), rec.end());
    const auto code = s.encode_config(rec.data());
    p.codes.push_back(code);
    auto [it, fresh] = index.emplace(code, p.distinct_codes.size());
    if (fresh) p.distinct_codes.push_back(code);
    p.distinct_of.push_back(it->second);
  }
  return p;
}

struct ChainDiagnostics {
  std::uint64_t iterations = 0;
  std::uint64_t support_misses = 0;
  std::uint64_t refit_conflicts = 0;
  std::uint64_t posterior_builds = 0;  // posteriors computed over the grid
  std::uint64_t posterior_draws = 0;   // records given a fresh unit
};

struct ChainState {
  StructurePtr structure;
  std::shared_ptr<const ProjectedData> data;
  std::shared_ptr<const ScmState> scm;
  std::vector<std::uint64_t> units;  // U^t as joint grid indices
  std::uint64_t iteration = 0;
  Rng rng;
  ChainDiagnostics diagnostics;
};

namespace detail {

// Redraws every table entry, then writes each record's outputs in a random
// order. Returns the tables; conflicts are added to the diagnostics.
inline std::vector<std::vector<int>> refit_tables(ChainState& st) {
  const auto& s = *st.structure;
  const auto& data = *st.data;
  const std::size_t n = s.node_count();
  std::vector<std::size_t> order(data.size());
  for (std::size_t t = 0; t < order.size(); ++t) order[t] = t;
  std::shuffle(order.begin(), order.end(), st.rng);

  std::vector<std::vector<int>> tables(n);
  std::vector<std::vector<char>> written(n);
  for (std::size_t v = 0; v < n; ++v) {
    std::uniform_int_distribution<int> pick(0, s.cardinality(v) - 1);
    tables[v].resize(s.mechanism(v).table_size);
    for (auto& x : tables[v]) x = pick(st.rng);
    written[v].assign(tables[v].size(), 0);
  }
  std::array<int, kMaxNodes> latents{};
  for (auto t : order) {
    s.decode_unit(st.units[t], latents.data());
    const int* rec = data.record(t);
    for (std::size_t v = 0; v < n; ++v) {
      const auto idx = s.table_index(v, rec, latents.data());
      if (written[v][idx]) {
        if (tables[v][idx] != rec[v]) ++st.diagnostics.refit_conflicts;
      } else {
        tables[v][idx] = rec[v];
        written[v][idx] = 1;
      }
    }
  }
  return tables;
}

// Cumulative posterior weights over the units compatible with one
// configuration.
struct Posterior {
  std::vector<std::uint64_t> units;
  std::vector<double> cumulative;
};

}  // namespace detail

inline ChainState initialize_chain(const Dataset& data, const Admg& g,
                                   const SamplerConfig& cfg,
                                   std::uint64_t chain_index = 0) {
  cfg.validate();
  ChainState st;
  st.structure = compile_structure(resolve_cardinalities(g, cfg.overrides), cfg.max_grid);
  st.data = std::make_shared<const ProjectedData>(project_dataset(data, *st.structure));
  st.rng = chain_rng(cfg.seed, chain_index);
  const auto& s = *st.structure;

  std::vector<std::vector<double>> q(s.latent_count());
  for (std::size_t i = 0; i < q.size(); ++i)
    q[i].assign(s.latent_cardinality(i), 1.0 / s.latent_cardinality(i));
  std::uniform_int_distribution<std::uint64_t> unit(0, s.grid_size() - 1);
  st.units.resize(st.data->size());
  for (auto& u : st.units) u = unit(st.rng);
  auto tables = detail::refit_tables(st);
  st.scm = std::make_shared<const ScmState>(st.structure, std::move(q), std::move(tables));
  return st;
}

// Draws U^t for every record under the current state.
inline void resample_latents(ChainState& st, bool memoize = true) {
  const auto& data = *st.data;
  const auto& scm = *st.scm;
  const auto& weights = scm.weights();
  const auto& codes = scm.observed_codes();
  const std::uint64_t grid = weights.size();

  if (memoize) {
    std::unordered_map<std::uint64_t, std::size_t> slot;
    for (std::size_t k = 0; k < data.distinct_codes.size(); ++k)
      slot.emplace(data.distinct_codes[k], k);
    std::vector<detail::Posterior> post(data.distinct_codes.size());
    for (std::uint64_t g = 0; g < grid; ++g) {
      auto it = slot.find(codes[g]);
      if (it == slot.end()) continue;
      auto& p = post[it->second];
      p.units.push_back(g);
      p.cumulative.push_back((p.cumulative.empty() ? 0.0 : p.cumulative.back()) + weights[g]);
    }
    st.diagnostics.posterior_builds += post.size();
    for (std::size_t t = 0; t < data.size(); ++t) {
      const auto& p = post[data.distinct_of[t]];
      const double total = p.cumulative.empty() ? 0.0 : p.cumulative.back();
      if (!(total > 0.0)) {
        ++st.diagnostics.support_misses;
        continue;
      }
      const double r = uniform01(st.rng) * total;
      auto pos = std::upper_bound(p.cumulative.begin(), p.cumulative.end(), r) -
                 p.cumulative.begin();
      if (static_cast<std::size_t>(pos) == p.units.size()) --pos;
      st.units[t] = p.units[pos];
      ++st.diagnostics.posterior_draws;
    }
    return;
  }

  for (std::size_t t = 0; t < data.size(); ++t) {
    const auto code = data.codes[t];
    double total = 0.0;
    std::uint64_t last = grid;
    for (std::uint64_t g = 0; g < grid; ++g)
      if (codes[g] == code) {
        total += weights[g];
        last = g;
      }
    ++st.diagnostics.posterior_builds;
    if (!(total > 0.0)) {
      ++st.diagnostics.support_misses;
      continue;
    }
    const double r = uniform01(st.rng) * total;
    double cum = 0.0;
    std::uint64_t chosen = last;
    for (std::uint64_t g = 0; g < grid; ++g) {
      if (codes[g] != code) continue;
      cum += weights[g];
      if (cum > r) {
        chosen = g;
        break;
      }
    }
    st.units[t] = chosen;
    ++st.diagnostics.posterior_draws;
  }
}

// Refits the tables to (V^t, U^t) and draws q from its Dirichlet posterior.
inline void refit_and_draw(ChainState& st, const SamplerConfig& cfg) {
  const auto& s = *st.structure;
  auto tables = detail::refit_tables(st);
  std::vector<std::vector<double>> theta(s.latent_count());
  for (std::size_t i = 0; i < theta.size(); ++i)
    theta[i].assign(s.latent_cardinality(i), cfg.alpha);
  for (auto u : st.units)
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i][s.unit_latent(u, i)] += 1.0;
  std::vector<std::vector<double>> q(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) q[i] = sample_dirichlet(st.rng, theta[i]);
  st.scm = std::make_shared<const ScmState>(st.structure, std::move(q), std::move(tables));
  ++st.iteration;
  ++st.diagnostics.iterations;
}

struct QuerySamples {
  std::string label;
  bool structural_zero = false;
  std::vector<double> values;  // one per retained iteration; NaN when skipped
  std::size_t skipped = 0;
  std::string skip_reason;
};

struct ChainOutput {
  std::string graph_id;
  std::size_t burn_in = 0;
  std::vector<QuerySamples> queries;
  std::vector<double> trace;  // every iteration; NaN when undefined
  std::string trace_label;
  ChainDiagnostics diagnostics;
};

inline double evaluate_or_nan(const ScmState& scm, const CompiledMeasure& m,
                              std::string* reason) {
  try {
    return eval_compiled(scm, m);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kZeroMass) throw;
    if (reason && reason->empty()) *reason = e.what();
    return std::numeric_limits<double>::quiet_NaN();
  }
}

// Runs M + N iterations and evaluates every query on each retained state.
// `trace` defaults to the convergence probability of the first non-RAW query.
inline ChainOutput run_chain(const Dataset& data, const Admg& g,
                             const std::vector<MeasureQuery>& queries,
                             const SamplerConfig& cfg, std::uint64_t chain_index = 0,
                             std::optional<MeasureQuery> trace = std::nullopt,
                             ChainState* final_state = nullptr) {
  auto st = initialize_chain(data, g, cfg, chain_index);
  const auto& s = *st.structure;

  ChainOutput out;
  out.burn_in = cfg.burn_in;
  std::vector<CompiledMeasure> compiled;
  for (const auto& q : queries) {
    compiled.push_back(compile_measure(s, q));
    QuerySamples qs;
    qs.label = q.label();
    qs.structural_zero = compiled.back().structural_zero;
    qs.values.reserve(cfg.samples);
    out.queries.push_back(std::move(qs));
  }
  if (!trace)
    for (const auto& q : queries)
      if (q.kind != MeasureKind::kRaw) {
        trace = convergence_query(q);
        break;
      }
  std::optional<CompiledMeasure> trace_measure;
  if (trace) {
    trace_measure = compile_measure(s, *trace);
    out.trace_label = trace->label();
  }
  out.trace.reserve(cfg.burn_in + cfg.samples);

  const std::size_t total = cfg.burn_in + cfg.samples;
  for (std::size_t i = 0; i < total; ++i) {
    resample_latents(st, cfg.memoize_posteriors);
    refit_and_draw(st, cfg);
    if (trace_measure)
      out.trace.push_back(evaluate_or_nan(*st.scm, *trace_measure, nullptr));
    if (i < cfg.burn_in) continue;
    for (std::size_t k = 0; k < compiled.size(); ++k) {
      auto& qs = out.queries[k];
      const double v = evaluate_or_nan(*st.scm, compiled[k], &qs.skip_reason);
      if (std::isnan(v)) ++qs.skipped;
      qs.values.push_back(v);
    }
  }
  out.diagnostics = st.diagnostics;
  if (final_state) *final_state = std::move(st);
  return out;
}

struct TraceSummary {
  std::size_t count = 0;  // defined post-burn-in trace values
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double empirical = 0.0;
  double gap = 0.0;  // |mean - empirical|
  double max_deviation = 0.0;  // max |trace - empirical|
  bool converged = false;
};

inline constexpr double kDefaultTraceThreshold = 0.05;

inline TraceSummary convergence_trace(const ChainOutput& out, double empirical,
                                      double threshold = kDefaultTraceThreshold) {
  TraceSummary s;
  s.empirical = empirical;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = out.burn_in; i < out.trace.size(); ++i) {
    const double v = out.trace[i];
    if (std::isnan(v)) continue;
    ++s.count;
    s.mean += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    s.max_deviation = std::max(s.max_deviation, std::abs(v - empirical));
  }
  if (s.count == 0) {
    s.min = s.max = s.mean = std::numeric_limits<double>::quiet_NaN();
    s.gap = std::numeric_limits<double>::infinity();
    return s;
  }
  s.mean /= static_cast<double>(s.count);
  s.gap = std::abs(s.mean - empirical);
  s.converged = s.gap <= threshold;
  return s;
}

// Empirical P(outcome = y | treatment = a0), the value the trace should track.
inline double empirical_trace_target(const Dataset& d, const MeasureQuery& q) {
  const auto e = empirical_distribution(d);
  return e.conditional(d.schema().index_of(q.outcome), q.y,
                       {{d.schema().index_of(q.treatment), q.a0}});
}

// CSV with one row per retained iteration: query values, then the trace.
inline std::string chain_dump_csv(const ChainOutput& out) {
  std::string csv = "iteration";
  for (const auto& q : out.queries) csv += ",\"" + q.label + "\"";
  csv += ",trace\n";
  char buf[40];
  auto num = [&](double v) {
    if (std::isnan(v)) return std::string("NA");
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  const std::size_t n = out.queries.empty()
                            ? out.trace.size() - std::min(out.trace.size(), out.burn_in)
                            : out.queries.front().values.size();
  for (std::size_t i = 0; i < n; ++i) {
    csv += std::to_string(out.burn_in + i + 1);
    for (const auto& q : out.queries) csv += "," + num(q.values[i]);
    const auto ti = out.burn_in + i;
    csv += "," + (ti < out.trace.size() ? num(out.trace[ti]) : std::string("NA"));
    csv += "\n";
  }
  return csv;
}

}  // namespace cfbound

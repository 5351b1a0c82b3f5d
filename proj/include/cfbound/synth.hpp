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

// Synthetic coverage benchmark.
//
// A random ground-truth SCM is drawn on a truth graph (Dirichlet(1) latent
// distributions, uniform mechanism tables), a dataset is forward-sampled from
// it, and the sampler is run on an analysis graph that may add confounding.
// Each query's interval is scored against the exact truth.
//
// Spec file (`key = value`, `#` comments, `query` may repeat):
//
//   truth_graph = unconfounded.txt  # paths relative to the spec file
//   analysis_graph = confounded.txt
//   true_k = 4
//   k = 22                          # analysis cardinality, 0 for the minimum
//   records = 20000
//   replications = 20
//   seed = 1
//   alpha = 0.1
//   burnin = 500
//   samples = 1000
//   delta = 0.05
//   query = DE(a0=0,a1=1,y=1|a=0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cfbound/bounds.hpp"
#include "cfbound/data.hpp"
#include "cfbound/error.hpp"
#include "cfbound/graph.hpp"
#include "cfbound/measures.hpp"
#include "cfbound/parallel.hpp"
#include "cfbound/sampler.hpp"
#include "cfbound/scm.hpp"
#include "cfbound/text.hpp"

namespace cfbound {

inline constexpr const char* kDefaultTruthGraph =
    "edge Z -> A\n"
    "edge Z -> Y\n"
    "edge A -> W\n"
    "edge A -> Y\n"
    "edge W -> Y\n";

inline constexpr const char* kDefaultAnalysisGraph =
    "edge Z -> A\n"
    "edge Z -> Y\n"
    "edge A -> W\n"
    "edge A -> Y\n"
    "edge W -> Y\n"
    "latent U1 -> A Z Y\n"
    "latent U2 -> A W Y\n";

struct SynthSpec {
  std::string truth_graph = kDefaultTruthGraph;
  std::string analysis_graph = kDefaultAnalysisGraph;
  std::uint64_t true_cardinality = 4;
  std::uint64_t analysis_cardinality = 22;  // 0 keeps the minimum
  std::size_t records = 20000;
  std::size_t replications = 20;
  std::uint64_t seed = 1;
  double alpha = 0.1;
  std::size_t burn_in = 500;
  std::size_t samples = 1000;
  double delta = 0.05;
  std::vector<std::string> queries = {"DE(a0=0,a1=1,y=1|a=0)", "IE(a0=0,a1=1,y=1|a=0)",
                                      "SE(a0=0,a1=1,y=1)"};

  void validate() const {
    if (records == 0) throw Error(ErrorCode::kInvalidArgument, "records must be >= 1");
    if (replications == 0)
      throw Error(ErrorCode::kInvalidArgument, "replications must be >= 1");
    if (true_cardinality == 0)
      throw Error(ErrorCode::kInvalidArgument, "true_k must be >= 1");
    if (queries.empty()) throw Error(ErrorCode::kInvalidArgument, "no queries");
  }
};

inline SynthSpec parse_synth_spec(std::string_view contents,
                                  const std::filesystem::path& base_dir = {}) {
  SynthSpec spec;
  bool queries_reset = false;
  int line_no = 0;
  auto as_uint = [&](std::string_view v) {
    auto x = text::parse_int<std::uint64_t>(v);
    if (!x) throw Error(ErrorCode::kSyntax, "expected a non-negative integer", line_no);
    return *x;
  };
  auto as_double = [&](std::string_view v) {
    auto x = text::parse_double(v);
    if (!x) throw Error(ErrorCode::kSyntax, "expected a number", line_no);
    return *x;
  };
  for (auto raw : text::split_lines(contents)) {
    ++line_no;
    const auto line = text::trim(text::strip_comment(raw));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::kSyntax, "expected 'key = value'", line_no);
    const auto key = text::trim(line.substr(0, eq));
    const auto value = text::trim(line.substr(eq + 1));
    if (key == "truth_graph") {
      spec.truth_graph = text::read_file((base_dir / std::string(value)).string());
    } else if (key == "analysis_graph") {
      spec.analysis_graph = text::read_file((base_dir / std::string(value)).string());
    } else if (key == "true_k") {
      spec.true_cardinality = as_uint(value);
    } else if (key == "k") {
      spec.analysis_cardinality = as_uint(value);
    } else if (key == "records") {
      spec.records = as_uint(value);
    } else if (key == "replications") {
      spec.replications = as_uint(value);
    } else if (key == "seed") {
      spec.seed = as_uint(value);
    } else if (key == "alpha") {
      spec.alpha = as_double(value);
    } else if (key == "burnin") {
      spec.burn_in = as_uint(value);
    } else if (key == "samples") {
      spec.samples = as_uint(value);
    } else if (key == "delta") {
      spec.delta = as_double(value);
    } else if (key == "query") {
      if (!queries_reset) spec.queries.clear();
      queries_reset = true;
      spec.queries.emplace_back(value);
    } else {
      throw Error(ErrorCode::kSyntax, "unknown key '" + std::string(key) + "'", line_no);
    }
  }
  spec.validate();
  return spec;
}

// Builds a binary schema over the truth graph's variables and parses both
// graphs against it.
struct SynthGraphs {
  SchemaPtr schema;
  Admg truth;
  Admg analysis;
};

inline SynthGraphs parse_synth_graphs(const SynthSpec& spec) {
  auto schema = std::make_shared<const VariableSchema>(
      VariableSchema::uniform(graph_variable_names(spec.truth_graph)));
  SynthGraphs g{schema, parse_graph(spec.truth_graph, schema),
                parse_graph(spec.analysis_graph, schema)};
  if (g.truth.node_count() != schema->size())
    throw Error(ErrorCode::kInvalidArgument, "truth graph must cover every variable");
  return g;
}

// Random SCM on `truth` with every latent of cardinality `k`.
inline ScmState generate_scm(const Admg& truth, std::uint64_t k, Rng& rng) {
  const auto resolved =
      truth.with_cardinalities(std::vector<std::uint64_t>(truth.latents().size(), k), false);
  const auto structure = compile_structure(resolved);
  const auto& s = *structure;
  std::vector<std::vector<double>> q(s.latent_count());
  for (std::size_t i = 0; i < q.size(); ++i)
    q[i] = sample_dirichlet(rng, std::vector<double>(s.latent_cardinality(i), 1.0));
  std::vector<std::vector<int>> f(s.node_count());
  for (std::size_t v = 0; v < f.size(); ++v) {
    std::uniform_int_distribution<int> pick(0, s.cardinality(v) - 1);
    f[v].resize(s.mechanism(v).table_size);
    for (auto& x : f[v]) x = pick(rng);
  }
  return ScmState(structure, std::move(q), std::move(f));
}

inline ScmState generate_scm(const Admg& truth, std::uint64_t k, std::uint64_t seed) {
  auto rng = chain_rng(seed, 0);
  return generate_scm(truth, k, rng);
}

// T forward samples. The graph must cover every schema variable.
inline Dataset simulate_dataset(const ScmState& scm, std::size_t records, Rng& rng) {
  const auto& s = scm.structure();
  const auto& g = s.graph();
  const auto& schema = g.schema_ptr();
  if (g.node_count() != schema->size())
    throw Error(ErrorCode::kInvalidArgument, "graph must cover every schema variable");
  if (records == 0) throw Error(ErrorCode::kEmptyInput, "records must be >= 1");
  std::vector<int> codes(records * schema->size());
  std::vector<int> latents(s.latent_count());
  std::array<int, kMaxNodes> values{};
  for (std::size_t t = 0; t < records; ++t) {
    for (std::size_t i = 0; i < latents.size(); ++i) {
      const auto& q = scm.q(i);
      const double r = uniform01(rng);
      double cum = 0.0;
      int pick = static_cast<int>(q.size()) - 1;
      for (std::size_t j = 0; j < q.size(); ++j) {
        cum += q[j];
        if (r < cum) {
          pick = static_cast<int>(j);
          break;
        }
      }
      latents[i] = pick;
    }
    scm.solve(latents.data(), nullptr, {}, values.data());
    for (std::size_t v = 0; v < g.node_count(); ++v)
      codes[t * schema->size() + g.schema_index(v)] = values[v];
  }
  return Dataset(schema, std::move(codes));
}

inline double ground_truth(const ScmState& scm, const MeasureQuery& q) {
  return eval_measure(scm, q);
}

// Redraws until every query is defined (a constant treatment, for one, leaves
// conditional measures without support). Returns the model and its values.
inline std::pair<ScmState, std::vector<double>> draw_defined_truth(
    const Admg& truth, std::uint64_t k, const std::vector<MeasureQuery>& queries, Rng& rng) {
  constexpr int kMaxDraws = 1000;
  for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
    auto scm = generate_scm(truth, k, rng);
    std::vector<double> values;
    try {
      for (const auto& q : queries) values.push_back(ground_truth(scm, q));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kZeroMass) throw;
      continue;
    }
    return {std::move(scm), std::move(values)};
  }
  throw Error(ErrorCode::kZeroMass, "no truth model with every query defined after " +
                                        std::to_string(kMaxDraws) + " draws");
}

struct CoverageRow {
  std::size_t replication;
  std::string query;
  double truth;
  double ci_low;
  double ci_high;
  bool covered;
  double width;
};

struct CoverageSummary {
  std::string query;
  std::size_t covered = 0;
  std::size_t replications = 0;
  double mean_width = 0.0;
  double rate() const {
    return replications ? static_cast<double>(covered) / static_cast<double>(replications)
                        : 0.0;
  }
};

struct CoverageTable {
  std::vector<CoverageRow> rows;
  std::vector<CoverageSummary> summary;
};

inline bool interval_covers(double low, double high, double truth) {
  constexpr double kTol = 1e-12;
  return low - kTol <= truth && truth <= high + kTol;
}

inline CoverageTable coverage_experiment(const SynthSpec& spec, std::size_t jobs = 1) {
  spec.validate();
  const auto graphs = parse_synth_graphs(spec);
  std::vector<MeasureQuery> queries;
  for (const auto& text : spec.queries) queries.push_back(parse_measure(text));

  SamplerConfig cfg;
  cfg.alpha = spec.alpha;
  cfg.burn_in = spec.burn_in;
  cfg.samples = spec.samples;
  cfg.seed = spec.seed;
  if (spec.analysis_cardinality > 0) cfg.overrides.all = spec.analysis_cardinality;

  std::vector<std::vector<CoverageRow>> per_rep(spec.replications);
  parallel_for(spec.replications, jobs, [&](std::size_t r) {
    auto truth_rng = chain_rng(spec.seed, 3 * r);
    const auto [truth, values] = draw_defined_truth(graphs.truth, spec.true_cardinality,
                                                    queries, truth_rng);
    auto data_rng = chain_rng(spec.seed, 3 * r + 1);
    const auto data = simulate_dataset(truth, spec.records, data_rng);
    auto chain = run_chain(data, graphs.analysis, queries, cfg, 3 * r + 2);
    chain.graph_id = "analysis";
    for (std::size_t k = 0; k < queries.size(); ++k) {
      const double t = values[k];
      const auto report = aggregate({chain}, k, spec.delta);
      per_rep[r].push_back({r + 1, queries[k].label(), t, report.ci_low, report.ci_high,
                            interval_covers(report.ci_low, report.ci_high, t),
                            report.ci_high - report.ci_low});
    }
  });

  CoverageTable table;
  for (const auto& q : queries) table.summary.push_back({q.label(), 0, 0, 0.0});
  for (const auto& rows : per_rep)
    for (std::size_t k = 0; k < rows.size(); ++k) {
      table.rows.push_back(rows[k]);
      auto& s = table.summary[k];
      ++s.replications;
      s.covered += rows[k].covered ? 1 : 0;
      s.mean_width += rows[k].width;
    }
  for (auto& s : table.summary)
    if (s.replications) s.mean_width /= static_cast<double>(s.replications);
  return table;
}

inline std::string coverage_csv(const CoverageTable& table) {
  std::string csv = "replication,query,truth,ci_low,ci_high,covered,width\n";
  for (const auto& r : table.rows)
    csv += std::to_string(r.replication) + ",\"" + r.query + "\"," + format_double(r.truth) +
           "," + format_double(r.ci_low) + "," + format_double(r.ci_high) + "," +
           (r.covered ? "1" : "0") + "," + format_double(r.width) + "\n";
  return csv;
}

}  // namespace cfbound

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

// Subcommand implementations behind the `cfbound` executable. Each takes a
// plain config struct so that tests can drive them without a shell.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfbound/bounds.hpp"
#include "cfbound/data.hpp"
#include "cfbound/error.hpp"
#include "cfbound/graph.hpp"
#include "cfbound/measures.hpp"
#include "cfbound/parallel.hpp"
#include "cfbound/sampler.hpp"
#include "cfbound/synth.hpp"
#include "cfbound/text.hpp"

#ifndef CFBOUND_VERSION
#define CFBOUND_VERSION "0.1.0"
#endif

namespace cfbound {

inline constexpr const char* kVersion = CFBOUND_VERSION;

// Grid limit from CFBOUND_MAX_GRID, or the default.
inline std::uint64_t max_grid_from_env() {
  const char* env = std::getenv("CFBOUND_MAX_GRID");
  if (!env || !*env) return kDefaultMaxGrid;
  auto v = text::parse_int<std::uint64_t>(env);
  if (!v || *v == 0)
    throw Error(ErrorCode::kInvalidArgument,
                "CFBOUND_MAX_GRID must be a positive integer, got '" + std::string(env) + "'");
  return *v;
}

// Parses `--k` values: `N` applies to every latent, `NAME=N` to one.
inline CardinalityOverrides parse_cardinality_overrides(const std::vector<std::string>& specs) {
  CardinalityOverrides o;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    const auto number = eq == std::string::npos ? std::string_view(s)
                                                : std::string_view(s).substr(eq + 1);
    auto k = text::parse_int<std::uint64_t>(number);
    if (!k || *k == 0)
      throw Error(ErrorCode::kInvalidArgument, "bad cardinality '" + s + "'");
    if (eq == std::string::npos)
      o.all = *k;
    else
      o.by_name[s.substr(0, eq)] = *k;
  }
  return o;
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& contents) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  out << contents;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + p.string());
}

inline std::string file_id(const std::string& path) {
  std::string stem = std::filesystem::path(path).stem().string();
  for (auto& c : stem)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  return stem.empty() ? "graph" : stem;
}

// Unique ids from file stems, suffixed on collision.
inline std::vector<std::string> graph_ids(const std::vector<std::string>& paths) {
  std::vector<std::string> ids;
  std::set<std::string> used;
  for (const auto& p : paths) {
    auto id = file_id(p);
    auto base = id;
    for (int k = 2; used.count(id); ++k) id = base + "_" + std::to_string(k);
    used.insert(id);
    ids.push_back(id);
  }
  return ids;
}

// Re-throws with the file name attached.
template <typename Fn>
auto with_file(const std::string& path, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw e.in(path);
  }
}

inline std::string format_set(const Admg& g, const std::vector<std::size_t>& nodes) {
  std::string s = "{";
  for (std::size_t i = 0; i < nodes.size(); ++i) s += (i ? ", " : "") + g.node_name(nodes[i]);
  return s + "}";
}

inline std::string fixed(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// graph-info

struct GraphInfoConfig {
  std::vector<std::string> graphs;
  std::optional<std::string> schema;
  std::optional<std::string> knowledge;
  std::vector<std::string> cardinalities;  // --k values
};

inline SchemaPtr schema_for_graphs(const std::vector<std::string>& graph_texts) {
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const auto& t : graph_texts)
    for (auto& n : graph_variable_names(t))
      if (seen.insert(n).second) names.push_back(n);
  return std::make_shared<const VariableSchema>(VariableSchema::uniform(names));
}

inline int cmd_graph_info(const GraphInfoConfig& cfg, std::ostream& out) {
  if (cfg.graphs.empty()) throw Error(ErrorCode::kInvalidArgument, "no --graph given");
  std::vector<std::string> texts;
  for (const auto& p : cfg.graphs) texts.push_back(text::read_file(p));
  SchemaPtr schema;
  if (cfg.schema) {
    const auto contents = text::read_file(*cfg.schema);
    schema = detail::with_file(*cfg.schema, [&] {
      return std::make_shared<const VariableSchema>(parse_schema(contents));
    });
  } else {
    schema = schema_for_graphs(texts);
  }
  std::optional<KnowledgeConstraints> knowledge;
  if (cfg.knowledge) {
    const auto contents = text::read_file(*cfg.knowledge);
    knowledge = detail::with_file(*cfg.knowledge, [&] { return parse_knowledge(contents); });
  }
  const auto overrides = parse_cardinality_overrides(cfg.cardinalities);
  const auto ids = detail::graph_ids(cfg.graphs);
  for (std::size_t i = 0; i < cfg.graphs.size(); ++i) {
    const auto g = detail::with_file(cfg.graphs[i], [&] { return parse_graph(texts[i], schema); });
    out << "graph " << ids[i] << " (" << cfg.graphs[i] << ")\n";
    out << "  nodes:";
    for (std::size_t v = 0; v < g.node_count(); ++v) out << " " << g.node_name(v);
    out << "\n  c-components:";
    for (const auto& c : g.c_components()) out << " " << detail::format_set(g, c);
    out << "\n";
    const auto resolved = resolve_cardinalities(g, overrides);
    for (std::size_t l = 0; l < g.latents().size(); ++l) {
      const auto& u = g.latents()[l];
      out << "  " << u.name << ": d=" << g.domain_product(l, kDefaultMaxDomainProduct)
          << ", K=" << g.cardinality_bound(l);
      if (*resolved.latents()[l].cardinality != g.cardinality_bound(l))
        out << " (using " << *resolved.latents()[l].cardinality << ")";
      out << "  children " << detail::format_set(g, u.children)
          << (u.implicit ? " [implicit]" : "") << "\n";
    }
    if (knowledge) {
      const auto why = knowledge_violations(g, *knowledge);
      if (why.empty()) {
        out << "  knowledge: kept\n";
      } else {
        out << "  knowledge: dropped\n";
        for (const auto& w : why) out << "    - " << w << "\n";
      }
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// audit

struct AuditConfig {
  std::string data;
  std::string recode;
  std::optional<std::string> schema;
  std::vector<std::string> graphs;
  std::optional<std::string> knowledge;
  std::vector<std::string> queries;
  std::string treatment = "A";
  std::string outcome = "Y";
  double delta = 0.05;
  SamplerConfig sampler;
  std::vector<std::string> cardinalities;  // --k values
  bool tv_bound = false;
  bool dump_chains = false;
  std::size_t jobs = 1;
  std::string out_dir;
};

struct AuditResult {
  std::vector<BoundReport> reports;
  std::vector<ChainOutput> chains;
  std::vector<TraceSummary> traces;
  nlohmann::ordered_json report;
};

inline AuditResult run_audit(const AuditConfig& cfg, std::ostream& log) {
  if (cfg.graphs.empty()) throw Error(ErrorCode::kInvalidArgument, "no --graph given");
  if (cfg.queries.empty()) throw Error(ErrorCode::kInvalidArgument, "no --query given");
  if (!(cfg.delta >= 0.0 && cfg.delta < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "delta must lie in [0, 1)");

  std::vector<std::string> graph_texts;
  for (const auto& p : cfg.graphs) graph_texts.push_back(text::read_file(p));
  std::string recode_text;
  RecodeSpec recode;
  if (!cfg.recode.empty()) {
    recode_text = text::read_file(cfg.recode);
    recode = detail::with_file(cfg.recode, [&] { return parse_recode(recode_text); });
  }
  SchemaPtr schema;
  std::string schema_text;
  if (cfg.schema) {
    schema_text = text::read_file(*cfg.schema);
    schema = detail::with_file(*cfg.schema, [&] {
      return std::make_shared<const VariableSchema>(parse_schema(schema_text));
    });
  } else if (!cfg.recode.empty()) {
    schema = std::make_shared<const VariableSchema>(recode.schema());
  } else {
    schema = schema_for_graphs(graph_texts);
  }
  const auto data_text = text::read_file(cfg.data);
  const auto data =
      detail::with_file(cfg.data, [&] { return load_csv(data_text, recode, schema); });

  const auto ids = detail::graph_ids(cfg.graphs);
  EquivalenceClass candidates;
  for (std::size_t i = 0; i < cfg.graphs.size(); ++i)
    candidates.push_back({ids[i], detail::with_file(cfg.graphs[i], [&] {
                            return parse_graph(graph_texts[i], schema);
                          })});
  std::string knowledge_text;
  EquivalenceClass kept = candidates;
  if (cfg.knowledge) {
    knowledge_text = text::read_file(*cfg.knowledge);
    const auto k =
        detail::with_file(*cfg.knowledge, [&] { return parse_knowledge(knowledge_text); });
    kept = filter_equivalence_class(candidates, k);
    for (const auto& c : candidates) {
      const auto why = knowledge_violations(c.graph, k);
      if (!why.empty()) log << "dropped " << c.id << ": " << why.front() << "\n";
    }
  }

  std::vector<MeasureQuery> queries;
  for (const auto& q : cfg.queries) queries.push_back(parse_measure(q, cfg.treatment, cfg.outcome));
  std::optional<std::size_t> tv_parts[3];
  if (cfg.tv_bound) {
    const MeasureQuery* base = nullptr;
    for (const auto& q : queries)
      if (q.kind != MeasureKind::kRaw) {
        base = &q;
        break;
      }
    if (!base) throw Error(ErrorCode::kInvalidArgument, "--tv-bound needs a non-RAW query");
    const int a0 = base->a0, a1 = base->a1, y = base->y;
    auto part = [&](MeasureKind kind, int b, int c, bool cond) {
      MeasureQuery q;
      q.kind = kind;
      q.treatment = cfg.treatment;
      q.outcome = cfg.outcome;
      q.a0 = b;
      q.a1 = c;
      q.y = y;
      if (cond) q.context = {{cfg.treatment, a1}};
      for (std::size_t k = 0; k < queries.size(); ++k)
        if (queries[k].label() == q.label()) return k;
      queries.push_back(q);
      return queries.size() - 1;
    };
    tv_parts[0] = part(MeasureKind::kSE, a0, a1, false);
    tv_parts[1] = part(MeasureKind::kIE, a0, a1, true);
    tv_parts[2] = part(MeasureKind::kDE, a1, a0, true);
  }

  SamplerConfig sampler = cfg.sampler;
  sampler.overrides = parse_cardinality_overrides(cfg.cardinalities);

  // Chain index is the graph's position in the unfiltered list, so dropping a
  // candidate never reseeds the others.
  std::vector<std::size_t> chain_index;
  for (const auto& k : kept)
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (candidates[i].id == k.id) chain_index.push_back(i);

  AuditResult result;
  result.chains.resize(kept.size());
  parallel_for(kept.size(), cfg.jobs, [&](std::size_t i) {
    result.chains[i] = detail::with_file(cfg.graphs[chain_index[i]], [&] {
      return run_chain(data, kept[i].graph, queries, sampler, chain_index[i]);
    });
    result.chains[i].graph_id = kept[i].id;
  });

  // Trace target: empirical P(Y = y | A = a0) of the first non-RAW query.
  std::optional<double> empirical;
  for (const auto& q : queries)
    if (q.kind != MeasureKind::kRaw) {
      try {
        empirical = empirical_trace_target(data, q);
      } catch (const Error&) {
      }
      break;
    }
  std::optional<double> worst_gap;
  for (const auto& c : result.chains) {
    if (empirical && !c.trace.empty()) {
      result.traces.push_back(convergence_trace(c, *empirical));
      const double gap = result.traces.back().gap;
      worst_gap = worst_gap ? std::max(*worst_gap, gap) : gap;
    } else {
      result.traces.push_back({});
    }
  }

  for (std::size_t k = 0; k < queries.size(); ++k) {
    result.reports.push_back(aggregate(result.chains, k, cfg.delta));
    result.reports.back().trace_gap = worst_gap;
  }
  if (cfg.tv_bound) {
    result.reports.push_back(tv_bound(result.chains, *tv_parts[0], *tv_parts[1], *tv_parts[2],
                                      cfg.delta, "TV[SE+IE-DE]"));
    result.reports.back().trace_gap = worst_gap;
  }

  auto& j = result.report;
  j["reports"] = nlohmann::ordered_json::array();
  for (const auto& r : result.reports) j["reports"].push_back(report_json(r));
  j["chains"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < result.chains.size(); ++i) {
    const auto& c = result.chains[i];
    nlohmann::ordered_json cj;
    cj["graph"] = c.graph_id;
    cj["chain_index"] = chain_index[i];
    cj["trace_query"] = c.trace_label;
    if (empirical && result.traces[i].count > 0) {
      const auto& t = result.traces[i];
      cj["trace"] = {{"empirical", t.empirical}, {"mean", t.mean}, {"min", t.min},
                     {"max", t.max},             {"gap", t.gap},   {"converged", t.converged}};
    } else {
      cj["trace"] = nullptr;
    }
    cj["diagnostics"] = {{"iterations", c.diagnostics.iterations},
                         {"support_misses", c.diagnostics.support_misses},
                         {"refit_conflicts", c.diagnostics.refit_conflicts},
                         {"posterior_builds", c.diagnostics.posterior_builds},
                         {"posterior_draws", c.diagnostics.posterior_draws}};
    j["chains"].push_back(cj);
  }

  if (!cfg.out_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path dir(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string());
    std::vector<std::string> outputs = {"report.json"};
    detail::write_text(dir / "report.json", j.dump(2) + "\n");
    for (std::size_t k = 0; k < result.reports.size(); ++k) {
      const auto name = "histogram_" + std::to_string(k + 1) + ".csv";
      detail::write_text(dir / name, histogram_csv(histogram(result.reports[k].samples)));
      outputs.push_back(name);
    }
    std::string trace = "iteration";
    for (const auto& c : result.chains) trace += "," + c.graph_id;
    trace += "\n";
    std::size_t len = 0;
    for (const auto& c : result.chains) len = std::max(len, c.trace.size());
    for (std::size_t i = 0; i < len; ++i) {
      trace += std::to_string(i + 1);
      for (const auto& c : result.chains)
        trace += "," + (i < c.trace.size() && !std::isnan(c.trace[i]) ? format_double(c.trace[i])
                                                                      : std::string("NA"));
      trace += "\n";
    }
    detail::write_text(dir / "trace.csv", trace);
    outputs.push_back("trace.csv");
    if (cfg.dump_chains)
      for (const auto& c : result.chains) {
        const auto name = "chain_" + c.graph_id + ".csv";
        detail::write_text(dir / name, chain_dump_csv(c));
        outputs.push_back(name);
      }

    nlohmann::ordered_json m;
    m["tool"] = "cfbound";
    m["version"] = kVersion;
    m["command"] = "audit";
    m["config"] = {{"data", cfg.data},
                   {"recode", cfg.recode},
                   {"schema", cfg.schema ? *cfg.schema : ""},
                   {"knowledge", cfg.knowledge ? *cfg.knowledge : ""},
                   {"queries", cfg.queries},
                   {"treatment", cfg.treatment},
                   {"outcome", cfg.outcome},
                   {"delta", cfg.delta},
                   {"alpha", sampler.alpha},
                   {"burnin", sampler.burn_in},
                   {"samples", sampler.samples},
                   {"k", cfg.cardinalities},
                   {"max_grid", sampler.max_grid},
                   {"tv_bound", cfg.tv_bound}};
    m["seeds"] = {{"master", sampler.seed}};
    m["seeds"]["chains"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < kept.size(); ++i)
      m["seeds"]["chains"].push_back({{"graph", kept[i].id}, {"chain_index", chain_index[i]}});
    m["inputs"] = {{"data_fnv1a", text::hex64(text::fnv1a(data_text))},
                   {"records", data.size()}};
    if (!cfg.recode.empty()) m["inputs"]["recode_fnv1a"] = text::hex64(text::fnv1a(recode_text));
    if (cfg.schema) m["inputs"]["schema_fnv1a"] = text::hex64(text::fnv1a(schema_text));
    if (cfg.knowledge) m["inputs"]["knowledge_fnv1a"] = text::hex64(text::fnv1a(knowledge_text));
    m["graphs"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      bool used = std::any_of(kept.begin(), kept.end(),
                              [&](const CandidateGraph& k) { return k.id == candidates[i].id; });
      m["graphs"].push_back({{"id", candidates[i].id},
                             {"path", cfg.graphs[i]},
                             {"fnv1a", text::hex64(text::fnv1a(graph_texts[i]))},
                             {"kept", used}});
    }
    m["outputs"] = outputs;
    detail::write_text(dir / "manifest.json", m.dump(2) + "\n");
  }
  return result;
}

inline int cmd_audit(const AuditConfig& cfg, std::ostream& out) {
  const auto result = run_audit(cfg, out);
  for (const auto& r : result.reports) {
    out << r.query << ": mean " << detail::fixed(r.mean) << ", "
        << detail::fixed(100.0 * (1.0 - r.delta), 1) << "% interval ["
        << detail::fixed(r.ci_low) << ", " << detail::fixed(r.ci_high) << "], worst ["
        << detail::fixed(r.worst_low) << ", " << detail::fixed(r.worst_high) << "]";
    if (r.skipped) out << ", " << r.skipped << " skipped";
    out << "\n";
  }
  for (std::size_t i = 0; i < result.chains.size(); ++i) {
    const auto& t = result.traces[i];
    const auto& c = result.chains[i];
    out << "chain " << c.graph_id << ": ";
    if (t.count)
      out << "trace mean " << detail::fixed(t.mean) << " vs empirical "
          << detail::fixed(t.empirical) << (t.converged ? "" : " (NOT CONVERGED)");
    else
      out << "no trace";
    out << ", conflicts " << c.diagnostics.refit_conflicts << ", support misses "
        << c.diagnostics.support_misses << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthConfig {
  std::string spec;
  std::optional<std::size_t> replications;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string out_dir;
};

inline int cmd_synth(const SynthConfig& cfg, std::ostream& out) {
  const auto spec_text = text::read_file(cfg.spec);
  auto spec = detail::with_file(cfg.spec, [&] {
    return parse_synth_spec(spec_text, std::filesystem::path(cfg.spec).parent_path());
  });
  if (cfg.replications) spec.replications = *cfg.replications;
  if (cfg.seed) spec.seed = *cfg.seed;
  spec.validate();
  const auto table = coverage_experiment(spec, cfg.jobs);

  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  for (const auto& s : table.summary) {
    out << s.query << ": covered " << s.covered << "/" << s.replications << ", mean width "
        << detail::fixed(s.mean_width) << "\n";
    summary.push_back({{"query", s.query},
                       {"covered", s.covered},
                       {"replications", s.replications},
                       {"rate", s.rate()},
                       {"mean_width", s.mean_width}});
  }
  if (!cfg.out_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path dir(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string());
    detail::write_text(dir / "coverage.csv", coverage_csv(table));
    detail::write_text(dir / "summary.json", summary.dump(2) + "\n");
    nlohmann::ordered_json m;
    m["tool"] = "cfbound";
    m["version"] = kVersion;
    m["command"] = "synth";
    m["config"] = {{"spec", cfg.spec},
                   {"spec_fnv1a", text::hex64(text::fnv1a(spec_text))},
                   {"true_k", spec.true_cardinality},
                   {"k", spec.analysis_cardinality},
                   {"records", spec.records},
                   {"replications", spec.replications},
                   {"alpha", spec.alpha},
                   {"burnin", spec.burn_in},
                   {"samples", spec.samples},
                   {"delta", spec.delta},
                   {"queries", spec.queries}};
    m["seeds"] = {{"master", spec.seed}};
    m["graphs"] = {{"truth_fnv1a", text::hex64(text::fnv1a(spec.truth_graph))},
                   {"analysis_fnv1a", text::hex64(text::fnv1a(spec.analysis_graph))}};
    m["outputs"] = {"coverage.csv", "summary.json"};
    detail::write_text(dir / "manifest.json", m.dump(2) + "\n");
  }
  return 0;
}

}  // namespace cfbound

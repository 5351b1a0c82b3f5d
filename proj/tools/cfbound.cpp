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

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfbound/app.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Bounds on counterfactual fairness measures"};
  app.set_version_flag("--version", std::string(cfbound::kVersion));
  app.require_subcommand(1);

  cfbound::GraphInfoConfig info;
  std::string info_schema, info_knowledge;
  auto* gi = app.add_subcommand("graph-info", "C-components and latent cardinality bounds");
  gi->add_option("--graph", info.graphs, "Graph file (repeatable)")->required();
  gi->add_option("--schema", info_schema, "Variable schema file");
  gi->add_option("--knowledge", info_knowledge, "Knowledge constraints file");
  gi->add_option("--k", info.cardinalities, "Latent cardinality: N or NAME=N (repeatable)");

  cfbound::AuditConfig audit;
  std::string audit_schema, audit_knowledge;
  std::size_t max_grid = 0;
  auto* au = app.add_subcommand("audit", "Bound fairness measures on a dataset");
  au->add_option("--data", audit.data, "CSV dataset")->required();
  au->add_option("--recode", audit.recode, "Recode rules file (default: columns named as nodes)");
  au->add_option("--schema", audit_schema,
                 "Variable schema file (default: from recode, else binary)");
  au->add_option("--graph", audit.graphs, "Candidate graph file (repeatable)")->required();
  au->add_option("--knowledge", audit_knowledge, "Knowledge constraints file");
  au->add_option("--query", audit.queries, "Measure, e.g. \"SE(a0=0,a1=1,y=1)\"")->required();
  au->add_option("--treatment", audit.treatment, "Protected attribute node")
      ->capture_default_str();
  au->add_option("--outcome", audit.outcome, "Outcome node")->capture_default_str();
  au->add_option("--delta", audit.delta, "Interval level is 1 - delta")->capture_default_str();
  au->add_option("--burnin", audit.sampler.burn_in, "Burn-in iterations")
      ->capture_default_str();
  au->add_option("--samples", audit.sampler.samples, "Retained iterations per chain")
      ->capture_default_str();
  au->add_option("--alpha", audit.sampler.alpha, "Dirichlet prior concentration")
      ->capture_default_str();
  au->add_option("--seed", audit.sampler.seed, "Master seed")->capture_default_str();
  au->add_option("--k", audit.cardinalities, "Latent cardinality: N or NAME=N (repeatable)");
  au->add_option("--max-grid", max_grid, "Joint exogenous grid limit");
  au->add_flag("--tv-bound", audit.tv_bound, "Also bound TV as SE + IE - DE per sample");
  au->add_flag("--dump-chains", audit.dump_chains, "Write per-iteration chain CSVs");
  au->add_option("--jobs", audit.jobs, "Concurrent chains")->capture_default_str();
  au->add_option("--out", audit.out_dir, "Output directory");

  cfbound::SynthConfig synth;
  std::size_t replications = 0;
  std::uint64_t synth_seed = 0;
  auto* sy = app.add_subcommand("synth", "Coverage benchmark on synthetic SCMs");
  sy->add_option("--spec", synth.spec, "Synthetic benchmark spec file")->required();
  auto* reps = sy->add_option("--replications", replications, "Override replication count");
  auto* seed = sy->add_option("--seed", synth_seed, "Override master seed");
  sy->add_option("--jobs", synth.jobs, "Concurrent replications")->capture_default_str();
  sy->add_option("--out", synth.out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gi->parsed()) {
      if (!info_schema.empty()) info.schema = info_schema;
      if (!info_knowledge.empty()) info.knowledge = info_knowledge;
      return cfbound::cmd_graph_info(info, std::cout);
    }
    if (au->parsed()) {
      if (!audit_schema.empty()) audit.schema = audit_schema;
      if (!audit_knowledge.empty()) audit.knowledge = audit_knowledge;
      audit.sampler.max_grid = max_grid ? max_grid : cfbound::max_grid_from_env();
      return cfbound::cmd_audit(audit, std::cout);
    }
    if (sy->parsed()) {
      if (reps->count()) synth.replications = replications;
      if (seed->count()) synth.seed = synth_seed;
      return cfbound::cmd_synth(synth, std::cout);
    }
  } catch (const cfbound::Error& e) {
    std::cerr << "cfbound: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "cfbound: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

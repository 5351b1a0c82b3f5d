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

#include "cfbound/sampler.hpp"

#include <gtest/gtest.h>

#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <cstring>
#include <map>

#include "cfbound/synth.hpp"
#include "cfbound/text.hpp"
#include "oracle.hpp"

namespace cfbound {
namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIo;
}

Admg load(const std::string& path) {
  const auto text = text::read_file(path);
  auto schema = std::make_shared<const VariableSchema>(
      VariableSchema::uniform(graph_variable_names(text)));
  return parse_graph(text, schema);
}

SamplerConfig small_config(std::size_t burn_in, std::size_t samples) {
  SamplerConfig cfg;
  cfg.burn_in = burn_in;
  cfg.samples = samples;
  return cfg;
}

// Chain state around a fixed SCM and dataset, bypassing initialization.
ChainState state_for(const ScmState& scm, const Dataset& d, std::uint64_t seed) {
  ChainState st;
  st.structure = scm.structure_ptr();
  st.data = std::make_shared<const ProjectedData>(project_dataset(d, *st.structure));
  st.scm = std::make_shared<const ScmState>(scm);
  st.units.assign(d.size(), 0);
  st.rng = chain_rng(seed, 0);
  return st;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

// Two-sided Kolmogorov-Smirnov distance against a continuous CDF.
template <typename Cdf>
double ks_distance(std::vector<double> xs, Cdf cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

TEST(ChainRng, StreamsDependOnSeedAndIndex) {
  auto a = chain_rng(7, 0), b = chain_rng(7, 0), c = chain_rng(7, 1), d = chain_rng(8, 0);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
  EXPECT_NE(chain_rng(1ull << 32, 0)(), chain_rng(0, 0)());
}

TEST(Dirichlet, OnSimplexEvenForTinyShapes) {
  auto rng = chain_rng(1, 0);
  for (double a : {1e-3, 0.1, 1.0, 5.0}) {
    for (int rep = 0; rep < 200; ++rep) {
      auto p = sample_dirichlet(rng, std::vector<double>(7, a));
      double s = 0.0;
      for (double x : p) {
        EXPECT_GE(x, 0.0);
        s += x;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Dirichlet, MarginalMatchesBetaByKs) {
  auto rng = chain_rng(2, 0);
  for (auto [a, b] : std::vector<std::pair<double, double>>{
           {0.1, 0.3}, {0.6, 2.1}, {3.0, 7.0}, {60.1, 140.2}}) {
    std::vector<double> xs;
    for (int i = 0; i < 10000; ++i) xs.push_back(sample_dirichlet(rng, {a, b})[0]);
    const double d = ks_distance(xs, [&](double x) {
      return boost::math::ibeta(a, b, std::clamp(x, 0.0, 1.0));
    });
    EXPECT_LE(d, 0.02) << "Beta(" << a << "," << b << ")";
  }
}

TEST(SamplerConfig, Validation) {
  SamplerConfig cfg;
  cfg.alpha = 0.0;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::kInvalidArgument);
  cfg.alpha = 0.1;
  cfg.samples = 0;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::kInvalidArgument);
}

TEST(ProjectDataset, MatchesNodesByName) {
  auto g = resolve_cardinalities(load("data/compas/race_graph.txt"));
  auto s = compile_structure(g);
  std::vector<Variable> vars;
  for (const auto* n : {"Y", "Extra", "W2", "A", "W1"}) vars.push_back({n, {"0", "1"}});
  auto schema = std::make_shared<const VariableSchema>(vars);
  Dataset d(schema, {1, 0, 1, 0, 1, /**/ 0, 1, 0, 1, 1});
  auto p = project_dataset(d, *s);
  ASSERT_EQ(p.size(), 2u);
  // Graph order: A, W1, W2, Y.
  EXPECT_EQ(std::vector<int>(p.record(0), p.record(0) + 4), (std::vector<int>{0, 1, 1, 1}));
  EXPECT_EQ(std::vector<int>(p.record(1), p.record(1) + 4), (std::vector<int>{1, 1, 0, 0}));
  EXPECT_EQ(p.distinct_codes.size(), 2u);

  auto missing = std::make_shared<const VariableSchema>(VariableSchema::uniform({"A", "Y"}));
  EXPECT_EQ(code_of([&] { project_dataset(Dataset(missing, {0, 0}), *s); }),
            ErrorCode::kMissingColumn);
  std::vector<Variable> wide = vars;
  wide[0].labels.push_back("2");
  auto ternary = std::make_shared<const VariableSchema>(wide);
  EXPECT_EQ(code_of([&] { project_dataset(Dataset(ternary, {1, 0, 1, 0, 1}), *s); }),
            ErrorCode::kInvalidArgument);
}

Dataset synthetic(const Admg& truth, std::size_t records, std::uint64_t seed) {
  auto rng = chain_rng(seed, 0);
  auto scm = generate_scm(truth, 3, rng);
  return simulate_dataset(scm, records, rng);
}

TEST(InitializeChain, UniformExogenousAndFittedTables) {
  auto g = load("data/compas/race_graph.txt");
  auto d = synthetic(g, 300, 1);
  auto st = initialize_chain(d, g, small_config(0, 1));
  const auto& s = *st.structure;
  ASSERT_EQ(s.latent_count(), 2u);
  EXPECT_EQ(s.latent_cardinality(0), 17);
  for (std::size_t i = 0; i < s.latent_count(); ++i)
    for (double p : st.scm->q(i)) EXPECT_EQ(p, 1.0 / s.latent_cardinality(i));
  EXPECT_EQ(st.units.size(), 300u);
  EXPECT_EQ(st.iteration, 0u);
}

TEST(InitializeChain, RejectsUndersizedOverride) {
  auto g = load("data/compas/race_graph.txt");
  auto d = synthetic(g, 10, 1);
  auto cfg = small_config(0, 1);
  cfg.overrides.all = 16;
  EXPECT_EQ(code_of([&] { initialize_chain(d, g, cfg); }), ErrorCode::kCardinality);
  cfg.overrides.all = 20;
  EXPECT_EQ(initialize_chain(d, g, cfg).structure->latent_cardinality(1), 20);
}

TEST(Refit, SingleRecordIsReproducedEveryIteration) {
  auto g = load("data/compas/age_graph.txt");
  auto d = synthetic(g, 1, 3);
  auto cfg = small_config(0, 1);
  auto st = initialize_chain(d, g, cfg);
  const auto rec = std::vector<int>(st.data->record(0), st.data->record(0) + 5);
  for (int it = 0; it < 50; ++it) {
    resample_latents(st);
    refit_and_draw(st, cfg);
    EXPECT_EQ(evaluate_unit(*st.scm, st.units[0]), rec);
  }
  EXPECT_EQ(st.diagnostics.refit_conflicts, 0u);
  EXPECT_EQ(st.diagnostics.support_misses, 0u);
  EXPECT_EQ(st.diagnostics.iterations, 50u);
}

TEST(Refit, ConflictFreeStatesReproduceEveryRecord) {
  auto g = load("data/compas/race_graph.txt");
  auto d = synthetic(g, 400, 4);
  auto cfg = small_config(0, 1);
  auto st = initialize_chain(d, g, cfg);
  for (int it = 0; it < 20; ++it) {
    const auto before = st.diagnostics.refit_conflicts;
    resample_latents(st);
    refit_and_draw(st, cfg);
    if (st.diagnostics.refit_conflicts != before) continue;
    for (std::size_t t = 0; t < st.data->size(); ++t) {
      auto got = evaluate_unit(*st.scm, st.units[t]);
      ASSERT_TRUE(std::equal(got.begin(), got.end(), st.data->record(t)));
    }
  }
}

TEST(ResampleLatents, OneCompatibleUnitIsAlwaysChosen) {
  // A = U, Y = U on a binary latent: each record pins its unit.
  auto g = parse_graph("node A\nnode Y\nlatent U -> A Y\n",
                       std::make_shared<const VariableSchema>(
                           VariableSchema::uniform({"A", "Y"})));
  auto s = compile_structure(g.with_cardinalities({2}, false));
  ScmState scm(s, {{0.3, 0.7}}, {{0, 1}, {0, 1}});
  Dataset d(g.schema_ptr(), {1, 1, 0, 0, 1, 1});
  auto st = state_for(scm, d, 5);
  for (int rep = 0; rep < 20; ++rep) {
    resample_latents(st);
    EXPECT_EQ(st.units, (std::vector<std::uint64_t>{1, 0, 1}));
  }
  EXPECT_EQ(st.diagnostics.support_misses, 0u);
}

TEST(ResampleLatents, SupportMissKeepsPreviousUnit) {
  auto g = parse_graph("node A\nnode Y\nlatent U -> A Y\n",
                       std::make_shared<const VariableSchema>(
                           VariableSchema::uniform({"A", "Y"})));
  auto s = compile_structure(g.with_cardinalities({2}, false));
  ScmState scm(s, {{0.3, 0.7}}, {{0, 1}, {0, 1}});
  Dataset d(g.schema_ptr(), {1, 0});  // A != Y is impossible here
  for (bool memo : {true, false}) {
    auto st = state_for(scm, d, 6);
    st.units = {1};
    resample_latents(st, memo);
    EXPECT_EQ(st.units[0], 1u);
    EXPECT_EQ(st.diagnostics.support_misses, 1u);
    EXPECT_EQ(st.diagnostics.posterior_draws, 0u);
  }
}

TEST(ResampleLatents, FrequenciesMatchEnumeratedPosterior) {
  std::mt19937_64 gen(41);
  for (int rep = 0; rep < 5; ++rep) {
    auto scm = oracle::random_scm(gen, 3, 4);
    oracle::Model m(scm);
    // Record: the factual outcome of the heaviest unit.
    std::uint64_t best = 0;
    for (std::uint64_t u = 1; u < scm.grid_size(); ++u)
      if (scm.weight(u) > scm.weight(best)) best = u;
    const auto rec = evaluate_unit(scm, best);
    std::map<std::uint64_t, double> want;
    double z = 0.0;
    m.for_each_unit([&](const std::vector<int>& u, double w) {
      if (m.factual(u) != rec) return;
      want[scm.structure().encode_unit(u)] += w;
      z += w;
    });
    Dataset d(scm.structure().graph().schema_ptr(), rec);
    auto st = state_for(scm, d, 7 + rep);
    std::map<std::uint64_t, int> got;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      resample_latents(st);
      ++got[st.units[0]];
    }
    for (const auto& [u, c] : got) EXPECT_TRUE(want.count(u)) << "unit " << u;
    for (const auto& [u, w] : want) {
      const double p = w / z;
      const double se = std::sqrt(p * (1 - p) / n);
      EXPECT_NEAR(static_cast<double>(got[u]) / n, p, 4 * se + 1e-9);
    }
  }
}

TEST(ResampleLatents, MemoizedAndDirectPathsAgreeBitForBit) {
  auto g = load("data/compas/race_graph.txt");
  auto d = synthetic(g, 250, 8);
  auto cfg = small_config(20, 30);
  auto memo = run_chain(d, g, {parse_measure("SE(y=1)"), parse_measure("DE(y=1|a=1)")}, cfg);
  cfg.memoize_posteriors = false;
  auto direct =
      run_chain(d, g, {parse_measure("SE(y=1)"), parse_measure("DE(y=1|a=1)")}, cfg);
  ASSERT_EQ(memo.queries.size(), direct.queries.size());
  for (std::size_t k = 0; k < memo.queries.size(); ++k)
    EXPECT_TRUE(same_bits(memo.queries[k].values, direct.queries[k].values));
  EXPECT_TRUE(same_bits(memo.trace, direct.trace));
  EXPECT_EQ(memo.diagnostics.posterior_draws, direct.diagnostics.posterior_draws);
  EXPECT_LT(memo.diagnostics.posterior_builds, direct.diagnostics.posterior_builds);
}

TEST(RefitAndDraw, ExogenousPosteriorMeanMatchesConjugateUpdate) {
  auto g = parse_graph("node A\nlatent U -> A\n", std::make_shared<const VariableSchema>(
                                                      VariableSchema::uniform({"A"})));
  auto s = compile_structure(g.with_cardinalities({3}, false));
  ScmState scm(s, {{1.0 / 3, 1.0 / 3, 1.0 / 3}}, {{0, 1, 1}});
  // T=200, 60 ones. Units fixed at 0 for zeros, 1 for ones.
  std::vector<int> codes(200, 0);
  std::fill(codes.begin(), codes.begin() + 60, 1);
  Dataset d(g.schema_ptr(), codes);
  auto st = state_for(scm, d, 9);
  for (std::size_t t = 0; t < 200; ++t) st.units[t] = t < 60 ? 1 : 0;
  SamplerConfig cfg;
  cfg.alpha = 0.5;
  std::vector<double> mean(3, 0.0);
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    refit_and_draw(st, cfg);
    for (int k = 0; k < 3; ++k) mean[k] += st.scm->q(0)[k] / n;
  }
  const double total = 200 + 3 * cfg.alpha;
  EXPECT_NEAR(mean[0], (140 + 0.5) / total, 0.003);
  EXPECT_NEAR(mean[1], (60 + 0.5) / total, 0.003);
  EXPECT_NEAR(mean[2], 0.5 / total, 0.002);
}

TEST(RunChain, DeterministicPerSeedAndChain) {
  auto g = load("data/compas/race_graph.txt");
  auto d = synthetic(g, 200, 10);
  auto cfg = small_config(10, 20);
  std::vector<MeasureQuery> qs{parse_measure("SE(y=1)")};
  auto a = run_chain(d, g, qs, cfg, 3);
  auto b = run_chain(d, g, qs, cfg, 3);
  auto c = run_chain(d, g, qs, cfg, 4);
  EXPECT_TRUE(same_bits(a.queries[0].values, b.queries[0].values));
  EXPECT_TRUE(same_bits(a.trace, b.trace));
  EXPECT_FALSE(same_bits(a.queries[0].values, c.queries[0].values));
  EXPECT_EQ(a.queries[0].values.size(), 20u);
  EXPECT_EQ(a.trace.size(), 30u);
  EXPECT_EQ(a.trace_label, "RAW(Y[A:=0]=1 | A=0)");
}

TEST(RunChain, StructuralZerosAreExactlyZero) {
  auto g = load("data/compas/race_graph.txt");
  auto d = synthetic(g, 200, 11);
  auto out = run_chain(d, g, {parse_measure("DE(y=1|a=1)"), parse_measure("IE(y=1|a=0)")},
                       small_config(5, 40));
  for (const auto& q : out.queries) {
    EXPECT_TRUE(q.structural_zero);
    for (double v : q.values) EXPECT_EQ(v, 0.0);
  }
}

TEST(EvaluateOrNan, ZeroMassBecomesNanWithReason) {
  auto g = load("data/compas/race_graph.txt");
  auto structure = compile_structure(g.with_cardinalities({2, 2}, false));
  std::vector<std::vector<int>> f;
  for (std::size_t v = 0; v < structure->node_count(); ++v)
    f.emplace_back(structure->mechanism(v).table_size, 0);
  ScmState scm(structure, {{0.5, 0.5}, {0.5, 0.5}}, f);  // A is always 0
  std::string reason;
  const auto se = compile_measure(*structure, parse_measure("SE(y=1)"));
  EXPECT_TRUE(std::isnan(evaluate_or_nan(scm, se, &reason)));
  EXPECT_NE(reason.find("zero"), std::string::npos);
  const auto tv = compile_measure(*structure, parse_measure("TV(a0=0,a1=1,y=0)"));
  EXPECT_TRUE(std::isnan(evaluate_or_nan(scm, tv, nullptr)));
}

TEST(ConvergenceTrace, FlagsLargeGaps) {
  ChainOutput out;
  out.burn_in = 2;
  out.trace = {0.9, 0.9, 0.30, std::nan(""), 0.34};
  auto s = convergence_trace(out, 0.30);
  EXPECT_EQ(s.count, 2u);
  EXPECT_NEAR(s.mean, 0.32, 1e-15);
  EXPECT_NEAR(s.gap, 0.02, 1e-15);
  EXPECT_NEAR(s.max_deviation, 0.04, 1e-15);
  EXPECT_TRUE(s.converged);
  EXPECT_FALSE(convergence_trace(out, 0.20).converged);
  out.trace = {0.5, 0.5};
  EXPECT_FALSE(convergence_trace(out, 0.5).converged);
}

TEST(ConvergenceTrace, ChainTracksEmpiricalConditional) {
  auto g = load("data/compas/race_graph.txt");
  auto d = synthetic(g, 2000, 12);
  auto cfg = small_config(150, 150);
  auto out = run_chain(d, g, {parse_measure("SE(y=1)")}, cfg);
  const double target = empirical_trace_target(d, parse_measure("SE(y=1)"));
  EXPECT_TRUE(convergence_trace(out, target).converged)
      << convergence_trace(out, target).gap;
}

TEST(ChainDump, OneRowPerRetainedIteration) {
  auto g = load("data/compas/race_graph.txt");
  auto d = synthetic(g, 50, 13);
  auto out = run_chain(d, g, {parse_measure("SE(y=1)")}, small_config(3, 4));
  const auto csv = chain_dump_csv(out);
  const auto lines = text::split_lines(csv);
  EXPECT_EQ(lines[0], "iteration,\"SE(a0=0,a1=1,y=1)\",trace");
  EXPECT_EQ(lines[1].substr(0, 2), "4,");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

}  // namespace
}  // namespace cfbound

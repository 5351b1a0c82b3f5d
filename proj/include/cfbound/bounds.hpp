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

// Pooling of chain samples into bounds.
//
// Samples from every candidate graph are concatenated (each graph weighs the
// same because every chain retains N draws) and sorted. For n pooled samples
// and level delta, the interval endpoints are the 1-based order statistics
// max(1, floor(delta/2 * n)) and ceil((1 - delta/2) * n). The worst-case bound
// is the sample range.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cfbound/error.hpp"
#include "cfbound/sampler.hpp"

namespace cfbound {

struct GraphSamples {
  std::string id;
  std::size_t n_samples = 0;
  std::size_t skipped = 0;
};

struct BoundReport {
  std::string query;
  std::vector<GraphSamples> graphs;
  std::vector<double> samples;  // sorted
  double mean = 0.0;
  double delta = 0.05;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double worst_low = 0.0;
  double worst_high = 0.0;
  std::size_t skipped = 0;
  std::string skip_reason;
  std::optional<double> trace_gap;
};

// 1-based order statistics (lower, upper) for n samples.
inline std::pair<std::size_t, std::size_t> interval_ranks(std::size_t n, double delta) {
  if (n == 0) throw Error(ErrorCode::kEmptyInput, "no samples to aggregate");
  if (!(delta >= 0.0 && delta < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "delta must lie in [0, 1)");
  const double total = static_cast<double>(n);
  const double lo_pos = delta / 2.0 * total;
  const double hi_pos = (1.0 - delta / 2.0) * total;
  // Products like 0.975 * 6000 land a rounding error above the integer.
  const double eps = 1e-9 * std::max(1.0, total);
  auto lo = static_cast<std::size_t>(std::floor(lo_pos + eps));
  auto hi = static_cast<std::size_t>(std::ceil(hi_pos - eps));
  lo = std::max<std::size_t>(lo, 1);
  hi = std::clamp<std::size_t>(hi, lo, n);
  return {lo, hi};
}

// Sorts `values`, drops NaN entries, and fills the summary fields.
inline BoundReport summarize(std::string query, std::vector<double> values, double delta) {
  BoundReport r;
  r.query = std::move(query);
  r.delta = delta;
  const auto before = values.size();
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return std::isnan(v); }),
               values.end());
  r.skipped = before - values.size();
  if (values.empty())
    throw Error(ErrorCode::kEmptyInput, "every sample of '" + r.query + "' was skipped");
  std::sort(values.begin(), values.end());
  const auto [lo, hi] = interval_ranks(values.size(), delta);
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(values.size());
  r.ci_low = values[lo - 1];
  r.ci_high = values[hi - 1];
  r.worst_low = values.front();
  r.worst_high = values.back();
  r.samples = std::move(values);
  return r;
}

// Pools query `index` across chains.
inline BoundReport aggregate(const std::vector<ChainOutput>& chains, std::size_t index,
                             double delta) {
  if (chains.empty()) throw Error(ErrorCode::kEmptyInput, "no chains to aggregate");
  std::vector<double> pooled;
  std::vector<GraphSamples> graphs;
  std::string label, reason;
  for (const auto& c : chains) {
    if (index >= c.queries.size())
      throw Error(ErrorCode::kInvalidArgument, "chain lacks query " + std::to_string(index));
    const auto& q = c.queries[index];
    if (label.empty()) label = q.label;
    if (reason.empty()) reason = q.skip_reason;
    pooled.insert(pooled.end(), q.values.begin(), q.values.end());
    graphs.push_back({c.graph_id, q.values.size() - q.skipped, q.skipped});
  }
  auto r = summarize(label, std::move(pooled), delta);
  r.graphs = std::move(graphs);
  r.skip_reason = reason;
  return r;
}

// TV from per-sample SE + IE - DE, combined within each retained state.
inline BoundReport tv_bound(const std::vector<ChainOutput>& chains, std::size_t se,
                            std::size_t ie, std::size_t de, double delta,
                            std::string label = "TV") {
  if (chains.empty()) throw Error(ErrorCode::kEmptyInput, "no chains to aggregate");
  std::vector<double> pooled;
  std::vector<GraphSamples> graphs;
  for (const auto& c : chains) {
    const auto& s = c.queries.at(se).values;
    const auto& i = c.queries.at(ie).values;
    const auto& d = c.queries.at(de).values;
    if (s.size() != i.size() || s.size() != d.size())
      throw Error(ErrorCode::kSampleMismatch, "SE, IE and DE sample counts differ");
    GraphSamples g{c.graph_id, 0, 0};
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double v = s[k] + i[k] - d[k];
      pooled.push_back(v);
      if (std::isnan(v))
        ++g.skipped;
      else
        ++g.n_samples;
    }
    graphs.push_back(g);
  }
  auto r = summarize(std::move(label), std::move(pooled), delta);
  r.graphs = std::move(graphs);
  return r;
}

struct HistogramBin {
  double left;
  double right;
  std::size_t count;
};

inline constexpr std::size_t kDefaultHistogramBins = 50;

// Equal-width bins over the sample range; the last bin is closed.
inline std::vector<HistogramBin> histogram(const std::vector<double>& sorted,
                                           std::size_t bins = kDefaultHistogramBins) {
  if (sorted.empty() || bins == 0) return {};
  const double lo = sorted.front(), hi = sorted.back();
  if (!(hi > lo)) return {{lo, hi, sorted.size()}};
  std::vector<HistogramBin> out(bins);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b)
    out[b] = {lo + width * static_cast<double>(b),
              b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1), 0};
  for (double v : sorted) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    if (b >= bins) b = bins - 1;
    ++out[b].count;
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string histogram_csv(const std::vector<HistogramBin>& bins) {
  std::string csv = "bin_left,bin_right,count\n";
  for (const auto& b : bins)
    csv += format_double(b.left) + "," + format_double(b.right) + "," +
           std::to_string(b.count) + "\n";
  return csv;
}

inline nlohmann::ordered_json report_json(const BoundReport& r) {
  nlohmann::ordered_json j;
  j["query"] = r.query;
  j["graphs"] = nlohmann::ordered_json::array();
  for (const auto& g : r.graphs)
    j["graphs"].push_back({{"id", g.id}, {"n_samples", g.n_samples}, {"skipped", g.skipped}});
  j["n_samples"] = r.samples.size();
  j["mean"] = r.mean;
  j["delta"] = r.delta;
  j["ci"] = {r.ci_low, r.ci_high};
  j["worst"] = {r.worst_low, r.worst_high};
  j["skipped"] = r.skipped;
  if (!r.skip_reason.empty()) j["skip_reason"] = r.skip_reason;
  if (r.trace_gap)
    j["trace_gap"] = *r.trace_gap;
  else
    j["trace_gap"] = nullptr;
  return j;
}

}  // namespace cfbound

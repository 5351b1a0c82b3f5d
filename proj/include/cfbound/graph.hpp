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

// Causal diagrams with explicit latent variables.
//
// An Admg holds endogenous nodes (a subset of a VariableSchema), directed
// edges between them, and latent variables, each pointing at one or more
// endogenous children. Two endogenous nodes are bidirected-adjacent when some
// latent has both as children. Every node is guaranteed at least one latent
// parent: nodes without one receive an implicit dedicated latent.
//
// Graph file format (line oriented, `#` starts a comment):
//
//   node <name>
//   edge <parent> -> <child>
//   bidirected <a> <-> <b>          # sugar for a fresh two-child latent
//   latent <name> [k=<int>|k=auto] -> <child> <child> ...
//
// Knowledge file format:
//
//   forbid <parent> -> <child>
//   require <parent> -> <child>
//   tier <n1> <n2> ... : <m1> ... [: ...]   # earlier tiers precede later ones

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cfbound/error.hpp"
#include "cfbound/text.hpp"

namespace cfbound {

// Endogenous nodes are limited so that unit evaluation can use fixed-size
// stack buffers.
inline constexpr std::size_t kMaxNodes = 64;

inline constexpr std::uint64_t kDefaultMaxDomainProduct = std::uint64_t{1} << 24;

struct Variable {
  std::string name;
  std::vector<std::string> labels;

  int cardinality() const { return static_cast<int>(labels.size()); }
};

class VariableSchema {
 public:
  VariableSchema() = default;

  explicit VariableSchema(std::vector<Variable> variables)
      : variables_(std::move(variables)) {
    for (std::size_t i = 0; i < variables_.size(); ++i) {
      const auto& v = variables_[i];
      if (!text::is_identifier(v.name))
        throw Error(ErrorCode::kInvalidArgument,
                    "invalid variable name '" + v.name + "'");
      if (v.labels.size() < 2)
        throw Error(ErrorCode::kInvalidArgument,
                    "variable '" + v.name + "' needs at least two labels");
      std::set<std::string> seen(v.labels.begin(), v.labels.end());
      if (seen.size() != v.labels.size())
        throw Error(ErrorCode::kInvalidArgument,
                    "duplicate label in domain of '" + v.name + "'");
      if (!index_.emplace(v.name, i).second)
        throw Error(ErrorCode::kInvalidArgument,
                    "duplicate variable '" + v.name + "'");
    }
  }

  // Schema where every named variable takes labels "0".."cardinality-1".
  static VariableSchema uniform(const std::vector<std::string>& names,
                                int cardinality = 2) {
    std::vector<Variable> vars;
    for (const auto& n : names) {
      Variable v{n, {}};
      for (int c = 0; c < cardinality; ++c) v.labels.push_back(std::to_string(c));
      vars.push_back(std::move(v));
    }
    return VariableSchema(std::move(vars));
  }

  std::size_t size() const { return variables_.size(); }
  const Variable& at(std::size_t i) const { return variables_.at(i); }
  const std::vector<Variable>& variables() const { return variables_; }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(std::string_view name) const {
    auto idx = find(name);
    if (!idx)
      throw Error(ErrorCode::kUnknownVariable, "'" + std::string(name) + "'");
    return *idx;
  }

  // Code for a label; integer strings are accepted as raw codes.
  std::optional<int> code_of(std::size_t var, std::string_view label) const {
    const auto& labels = variables_.at(var).labels;
    for (std::size_t c = 0; c < labels.size(); ++c)
      if (labels[c] == label) return static_cast<int>(c);
    if (auto code = text::parse_int<int>(label);
        code && *code >= 0 && *code < static_cast<int>(labels.size()))
      return code;
    return std::nullopt;
  }

  friend bool operator==(const VariableSchema& a, const VariableSchema& b) {
    if (a.variables_.size() != b.variables_.size()) return false;
    for (std::size_t i = 0; i < a.variables_.size(); ++i)
      if (a.variables_[i].name != b.variables_[i].name ||
          a.variables_[i].labels != b.variables_[i].labels)
        return false;
    return true;
  }

 private:
  std::vector<Variable> variables_;
  std::map<std::string, std::size_t> index_;
};

using SchemaPtr = std::shared_ptr<const VariableSchema>;

// Schema file: one `var <name> <label0> <label1> ...` line per variable.
inline VariableSchema parse_schema(std::string_view text) {
  std::vector<Variable> vars;
  int line_no = 0;
  for (auto raw : text::split_lines(text)) {
    ++line_no;
    const auto line = text::trim(text::strip_comment(raw));
    if (line.empty()) continue;
    const auto tok = text::split_ws(line);
    if (tok[0] != "var" || tok.size() < 4)
      throw Error(ErrorCode::kSyntax,
                  "expected 'var <name> <label> <label> ...'", line_no);
    Variable v{std::string(tok[1]), {}};
    for (std::size_t i = 2; i < tok.size(); ++i) v.labels.emplace_back(tok[i]);
    vars.push_back(std::move(v));
  }
  return VariableSchema(std::move(vars));
}

struct LatentVar {
  std::string name;
  std::vector<std::size_t> children;  // node indices, sorted
  std::optional<std::uint64_t> cardinality;  // nullopt means "auto"
  bool implicit = false;  // added by canonicalization
};

class Admg {
 public:
  using Edge = std::pair<std::size_t, std::size_t>;  // (parent, child)

  Admg() = default;

  // `nodes` are schema indices; edges and latent children use positions in
  // `nodes`. Validates, then adds a dedicated latent to every node that has
  // no latent parent. With `enforce_bound` off, explicit cardinalities may sit
  // below the minimum; ground-truth models for simulation use this.
  Admg(SchemaPtr schema, std::vector<std::size_t> nodes,
       std::vector<Edge> edges, std::vector<LatentVar> latents,
       bool enforce_bound = true)
      : schema_(std::move(schema)),
        nodes_(std::move(nodes)),
        edges_(std::move(edges)),
        latents_(std::move(latents)) {
    if (!schema_) throw Error(ErrorCode::kInvalidArgument, "null schema");
    if (nodes_.empty())
      throw Error(ErrorCode::kInvalidArgument, "graph has no nodes");
    if (nodes_.size() > kMaxNodes)
      throw Error(ErrorCode::kInvalidArgument,
                  "graph exceeds " + std::to_string(kMaxNodes) + " nodes");
    std::set<std::size_t> seen_nodes;
    for (auto s : nodes_) {
      if (s >= schema_->size())
        throw Error(ErrorCode::kUnknownVariable, "schema index out of range");
      if (!seen_nodes.insert(s).second)
        throw Error(ErrorCode::kInvalidArgument,
                    "node '" + schema_->at(s).name + "' declared twice");
    }
    const std::size_t n = nodes_.size();
    parents_.assign(n, {});
    children_.assign(n, {});
    std::set<Edge> seen_edges;
    for (const auto& [p, c] : edges_) {
      if (p >= n || c >= n)
        throw Error(ErrorCode::kInvalidArgument, "edge endpoint out of range");
      if (p == c)
        throw Error(ErrorCode::kCycle, "self-loop on '" + node_name(p) + "'");
      if (!seen_edges.insert({p, c}).second)
        throw Error(ErrorCode::kDuplicateEdge,
                    node_name(p) + " -> " + node_name(c));
      parents_[c].push_back(p);
      children_[p].push_back(c);
    }
    for (auto& ps : parents_) std::sort(ps.begin(), ps.end());
    for (auto& cs : children_) std::sort(cs.begin(), cs.end());
    topo_ = compute_topological_order();

    std::set<std::string> latent_names;
    for (auto& u : latents_) {
      if (!text::is_identifier(u.name))
        throw Error(ErrorCode::kInvalidArgument,
                    "invalid latent name '" + u.name + "'");
      if (schema_->find(u.name))
        throw Error(ErrorCode::kInvalidArgument,
                    "latent '" + u.name + "' clashes with a variable name");
      if (!latent_names.insert(u.name).second)
        throw Error(ErrorCode::kInvalidArgument,
                    "latent '" + u.name + "' declared twice");
      if (u.children.empty())
        throw Error(ErrorCode::kInvalidArgument,
                    "latent '" + u.name + "' has no children");
      std::sort(u.children.begin(), u.children.end());
      if (std::adjacent_find(u.children.begin(), u.children.end()) !=
          u.children.end())
        throw Error(ErrorCode::kInvalidArgument,
                    "latent '" + u.name + "' lists a child twice");
      for (auto c : u.children)
        if (c >= n)
          throw Error(ErrorCode::kInvalidArgument, "latent child out of range");
      if (u.cardinality && *u.cardinality < 1)
        throw Error(ErrorCode::kCardinality,
                    "latent '" + u.name + "' has cardinality 0");
    }
    std::vector<bool> has_latent(n, false);
    for (const auto& u : latents_)
      for (auto c : u.children) has_latent[c] = true;
    for (std::size_t v = 0; v < n; ++v) {
      if (has_latent[v]) continue;
      std::string name = "U_" + node_name(v);
      while (latent_names.count(name) || schema_->find(name)) name += "_";
      latent_names.insert(name);
      latents_.push_back(LatentVar{name, {v}, std::nullopt, true});
    }
    latent_parents_.assign(n, {});
    for (std::size_t i = 0; i < latents_.size(); ++i)
      for (auto c : latents_[i].children) latent_parents_[c].push_back(i);

    for (std::size_t i = 0; enforce_bound && i < latents_.size(); ++i) {
      const auto& u = latents_[i];
      if (!u.cardinality) continue;
      const auto bound = cardinality_bound(i, UINT64_MAX);
      if (*u.cardinality < bound)
        throw Error(ErrorCode::kCardinality,
                    "latent '" + u.name + "' has k=" +
                        std::to_string(*u.cardinality) +
                        " below the minimum " + std::to_string(bound));
    }
  }

  const VariableSchema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t schema_index(std::size_t node) const { return nodes_.at(node); }
  const std::string& node_name(std::size_t node) const {
    return schema_->at(nodes_.at(node)).name;
  }
  int cardinality(std::size_t node) const {
    return schema_->at(nodes_.at(node)).cardinality();
  }

  std::optional<std::size_t> find_node(std::string_view name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (node_name(i) == name) return i;
    return std::nullopt;
  }

  std::size_t node_index(std::string_view name) const {
    auto idx = find_node(name);
    if (!idx)
      throw Error(ErrorCode::kUnknownVariable,
                  "'" + std::string(name) + "' is not a node of the graph");
    return *idx;
  }

  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::size_t>& parents(std::size_t v) const {
    return parents_.at(v);
  }
  const std::vector<std::size_t>& children(std::size_t v) const {
    return children_.at(v);
  }
  bool has_edge(std::size_t p, std::size_t c) const {
    const auto& ps = parents_.at(c);
    return std::binary_search(ps.begin(), ps.end(), p);
  }

  const std::vector<LatentVar>& latents() const { return latents_; }
  const std::vector<std::size_t>& latent_parents(std::size_t v) const {
    return latent_parents_.at(v);
  }
  std::optional<std::size_t> find_latent(std::string_view name) const {
    for (std::size_t i = 0; i < latents_.size(); ++i)
      if (latents_[i].name == name) return i;
    return std::nullopt;
  }

  const std::vector<std::size_t>& topological_order() const { return topo_; }

  // Strict descendants of v (v excluded).
  std::vector<bool> descendants(std::size_t v) const {
    return reach(v, children_);
  }
  // Strict ancestors of v (v excluded).
  std::vector<bool> ancestors(std::size_t v) const {
    return reach(v, parents_);
  }

  // Maximal sets of nodes connected through shared latents. Components are
  // sorted internally and ordered by their smallest node.
  std::vector<std::vector<std::size_t>> c_components() const {
    const std::size_t n = nodes_.size();
    std::vector<std::size_t> root(n);
    std::iota(root.begin(), root.end(), 0);
    auto find = [&](std::size_t x) {
      while (root[x] != x) x = root[x] = root[root[x]];
      return x;
    };
    for (const auto& u : latents_)
      for (std::size_t i = 1; i < u.children.size(); ++i) {
        auto a = find(u.children[0]), b = find(u.children[i]);
        if (a != b) root[std::max(a, b)] = std::min(a, b);
      }
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t v = 0; v < n; ++v) groups[find(v)].push_back(v);
    std::vector<std::vector<std::size_t>> out;
    for (auto& [r, members] : groups) out.push_back(std::move(members));
    return out;
  }

  // The c-component containing the children of latent i.
  std::vector<std::size_t> c_component_of(std::size_t latent) const {
    const auto child = latents_.at(latent).children.front();
    for (auto& comp : c_components())
      if (std::binary_search(comp.begin(), comp.end(), child)) return comp;
    return {};
  }

  // d_i = product of domain sizes over C(U_i) and the endogenous parents of
  // its members.
  std::uint64_t domain_product(std::size_t latent,
                               std::uint64_t max_product) const {
    std::vector<bool> in_pa(nodes_.size(), false);
    for (auto v : c_component_of(latent)) {
      in_pa[v] = true;
      for (auto p : parents_[v]) in_pa[p] = true;
    }
    std::uint64_t d = 1;
    for (std::size_t v = 0; v < nodes_.size(); ++v) {
      if (!in_pa[v]) continue;
      const auto c = static_cast<std::uint64_t>(cardinality(v));
      if (d > max_product / c)
        throw Error(ErrorCode::kOverflow,
                    "domain product for latent '" + latents_[latent].name +
                        "' exceeds " + std::to_string(max_product));
      d *= c;
    }
    return d;
  }

  // Minimum exogenous cardinality K_i = d_i + 1.
  std::uint64_t cardinality_bound(
      std::size_t latent,
      std::uint64_t max_product = kDefaultMaxDomainProduct) const {
    return domain_product(latent, max_product) + 1;
  }

  bool cardinalities_resolved() const {
    return std::all_of(latents_.begin(), latents_.end(),
                       [](const LatentVar& u) { return u.cardinality.has_value(); });
  }

  // Copy with every latent cardinality set; `k` holds the new values by
  // latent position and must respect the bound unless `enforce_bound` is off.
  Admg with_cardinalities(const std::vector<std::uint64_t>& k,
                          bool enforce_bound = true) const {
    if (k.size() != latents_.size())
      throw Error(ErrorCode::kInvalidArgument, "cardinality vector size mismatch");
    auto latents = latents_;
    for (std::size_t i = 0; i < latents.size(); ++i)
      latents[i].cardinality = k[i];
    return Admg(schema_, nodes_, edges_, std::move(latents), enforce_bound);
  }

  // Canonical text form; parse_graph(to_text()) reproduces the graph.
  std::string to_text() const {
    std::string out;
    for (std::size_t v = 0; v < nodes_.size(); ++v)
      out += "node " + node_name(v) + "\n";
    for (const auto& [p, c] : edges_)
      out += "edge " + node_name(p) + " -> " + node_name(c) + "\n";
    for (const auto& u : latents_) {
      out += "latent " + u.name + " k=" +
             (u.cardinality ? std::to_string(*u.cardinality) : "auto") + " ->";
      for (auto c : u.children) out += " " + node_name(c);
      out += "\n";
    }
    return out;
  }

 private:
  std::vector<std::size_t> compute_topological_order() const {
    const std::size_t n = nodes_.size();
    std::vector<std::size_t> indegree(n, 0);
    for (std::size_t v = 0; v < n; ++v) indegree[v] = parents_[v].size();
    std::set<std::size_t> ready;
    for (std::size_t v = 0; v < n; ++v)
      if (indegree[v] == 0) ready.insert(v);
    std::vector<std::size_t> order;
    while (!ready.empty()) {
      const auto v = *ready.begin();
      ready.erase(ready.begin());
      order.push_back(v);
      for (auto c : children_[v])
        if (--indegree[c] == 0) ready.insert(c);
    }
    if (order.size() != n) {
      std::string members;
      for (std::size_t v = 0; v < n; ++v)
        if (indegree[v] > 0) members += " " + node_name(v);
      throw Error(ErrorCode::kCycle, "directed cycle among" + members);
    }
    return order;
  }

  std::vector<bool> reach(std::size_t v,
                          const std::vector<std::vector<std::size_t>>& adj) const {
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<std::size_t> stack = adj.at(v);
    while (!stack.empty()) {
      const auto x = stack.back();
      stack.pop_back();
      if (seen[x]) continue;
      seen[x] = true;
      for (auto y : adj[x]) stack.push_back(y);
    }
    return seen;
  }

  SchemaPtr schema_;
  std::vector<std::size_t> nodes_;
  std::vector<Edge> edges_;
  std::vector<LatentVar> latents_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::vector<std::size_t>> latent_parents_;
  std::vector<std::size_t> topo_;
};

inline std::vector<std::vector<std::size_t>> c_components(const Admg& g) {
  return g.c_components();
}

inline std::uint64_t exogenous_cardinality(
    const Admg& g, std::size_t latent,
    std::uint64_t max_product = kDefaultMaxDomainProduct) {
  return g.cardinality_bound(latent, max_product);
}

namespace detail {

inline bool reaches(const std::vector<std::vector<std::size_t>>& children,
                    std::size_t from, std::size_t to) {
  std::vector<bool> seen(children.size(), false);
  std::vector<std::size_t> stack{from};
  while (!stack.empty()) {
    auto x = stack.back();
    stack.pop_back();
    if (x == to) return true;
    if (seen[x]) continue;
    seen[x] = true;
    for (auto c : children[x]) stack.push_back(c);
  }
  return false;
}

}  // namespace detail

// Parses a graph file. Nodes are declared by `node` lines or on first use.
// Latent cardinalities written as `k=auto` (or omitted) stay unresolved.
inline Admg parse_graph(std::string_view contents, SchemaPtr schema) {
  std::vector<std::size_t> nodes;
  std::map<std::string, std::size_t> position;
  std::vector<Admg::Edge> edges;
  std::set<Admg::Edge> edge_set;
  std::vector<std::vector<std::size_t>> children;
  std::vector<LatentVar> latents;
  std::set<std::string> latent_names;
  int bidirected_count = 0;

  int line_no = 0;
  auto node_ref = [&](std::string_view name) -> std::size_t {
    if (!text::is_identifier(name))
      throw Error(ErrorCode::kSyntax, "bad identifier '" + std::string(name) + "'",
                  line_no);
    auto it = position.find(std::string(name));
    if (it != position.end()) return it->second;
    auto idx = schema->find(name);
    if (!idx)
      throw Error(ErrorCode::kUnknownVariable,
                  "'" + std::string(name) + "' is not in the schema", line_no);
    nodes.push_back(*idx);
    children.emplace_back();
    position.emplace(std::string(name), nodes.size() - 1);
    return nodes.size() - 1;
  };

  for (auto raw : text::split_lines(contents)) {
    ++line_no;
    const auto line = text::trim(text::strip_comment(raw));
    if (line.empty()) continue;
    const auto tok = text::split_ws(line);
    const auto& kw = tok[0];
    if (kw == "node") {
      if (tok.size() != 2)
        throw Error(ErrorCode::kSyntax, "expected 'node <name>'", line_no);
      if (position.count(std::string(tok[1])))
        throw Error(ErrorCode::kSyntax,
                    "node '" + std::string(tok[1]) + "' declared twice", line_no);
      node_ref(tok[1]);
    } else if (kw == "edge") {
      if (tok.size() != 4 || tok[2] != "->")
        throw Error(ErrorCode::kSyntax, "expected 'edge <parent> -> <child>'",
                    line_no);
      const auto p = node_ref(tok[1]);
      const auto c = node_ref(tok[3]);
      if (p == c)
        throw Error(ErrorCode::kCycle, "self-loop on '" + std::string(tok[1]) + "'",
                    line_no);
      if (!edge_set.insert({p, c}).second)
        throw Error(ErrorCode::kDuplicateEdge,
                    std::string(tok[1]) + " -> " + std::string(tok[3]), line_no);
      if (detail::reaches(children, c, p))
        throw Error(ErrorCode::kCycle,
                    "edge " + std::string(tok[1]) + " -> " + std::string(tok[3]) +
                        " closes a directed cycle",
                    line_no);
      edges.emplace_back(p, c);
      children[p].push_back(c);
    } else if (kw == "bidirected") {
      if (tok.size() != 4 || tok[2] != "<->")
        throw Error(ErrorCode::kSyntax, "expected 'bidirected <a> <-> <b>'",
                    line_no);
      const auto a = node_ref(tok[1]);
      const auto b = node_ref(tok[3]);
      if (a == b)
        throw Error(ErrorCode::kSyntax, "bidirected edge needs two distinct nodes",
                    line_no);
      std::string name;
      do {
        name = "B" + std::to_string(++bidirected_count) + "_" +
               std::string(tok[1]) + "_" + std::string(tok[3]);
      } while (latent_names.count(name));
      latent_names.insert(name);
      latents.push_back(LatentVar{name, {a, b}, std::nullopt, false});
    } else if (kw == "latent") {
      // latent <name> [k=..] -> <children...>
      if (tok.size() < 4)
        throw Error(ErrorCode::kSyntax,
                    "expected 'latent <name> [k=<int>|k=auto] -> <child>...'",
                    line_no);
      LatentVar u{std::string(tok[1]), {}, std::nullopt, false};
      if (!text::is_identifier(u.name))
        throw Error(ErrorCode::kSyntax, "bad latent name '" + u.name + "'", line_no);
      if (!latent_names.insert(u.name).second)
        throw Error(ErrorCode::kSyntax, "latent '" + u.name + "' declared twice",
                    line_no);
      std::size_t i = 2;
      if (tok[i].substr(0, 2) == "k=") {
        const auto spec = tok[i].substr(2);
        if (spec != "auto") {
          auto k = text::parse_int<std::uint64_t>(spec);
          if (!k || *k == 0)
            throw Error(ErrorCode::kSyntax,
                        "bad cardinality '" + std::string(spec) + "'", line_no);
          u.cardinality = *k;
        }
        ++i;
      }
      if (i >= tok.size() || tok[i] != "->" || i + 1 >= tok.size())
        throw Error(ErrorCode::kSyntax, "expected '-> <child>...' after latent name",
                    line_no);
      for (++i; i < tok.size(); ++i) {
        const auto c = node_ref(tok[i]);
        if (std::find(u.children.begin(), u.children.end(), c) != u.children.end())
          throw Error(ErrorCode::kSyntax,
                      "child '" + std::string(tok[i]) + "' listed twice", line_no);
        u.children.push_back(c);
      }
      latents.push_back(std::move(u));
    } else {
      throw Error(ErrorCode::kSyntax, "unknown directive '" + std::string(kw) + "'",
                  line_no);
    }
  }
  if (nodes.empty()) throw Error(ErrorCode::kSyntax, "graph declares no nodes");
  return Admg(std::move(schema), std::move(nodes), std::move(edges),
              std::move(latents));
}

// Names of every variable mentioned in a graph file, in order of appearance.
// Used to build a default all-binary schema when none is supplied.
inline std::vector<std::string> graph_variable_names(std::string_view contents) {
  std::vector<std::string> names;
  auto add = [&](std::string_view s) {
    if (std::find(names.begin(), names.end(), s) == names.end())
      names.emplace_back(s);
  };
  for (auto raw : text::split_lines(contents)) {
    const auto tok = text::split_ws(text::trim(text::strip_comment(raw)));
    if (tok.empty()) continue;
    if (tok[0] == "node" && tok.size() >= 2) add(tok[1]);
    if ((tok[0] == "edge" || tok[0] == "bidirected") && tok.size() >= 4) {
      add(tok[1]);
      add(tok[3]);
    }
    if (tok[0] == "latent") {
      auto arrow = std::find(tok.begin(), tok.end(), "->");
      if (arrow != tok.end())
        for (auto it = arrow + 1; it != tok.end(); ++it) add(*it);
    }
  }
  return names;
}

struct CardinalityOverrides {
  std::optional<std::uint64_t> all;             // applied to every latent
  std::map<std::string, std::uint64_t> by_name;  // takes precedence over `all`
};

// Resolves every latent cardinality. Precedence: named override, global
// override, explicit value in the graph file, then the minimum bound.
inline Admg resolve_cardinalities(
    const Admg& g, const CardinalityOverrides& overrides = {},
    std::uint64_t max_product = kDefaultMaxDomainProduct) {
  for (const auto& [name, k] : overrides.by_name)
    if (!g.find_latent(name))
      throw Error(ErrorCode::kUnknownVariable, "no latent named '" + name + "'");
  std::vector<std::uint64_t> k(g.latents().size());
  for (std::size_t i = 0; i < k.size(); ++i) {
    const auto& u = g.latents()[i];
    const auto bound = g.cardinality_bound(i, max_product);
    if (auto it = overrides.by_name.find(u.name); it != overrides.by_name.end())
      k[i] = it->second;
    else if (overrides.all)
      k[i] = *overrides.all;
    else if (u.cardinality)
      k[i] = *u.cardinality;
    else
      k[i] = bound;
    if (k[i] < bound)
      throw Error(ErrorCode::kCardinality,
                  "latent '" + u.name + "' needs k >= " + std::to_string(bound) +
                      ", got " + std::to_string(k[i]));
  }
  return g.with_cardinalities(k);
}

struct KnowledgeConstraints {
  std::vector<std::pair<std::string, std::string>> forbidden;
  std::vector<std::pair<std::string, std::string>> required;
  std::vector<std::vector<std::string>> tiers;

  bool empty() const {
    return forbidden.empty() && required.empty() && tiers.empty();
  }
};

inline KnowledgeConstraints parse_knowledge(std::string_view contents) {
  KnowledgeConstraints k;
  std::set<std::string> tiered;
  int line_no = 0;
  for (auto raw : text::split_lines(contents)) {
    ++line_no;
    const auto line = text::trim(text::strip_comment(raw));
    if (line.empty()) continue;
    const auto tok = text::split_ws(line);
    if (tok[0] == "forbid" || tok[0] == "require") {
      if (tok.size() != 4 || tok[2] != "->")
        throw Error(ErrorCode::kSyntax,
                    "expected '" + std::string(tok[0]) + " <parent> -> <child>'",
                    line_no);
      auto& list = tok[0] == "forbid" ? k.forbidden : k.required;
      list.emplace_back(std::string(tok[1]), std::string(tok[3]));
    } else if (tok[0] == "tier") {
      std::vector<std::string> current;
      auto flush = [&] {
        if (current.empty())
          throw Error(ErrorCode::kSyntax, "empty tier", line_no);
        k.tiers.push_back(std::move(current));
        current.clear();
      };
      for (std::size_t i = 1; i < tok.size(); ++i) {
        if (tok[i] == ":") {
          flush();
          continue;
        }
        if (!tiered.insert(std::string(tok[i])).second)
          throw Error(ErrorCode::kInvalidArgument,
                      "'" + std::string(tok[i]) + "' appears in two tiers",
                      line_no);
        current.emplace_back(tok[i]);
      }
      flush();
    } else {
      throw Error(ErrorCode::kSyntax, "unknown directive '" + std::string(tok[0]) + "'",
                  line_no);
    }
  }
  for (const auto& f : k.forbidden)
    if (std::find(k.required.begin(), k.required.end(), f) != k.required.end())
      throw Error(ErrorCode::kInvalidArgument,
                  "edge " + f.first + " -> " + f.second +
                      " is both required and forbidden");
  return k;
}

// Human-readable reasons why `g` violates `k`; empty when it complies.
inline std::vector<std::string> knowledge_violations(const Admg& g,
                                                     const KnowledgeConstraints& k) {
  std::vector<std::string> out;
  auto edge_present = [&](const std::string& p, const std::string& c) {
    auto pi = g.find_node(p), ci = g.find_node(c);
    return pi && ci && g.has_edge(*pi, *ci);
  };
  for (const auto& [p, c] : k.forbidden)
    if (edge_present(p, c)) out.push_back("forbidden edge " + p + " -> " + c);
  for (const auto& [p, c] : k.required)
    if (!edge_present(p, c)) out.push_back("missing required edge " + p + " -> " + c);
  if (!k.tiers.empty()) {
    std::map<std::string, std::size_t> tier_of;
    for (std::size_t t = 0; t < k.tiers.size(); ++t)
      for (const auto& name : k.tiers[t]) tier_of[name] = t;
    for (const auto& [p, c] : g.edges()) {
      auto tp = tier_of.find(g.node_name(p));
      auto tc = tier_of.find(g.node_name(c));
      if (tp != tier_of.end() && tc != tier_of.end() && tp->second > tc->second)
        out.push_back("edge " + g.node_name(p) + " -> " + g.node_name(c) +
                      " points to an earlier tier");
    }
  }
  return out;
}

struct CandidateGraph {
  std::string id;
  Admg graph;
};

using EquivalenceClass = std::vector<CandidateGraph>;

// Keeps the candidates that violate no constraint, preserving order.
inline EquivalenceClass filter_equivalence_class(const EquivalenceClass& graphs,
                                                 const KnowledgeConstraints& k) {
  if (graphs.empty())
    throw Error(ErrorCode::kEmptyClass, "no candidate diagrams supplied");
  for (const auto& c : graphs)
    if (!(c.graph.schema() == graphs.front().graph.schema()))
      throw Error(ErrorCode::kInvalidArgument,
                  "candidate '" + c.id + "' uses a different schema");
  EquivalenceClass kept;
  for (const auto& c : graphs)
    if (knowledge_violations(c.graph, k).empty()) kept.push_back(c);
  if (kept.empty())
    throw Error(ErrorCode::kEmptyClass,
                "no candidate diagram survives constraints");
  return kept;
}

}  // namespace cfbound

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

// Categorical datasets and their empirical distributions.
//
// Recode file format, one rule per line:
//
//   <source column> [-> <target variable>]: <rule>, <rule>, ...
//
// where each rule is one of
//   label=code            exact label match (several labels: a|b|c=code)
//   *=code                fallback for anything unmatched
//   <=c -> code, <c -> code, >c -> code, >=c -> code   numeric thresholds
//
// The target's domain is {0, ..., max code}; every code in it must be the
// target of at least one rule.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cfbound/error.hpp"
#include "cfbound/graph.hpp"
#include "cfbound/text.hpp"

namespace cfbound {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Comma-separated values with optional double-quoted fields ("" escapes a
// quote). The first record is the header.
inline CsvTable parse_csv(std::string_view contents) {
  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) {
      if (table.header.empty())
        table.header = std::move(record);
      else
        table.rows.push_back(std::move(record));
    }
    record.clear();
  };
  for (std::size_t i = 0; i < contents.size(); ++i) {
    const char c = contents[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < contents.size() && contents[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
    } else if (c == '\r') {
      // tolerated before \n
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw Error(ErrorCode::kSyntax, "unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();
  if (table.header.empty()) throw Error(ErrorCode::kEmptyInput, "CSV has no header");
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    if (table.rows[r].size() != table.header.size())
      throw Error(ErrorCode::kSyntax,
                  "row " + std::to_string(r + 1) + " has " +
                      std::to_string(table.rows[r].size()) + " fields, header has " +
                      std::to_string(table.header.size()));
  return table;
}

struct RecodeRule {
  enum class Kind { kLabels, kWildcard, kLessEqual, kLess, kGreater, kGreaterEqual };
  Kind kind = Kind::kLabels;
  std::vector<std::string> labels;
  double threshold = 0.0;
  int code = 0;

  bool matches(std::string_view value) const {
    switch (kind) {
      case Kind::kLabels:
        return std::find(labels.begin(), labels.end(), value) != labels.end();
      case Kind::kWildcard:
        return true;
      default:
        break;
    }
    auto x = text::parse_double(value);
    if (!x) return false;
    switch (kind) {
      case Kind::kLessEqual: return *x <= threshold;
      case Kind::kLess: return *x < threshold;
      case Kind::kGreater: return *x > threshold;
      case Kind::kGreaterEqual: return *x >= threshold;
      default: return false;
    }
  }
};

struct ColumnRecode {
  std::string source;
  std::string target;
  std::vector<RecodeRule> rules;  // wildcard rules are tried last

  int cardinality() const {
    int max_code = 0;
    for (const auto& r : rules) max_code = std::max(max_code, r.code);
    return max_code + 1;
  }

  std::optional<int> map(std::string_view value) const {
    for (const auto& r : rules)
      if (r.kind != RecodeRule::Kind::kWildcard && r.matches(value)) return r.code;
    for (const auto& r : rules)
      if (r.kind == RecodeRule::Kind::kWildcard) return r.code;
    return std::nullopt;
  }
};

struct RecodeSpec {
  std::vector<ColumnRecode> columns;

  const ColumnRecode* for_target(std::string_view target) const {
    for (const auto& c : columns)
      if (c.target == target) return &c;
    return nullptr;
  }

  // Schema with one variable per target, labels "0".."k-1", in file order.
  VariableSchema schema() const {
    std::vector<Variable> vars;
    for (const auto& c : columns) {
      Variable v{c.target, {}};
      for (int k = 0; k < c.cardinality(); ++k) v.labels.push_back(std::to_string(k));
      vars.push_back(std::move(v));
    }
    return VariableSchema(std::move(vars));
  }
};

namespace detail {

inline RecodeRule parse_recode_rule(std::string_view s, int line_no) {
  s = text::trim(s);
  RecodeRule r;
  auto parse_code = [&](std::string_view c) {
    auto code = text::parse_int<int>(c);
    if (!code || *code < 0)
      throw Error(ErrorCode::kSyntax, "bad target code '" + std::string(c) + "'",
                  line_no);
    return *code;
  };
  if (!s.empty() && (s[0] == '<' || s[0] == '>')) {
    const auto arrow = s.find("->");
    if (arrow == std::string_view::npos)
      throw Error(ErrorCode::kSyntax, "threshold rule needs '-> <code>'", line_no);
    auto lhs = text::trim(s.substr(0, arrow));
    r.code = parse_code(s.substr(arrow + 2));
    if (lhs.substr(0, 2) == "<=") {
      r.kind = RecodeRule::Kind::kLessEqual;
      lhs.remove_prefix(2);
    } else if (lhs.substr(0, 2) == ">=") {
      r.kind = RecodeRule::Kind::kGreaterEqual;
      lhs.remove_prefix(2);
    } else if (lhs[0] == '<') {
      r.kind = RecodeRule::Kind::kLess;
      lhs.remove_prefix(1);
    } else {
      r.kind = RecodeRule::Kind::kGreater;
      lhs.remove_prefix(1);
    }
    auto t = text::parse_double(lhs);
    if (!t)
      throw Error(ErrorCode::kSyntax, "bad threshold '" + std::string(lhs) + "'",
                  line_no);
    r.threshold = *t;
    return r;
  }
  const auto eq = s.rfind('=');
  if (eq == std::string_view::npos)
    throw Error(ErrorCode::kSyntax, "expected 'label=code' in '" + std::string(s) + "'",
                line_no);
  const auto lhs = text::trim(s.substr(0, eq));
  r.code = parse_code(s.substr(eq + 1));
  if (lhs == "*") {
    r.kind = RecodeRule::Kind::kWildcard;
  } else {
    for (auto label : text::split(lhs, '|')) {
      label = text::trim(label);
      if (label.empty())
        throw Error(ErrorCode::kSyntax, "empty label in rule", line_no);
      r.labels.emplace_back(label);
    }
  }
  return r;
}

}  // namespace detail

inline RecodeSpec parse_recode(std::string_view contents) {
  RecodeSpec spec;
  std::set<std::string> targets;
  int line_no = 0;
  for (auto raw : text::split_lines(contents)) {
    ++line_no;
    const auto line = text::trim(text::strip_comment(raw));
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos)
      throw Error(ErrorCode::kSyntax, "expected '<column> [-> <target>]: <rules>'",
                  line_no);
    ColumnRecode col;
    const auto head = text::trim(line.substr(0, colon));
    if (const auto arrow = head.find("->"); arrow != std::string_view::npos) {
      col.source = std::string(text::trim(head.substr(0, arrow)));
      col.target = std::string(text::trim(head.substr(arrow + 2)));
    } else {
      col.source = col.target = std::string(head);
    }
    if (col.source.empty() || !text::is_identifier(col.target))
      throw Error(ErrorCode::kSyntax, "bad column or target name", line_no);
    if (!targets.insert(col.target).second)
      throw Error(ErrorCode::kSyntax, "target '" + col.target + "' defined twice",
                  line_no);
    for (auto part : text::split(line.substr(colon + 1), ','))
      col.rules.push_back(detail::parse_recode_rule(part, line_no));
    std::set<int> codes;
    for (const auto& r : col.rules) codes.insert(r.code);
    const int k = col.cardinality();
    if (k < 2 || static_cast<int>(codes.size()) != k)
      throw Error(ErrorCode::kSyntax,
                  "codes for '" + col.target + "' must cover 0.." +
                      std::to_string(k - 1) + " and at least two values",
                  line_no);
    spec.columns.push_back(std::move(col));
  }
  return spec;
}

// T records over every schema variable, stored row-major.
class Dataset {
 public:
  Dataset(SchemaPtr schema, std::vector<int> codes)
      : schema_(std::move(schema)), codes_(std::move(codes)) {
    const auto n = schema_->size();
    if (n == 0 || codes_.empty() || codes_.size() % n != 0)
      throw Error(ErrorCode::kEmptyInput, "dataset needs at least one full record");
    for (std::size_t i = 0; i < codes_.size(); ++i) {
      const int k = schema_->at(i % n).cardinality();
      if (codes_[i] < 0 || codes_[i] >= k)
        throw Error(ErrorCode::kInvalidArgument,
                    "code out of range for '" + schema_->at(i % n).name + "'");
    }
  }

  const VariableSchema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }
  std::size_t size() const { return codes_.size() / schema_->size(); }
  std::size_t width() const { return schema_->size(); }

  std::span<const int> record(std::size_t t) const {
    return std::span<const int>(codes_).subspan(t * width(), width());
  }
  int at(std::size_t t, std::size_t var) const { return codes_[t * width() + var]; }
  const std::vector<int>& codes() const { return codes_; }

 private:
  SchemaPtr schema_;
  std::vector<int> codes_;
};

// Loads a CSV, mapping columns onto schema variables. A variable with a recode
// rule takes its value from the rule's source column; otherwise a column of
// the same name must hold its labels (or integer codes). Rows that cannot be
// mapped abort the load.
inline Dataset load_csv(std::string_view contents, const RecodeSpec& recode,
                        SchemaPtr schema) {
  if (text::trim(contents).empty()) throw Error(ErrorCode::kEmptyInput, "empty CSV");
  const auto table = parse_csv(contents);
  if (table.rows.empty()) throw Error(ErrorCode::kEmptyInput, "CSV has no records");
  auto column_of = [&](const std::string& name) {
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (text::trim(table.header[c]) == name) return c;
    throw Error(ErrorCode::kMissingColumn, "no column '" + name + "'");
  };
  const std::size_t n = schema->size();
  std::vector<std::size_t> source(n);
  std::vector<const ColumnRecode*> rules(n, nullptr);
  for (std::size_t v = 0; v < n; ++v) {
    const auto& var = schema->at(v);
    rules[v] = recode.for_target(var.name);
    if (rules[v] && rules[v]->cardinality() != var.cardinality())
      throw Error(ErrorCode::kInvalidArgument,
                  "recode for '" + var.name + "' produces " +
                      std::to_string(rules[v]->cardinality()) + " codes, schema has " +
                      std::to_string(var.cardinality()));
    source[v] = column_of(rules[v] ? rules[v]->source : var.name);
  }
  std::vector<int> codes;
  codes.reserve(table.rows.size() * n);
  std::vector<std::size_t> bad_rows;
  std::string first_problem;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    bool row_ok = true;
    for (std::size_t v = 0; v < n; ++v) {
      const auto value = text::trim(table.rows[r][source[v]]);
      const auto code = rules[v] ? rules[v]->map(value) : schema->code_of(v, value);
      if (!code) {
        if (row_ok && first_problem.empty())
          first_problem = "'" + std::string(value) + "' for " + schema->at(v).name;
        row_ok = false;
        codes.push_back(0);
      } else {
        codes.push_back(*code);
      }
    }
    if (!row_ok) bad_rows.push_back(r + 2);  // file line: header is line 1
  }
  if (!bad_rows.empty()) {
    std::string list;
    for (std::size_t i = 0; i < bad_rows.size() && i < 20; ++i)
      list += (i ? "," : "") + std::to_string(bad_rows[i]);
    if (bad_rows.size() > 20) list += ",...";
    throw Error(ErrorCode::kUnmappableValue,
                std::to_string(bad_rows.size()) + " row(s) unmappable (first: " +
                    first_problem + "); lines " + list);
  }
  return Dataset(std::move(schema), std::move(codes));
}

// Writes codes as a CSV with schema labels; load_csv(write_csv(d), {}, schema)
// reproduces `d`.
inline std::string write_csv(const Dataset& d) {
  std::string out;
  const auto& s = d.schema();
  for (std::size_t v = 0; v < s.size(); ++v) out += (v ? "," : "") + s.at(v).name;
  out += "\n";
  for (std::size_t t = 0; t < d.size(); ++t) {
    for (std::size_t v = 0; v < s.size(); ++v)
      out += (v ? "," : "") + s.at(v).labels[d.at(t, v)];
    out += "\n";
  }
  return out;
}

using Configuration = std::vector<int>;

struct EmpiricalDistribution {
  std::map<Configuration, double> frequency;
  std::size_t records = 0;

  // P(target = value | given), by counting. Throws on a zero-mass condition.
  double conditional(std::size_t target, int value,
                     const std::vector<std::pair<std::size_t, int>>& given) const {
    double num = 0.0, den = 0.0;
    for (const auto& [config, p] : frequency) {
      bool ok = true;
      for (const auto& [v, c] : given) ok = ok && config[v] == c;
      if (!ok) continue;
      den += p;
      if (config[target] == value) num += p;
    }
    if (den <= 0.0)
      throw Error(ErrorCode::kZeroMass, "conditioning event has no records");
    return num / den;
  }
};

// Distinct records with multiplicities, in lexicographic order.
inline std::vector<std::pair<Configuration, std::size_t>> distinct_configurations(
    const Dataset& d) {
  std::map<Configuration, std::size_t> counts;
  for (std::size_t t = 0; t < d.size(); ++t) {
    const auto rec = d.record(t);
    ++counts[Configuration(rec.begin(), rec.end())];
  }
  return {counts.begin(), counts.end()};
}

inline EmpiricalDistribution empirical_distribution(const Dataset& d) {
  EmpiricalDistribution e;
  e.records = d.size();
  const double total = static_cast<double>(d.size());
  for (auto& [config, count] : distinct_configurations(d))
    e.frequency.emplace(config, static_cast<double>(count) / total);
  return e;
}

}  // namespace cfbound

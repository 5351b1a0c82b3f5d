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

// Counterfactual fairness measures.
//
// With protected attribute A, outcome Y and mediators W (descendants of A
// that are ancestors of Y):
//
//   CE_{a0,a1}(y|ctx) = P(y_{a1} | ctx) - P(y_{a0} | ctx)
//   DE_{a0,a1}(y|a)   = P(y_{a1, W_{a0}} | a) - P(y_{a0} | a)
//   IE_{a0,a1}(y|a)   = P(y_{a0, W_{a1}} | a) - P(y_{a0} | a)
//   SE_{a0,a1}(y)     = P(y_{a0} | a1) - P(y_{a0} | a0)
//   TV_{a0,a1}(y)     = P(y | a1) - P(y | a0)
//   PSE(y)            = P(y under per-mechanism A inputs) - P(y_{a0})
//
// The conditioning on DE/IE/PSE is optional. Queries are written as strings:
//
//   DE(a0=0,a1=1,y=1|a=1)   SE(a0=0,a1=1,y=1)   TV(a0=0,a1=1,y=1)
//   CE(a0=0,a1=1,y=1|a=0,W1=0,W2=1)   PSE(y=1; f_Y<-0, f_W2<-1)
//   RAW(Y[A:=1,W:=W[A:=0]]=1 | A=0)
//
// In contexts, `a` stands for the protected attribute.

#pragma once

#include <algorithm>
#include <cctype>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "cfbound/error.hpp"
#include "cfbound/scm.hpp"
#include "cfbound/text.hpp"

namespace cfbound {

enum class MeasureKind { kCE, kDE, kIE, kSE, kTV, kPSE, kRaw };

inline const char* measure_kind_name(MeasureKind k) {
  switch (k) {
    case MeasureKind::kCE: return "CE";
    case MeasureKind::kDE: return "DE";
    case MeasureKind::kIE: return "IE";
    case MeasureKind::kSE: return "SE";
    case MeasureKind::kTV: return "TV";
    case MeasureKind::kPSE: return "PSE";
    case MeasureKind::kRaw: return "RAW";
  }
  return "?";
}

// Graph-independent forms of counterfactual terms, referring to variables by
// name. They are resolved against each candidate graph.
struct NamedOutcome;
using NamedOutcomePtr = std::shared_ptr<const NamedOutcome>;

struct NamedAssignment {
  std::string variable;
  std::variant<int, NamedOutcomePtr> value;
};

struct NamedOutcome {
  std::string variable;
  std::vector<NamedAssignment> subscript;
};

using NamedEvent = std::vector<std::pair<std::string, int>>;

struct RawQuery {
  NamedOutcome outcome;
  int value = 0;
  NamedEvent given;
};

struct MeasureQuery {
  MeasureKind kind = MeasureKind::kTV;
  std::string treatment = "A";
  std::string outcome = "Y";
  int a0 = 0;
  int a1 = 1;
  int y = 1;
  NamedEvent context;
  std::vector<std::pair<std::string, int>> pse_inputs;  // child -> A value
  std::optional<RawQuery> raw;

  std::string label() const;
};

namespace detail {

inline std::string outcome_text(const NamedOutcome& o) {
  std::string s = o.variable;
  if (o.subscript.empty()) return s;
  s += "[";
  for (std::size_t i = 0; i < o.subscript.size(); ++i) {
    const auto& a = o.subscript[i];
    s += (i ? "," : "") + a.variable + ":=";
    if (const int* c = std::get_if<int>(&a.value))
      s += std::to_string(*c);
    else
      s += outcome_text(*std::get<NamedOutcomePtr>(a.value));
  }
  return s + "]";
}

inline std::string event_text(const NamedEvent& e, const std::string& treatment) {
  std::string s;
  for (std::size_t i = 0; i < e.size(); ++i)
    s += (i ? "," : "") + (e[i].first == treatment ? std::string("a") : e[i].first) +
         "=" + std::to_string(e[i].second);
  return s;
}

}  // namespace detail

inline std::string MeasureQuery::label() const {
  if (kind == MeasureKind::kRaw && raw) {
    std::string s = "RAW(" + detail::outcome_text(raw->outcome) + "=" +
                    std::to_string(raw->value);
    if (!raw->given.empty()) {
      s += " | ";
      for (std::size_t i = 0; i < raw->given.size(); ++i)
        s += (i ? "," : "") + raw->given[i].first + "=" +
             std::to_string(raw->given[i].second);
    }
    return s + ")";
  }
  std::string s = std::string(measure_kind_name(kind)) + "(";
  s += "a0=" + std::to_string(a0) + ",a1=" + std::to_string(a1) + ",y=" +
       std::to_string(y);
  if (kind == MeasureKind::kPSE) {
    s += ";";
    for (std::size_t i = 0; i < pse_inputs.size(); ++i)
      s += (i ? ", f_" : " f_") + pse_inputs[i].first + "<-" +
           std::to_string(pse_inputs[i].second);
  }
  if (!context.empty()) s += "|" + detail::event_text(context, treatment);
  return s + ")";
}

namespace detail {

class QueryLexer {
 public:
  explicit QueryLexer(std::string_view s) : s_(s) {}

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool done() {
    skip_ws();
    return pos_ >= s_.size();
  }
  bool accept(std::string_view tok) {
    skip_ws();
    if (s_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }
  void expect(std::string_view tok) {
    if (!accept(tok)) fail("expected '" + std::string(tok) + "'");
  }
  std::string identifier() {
    skip_ws();
    const auto start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    if (pos_ == start || std::isdigit(static_cast<unsigned char>(s_[start])))
      fail("expected a name");
    return std::string(s_.substr(start, pos_ - start));
  }
  bool at_digit() {
    skip_ws();
    return pos_ < s_.size() &&
           (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '-');
  }
  int integer() {
    skip_ws();
    const auto start = pos_;
    if (pos_ < s_.size() && s_[pos_] == '-') ++pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    auto v = text::parse_int<int>(s_.substr(start, pos_ - start));
    if (!v) fail("expected an integer");
    return *v;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::kSyntax, "in query '" + std::string(s_) + "' at offset " +
                                        std::to_string(pos_) + ": " + what);
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

inline NamedOutcome parse_named_outcome(QueryLexer& lex) {
  NamedOutcome o;
  o.variable = lex.identifier();
  if (!lex.accept("[")) return o;
  do {
    NamedAssignment a;
    a.variable = lex.identifier();
    lex.expect(":=");
    if (lex.at_digit())
      a.value = lex.integer();
    else
      a.value = std::make_shared<const NamedOutcome>(parse_named_outcome(lex));
    o.subscript.push_back(std::move(a));
  } while (lex.accept(","));
  lex.expect("]");
  return o;
}

inline NamedEvent parse_literals(QueryLexer& lex, const std::string& treatment,
                                 bool alias_a) {
  NamedEvent e;
  do {
    auto name = lex.identifier();
    if (alias_a && name == "a") name = treatment;
    lex.expect("=");
    e.emplace_back(std::move(name), lex.integer());
  } while (lex.accept(","));
  return e;
}

}  // namespace detail

inline MeasureQuery parse_measure(std::string_view text_in,
                                  const std::string& treatment = "A",
                                  const std::string& outcome = "Y") {
  detail::QueryLexer lex(text_in);
  MeasureQuery q;
  q.treatment = treatment;
  q.outcome = outcome;
  const auto kind = lex.identifier();
  if (kind == "CE") q.kind = MeasureKind::kCE;
  else if (kind == "DE") q.kind = MeasureKind::kDE;
  else if (kind == "IE") q.kind = MeasureKind::kIE;
  else if (kind == "SE") q.kind = MeasureKind::kSE;
  else if (kind == "TV") q.kind = MeasureKind::kTV;
  else if (kind == "PSE") q.kind = MeasureKind::kPSE;
  else if (kind == "RAW") q.kind = MeasureKind::kRaw;
  else lex.fail("unknown measure '" + kind + "'");
  lex.expect("(");

  if (q.kind == MeasureKind::kRaw) {
    RawQuery raw;
    raw.outcome = detail::parse_named_outcome(lex);
    lex.expect("=");
    raw.value = lex.integer();
    if (lex.accept("|")) raw.given = detail::parse_literals(lex, treatment, false);
    lex.expect(")");
    if (!lex.done()) lex.fail("trailing characters");
    q.raw = std::move(raw);
    return q;
  }

  bool seen_y = false;
  if (!lex.accept(";") && !lex.accept("|") && !lex.accept(")")) {
    // parameter list
    do {
      const auto key = lex.identifier();
      lex.expect("=");
      const int value = lex.integer();
      if (key == "a0") q.a0 = value;
      else if (key == "a1") q.a1 = value;
      else if (key == "y") { q.y = value; seen_y = true; }
      else lex.fail("unknown parameter '" + key + "'");
    } while (lex.accept(","));
  } else {
    lex.fail("expected parameters");
  }
  if (!seen_y) lex.fail("missing y=<value>");
  if (q.kind == MeasureKind::kPSE) {
    lex.expect(";");
    do {
      const auto name = lex.identifier();
      if (name.rfind("f_", 0) != 0 || name.size() <= 2)
        lex.fail("expected f_<child><-<value>");
      lex.expect("<-");
      q.pse_inputs.emplace_back(name.substr(2), lex.integer());
    } while (lex.accept(","));
  }
  if (lex.accept("|")) q.context = detail::parse_literals(lex, treatment, true);
  lex.expect(")");
  if (!lex.done()) lex.fail("trailing characters");
  if (q.a0 == q.a1) throw Error(ErrorCode::kInvalidArgument, "a0 and a1 must differ");
  return q;
}

// A measure resolved against one graph: P(plus | plus_given) minus
// P(minus | minus_given), or a single probability for RAW queries.
struct CompiledMeasure {
  MeasureKind kind = MeasureKind::kTV;
  bool structural_zero = false;
  bool has_minus = true;
  CounterfactualTerm plus;
  Event plus_given;
  CounterfactualTerm minus;
  Event minus_given;
};

// Mediators: descendants of A that are ancestors of Y.
inline std::vector<std::size_t> mediators(const Admg& g, std::size_t a, std::size_t y) {
  const auto desc = g.descendants(a);
  const auto anc = g.ancestors(y);
  std::vector<std::size_t> w;
  for (std::size_t v = 0; v < g.node_count(); ++v)
    if (v != a && v != y && desc[v] && anc[v]) w.push_back(v);
  return w;
}

namespace detail {

inline Event resolve_event(const Admg& g, const NamedEvent& e) {
  Event out;
  for (const auto& [name, value] : e) out.literals.push_back({g.node_index(name), value});
  return out;
}

inline PotentialOutcome resolve_outcome(const Admg& g, const NamedOutcome& o) {
  PotentialOutcome po{g.node_index(o.variable), {}, {}};
  for (const auto& a : o.subscript) {
    Assignment out{g.node_index(a.variable), 0};
    if (const int* c = std::get_if<int>(&a.value))
      out.value = *c;
    else
      out.value = std::make_shared<const PotentialOutcome>(
          resolve_outcome(g, *std::get<NamedOutcomePtr>(a.value)));
    po.subscript.push_back(std::move(out));
  }
  return po;
}

inline OutcomePtr under(std::size_t variable, std::size_t a, int value) {
  return std::make_shared<const PotentialOutcome>(
      PotentialOutcome{variable, {Assignment{a, value}}, {}});
}

}  // namespace detail

inline CompiledMeasure compile_measure(const Structure& s, const MeasureQuery& q) {
  const auto& g = s.graph();
  CompiledMeasure m;
  m.kind = q.kind;
  if (q.kind == MeasureKind::kRaw) {
    if (!q.raw) throw Error(ErrorCode::kInvalidArgument, "RAW query without a term");
    m.has_minus = false;
    m.plus = {detail::resolve_outcome(g, q.raw->outcome), q.raw->value};
    m.plus_given = detail::resolve_event(g, q.raw->given);
    validate(s, m.plus);
    validate(s, m.plus_given);
    return m;
  }
  const auto a = g.node_index(q.treatment);
  const auto y = g.node_index(q.outcome);
  if (a == y)
    throw Error(ErrorCode::kInvalidArgument, "treatment and outcome must differ");
  for (int v : {q.a0, q.a1})
    if (v < 0 || v >= s.cardinality(a))
      throw Error(ErrorCode::kInvalidArgument, "treatment value out of domain");
  if (q.a0 == q.a1) throw Error(ErrorCode::kInvalidArgument, "a0 and a1 must differ");
  if (q.y < 0 || q.y >= s.cardinality(y))
    throw Error(ErrorCode::kInvalidArgument, "outcome value out of domain");

  const Event context = detail::resolve_event(g, q.context);
  validate(s, context);
  auto only_treatment = [&] {
    for (const auto& l : context.literals)
      if (l.variable != a)
        throw Error(ErrorCode::kInvalidArgument,
                    std::string(measure_kind_name(q.kind)) +
                        " conditions on the protected attribute only");
  };
  auto y_under = [&](int av) {
    return CounterfactualTerm{PotentialOutcome{y, {Assignment{a, av}}, {}}, q.y};
  };
  const auto w = mediators(g, a, y);
  auto nested = [&](int outer, int inner) {
    PotentialOutcome po{y, {Assignment{a, outer}}, {}};
    for (auto wv : w) po.subscript.push_back(Assignment{wv, detail::under(wv, a, inner)});
    return CounterfactualTerm{std::move(po), q.y};
  };

  switch (q.kind) {
    case MeasureKind::kCE:
      m.plus = y_under(q.a1);
      m.minus = y_under(q.a0);
      m.plus_given = m.minus_given = context;
      m.structural_zero = !g.ancestors(y)[a];
      break;
    case MeasureKind::kDE:
      only_treatment();
      m.plus = nested(q.a1, q.a0);
      m.minus = y_under(q.a0);
      m.plus_given = m.minus_given = context;
      m.structural_zero = !g.has_edge(a, y);
      break;
    case MeasureKind::kIE:
      only_treatment();
      m.plus = nested(q.a0, q.a1);
      m.minus = y_under(q.a0);
      m.plus_given = m.minus_given = context;
      m.structural_zero = w.empty();
      break;
    case MeasureKind::kSE:
      if (!context.literals.empty())
        throw Error(ErrorCode::kInvalidArgument, "SE takes no conditioning");
      m.plus = m.minus = y_under(q.a0);
      m.plus_given.literals = {{a, q.a1}};
      m.minus_given.literals = {{a, q.a0}};
      break;
    case MeasureKind::kTV:
      if (!context.literals.empty())
        throw Error(ErrorCode::kInvalidArgument, "TV takes no conditioning");
      m.plus = m.minus = CounterfactualTerm{PotentialOutcome{y, {}, {}}, q.y};
      m.plus_given.literals = {{a, q.a1}};
      m.minus_given.literals = {{a, q.a0}};
      break;
    case MeasureKind::kPSE: {
      std::vector<std::size_t> mapped;
      PotentialOutcome po{y, {}, {}};
      for (const auto& [child_name, value] : q.pse_inputs) {
        const auto c = g.node_index(child_name);
        if (!g.has_edge(a, c))
          throw Error(ErrorCode::kInvalidArgument,
                      "'" + child_name + "' is not a child of " + q.treatment);
        if (std::find(mapped.begin(), mapped.end(), c) != mapped.end())
          throw Error(ErrorCode::kInvalidArgument, "f_" + child_name + " mapped twice");
        if (value < 0 || value >= s.cardinality(a))
          throw Error(ErrorCode::kInvalidArgument, "PSE input out of domain");
        mapped.push_back(c);
        po.inputs.push_back(MechanismInput{c, a, value});
      }
      if (mapped.size() != g.children(a).size())
        throw Error(ErrorCode::kInvalidArgument,
                    "PSE must map every child mechanism of " + q.treatment);
      m.plus = CounterfactualTerm{std::move(po), q.y};
      m.minus = y_under(q.a0);
      m.plus_given = m.minus_given = context;
      break;
    }
    case MeasureKind::kRaw:
      break;
  }
  validate(s, m.plus);
  validate(s, m.minus);
  return m;
}

inline bool same_event(const Event& a, const Event& b) {
  if (a.literals.size() != b.literals.size()) return false;
  for (std::size_t i = 0; i < a.literals.size(); ++i)
    if (a.literals[i].variable != b.literals[i].variable ||
        a.literals[i].value != b.literals[i].value)
      return false;
  return true;
}

inline double eval_compiled(const ScmState& scm, const CompiledMeasure& m) {
  if (m.structural_zero)  // still undefined when the context has no mass
    return detail::checked_ratio(
        detail::accumulate(scm, m.plus_given, [](const int*, std::uint64_t) { return 0.0; }));
  if (!m.has_minus) return ctf_probability(scm, m.plus, m.plus_given);
  if (same_event(m.plus_given, m.minus_given))
    return ctf_difference(scm, m.plus, m.minus, m.plus_given);
  return ctf_probability(scm, m.plus, m.plus_given) -
         ctf_probability(scm, m.minus, m.minus_given);
}

inline double eval_measure(const ScmState& scm, const MeasureQuery& q) {
  return eval_compiled(scm, compile_measure(scm.structure(), q));
}

inline double eval_pse(const ScmState& scm, const MeasureQuery& q) {
  if (q.kind != MeasureKind::kPSE)
    throw Error(ErrorCode::kInvalidArgument, "eval_pse needs a PSE query");
  return eval_measure(scm, q);
}

struct TvDecomposition {
  double tv;
  double se;  // SE_{a0,a1}(y)
  double ie;  // IE_{a0,a1}(y | a1)
  double de;  // DE_{a1,a0}(y | a1)
};

// TV_{a0,a1}(y) = SE_{a0,a1}(y) + IE_{a0,a1}(y|a1) - DE_{a1,a0}(y|a1).
inline TvDecomposition tv_decomposition(const ScmState& scm, const std::string& treatment,
                                        int a0, int a1, int y,
                                        const std::string& outcome = "Y") {
  auto make = [&](MeasureKind kind, int base, int alt, bool cond) {
    MeasureQuery q;
    q.kind = kind;
    q.treatment = treatment;
    q.outcome = outcome;
    q.a0 = base;
    q.a1 = alt;
    q.y = y;
    if (cond) q.context = {{treatment, a1}};
    return eval_measure(scm, q);
  };
  return TvDecomposition{make(MeasureKind::kTV, a0, a1, false),
                         make(MeasureKind::kSE, a0, a1, false),
                         make(MeasureKind::kIE, a0, a1, true),
                         make(MeasureKind::kDE, a1, a0, true)};
}

// The identifiable probability P(Y_{A=a0} = y | A = a0) used to monitor
// chain convergence; by consistency it equals P(y | a0).
inline MeasureQuery convergence_query(const MeasureQuery& q) {
  MeasureQuery t;
  t.kind = MeasureKind::kRaw;
  t.treatment = q.treatment;
  t.outcome = q.outcome;
  RawQuery raw;
  raw.outcome.variable = q.outcome;
  raw.outcome.subscript.push_back(NamedAssignment{q.treatment, q.a0});
  raw.value = q.y;
  raw.given = {{q.treatment, q.a0}};
  t.raw = std::move(raw);
  return t;
}

}  // namespace cfbound

#include "gvqa/dsl.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "gvqa/oracle.hpp"
#include "gvqa/rng.hpp"

namespace gvqa {

namespace {

enum class ArgKind { None, Concept, Relation, Attribute };

struct OpSpec {
  Op op;
  const char* name;
  int children;
  ArgKind arg;
};

constexpr OpSpec kOpTable[] = {
    {Op::Scene, "scene", 0, ArgKind::None},
    {Op::Filter, "filter", 1, ArgKind::Concept},
    {Op::Relate, "relate", 1, ArgKind::Relation},
    {Op::RelateAttEq, "relate_att_eq", 1, ArgKind::Attribute},
    {Op::Intersect, "intersect", 2, ArgKind::None},
    {Op::Union, "union", 2, ArgKind::None},
    {Op::Query, "query", 1, ArgKind::Attribute},
    {Op::Count, "count", 1, ArgKind::None},
    {Op::Exists, "exists", 1, ArgKind::None},
    {Op::CountGreater, "count_greater", 2, ArgKind::None},
    {Op::CountLess, "count_less", 2, ArgKind::None},
    {Op::CountEqual, "count_equal", 2, ArgKind::None},
    {Op::QueryAttEq, "query_att_eq", 2, ArgKind::Attribute},
};

const OpSpec& spec_of(Op op) {
  for (const OpSpec& s : kOpTable)
    if (s.op == op) return s;
  throw std::logic_error("spec_of: bad op");
}

const OpSpec* spec_by_name(const std::string& name) {
  for (const OpSpec& s : kOpTable)
    if (name == s.name) return &s;
  return nullptr;
}

}  // namespace

std::string op_name(Op op) { return spec_of(op).name; }

bool Program::contains(Op op) const {
  for (const ProgNode& n : nodes)
    if (n.op == op) return true;
  return false;
}

bool Program::mentions_value(Attr a, int v) const {
  for (const ProgNode& n : nodes)
    if (n.op == Op::Filter && n.attr == static_cast<int>(a) && n.value == v) return true;
  return false;
}

// ----- answers -----

Answer Answer::of_value(Attr a, int v) {
  Answer ans;
  ans.kind = Kind::Value;
  ans.attr = static_cast<int>(a);
  ans.value = v;
  return ans;
}

Answer Answer::of_count(int c) {
  Answer ans;
  ans.kind = Kind::Count;
  ans.count = c;
  return ans;
}

Answer Answer::of_bool(bool b) {
  Answer ans;
  ans.kind = Kind::Bool;
  ans.truth = b;
  return ans;
}

std::string Answer::to_string() const {
  switch (kind) {
    case Kind::Value: return value_name(static_cast<Attr>(attr), value);
    case Kind::Count: return std::to_string(count);
    case Kind::Bool: return truth ? "true" : "false";
  }
  throw std::logic_error("Answer::to_string: bad kind");
}

Answer Answer::parse(const std::string& text) {
  if (text == "true") return of_bool(true);
  if (text == "false") return of_bool(false);
  if (!text.empty() && std::all_of(text.begin(), text.end(),
                                   [](unsigned char c) { return std::isdigit(c); }))
    return of_count(std::stoi(text));
  for (int a = 0; a < kNumAttrs; ++a) {
    const int v = value_from_name(static_cast<Attr>(a), text);
    if (v >= 0) return of_value(static_cast<Attr>(a), v);
  }
  throw DslError("unknown answer literal '" + text + "'");
}

// ----- parser -----

namespace {

struct Token {
  enum Kind { LParen, RParen, Symbol, End } kind;
  std::string text;
  int line, col;
};

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  int line = 1, col = 1;
  size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
      col = 1;
      ++i;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++col;
      ++i;
    } else if (c == '(') {
      out.push_back({Token::LParen, "(", line, col});
      ++col;
      ++i;
    } else if (c == ')') {
      out.push_back({Token::RParen, ")", line, col});
      ++col;
      ++i;
    } else {
      const int start_col = col;
      std::string sym;
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
             text[i] != '(' && text[i] != ')') {
        sym += text[i];
        ++i;
        ++col;
      }
      out.push_back({Token::Symbol, sym, line, start_col});
    }
  }
  out.push_back({Token::End, "", line, col});
  return out;
}

struct Parser {
  const std::vector<Token>& toks;
  size_t pos = 0;

  const Token& peek() const { return toks[pos]; }
  const Token& take() { return toks[pos++]; }

  int parse_expr(Program& prog) {
    const Token& open = take();
    if (open.kind != Token::LParen)
      throw SyntaxError("expected '(' but found '" + (open.kind == Token::End ? "end of input" : open.text) + "'",
                        open.line, open.col);
    const Token& op_tok = take();
    if (op_tok.kind != Token::Symbol)
      throw SyntaxError("expected an operator name", op_tok.line, op_tok.col);
    const OpSpec* spec = spec_by_name(op_tok.text);
    if (!spec) throw UnknownOperatorError("unknown operator '" + op_tok.text + "'", op_tok.line, op_tok.col);

    std::vector<int> children;
    std::vector<Token> literals;
    while (true) {
      const Token& t = peek();
      if (t.kind == Token::RParen) {
        take();
        break;
      }
      if (t.kind == Token::End)
        throw SyntaxError("unexpected end of input inside (" + op_tok.text, t.line, t.col);
      if (t.kind == Token::LParen) {
        children.push_back(parse_expr(prog));
      } else {
        literals.push_back(take());
      }
    }

    if (static_cast<int>(children.size()) != spec->children)
      throw ArityError(std::string(spec->name) + " takes " + std::to_string(spec->children) +
                           " input(s), got " + std::to_string(children.size()),
                       op_tok.line, op_tok.col);
    const int want_literals = spec->arg == ArgKind::None ? 0 : 1;
    if (static_cast<int>(literals.size()) != want_literals)
      throw ArityError(std::string(spec->name) + " takes " + std::to_string(want_literals) +
                           " literal argument(s), got " + std::to_string(literals.size()),
                       op_tok.line, op_tok.col);

    ProgNode node;
    node.op = spec->op;
    node.inputs = children;
    if (spec->arg != ArgKind::None) {
      const Token& lit = literals[0];
      const size_t colon = lit.text.find(':');
      if (spec->arg == ArgKind::Attribute) {
        if (colon != std::string::npos)
          throw TypeError(std::string(spec->name) + " expects a bare attribute name, got '" +
                              lit.text + "'",
                          lit.line, lit.col);
        const int a = attr_from_name(lit.text);
        if (a < 0) throw TypeError("unknown attribute '" + lit.text + "'", lit.line, lit.col);
        node.attr = a;
      } else {
        if (colon == std::string::npos)
          throw TypeError(std::string(spec->name) + " expects a namespaced concept, got '" +
                              lit.text + "'",
                          lit.line, lit.col);
        const std::string ns = lit.text.substr(0, colon);
        const std::string val = lit.text.substr(colon + 1);
        if (spec->arg == ArgKind::Relation) {
          if (ns != "rel")
            throw TypeError(std::string(spec->name) + " expects a relation concept, got '" +
                                lit.text + "'",
                            lit.line, lit.col);
          const int r = rel_from_name(val);
          if (r < 0) throw TypeError("unknown relation '" + val + "'", lit.line, lit.col);
          node.rel = r;
        } else {
          if (ns == "rel")
            throw TypeError(std::string(spec->name) + " expects an attribute concept, got relation '" +
                                val + "'",
                            lit.line, lit.col);
          const int a = attr_from_name(ns);
          if (a < 0) throw TypeError("unknown attribute '" + ns + "'", lit.line, lit.col);
          const int v = value_from_name(static_cast<Attr>(a), val);
          if (v < 0)
            throw TypeError("unknown " + ns + " value '" + val + "'", lit.line, lit.col);
          node.attr = a;
          node.value = v;
        }
      }
    }
    prog.nodes.push_back(node);
    return prog.root();
  }
};

bool is_answer_type(ValueType t) { return t != ValueType::ObjectSet; }

}  // namespace

Program parse(const std::string& text) {
  const std::vector<Token> toks = tokenize(text);
  Parser parser{toks};
  Program prog;
  parser.parse_expr(prog);
  const Token& trailing = parser.peek();
  if (trailing.kind != Token::End)
    throw SyntaxError("trailing content after program", trailing.line, trailing.col);
  const ValueType t = typecheck(prog);
  if (!is_answer_type(t))
    throw TypeError("program root (" + op_name(prog.nodes.back().op) +
                    ") must produce an answer, not an object set");
  return prog;
}

ValueType typecheck(const Program& p) {
  if (p.nodes.empty()) throw TypeError("empty program");
  std::vector<ValueType> types(p.nodes.size());
  for (size_t i = 0; i < p.nodes.size(); ++i) {
    const ProgNode& n = p.nodes[i];
    const OpSpec& spec = spec_of(n.op);
    if (static_cast<int>(n.inputs.size()) != spec.children)
      throw ArityError("node " + std::to_string(i) + " (" + spec.name + ") takes " +
                       std::to_string(spec.children) + " input(s), got " +
                       std::to_string(n.inputs.size()));
    for (int in : n.inputs) {
      if (in < 0 || in >= static_cast<int>(i))
        throw TypeError("node " + std::to_string(i) + " (" + spec.name +
                        ") input index " + std::to_string(in) + " breaks evaluation order");
      if (types[static_cast<size_t>(in)] != ValueType::ObjectSet)
        throw TypeError("node " + std::to_string(i) + " (" + spec.name +
                        ") requires an ObjectSet input, but node " + std::to_string(in) + " (" +
                        op_name(p.nodes[static_cast<size_t>(in)].op) + ") produces an answer");
    }
    switch (spec.arg) {
      case ArgKind::None:
        break;
      case ArgKind::Concept:
        if (n.attr < 0 || n.attr >= kNumAttrs || n.value < 0 ||
            n.value >= attr_value_count(static_cast<Attr>(n.attr)))
          throw TypeError("node " + std::to_string(i) + " (" + spec.name +
                          ") carries an invalid concept");
        break;
      case ArgKind::Relation:
        if (n.rel < 0 || n.rel >= kNumRels)
          throw TypeError("node " + std::to_string(i) + " (" + spec.name +
                          ") carries an invalid relation");
        break;
      case ArgKind::Attribute:
        if (n.attr < 0 || n.attr >= kNumAttrs)
          throw TypeError("node " + std::to_string(i) + " (" + spec.name +
                          ") carries an invalid attribute");
        break;
    }
    switch (n.op) {
      case Op::Scene:
      case Op::Filter:
      case Op::Relate:
      case Op::RelateAttEq:
      case Op::Intersect:
      case Op::Union:
        types[i] = ValueType::ObjectSet;
        break;
      case Op::Query:
        types[i] = ValueType::AnswerDistribution;
        break;
      case Op::Count:
        types[i] = ValueType::AnswerCount;
        break;
      case Op::Exists:
      case Op::CountGreater:
      case Op::CountLess:
      case Op::CountEqual:
      case Op::QueryAttEq:
        types[i] = ValueType::AnswerBoolean;
        break;
    }
  }
  return types.back();
}

namespace {

void print_node(const Program& p, int idx, std::ostringstream& os) {
  const ProgNode& n = p.nodes[static_cast<size_t>(idx)];
  os << '(' << op_name(n.op);
  for (int in : n.inputs) {
    os << ' ';
    print_node(p, in, os);
  }
  switch (spec_of(n.op).arg) {
    case ArgKind::None:
      break;
    case ArgKind::Concept:
      os << ' ' << attr_name(static_cast<Attr>(n.attr)) << ':'
         << value_name(static_cast<Attr>(n.attr), n.value);
      break;
    case ArgKind::Relation:
      os << ' ' << "rel:" << rel_name(static_cast<Rel>(n.rel));
      break;
    case ArgKind::Attribute:
      os << ' ' << attr_name(static_cast<Attr>(n.attr));
      break;
  }
  os << ')';
}

}  // namespace

std::string to_string(const Program& p) {
  std::ostringstream os;
  print_node(p, p.root(), os);
  return os.str();
}

std::string family_name(Family f) {
  switch (f) {
    case Family::Query: return "query";
    case Family::Count: return "count";
    case Family::Exists: return "exists";
    case Family::CountCompare: return "count_compare";
    case Family::QueryAttEq: return "query_att_eq";
    case Family::RelateHop: return "relate_hop";
    case Family::SameAttr: return "same_attr";
  }
  throw std::logic_error("family_name: bad family");
}

Family family_of(const Program& p) {
  if (p.contains(Op::Relate)) return Family::RelateHop;
  if (p.contains(Op::RelateAttEq)) return Family::SameAttr;
  switch (p.nodes.back().op) {
    case Op::Query: return Family::Query;
    case Op::Count: return Family::Count;
    case Op::Exists: return Family::Exists;
    case Op::CountGreater:
    case Op::CountLess:
    case Op::CountEqual: return Family::CountCompare;
    case Op::QueryAttEq: return Family::QueryAttEq;
    default: throw std::logic_error("family_of: root " + op_name(p.nodes.back().op));
  }
}

// ----- question generation -----

namespace {

using Concept = std::pair<int, int>;  // (attr, value)

struct ConceptSet {
  Concept concept_;
  std::set<int> ids;
};

// A chain of filter concepts denoting exactly one object.
struct DefiniteRef {
  std::vector<Concept> concepts;
  int target;
};

std::vector<ConceptSet> concept_sets(const SceneGraph& g, bool ban_red) {
  const int red = value_from_name(Attr::Color, "red");
  std::vector<ConceptSet> out;
  for (int a = 0; a < kNumAttrs; ++a)
    for (int v = 0; v < attr_value_count(static_cast<Attr>(a)); ++v) {
      if (ban_red && a == static_cast<int>(Attr::Color) && v == red) continue;
      ConceptSet cs;
      cs.concept_ = {a, v};
      for (const auto& [id, attrs] : g.attributes) {
        const auto& val = attrs[static_cast<size_t>(a)];
        if (val.has_value() && *val == v) cs.ids.insert(id);
      }
      out.push_back(std::move(cs));
    }
  return out;
}

std::vector<DefiniteRef> unique_refs(const std::vector<ConceptSet>& sets) {
  std::vector<DefiniteRef> out;
  for (const ConceptSet& cs : sets)
    if (cs.ids.size() == 1) out.push_back({{cs.concept_}, *cs.ids.begin()});
  for (size_t i = 0; i < sets.size(); ++i)
    for (size_t j = i + 1; j < sets.size(); ++j) {
      if (sets[i].concept_.first == sets[j].concept_.first) continue;
      if (sets[i].ids.size() <= 1 || sets[j].ids.size() <= 1) continue;
      std::set<int> inter;
      std::set_intersection(sets[i].ids.begin(), sets[i].ids.end(), sets[j].ids.begin(),
                            sets[j].ids.end(), std::inserter(inter, inter.begin()));
      if (inter.size() == 1) out.push_back({{sets[i].concept_, sets[j].concept_}, *inter.begin()});
    }
  return out;
}

int add_node(Program& p, Op op, std::vector<int> inputs, int attr = -1, int value = -1,
             int rel = -1) {
  ProgNode n;
  n.op = op;
  n.inputs = std::move(inputs);
  n.attr = attr;
  n.value = value;
  n.rel = rel;
  p.nodes.push_back(n);
  return p.root();
}

int build_ref(Program& p, const DefiniteRef& ref) {
  int cur = add_node(p, Op::Scene, {});
  for (const Concept& c : ref.concepts)
    cur = add_node(p, Op::Filter, {cur}, c.first, c.second);
  return cur;
}

bool value_defined(const SceneGraph& g, int id, int attr) {
  return g.attributes.at(id)[static_cast<size_t>(attr)].has_value();
}

struct GenState {
  const SceneGraph& g;
  Rng& rng;
  const std::vector<ConceptSet>& sets;
  const std::vector<DefiniteRef>& refs;
  std::vector<const ConceptSet*> nonempty;
  std::vector<const ConceptSet*> empty;

  const ConceptSet& any_set() { return sets[static_cast<size_t>(rng.uniform_int(static_cast<int>(sets.size())))]; }
  const DefiniteRef& any_ref() { return refs[static_cast<size_t>(rng.uniform_int(static_cast<int>(refs.size())))]; }
  int any_attr() { return rng.uniform_int(kNumAttrs); }
  int any_rel() { return rng.uniform_int(kNumRels); }
};

std::optional<Program> gen_query(GenState& s) {
  if (s.refs.empty()) return std::nullopt;
  const DefiniteRef& ref = s.any_ref();
  const int attr = s.any_attr();
  for (const Concept& c : ref.concepts)
    if (c.first == attr) return std::nullopt;  // avoid self-answering questions
  if (!value_defined(s.g, ref.target, attr)) return std::nullopt;
  Program p;
  const int r = build_ref(p, ref);
  add_node(p, Op::Query, {r}, attr);
  return p;
}

std::optional<Program> gen_count(GenState& s) {
  Program p;
  if (s.rng.coin(0.6)) {
    const ConceptSet& cs = s.any_set();
    const int base = add_node(p, Op::Scene, {});
    const int f = add_node(p, Op::Filter, {base}, cs.concept_.first, cs.concept_.second);
    add_node(p, Op::Count, {f});
  } else {
    const ConceptSet& a = s.any_set();
    const ConceptSet& b = s.any_set();
    if (a.concept_.first == b.concept_.first) return std::nullopt;
    const int base = add_node(p, Op::Scene, {});
    const int f1 = add_node(p, Op::Filter, {base}, a.concept_.first, a.concept_.second);
    const int f2 = add_node(p, Op::Filter, {f1}, b.concept_.first, b.concept_.second);
    add_node(p, Op::Count, {f2});
  }
  return p;
}

std::optional<Program> gen_exists(GenState& s) {
  Program p;
  const int variant = s.rng.uniform_int(3);
  if (variant == 0) {
    // Balance answers by drawing evenly from present and absent concepts.
    const bool want_true = s.rng.coin();
    const auto& pool = want_true ? s.nonempty : s.empty;
    if (pool.empty()) return std::nullopt;
    const ConceptSet& cs = *pool[static_cast<size_t>(s.rng.uniform_int(static_cast<int>(pool.size())))];
    const int base = add_node(p, Op::Scene, {});
    const int f = add_node(p, Op::Filter, {base}, cs.concept_.first, cs.concept_.second);
    add_node(p, Op::Exists, {f});
  } else {
    const ConceptSet& a = s.any_set();
    const ConceptSet& b = s.any_set();
    if (a.concept_.first == b.concept_.first) return std::nullopt;
    const int s1 = add_node(p, Op::Scene, {});
    const int f1 = add_node(p, Op::Filter, {s1}, a.concept_.first, a.concept_.second);
    const int s2 = add_node(p, Op::Scene, {});
    const int f2 = add_node(p, Op::Filter, {s2}, b.concept_.first, b.concept_.second);
    const int joined = add_node(p, variant == 1 ? Op::Intersect : Op::Union, {f1, f2});
    add_node(p, Op::Exists, {joined});
  }
  return p;
}

std::optional<Program> gen_count_compare(GenState& s) {
  const ConceptSet& a = s.any_set();
  const ConceptSet& b = s.any_set();
  if (a.concept_ == b.concept_) return std::nullopt;
  Program p;
  const int s1 = add_node(p, Op::Scene, {});
  const int f1 = add_node(p, Op::Filter, {s1}, a.concept_.first, a.concept_.second);
  const int s2 = add_node(p, Op::Scene, {});
  const int f2 = add_node(p, Op::Filter, {s2}, b.concept_.first, b.concept_.second);
  const Op op = std::array{Op::CountGreater, Op::CountLess, Op::CountEqual}[static_cast<size_t>(s.rng.uniform_int(3))];
  add_node(p, op, {f1, f2});
  return p;
}

std::optional<Program> gen_query_att_eq(GenState& s) {
  if (s.refs.size() < 2) return std::nullopt;
  const DefiniteRef& a = s.any_ref();
  const DefiniteRef& b = s.any_ref();
  if (a.target == b.target) return std::nullopt;
  const int attr = s.any_attr();
  for (const Concept& c : a.concepts)
    if (c.first == attr) return std::nullopt;
  for (const Concept& c : b.concepts)
    if (c.first == attr) return std::nullopt;
  if (!value_defined(s.g, a.target, attr) || !value_defined(s.g, b.target, attr))
    return std::nullopt;
  Program p;
  const int ra = build_ref(p, a);
  const int rb = build_ref(p, b);
  add_node(p, Op::QueryAttEq, {ra, rb}, attr);
  return p;
}

std::optional<Program> gen_relate_hop(GenState& s) {
  if (s.refs.empty()) return std::nullopt;
  const DefiniteRef& ref = s.any_ref();
  const int rel = s.any_rel();
  Program p;
  const int r = build_ref(p, ref);
  const int related = add_node(p, Op::Relate, {r}, -1, -1, rel);
  switch (s.rng.uniform_int(5)) {
    case 0:
      add_node(p, Op::Count, {related});
      break;
    case 1:
      add_node(p, Op::Exists, {related});
      break;
    case 2: {
      const ConceptSet& cs = s.any_set();
      const int f = add_node(p, Op::Filter, {related}, cs.concept_.first, cs.concept_.second);
      add_node(p, Op::Count, {f});
      break;
    }
    case 3: {
      const ConceptSet& cs = s.any_set();
      const int f = add_node(p, Op::Filter, {related}, cs.concept_.first, cs.concept_.second);
      add_node(p, Op::Exists, {f});
      break;
    }
    case 4:
      // Query over the related set; the oracle's uniqueness check prunes
      // instantiations whose hop does not land on a single object.
      add_node(p, Op::Query, {related}, s.any_attr());
      break;
  }
  return p;
}

std::optional<Program> gen_same_attr(GenState& s) {
  if (s.refs.empty()) return std::nullopt;
  const DefiniteRef& ref = s.any_ref();
  const int attr = s.any_attr();
  if (!value_defined(s.g, ref.target, attr)) return std::nullopt;
  Program p;
  const int r = build_ref(p, ref);
  const int same = add_node(p, Op::RelateAttEq, {r}, attr);
  switch (s.rng.uniform_int(3)) {
    case 0:
      add_node(p, Op::Count, {same});
      break;
    case 1:
      add_node(p, Op::Exists, {same});
      break;
    case 2: {
      const ConceptSet& cs = s.any_set();
      if (cs.concept_.first == attr) return std::nullopt;
      const int f = add_node(p, Op::Filter, {same}, cs.concept_.first, cs.concept_.second);
      add_node(p, Op::Exists, {f});
      break;
    }
  }
  return p;
}

}  // namespace

std::vector<QA> generate_questions(const SceneGraph& graph, uint64_t seed,
                                   const std::set<Family>& families, int n, bool ban_red,
                                   bool quiet) {
  Rng rng(Rng::mix(seed, 0x9e5710ULL));
  const std::vector<ConceptSet> sets = concept_sets(graph, ban_red);
  const std::vector<DefiniteRef> refs = unique_refs(sets);
  GenState state{graph, rng, sets, refs, {}, {}};
  for (const ConceptSet& cs : sets)
    (cs.ids.empty() ? state.empty : state.nonempty).push_back(&cs);

  const std::vector<Family> fams(families.begin(), families.end());
  if (fams.empty() || n <= 0) return {};
  const int red = value_from_name(Attr::Color, "red");

  std::set<std::string> seen;
  std::set<Family> produced;
  std::vector<QA> out;
  const int max_attempts = 80 * n + 400;
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < n; ++attempt) {
    const Family fam = fams[static_cast<size_t>(rng.uniform_int(static_cast<int>(fams.size())))];
    std::optional<Program> prog;
    switch (fam) {
      case Family::Query: prog = gen_query(state); break;
      case Family::Count: prog = gen_count(state); break;
      case Family::Exists: prog = gen_exists(state); break;
      case Family::CountCompare: prog = gen_count_compare(state); break;
      case Family::QueryAttEq: prog = gen_query_att_eq(state); break;
      case Family::RelateHop: prog = gen_relate_hop(state); break;
      case Family::SameAttr: prog = gen_same_attr(state); break;
    }
    if (!prog) continue;
    if (ban_red && prog->mentions_value(Attr::Color, red)) continue;
    const std::string text = to_string(*prog);
    if (seen.count(text)) continue;
    try {
      QA qa;
      qa.answer = execute_symbolic(*prog, graph);
      qa.program = std::move(*prog);
      out.push_back(std::move(qa));
      seen.insert(text);
      produced.insert(fam);
    } catch (const PresuppositionFailure&) {
    } catch (const UndefinedAttributeValue&) {
    }
  }
  if (!quiet)
    for (Family f : fams)
      if (!produced.count(f))
        std::cerr << "warning: no valid " << family_name(f)
                  << " question could be instantiated for this scene graph\n";
  return out;
}

// ----- corpus I/O -----

void save_questions(const std::string& path, const std::vector<QuestionRecord>& questions) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_questions: cannot open " + path);
  for (const QuestionRecord& q : questions)
    out << q.scene_id << '\t' << to_string(q.program) << '\t' << q.answer.to_string() << '\n';
}

std::vector<QuestionRecord> load_questions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_questions: cannot open " + path);
  std::vector<QuestionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw std::runtime_error("load_questions: " + path + ":" + std::to_string(line_no) +
                               ": expected 3 tab-separated fields");
    QuestionRecord rec;
    try {
      rec.scene_id = std::stoi(line.substr(0, t1));
      rec.program = parse(line.substr(t1 + 1, t2 - t1 - 1));
      rec.answer = Answer::parse(line.substr(t2 + 1));
    } catch (const std::exception& e) {
      throw std::runtime_error("load_questions: " + path + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace gvqa

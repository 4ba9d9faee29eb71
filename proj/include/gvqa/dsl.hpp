#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "gvqa/scene.hpp"

namespace gvqa {

// ----- program representation -----

enum class Op : int {
  Scene,
  Filter,
  Relate,
  RelateAttEq,
  Intersect,
  Union,
  Query,
  Count,
  Exists,
  CountGreater,
  CountLess,
  CountEqual,
  QueryAttEq,
};

std::string op_name(Op op);

struct ProgNode {
  Op op;
  std::vector<int> inputs;  // indices of earlier nodes
  int attr = -1;            // attribute argument (filter concept / query / *_att_eq)
  int value = -1;           // concept value (filter)
  int rel = -1;             // relation (relate)

  bool operator==(const ProgNode&) const = default;
};

// Nodes are stored in evaluation order (children before parents); the last
// node is the root. Concept and attribute arguments live on their consuming
// node rather than as nodes of their own, so a program's length is its
// operator count.
struct Program {
  std::vector<ProgNode> nodes;

  int root() const { return static_cast<int>(nodes.size()) - 1; }
  int length() const { return static_cast<int>(nodes.size()); }
  bool contains(Op op) const;
  // True if any filter concept in the program names this attribute value.
  bool mentions_value(Attr a, int v) const;
  bool operator==(const Program&) const = default;
};

// ----- types and errors -----

enum class ValueType { ObjectSet, AnswerDistribution, AnswerCount, AnswerBoolean };

struct DslError : std::runtime_error {
  int line = 0, col = 0;
  DslError(const std::string& msg, int line_, int col_)
      : std::runtime_error(msg + " at " + std::to_string(line_) + ":" + std::to_string(col_)),
        line(line_), col(col_) {}
  explicit DslError(const std::string& msg) : std::runtime_error(msg) {}
};
struct SyntaxError : DslError { using DslError::DslError; };
struct UnknownOperatorError : DslError { using DslError::DslError; };
struct ArityError : DslError { using DslError::DslError; };
struct TypeError : DslError { using DslError::DslError; };

// ----- answers -----

struct Answer {
  enum class Kind { Value, Count, Bool };
  Kind kind = Kind::Bool;
  int attr = -1;
  int value = -1;
  int count = 0;
  bool truth = false;

  static Answer of_value(Attr a, int v);
  static Answer of_count(int c);
  static Answer of_bool(bool b);

  std::string to_string() const;           // "red" | "3" | "true"
  static Answer parse(const std::string&);  // inverse of to_string

  bool operator==(const Answer&) const = default;
};

// ----- operations -----

// Parses the parenthesized prefix syntax (concept literals spelled
// attribute:value, relations rel:name) and typechecks the result; the root
// must produce an answer. Errors carry line/column.
Program parse(const std::string& text);

// Value type of the root, or a TypeError naming the first offending node.
// Structural validity (child indices in range and acyclic) is checked too.
ValueType typecheck(const Program& p);

std::string to_string(const Program& p);

// ----- question generation -----

enum class Family { Query, Count, Exists, CountCompare, QueryAttEq, RelateHop, SameAttr };
std::string family_name(Family f);

// Family is recoverable from the program alone: a relate makes it RelateHop,
// otherwise a relate_att_eq makes it SameAttr, otherwise the root decides.
Family family_of(const Program& p);

struct QA {
  Program program;
  Answer answer;
};

// Samples template-instantiated programs over the graph, labels each with the
// symbolic oracle, and rejects programs whose definite sub-expressions are
// not unique, whose queried value is undefined, or (with ban_red) which
// mention the concept red. Returns up to n distinct questions; requested
// families that admit no valid question are skipped (with a warning unless
// quiet).
std::vector<QA> generate_questions(const SceneGraph& graph, uint64_t seed,
                                   const std::set<Family>& families, int n,
                                   bool ban_red = false, bool quiet = false);

// ----- question corpus I/O (TSV: scene-id, program text, answer literal) -----

struct QuestionRecord {
  int scene_id = 0;
  Program program;
  Answer answer;
};

void save_questions(const std::string& path, const std::vector<QuestionRecord>& questions);
std::vector<QuestionRecord> load_questions(const std::string& path);

}  // namespace gvqa

#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "jrnlab/common.hpp"
#include "jrnlab/verifier.hpp"

namespace jrnlab {

namespace {

void print_number(std::ostringstream& out, double v) {
  if (v < 0.0) {
    out << "(- " << format_g17(-v) << ")";
  } else {
    out << format_g17(v);
  }
}

void print_expr(std::ostringstream& out, const ExprArena& arena, int id,
                const std::vector<std::string>& names) {
  const ExprNode& n = arena.node(id);
  switch (n.op) {
    case ExprOp::kConst:
      print_number(out, n.value);
      break;
    case ExprOp::kVar:
      out << names[n.var];
      break;
    case ExprOp::kAdd:
    case ExprOp::kSub:
    case ExprOp::kMul: {
      const char* sym = n.op == ExprOp::kAdd ? "+" : n.op == ExprOp::kSub ? "-" : "*";
      out << "(" << sym << " ";
      print_expr(out, arena, n.a, names);
      out << " ";
      print_expr(out, arena, n.b, names);
      out << ")";
      break;
    }
    case ExprOp::kNeg:
      out << "(- ";
      print_expr(out, arena, n.a, names);
      out << ")";
      break;
    case ExprOp::kSquare:
      out << "(^ ";
      print_expr(out, arena, n.a, names);
      out << " 2)";
      break;
    case ExprOp::kTanh:
    case ExprOp::kSin:
    case ExprOp::kCos:
    case ExprOp::kAbs: {
      const char* fn = n.op == ExprOp::kTanh ? "tanh"
                       : n.op == ExprOp::kSin ? "sin"
                       : n.op == ExprOp::kCos ? "cos"
                                              : "abs";
      out << "(" << fn << " ";
      print_expr(out, arena, n.a, names);
      out << ")";
      break;
    }
    case ExprOp::kNorm:
      out << "(sqrt (+";
      for (int k = 0; k < n.norm_count; ++k) {
        out << " (^ ";
        print_expr(out, arena, arena.norm_child(n.norm_first, k), names);
        out << " 2)";
      }
      out << "))";
      break;
  }
}

}  // namespace

std::string export_smtlib(const FalsifyQuery& query) {
  std::ostringstream out;
  out << "(set-logic QF_NRA)\n";
  out << "(set-info :source |jrnlab falsification query|)\n";
  out << "(set-info :delta " << format_g17(query.delta) << ")\n";
  if (!query.violation_names.empty()) {
    out << "; violations:";
    for (const auto& name : query.violation_names) out << " " << name;
    out << "\n";
  }
  for (const auto& name : query.var_names) {
    out << "(declare-fun " << name << " () Real)\n";
  }
  for (int v = 0; v < query.num_vars(); ++v) {
    out << "(assert (<= ";
    print_number(out, query.region.lower(v));
    out << " " << query.var_names[v] << "))\n";
    out << "(assert (<= " << query.var_names[v] << " ";
    print_number(out, query.region.upper(v));
    out << "))\n";
  }
  auto print_ball = [&](const BallConstraint& ball, const char* rel) {
    out << "(assert (" << rel << " (+";
    for (int d : ball.dims) out << " (^ " << query.var_names[d] << " 2)";
    out << ") ";
    print_number(out, ball.radius * ball.radius);
    out << "))\n";
  };
  for (const auto& ball : query.inside_balls) print_ball(ball, "<=");
  if (!query.exclusion.dims.empty()) print_ball(query.exclusion, ">=");

  out << "(assert (or";
  for (int root : query.violations) {
    out << " (>= ";
    print_expr(out, *query.arena, root, query.var_names);
    out << " 0)";
  }
  out << "))\n";
  out << "(check-sat)\n(exit)\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Reader for the dialect emitted above
// ---------------------------------------------------------------------------

namespace {

struct SExpr {
  // atom when children empty and text set
  std::string text;
  std::vector<SExpr> children;
  bool is_atom() const { return children.empty() && !text.empty(); }
};

struct Tokenizer {
  const std::string& src;
  std::size_t pos = 0;
  std::vector<std::string> comments;

  explicit Tokenizer(const std::string& s) : src(s) {}

  void skip_space() {
    while (pos < src.size()) {
      if (std::isspace(static_cast<unsigned char>(src[pos]))) {
        ++pos;
      } else if (src[pos] == ';') {
        std::size_t end = src.find('\n', pos);
        comments.push_back(src.substr(pos, end - pos));
        pos = end == std::string::npos ? src.size() : end + 1;
      } else {
        break;
      }
    }
  }

  bool done() {
    skip_space();
    return pos >= src.size();
  }

  std::string next_token() {
    skip_space();
    if (pos >= src.size()) throw IoError("smtlib parse: unexpected end of input");
    char c = src[pos];
    if (c == '(' || c == ')') {
      ++pos;
      return std::string(1, c);
    }
    if (c == '|') {  // quoted symbol
      std::size_t end = src.find('|', pos + 1);
      if (end == std::string::npos) throw IoError("smtlib parse: unterminated |symbol|");
      std::string tok = src.substr(pos, end - pos + 1);
      pos = end + 1;
      return tok;
    }
    std::size_t start = pos;
    while (pos < src.size() && !std::isspace(static_cast<unsigned char>(src[pos])) &&
           src[pos] != '(' && src[pos] != ')') {
      ++pos;
    }
    return src.substr(start, pos - start);
  }

  SExpr parse() {
    std::string tok = next_token();
    if (tok == "(") {
      SExpr node;
      while (true) {
        skip_space();
        if (pos < src.size() && src[pos] == ')') {
          ++pos;
          return node;
        }
        node.children.push_back(parse());
      }
    }
    if (tok == ")") throw IoError("smtlib parse: unbalanced ')'");
    SExpr atom;
    atom.text = tok;
    return atom;
  }
};

bool is_number(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

class QueryBuilder {
 public:
  explicit QueryBuilder(FalsifyQuery& q) : q_(q) {}

  int var_index(const std::string& name) const {
    for (std::size_t i = 0; i < q_.var_names.size(); ++i)
      if (q_.var_names[i] == name) return static_cast<int>(i);
    throw IoError("smtlib parse: unknown symbol " + name);
  }

  double number(const SExpr& e) const {
    if (e.is_atom() && is_number(e.text)) return std::stod(e.text);
    if (!e.children.empty() && e.children[0].text == "-" && e.children.size() == 2)
      return -number(e.children[1]);
    throw IoError("smtlib parse: expected a numeric literal");
  }

  bool is_numeric(const SExpr& e) const {
    if (e.is_atom()) return is_number(e.text);
    return !e.children.empty() && e.children[0].text == "-" &&
           e.children.size() == 2 && is_numeric(e.children[1]);
  }

  Expr build(const SExpr& e) {
    ExprArena& a = *q_.arena;
    if (e.is_atom()) {
      if (is_number(e.text)) return constant(a, std::stod(e.text));
      return variable(a, var_index(e.text));
    }
    const std::string& head = e.children[0].text;
    auto arg = [&](std::size_t i) { return build(e.children[i]); };
    if (head == "+" || head == "*") {
      Expr acc = arg(1);
      for (std::size_t i = 2; i < e.children.size(); ++i)
        acc = head == "+" ? acc + arg(i) : acc * arg(i);
      return acc;
    }
    if (head == "-") {
      if (e.children.size() == 2) {
        if (is_numeric(e.children[1]))
          return constant(a, -number(e.children[1]));
        return -arg(1);
      }
      Expr acc = arg(1);
      for (std::size_t i = 2; i < e.children.size(); ++i) acc = acc - arg(i);
      return acc;
    }
    if (head == "^") {
      if (e.children.size() != 3 || e.children[2].text != "2")
        throw IoError("smtlib parse: only squares are supported");
      return square(arg(1));
    }
    if (head == "tanh") return tanh(arg(1));
    if (head == "sin") return sin(arg(1));
    if (head == "cos") return cos(arg(1));
    if (head == "abs") return abs(arg(1));
    if (head == "sqrt") {
      // (sqrt (+ (^ a 2) (^ b 2) ...)) -> norm(a, b, ...)
      const SExpr& sum = e.children[1];
      if (sum.children.empty() || sum.children[0].text != "+")
        throw IoError("smtlib parse: sqrt is only supported as a norm");
      std::vector<Expr> parts;
      for (std::size_t i = 1; i < sum.children.size(); ++i) {
        const SExpr& sq = sum.children[i];
        if (sq.children.size() != 3 || sq.children[0].text != "^")
          throw IoError("smtlib parse: sqrt argument must be a sum of squares");
        parts.push_back(build(sq.children[1]));
      }
      return norm(a, parts);
    }
    throw IoError("smtlib parse: unsupported operator " + head);
  }

  // A sum-of-variable-squares (+ (^ v 2) ...) -> dim list, or empty.
  std::vector<int> ball_dims(const SExpr& e) const {
    std::vector<int> dims;
    if (e.children.empty() || e.children[0].text != "+") return {};
    for (std::size_t i = 1; i < e.children.size(); ++i) {
      const SExpr& sq = e.children[i];
      if (sq.children.size() != 3 || sq.children[0].text != "^" ||
          !sq.children[1].is_atom() || sq.children[2].text != "2")
        return {};
      dims.push_back(var_index(sq.children[1].text));
    }
    return dims;
  }

 private:
  FalsifyQuery& q_;
};

}  // namespace

FalsifyQuery parse_smtlib(const std::string& text) {
  Tokenizer tok(text);
  FalsifyQuery q;
  q.arena = std::make_shared<ExprArena>();

  std::vector<SExpr> forms;
  while (!tok.done()) forms.push_back(tok.parse());

  // Variable declarations first, so the builder can resolve names.
  for (const auto& f : forms) {
    if (!f.children.empty() && f.children[0].text == "declare-fun") {
      q.var_names.push_back(f.children[1].text);
    }
  }
  const int nv = static_cast<int>(q.var_names.size());
  q.region.lower = Eigen::VectorXd::Constant(nv, -1e308);
  q.region.upper = Eigen::VectorXd::Constant(nv, 1e308);

  QueryBuilder builder(q);
  for (const auto& f : forms) {
    if (f.children.empty()) continue;
    const std::string& head = f.children[0].text;
    if (head == "set-info") {
      if (f.children.size() >= 3 && f.children[1].text == ":delta")
        q.delta = builder.number(f.children[2]);
      continue;
    }
    if (head != "assert") continue;
    const SExpr& body = f.children[1];
    const std::string& rel = body.children[0].text;
    if (rel == "<=" || rel == ">=") {
      const SExpr& lhs = body.children[1];
      const SExpr& rhs = body.children[2];
      if (rel == "<=" && builder.is_numeric(lhs) && rhs.is_atom()) {
        q.region.lower(builder.var_index(rhs.text)) = builder.number(lhs);
        continue;
      }
      if (rel == "<=" && lhs.is_atom() && !is_number(lhs.text) &&
          builder.is_numeric(rhs)) {
        q.region.upper(builder.var_index(lhs.text)) = builder.number(rhs);
        continue;
      }
      std::vector<int> dims = builder.ball_dims(lhs);
      if (!dims.empty() && builder.is_numeric(rhs)) {
        BallConstraint ball;
        ball.dims = dims;
        ball.radius = std::sqrt(builder.number(rhs));
        if (rel == "<=") q.inside_balls.push_back(ball);
        else q.exclusion = ball;
        continue;
      }
      throw IoError("smtlib parse: unrecognized comparison assert");
    }
    if (rel == "or") {
      for (std::size_t i = 1; i < body.children.size(); ++i) {
        const SExpr& v = body.children[i];
        if (v.children.size() != 3 || v.children[0].text != ">=")
          throw IoError("smtlib parse: violations must be (>= expr 0)");
        q.violations.push_back(builder.build(v.children[1]).id);
      }
      continue;
    }
    throw IoError("smtlib parse: unsupported assert form " + rel);
  }

  for (const auto& c : tok.comments) {
    const std::string prefix = "; violations:";
    if (c.rfind(prefix, 0) == 0) {
      std::istringstream names(c.substr(prefix.size()));
      std::string name;
      while (names >> name) q.violation_names.push_back(name);
    }
  }
  return q;
}

}  // namespace jrnlab

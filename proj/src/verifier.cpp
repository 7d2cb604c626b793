#include "jrnlab/verifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "jrnlab/common.hpp"

namespace jrnlab {

using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Expression arena
// ---------------------------------------------------------------------------

int ExprArena::add_const(double v) {
  ExprNode n;
  n.op = ExprOp::kConst;
  n.value = v;
  nodes_.push_back(n);
  return size() - 1;
}

int ExprArena::add_var(int var_index) {
  ExprNode n;
  n.op = ExprOp::kVar;
  n.var = var_index;
  num_vars_ = std::max(num_vars_, var_index + 1);
  nodes_.push_back(n);
  return size() - 1;
}

int ExprArena::add_unary(ExprOp op, int a) {
  ExprNode n;
  n.op = op;
  n.a = a;
  nodes_.push_back(n);
  return size() - 1;
}

int ExprArena::add_binary(ExprOp op, int a, int b) {
  ExprNode n;
  n.op = op;
  n.a = a;
  n.b = b;
  nodes_.push_back(n);
  return size() - 1;
}

int ExprArena::add_norm(const std::vector<int>& children) {
  ExprNode n;
  n.op = ExprOp::kNorm;
  n.norm_first = static_cast<int>(norm_args_.size());
  n.norm_count = static_cast<int>(children.size());
  norm_args_.insert(norm_args_.end(), children.begin(), children.end());
  nodes_.push_back(n);
  return size() - 1;
}

std::vector<int> ExprArena::schedule(int root) const {
  std::vector<char> needed(nodes_.size(), 0);
  std::vector<int> stack{root};
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    if (needed[id]) continue;
    needed[id] = 1;
    const ExprNode& n = nodes_[id];
    if (n.a >= 0) stack.push_back(n.a);
    if (n.b >= 0) stack.push_back(n.b);
    for (int k = 0; k < n.norm_count; ++k)
      stack.push_back(norm_args_[n.norm_first + k]);
  }
  std::vector<int> sched;
  for (int id = 0; id < size(); ++id)
    if (needed[id]) sched.push_back(id);
  return sched;
}

std::uint32_t ExprArena::support(int root) const {
  std::uint32_t mask = 0;
  for (int id : schedule(root)) {
    const ExprNode& n = nodes_[id];
    if (n.op == ExprOp::kVar) mask |= (1u << n.var);
  }
  return mask;
}

double ExprArena::eval(int root, const VectorXd& point) const {
  std::vector<double> vals(nodes_.size());
  for (int id : schedule(root)) {
    const ExprNode& n = nodes_[id];
    switch (n.op) {
      case ExprOp::kConst: vals[id] = n.value; break;
      case ExprOp::kVar: vals[id] = point(n.var); break;
      case ExprOp::kAdd: vals[id] = vals[n.a] + vals[n.b]; break;
      case ExprOp::kSub: vals[id] = vals[n.a] - vals[n.b]; break;
      case ExprOp::kMul: vals[id] = vals[n.a] * vals[n.b]; break;
      case ExprOp::kNeg: vals[id] = -vals[n.a]; break;
      case ExprOp::kSquare: vals[id] = vals[n.a] * vals[n.a]; break;
      case ExprOp::kTanh: vals[id] = std::tanh(vals[n.a]); break;
      case ExprOp::kSin: vals[id] = std::sin(vals[n.a]); break;
      case ExprOp::kCos: vals[id] = std::cos(vals[n.a]); break;
      case ExprOp::kAbs: vals[id] = std::fabs(vals[n.a]); break;
      case ExprOp::kNorm: {
        double s = 0.0;
        for (int k = 0; k < n.norm_count; ++k) {
          double v = vals[norm_args_[n.norm_first + k]];
          s += v * v;
        }
        vals[id] = std::sqrt(s);
        break;
      }
    }
  }
  return vals[root];
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

namespace {
ExprArena& same_arena(Expr a, Expr b) {
  if (a.arena != b.arena) throw ConfigError("expr: operands from different arenas");
  return *a.arena;
}
}  // namespace

Expr constant(ExprArena& a, double v) { return {&a, a.add_const(v)}; }
Expr variable(ExprArena& a, int var_index) { return {&a, a.add_var(var_index)}; }

Expr operator+(Expr a, Expr b) {
  ExprArena& ar = same_arena(a, b);
  return {&ar, ar.add_binary(ExprOp::kAdd, a.id, b.id)};
}
Expr operator-(Expr a, Expr b) {
  ExprArena& ar = same_arena(a, b);
  return {&ar, ar.add_binary(ExprOp::kSub, a.id, b.id)};
}
Expr operator*(Expr a, Expr b) {
  ExprArena& ar = same_arena(a, b);
  return {&ar, ar.add_binary(ExprOp::kMul, a.id, b.id)};
}
Expr operator-(Expr a) { return {a.arena, a.arena->add_unary(ExprOp::kNeg, a.id)}; }
Expr operator+(double c, Expr b) { return constant(*b.arena, c) + b; }
Expr operator+(Expr a, double c) { return a + constant(*a.arena, c); }
Expr operator-(double c, Expr b) { return constant(*b.arena, c) - b; }
Expr operator-(Expr a, double c) { return a - constant(*a.arena, c); }
Expr operator*(double c, Expr b) { return constant(*b.arena, c) * b; }
Expr operator*(Expr a, double c) { return a * constant(*a.arena, c); }

Expr square(Expr a) { return {a.arena, a.arena->add_unary(ExprOp::kSquare, a.id)}; }
Expr tanh(Expr a) { return {a.arena, a.arena->add_unary(ExprOp::kTanh, a.id)}; }
Expr sin(Expr a) { return {a.arena, a.arena->add_unary(ExprOp::kSin, a.id)}; }
Expr cos(Expr a) { return {a.arena, a.arena->add_unary(ExprOp::kCos, a.id)}; }
Expr abs(Expr a) { return {a.arena, a.arena->add_unary(ExprOp::kAbs, a.id)}; }
Expr norm(ExprArena& arena, const std::vector<Expr>& parts) {
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (const auto& p : parts) ids.push_back(p.id);
  return {&arena, arena.add_norm(ids)};
}

// ---------------------------------------------------------------------------
// Interval evaluation
// ---------------------------------------------------------------------------

namespace {

Interval natural_step(const ExprArena& arena, const ExprNode& n,
                      const std::vector<Interval>& vals,
                      const std::vector<Interval>& box) {
  switch (n.op) {
    case ExprOp::kConst: return Interval::point(n.value);
    case ExprOp::kVar: return box[n.var];
    case ExprOp::kAdd: return iadd(vals[n.a], vals[n.b]);
    case ExprOp::kSub: return isub(vals[n.a], vals[n.b]);
    case ExprOp::kMul: return imul(vals[n.a], vals[n.b]);
    case ExprOp::kNeg: return ineg(vals[n.a]);
    case ExprOp::kSquare: return isquare(vals[n.a]);
    case ExprOp::kTanh: return itanh(vals[n.a]);
    case ExprOp::kSin: return isin(vals[n.a]);
    case ExprOp::kCos: return icos(vals[n.a]);
    case ExprOp::kAbs: return iabs(vals[n.a]);
    case ExprOp::kNorm: {
      Interval sum = Interval::point(0.0);
      for (int k = 0; k < n.norm_count; ++k)
        sum = iadd(sum, isquare(vals[arena.norm_child(n.norm_first, k)]));
      return isqrt(sum);
    }
  }
  return {};
}

}  // namespace

Interval interval_eval(const ExprArena& arena, int root,
                       const std::vector<Interval>& box) {
  std::vector<Interval> vals(arena.size());
  for (int id : arena.schedule(root)) {
    vals[id] = natural_step(arena, arena.node(id), vals, box);
  }
  return vals[root];
}

// ---------------------------------------------------------------------------
// ExprEvaluator: schedule reuse + centered form
// ---------------------------------------------------------------------------

ExprEvaluator::ExprEvaluator(const ExprArena& arena, int root)
    : arena_(&arena),
      root_(root),
      schedule_(arena.schedule(root)),
      support_(arena.support(root)) {
  scratch_d_.resize(arena.size());
  scratch_i_.resize(arena.size());
  scratch_mid_.resize(arena.size());
  scratch_box_.resize(arena.num_vars());
  scratch_grad_.resize(static_cast<std::size_t>(arena.size()) * arena.num_vars());
}

double ExprEvaluator::eval(const VectorXd& point) const {
  auto& vals = scratch_d_;
  const ExprArena& arena = *arena_;
  for (int id : schedule_) {
    const ExprNode& n = arena.node(id);
    switch (n.op) {
      case ExprOp::kConst: vals[id] = n.value; break;
      case ExprOp::kVar: vals[id] = point(n.var); break;
      case ExprOp::kAdd: vals[id] = vals[n.a] + vals[n.b]; break;
      case ExprOp::kSub: vals[id] = vals[n.a] - vals[n.b]; break;
      case ExprOp::kMul: vals[id] = vals[n.a] * vals[n.b]; break;
      case ExprOp::kNeg: vals[id] = -vals[n.a]; break;
      case ExprOp::kSquare: vals[id] = vals[n.a] * vals[n.a]; break;
      case ExprOp::kTanh: vals[id] = std::tanh(vals[n.a]); break;
      case ExprOp::kSin: vals[id] = std::sin(vals[n.a]); break;
      case ExprOp::kCos: vals[id] = std::cos(vals[n.a]); break;
      case ExprOp::kAbs: vals[id] = std::fabs(vals[n.a]); break;
      case ExprOp::kNorm: {
        double s = 0.0;
        for (int k = 0; k < n.norm_count; ++k) {
          double v = vals[arena.norm_child(n.norm_first, k)];
          s += v * v;
        }
        vals[id] = std::sqrt(s);
        break;
      }
    }
  }
  return vals[root_];
}

Interval ExprEvaluator::natural_into(const std::vector<Interval>& box,
                                     std::vector<Interval>& vals) const {
  const ExprArena& arena = *arena_;
  for (int id : schedule_) {
    vals[id] = natural_step(arena, arena.node(id), vals, box);
  }
  return vals[root_];
}

Interval ExprEvaluator::natural(const std::vector<Interval>& box) const {
  return natural_into(box, scratch_i_);
}

Interval ExprEvaluator::tight(const std::vector<Interval>& box) const {
  const ExprArena& arena = *arena_;
  const int nv = arena.num_vars();
  Interval nat = natural(box);  // fills scratch_i_ for the gradient pass

  // Forward-mode interval gradients over the box.
  auto grad = [this, nv](int id) {
    return scratch_grad_.data() + static_cast<std::size_t>(id) * nv;
  };
  const auto& vals = scratch_i_;
  for (int id : schedule_) {
    const ExprNode& n = arena.node(id);
    Interval* g = grad(id);
    switch (n.op) {
      case ExprOp::kConst:
        for (int v = 0; v < nv; ++v) g[v] = Interval::point(0.0);
        break;
      case ExprOp::kVar:
        for (int v = 0; v < nv; ++v) g[v] = Interval::point(v == n.var ? 1.0 : 0.0);
        break;
      case ExprOp::kAdd:
        for (int v = 0; v < nv; ++v) g[v] = iadd(grad(n.a)[v], grad(n.b)[v]);
        break;
      case ExprOp::kSub:
        for (int v = 0; v < nv; ++v) g[v] = isub(grad(n.a)[v], grad(n.b)[v]);
        break;
      case ExprOp::kMul:
        for (int v = 0; v < nv; ++v)
          g[v] = iadd(imul(grad(n.a)[v], vals[n.b]), imul(vals[n.a], grad(n.b)[v]));
        break;
      case ExprOp::kNeg:
        for (int v = 0; v < nv; ++v) g[v] = ineg(grad(n.a)[v]);
        break;
      case ExprOp::kSquare: {
        Interval two_a = iscale(2.0, vals[n.a]);
        for (int v = 0; v < nv; ++v) g[v] = imul(two_a, grad(n.a)[v]);
        break;
      }
      case ExprOp::kTanh: {
        // d tanh = 1 - tanh^2, evaluated on the enclosure of tanh.
        Interval th = itanh(vals[n.a]);
        Interval sech2 = isub(Interval::point(1.0), isquare(th));
        sech2 = iintersect(sech2, {0.0, 1.0});
        for (int v = 0; v < nv; ++v) g[v] = imul(sech2, grad(n.a)[v]);
        break;
      }
      case ExprOp::kSin: {
        Interval c = icos(vals[n.a]);
        for (int v = 0; v < nv; ++v) g[v] = imul(c, grad(n.a)[v]);
        break;
      }
      case ExprOp::kCos: {
        Interval s = ineg(isin(vals[n.a]));
        for (int v = 0; v < nv; ++v) g[v] = imul(s, grad(n.a)[v]);
        break;
      }
      case ExprOp::kAbs: {
        Interval sign;
        if (vals[n.a].lo >= 0.0) sign = Interval::point(1.0);
        else if (vals[n.a].hi <= 0.0) sign = Interval::point(-1.0);
        else sign = {-1.0, 1.0};
        for (int v = 0; v < nv; ++v) g[v] = imul(sign, grad(n.a)[v]);
        break;
      }
      case ExprOp::kNorm: {
        // d|u|/dv = sum_k u_k/|u| du_k/dv, with |u_k|/|u| clamped to [-1,1].
        Interval nrm = vals[id];
        for (int v = 0; v < nv; ++v) {
          Interval acc = Interval::point(0.0);
          for (int k = 0; k < n.norm_count; ++k) {
            int cid = arena.norm_child(n.norm_first, k);
            Interval ratio;
            if (nrm.lo > 0.0) {
              ratio = iintersect(idiv_pos(vals[cid], nrm), {-1.0, 1.0});
            } else {
              ratio = {-1.0, 1.0};
            }
            acc = iadd(acc, imul(ratio, grad(cid)[v]));
          }
          g[v] = acc;
        }
        break;
      }
    }
  }

  // Centered form: f(mid) + grad(box) . (box - mid). The midpoint value is
  // evaluated in interval arithmetic on a degenerate box for soundness.
  auto& mid_box = scratch_box_;
  for (int v = 0; v < nv; ++v) mid_box[v] = Interval::point(box[v].mid());
  Interval centered = natural_into(mid_box, scratch_mid_);
  const Interval* g = grad(root_);
  for (int v = 0; v < nv; ++v) {
    Interval dev{box[v].lo - mid_box[v].lo, box[v].hi - mid_box[v].hi};
    centered = iadd(centered, imul(g[v], dev));
  }
  if (!std::isfinite(centered.lo) || !std::isfinite(centered.hi)) return nat;
  return iintersect(nat, centered);
}

// ---------------------------------------------------------------------------
// Branch and bound
// ---------------------------------------------------------------------------

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kUnsat: return "unsat";
    case Verdict::kCounterexample: return "counterexample";
    case Verdict::kDepthExhausted: return "depth_exhausted";
  }
  return "?";
}

namespace {

struct WorkBox {
  std::vector<Interval> iv;
  int depth = 0;
};

// Sum-of-squares enclosure over selected dims.
Interval ball_value(const std::vector<Interval>& iv, const BallConstraint& ball) {
  Interval sum = Interval::point(0.0);
  for (int d : ball.dims) sum = iadd(sum, isquare(iv[d]));
  return sum;
}

double ball_value_point(const VectorXd& p, const BallConstraint& ball) {
  double s = 0.0;
  for (int d : ball.dims) s += p(d) * p(d);
  return s;
}

bool point_feasible(const FalsifyQuery& q, const VectorXd& p) {
  for (int v = 0; v < q.num_vars(); ++v) {
    if (p(v) < q.region.lower(v) || p(v) > q.region.upper(v)) return false;
  }
  for (const auto& ball : q.inside_balls) {
    if (ball_value_point(p, ball) > ball.radius * ball.radius) return false;
  }
  if (!q.exclusion.dims.empty()) {
    if (ball_value_point(p, q.exclusion) < q.exclusion.radius * q.exclusion.radius)
      return false;
  }
  return true;
}

}  // namespace

FalsifyResult falsify(const FalsifyQuery& query, const FalsifyOptions& opts) {
  if (query.delta <= 0.0) throw ConfigError("falsify: delta must be positive");
  const auto t_start = std::chrono::steady_clock::now();
  const int nv = query.num_vars();

  FalsifyResult result;
  result.stats = {};

  std::vector<double> init_width(nv);
  for (int v = 0; v < nv; ++v) {
    init_width[v] =
        std::max(1e-30, query.region.upper(v) - query.region.lower(v));
  }

  // Conditions are searched one at a time, over the variables each one
  // actually involves; missing dims stay at full width and are never split.
  for (std::size_t ci = 0; ci < query.violations.size(); ++ci) {
    ExprEvaluator eval(*query.arena, query.violations[ci]);
    const std::uint32_t support = eval.support();

    std::vector<WorkBox> stack;
    WorkBox root;
    root.iv.resize(nv);
    for (int v = 0; v < nv; ++v)
      root.iv[v] = {query.region.lower(v), query.region.upper(v)};
    stack.push_back(std::move(root));

    while (!stack.empty()) {
      WorkBox box = std::move(stack.back());
      stack.pop_back();
      if (++result.stats.boxes_explored > opts.max_boxes) {
        result.verdict = Verdict::kDepthExhausted;
        result.stats.wall_seconds = std::chrono::duration<double>(
                                        std::chrono::steady_clock::now() - t_start)
                                        .count();
        return result;
      }
      result.stats.max_depth = std::max(result.stats.max_depth, box.depth);

      // Feasibility cuts.
      bool infeasible = false;
      for (const auto& ball : query.inside_balls) {
        Interval s = ball_value(box.iv, ball);
        if (s.lo > ball.radius * ball.radius) {
          infeasible = true;
          break;
        }
      }
      if (!infeasible && !query.exclusion.dims.empty()) {
        Interval s = ball_value(box.iv, query.exclusion);
        if (s.hi < query.exclusion.radius * query.exclusion.radius)
          infeasible = true;
      }
      if (infeasible) continue;

      // Discharge: the violation provably cannot hold anywhere in the box.
      Interval enc = opts.use_centered_form ? eval.tight(box.iv) : eval.natural(box.iv);
      if (enc.hi < 0.0) continue;

      // Counterexample probe at the midpoint.
      VectorXd mid(nv);
      for (int v = 0; v < nv; ++v) mid(v) = box.iv[v].mid();
      if (point_feasible(query, mid)) {
        double value = eval.eval(mid);
        if (value >= query.delta) {
          result.verdict = Verdict::kCounterexample;
          result.counterexample = mid;
          result.violated_condition = static_cast<int>(ci);
          result.violation_value = value;
          result.stats.wall_seconds =
              std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            t_start)
                  .count();
          return result;
        }
      }

      // Bisect the widest supported dimension (normalized by initial width).
      int split_dim = -1;
      double best_w = -1.0;
      for (int v = 0; v < nv; ++v) {
        if (!(support & (1u << v))) continue;
        double w = box.iv[v].width() / init_width[v];
        if (w > best_w) {
          best_w = w;
          split_dim = v;
        }
      }
      if (split_dim < 0 || box.iv[split_dim].width() < 1e-14) {
        // Cannot split further; treat as exhausted to stay sound.
        result.verdict = Verdict::kDepthExhausted;
        result.stats.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t_start)
                .count();
        return result;
      }
      double m = box.iv[split_dim].mid();
      WorkBox left = box, right = std::move(box);
      left.iv[split_dim].hi = m;
      right.iv[split_dim].lo = m;
      left.depth = right.depth = left.depth + 1;
      stack.push_back(std::move(right));
      stack.push_back(std::move(left));
    }
  }

  result.verdict = Verdict::kUnsat;
  result.stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return result;
}

}  // namespace jrnlab

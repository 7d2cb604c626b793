#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jrnlab/interval.hpp"

namespace jrnlab {

enum class ExprOp : std::uint8_t {
  kConst,
  kVar,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kSquare,
  kTanh,
  kSin,
  kCos,
  kAbs,
  kNorm,  // Euclidean norm of k children
};

struct ExprNode {
  ExprOp op = ExprOp::kConst;
  double value = 0.0;  // kConst
  int var = -1;        // kVar
  int a = -1, b = -1;  // children for unary/binary ops
  int norm_first = -1, norm_count = 0;  // children range for kNorm
};

// Append-only DAG arena. Node ids are topologically ordered by construction
// (children always precede parents), so evaluation is a single forward pass.
class ExprArena {
 public:
  int add_const(double v);
  int add_var(int var_index);
  int add_unary(ExprOp op, int a);
  int add_binary(ExprOp op, int a, int b);
  int add_norm(const std::vector<int>& children);

  const ExprNode& node(int id) const { return nodes_[id]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int num_vars() const { return num_vars_; }
  int norm_child(int first, int k) const { return norm_args_[first + k]; }

  // Plain floating-point evaluation of one root.
  double eval(int root, const Eigen::VectorXd& point) const;

  // Node ids required to evaluate `root`, in increasing (topological) order.
  std::vector<int> schedule(int root) const;

  // Bitmask of variables appearing under `root`.
  std::uint32_t support(int root) const;

 private:
  std::vector<ExprNode> nodes_;
  std::vector<int> norm_args_;
  int num_vars_ = 0;
};

// Lightweight handle with value semantics for building expressions.
struct Expr {
  ExprArena* arena = nullptr;
  int id = -1;

  Expr() = default;
  Expr(ExprArena* a, int i) : arena(a), id(i) {}
};

Expr constant(ExprArena& a, double v);
Expr variable(ExprArena& a, int var_index);

Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);
Expr operator-(Expr a);
Expr operator+(double c, Expr b);
Expr operator+(Expr a, double c);
Expr operator-(double c, Expr b);
Expr operator-(Expr a, double c);
Expr operator*(double c, Expr b);
Expr operator*(Expr a, double c);

Expr square(Expr a);
Expr tanh(Expr a);
Expr sin(Expr a);
Expr cos(Expr a);
Expr abs(Expr a);
Expr norm(ExprArena& arena, const std::vector<Expr>& parts);

// Interval evaluation over a box (natural interval extension). `box` has one
// interval per variable index. Returns a sound enclosure of the range.
Interval interval_eval(const ExprArena& arena, int root,
                       const std::vector<Interval>& box);

// Tighter enclosure: intersection of the natural extension with a centered
// (mean-value) form computed from interval gradients. Falls back to the
// natural value when the gradient form is not finite.
Interval interval_eval_centered(const ExprArena& arena, int root,
                                const std::vector<Interval>& box);

// Reusable evaluation workspace bound to one root (schedule + scratch).
class ExprEvaluator {
 public:
  ExprEvaluator(const ExprArena& arena, int root);

  double eval(const Eigen::VectorXd& point) const;
  Interval natural(const std::vector<Interval>& box) const;
  // Natural-and-centered intersection.
  Interval tight(const std::vector<Interval>& box) const;
  std::uint32_t support() const { return support_; }

 private:
  Interval natural_into(const std::vector<Interval>& box,
                        std::vector<Interval>& vals) const;

  const ExprArena* arena_;
  int root_;
  std::vector<int> schedule_;
  std::uint32_t support_;
  mutable std::vector<double> scratch_d_;
  mutable std::vector<Interval> scratch_i_;
  mutable std::vector<Interval> scratch_mid_;
  mutable std::vector<Interval> scratch_box_;
  mutable std::vector<Interval> scratch_grad_;  // schedule-size x num_vars
};

}  // namespace jrnlab

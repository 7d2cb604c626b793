#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jrnlab/expr.hpp"
#include "jrnlab/interval.hpp"

namespace jrnlab {

// Axis-aligned box over the joint variable space.
struct Box {
  Eigen::VectorXd lower, upper;

  int dims() const { return static_cast<int>(lower.size()); }
};

// Sum of squares over `dims` compared against radius^2.
struct BallConstraint {
  std::vector<int> dims;
  double radius = 0.0;
};

// Falsification query: does any point of the region (box, inside the given
// balls, outside the exclusion ball) satisfy at least one violation
// expression >= 0?
struct FalsifyQuery {
  std::shared_ptr<ExprArena> arena;
  std::vector<std::string> var_names;
  Box region;
  std::vector<BallConstraint> inside_balls;
  BallConstraint exclusion;  // empty dims -> no exclusion
  std::vector<int> violations;  // expression roots; violated iff expr >= 0
  std::vector<std::string> violation_names;
  double delta = 1e-4;  // completeness tolerance for counterexamples

  int num_vars() const { return region.dims(); }
};

enum class Verdict { kUnsat, kCounterexample, kDepthExhausted };

struct VerifierStats {
  std::uint64_t boxes_explored = 0;
  int max_depth = 0;
  double wall_seconds = 0.0;
};

struct FalsifyResult {
  Verdict verdict = Verdict::kDepthExhausted;
  Eigen::VectorXd counterexample;
  int violated_condition = -1;
  double violation_value = 0.0;
  VerifierStats stats;
};

struct FalsifyOptions {
  std::uint64_t max_boxes = 1'000'000;
  bool use_centered_form = true;
};

// Sound interval branch-and-bound. kUnsat is returned only when every box
// has been discharged, which proves no violation exists in the region.
// Counterexamples are re-checked with exact point evaluation and carry a
// margin of at least delta/2.
FalsifyResult falsify(const FalsifyQuery& query, const FalsifyOptions& opts = {});

std::string to_string(Verdict v);

// SMT-LIB2 export (dReal dialect: tanh/sin/cos/sqrt/^ allowed in QF_NRA) and
// the matching reader. parse_smtlib(export_smtlib(q)) reproduces the query.
std::string export_smtlib(const FalsifyQuery& query);
FalsifyQuery parse_smtlib(const std::string& text);

}  // namespace jrnlab

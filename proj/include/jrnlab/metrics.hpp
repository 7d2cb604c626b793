#pragma once

#include <vector>

#include <Eigen/Dense>

namespace jrnlab {

// Estimates for a test split: one sequence of state estimates (1..T) per
// trajectory, aligned with the true states 1..T.
using EstimateSet = std::vector<std::vector<Eigen::VectorXd>>;

// Average squared error at time-step t (1-based) over all sequences and
// state components.
double error_at_t(const EstimateSet& x_true, const EstimateSet& estimates, int t);

// Error(t) for every t = 1..T.
std::vector<double> error_curve(const EstimateSet& x_true,
                                const EstimateSet& estimates);

// Root mean square error over sequences, time-steps, and components.
// rmse^2 equals the time-mean of error_at_t.
double rmse(const EstimateSet& x_true, const EstimateSet& estimates);

}  // namespace jrnlab

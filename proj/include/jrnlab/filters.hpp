#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jrnlab/dynamics.hpp"

namespace jrnlab {

struct FilterState {
  Eigen::VectorXd x_hat;
  Eigen::MatrixXd P;
};

struct UkfConfig {
  double alpha = 1.0;
  double beta = 2.0;
  double kappa = 0.0;
};

enum class EkfLinearization { kCurrentEstimate, kFixedOrigin };
enum class FilterKind { kKf, kEkf, kUkf };
enum class FilterInit { kZero, kX0Mean };

FilterKind filter_kind_from_string(const std::string& s);
std::string to_string(FilterKind k);

// One Kalman predict-update with covariance symmetrization.
FilterState kf_step(const Eigen::MatrixXd& A, const Eigen::MatrixXd& H,
                    const Eigen::MatrixXd& Q_w, const Eigen::MatrixXd& R_v,
                    const FilterState& prior, const Eigen::VectorXd& y);

// EKF step. Mean propagation always uses the full nonlinear f and h; the
// covariance recursion linearizes at the prior estimate or at the origin.
FilterState ekf_step(const SystemModel& model, const FilterState& prior,
                     const Eigen::VectorXd& y,
                     EkfLinearization mode = EkfLinearization::kCurrentEstimate);

// Unscented step, 2n+1 sigma points propagated through f then h (no redraw).
FilterState ukf_step(const SystemModel& model, const UkfConfig& cfg,
                     const FilterState& prior, const Eigen::VectorXd& y);

// Sigma-point weights; exposed for tests. lambda = alpha^2 (n+kappa) - n.
void ukf_weights(int n, const UkfConfig& cfg, Eigen::VectorXd& w_mean,
                 Eigen::VectorXd& w_cov);

// Cholesky factor of P with escalating jitter on failure.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& P);

struct RunFilterOptions {
  EkfLinearization ekf_mode = EkfLinearization::kCurrentEstimate;
  UkfConfig ukf;
  FilterInit init = FilterInit::kZero;
};

// Runs one filter over every trajectory of a split. Returns, per trajectory,
// the estimates aligned with states 1..T.
std::vector<std::vector<Eigen::VectorXd>> run_filter(
    const SystemModel& model, FilterKind kind,
    const std::vector<Trajectory>& split, const RunFilterOptions& opts = {});

}  // namespace jrnlab

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "jrnlab/expr.hpp"

namespace jrnlab {

using DynFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;
// Symbolic counterpart of a map, used to hand dynamics to the verifier.
using SymFn = std::function<std::vector<Expr>(ExprArena&, const std::vector<Expr>&)>;

// Discrete-time noisy system
//   x(t+1) = f(x(t)) + w(t+1),   y(t+1) = h(x(t+1)) + v(t+1),
//   x(0)   = x0_mean + x0_noise.
// Built-in benchmarks keep the origin as an equilibrium: f(0)=0, h(0)=0.
struct SystemModel {
  std::string name;
  int n = 0;  // state dimension
  int m = 0;  // measurement dimension
  double dt = 0.0;

  DynFn f, h;
  JacFn jacobian_f, jacobian_h;  // empty -> callers fall back to differences
  SymFn f_sym, h_sym;            // empty -> symbolic path unavailable

  Eigen::MatrixXd Q_w;  // process-noise covariance (n x n)
  Eigen::MatrixXd R_v;  // measurement-noise covariance (m x m)
  Eigen::MatrixXd P0;   // initial-condition covariance (n x n)

  std::optional<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> linear;  // (A, H)

  double blowup_norm = 1e6;
};

struct Trajectory {
  int seq_id = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd x0_mean;
  std::vector<Eigen::VectorXd> states;        // 0..T
  std::vector<Eigen::VectorXd> measurements;  // 1..T (index 0 is y at t=1)
};

struct Dataset {
  std::string model_name;
  double dt = 0.0;
  int T = 0;
  std::uint64_t master_seed = 0;
  Eigen::MatrixXd Q_w, R_v, P0;
  std::vector<Trajectory> train, val, test;
};

// Exact discretization of xdot = A_c x over one sampling period, by matrix
// exponential (scaling-and-squaring).
Eigen::MatrixXd discretize_linear_zoh(const Eigen::MatrixXd& A_c, double dt);

// One classical fixed-step RK4 step of xdot = f_cont(x).
Eigen::VectorXd rk4_step(const DynFn& f_cont, const Eigen::VectorXd& x, double dt);

// Jacobian of the RK4 one-step map, propagated through the stages from the
// continuous-time Jacobian.
Eigen::MatrixXd rk4_step_jacobian(const DynFn& f_cont, const JacFn& jac_cont,
                                  const Eigen::VectorXd& x, double dt);

// Central finite-difference Jacobian of a map.
Eigen::MatrixXd fd_jacobian(const DynFn& fn, const Eigen::VectorXd& x,
                            double step = 1e-6);

// Symmetric PSD square root (eigendecomposition with negatives clamped).
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& M);

// Simulates one noisy trajectory. The initial mean is drawn uniformly from
// [-1,1]^n unless an override is supplied (tests use this to pin x0).
Trajectory simulate_trajectory(
    const SystemModel& model, int T, std::uint64_t seed,
    const std::optional<Eigen::VectorXd>& x0_mean_override = std::nullopt);

// num_sequences independent trajectories split 80:10:10 in generation order.
Dataset generate_dataset(const SystemModel& model, int num_sequences, int T,
                         std::uint64_t master_seed);

struct BuiltinParams {
  double ms_mass = 10.0, ms_damping = 6.0, ms_stiffness = 800.0;
  double pend_mass = 2.0, pend_damping = 0.9, pend_length = 1.0;
  double gravity = 9.81;
  double vdp_mu = 1.0;
};

// Benchmarks: "mass_spring" (linear, ZOH), "down_pendulum", "reversed_vdp"
// (RK4 at dt). Measurement is the position: y = x1.
SystemModel builtin_model(const std::string& name, double dt,
                          const BuiltinParams& params = {});

// Dataset persistence: train/val/test CSV plus a meta.json sidecar. The
// config_hash ties the dataset back to the generating configuration.
void write_dataset(const Dataset& ds, const std::string& dir,
                   std::uint64_t config_hash = 0);
Dataset load_dataset(const std::string& dir);
// Combined hash of meta.json and the three split files.
std::uint64_t dataset_hash(const std::string& dir);

}  // namespace jrnlab

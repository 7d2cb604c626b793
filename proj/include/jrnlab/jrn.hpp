#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "jrnlab/dynamics.hpp"

namespace jrnlab {

enum class Activation { kIdentity, kTanh };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

// Bias-free Jordan recurrent network:
//   a(t+1)    = act(W_ay y(t+1) + W_ax xhat(t))
//   xhat(t+1) = W_xa a(t+1)
// The recurrence runs through the previous output estimate, never through
// the hidden state.
struct JrnParameters {
  int hidden = 0;
  Activation activation = Activation::kIdentity;
  Eigen::MatrixXd W_ay;  // hidden x m
  Eigen::MatrixXd W_ax;  // hidden x n
  Eigen::MatrixXd W_xa;  // n x hidden

  int n() const { return static_cast<int>(W_xa.rows()); }
  int m() const { return static_cast<int>(W_ay.cols()); }
};

struct JrnGradients {
  Eigen::MatrixXd W_ay, W_ax, W_xa;
};

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 40;
  int max_epochs = 600;
  int patience = 10;
  std::uint64_t seed = 0;
  int hidden = 50;
  Activation activation = Activation::kIdentity;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip_norm = 0.0;  // 0 disables clipping
};

struct TrainReport {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch
  int best_epoch = -1;             // index into the arrays
  double wall_seconds = 0.0;
};

// Runs the recurrence over one measurement sequence. Returns the estimate
// sequence and the hidden activations, both aligned 1..T.
std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::VectorXd>> jrn_forward(
    const JrnParameters& params, const std::vector<Eigen::VectorXd>& y_seq,
    const Eigen::VectorXd& x_hat_0);

// Mean over time-steps of the per-step MSE (1/n) |x - xhat|^2.
double mse_loss(const std::vector<Eigen::VectorXd>& x_true_seq,
                const std::vector<Eigen::VectorXd>& x_hat_seq);

// Exact gradients of mse_loss through the output-to-hidden recurrence.
JrnGradients jrn_backward(const JrnParameters& params,
                          const std::vector<Eigen::VectorXd>& y_seq,
                          const std::vector<Eigen::VectorXd>& x_true_seq,
                          const Eigen::VectorXd& x_hat_0);

// Mini-batch Adam with early stopping on validation loss. Returns the
// parameters of the best epoch.
std::pair<JrnParameters, TrainReport> train_jrn(const Dataset& dataset,
                                                const TrainConfig& cfg);

// Weight initialization (exposed for tests): W_ay Glorot-uniform, W_ax and
// W_xa semi-orthogonal via sign-corrected QR.
JrnParameters init_jrn(int n, int m, const TrainConfig& cfg);

struct ModelFile {
  JrnParameters params;
  std::uint64_t dataset_hash = 0;
};

void save_model(const JrnParameters& params, const std::string& path,
                std::uint64_t dataset_hash = 0);
ModelFile load_model(const std::string& path);

void write_training_log(const TrainReport& report, const std::string& path);

}  // namespace jrnlab

#include "jrnlab/filters.hpp"

#include <cmath>

#include "jrnlab/common.hpp"

namespace jrnlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

FilterKind filter_kind_from_string(const std::string& s) {
  if (s == "kf") return FilterKind::kKf;
  if (s == "ekf") return FilterKind::kEkf;
  if (s == "ukf") return FilterKind::kUkf;
  throw ConfigError("unknown filter kind: " + s);
}

std::string to_string(FilterKind k) {
  switch (k) {
    case FilterKind::kKf: return "kf";
    case FilterKind::kEkf: return "ekf";
    case FilterKind::kUkf: return "ukf";
  }
  return "?";
}

namespace {

MatrixXd symmetrize(const MatrixXd& P) { return 0.5 * (P + P.transpose()); }

// Shared measurement update given a predicted (x, P) pair.
FilterState measurement_update(const VectorXd& x_pred, const MatrixXd& P_pred,
                               const MatrixXd& H, const MatrixXd& R_v,
                               const VectorXd& y, const VectorXd& y_pred) {
  MatrixXd S = H * P_pred * H.transpose() + R_v;
  Eigen::FullPivLU<MatrixXd> lu(S);
  if (!lu.isInvertible()) {
    throw NumericError("filter update: singular innovation covariance");
  }
  MatrixXd K = P_pred * H.transpose() * lu.inverse();
  FilterState out;
  out.x_hat = x_pred + K * (y - y_pred);
  MatrixXd I = MatrixXd::Identity(P_pred.rows(), P_pred.cols());
  out.P = symmetrize((I - K * H) * P_pred);
  return out;
}

}  // namespace

FilterState kf_step(const MatrixXd& A, const MatrixXd& H, const MatrixXd& Q_w,
                    const MatrixXd& R_v, const FilterState& prior,
                    const VectorXd& y) {
  VectorXd x_pred = A * prior.x_hat;
  MatrixXd P_pred = symmetrize(A * prior.P * A.transpose() + Q_w);
  return measurement_update(x_pred, P_pred, H, R_v, y, H * x_pred);
}

FilterState ekf_step(const SystemModel& model, const FilterState& prior,
                     const VectorXd& y, EkfLinearization mode) {
  const VectorXd lin_point =
      mode == EkfLinearization::kCurrentEstimate
          ? prior.x_hat
          : VectorXd::Zero(model.n).eval();
  MatrixXd A = model.jacobian_f ? model.jacobian_f(lin_point)
                                : fd_jacobian(model.f, lin_point);
  VectorXd x_pred = model.f(prior.x_hat);
  MatrixXd P_pred = symmetrize(A * prior.P * A.transpose() + model.Q_w);
  const VectorXd h_point =
      mode == EkfLinearization::kCurrentEstimate ? x_pred
                                                 : VectorXd::Zero(model.n).eval();
  MatrixXd H = model.jacobian_h ? model.jacobian_h(h_point)
                                : fd_jacobian(model.h, h_point);
  return measurement_update(x_pred, P_pred, H, model.R_v, y, model.h(x_pred));
}

MatrixXd cholesky_with_jitter(const MatrixXd& P) {
  double jitter = 1e-9;
  MatrixXd M = P;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Eigen::LLT<MatrixXd> llt(M);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    M = P + jitter * MatrixXd::Identity(P.rows(), P.cols());
    jitter *= 10.0;
  }
  throw NumericError("cholesky_with_jitter: covariance not positive definite");
}

void ukf_weights(int n, const UkfConfig& cfg, VectorXd& w_mean, VectorXd& w_cov) {
  const double lambda = cfg.alpha * cfg.alpha * (n + cfg.kappa) - n;
  const double c = n + lambda;
  if (std::abs(c) < 1e-12) throw ConfigError("ukf: alpha^2 (n+kappa) must differ from 0");
  w_mean = VectorXd::Constant(2 * n + 1, 1.0 / (2.0 * c));
  w_cov = w_mean;
  w_mean(0) = lambda / c;
  w_cov(0) = lambda / c + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
}

FilterState ukf_step(const SystemModel& model, const UkfConfig& cfg,
                     const FilterState& prior, const VectorXd& y) {
  const int n = model.n;
  const double lambda = cfg.alpha * cfg.alpha * (n + cfg.kappa) - n;
  VectorXd wm, wc;
  ukf_weights(n, cfg, wm, wc);

  MatrixXd L = cholesky_with_jitter((n + lambda) * prior.P);
  std::vector<VectorXd> sigma(2 * n + 1);
  sigma[0] = prior.x_hat;
  for (int i = 0; i < n; ++i) {
    sigma[1 + i] = prior.x_hat + L.col(i);
    sigma[1 + n + i] = prior.x_hat - L.col(i);
  }

  std::vector<VectorXd> sigma_f(sigma.size());
  VectorXd x_pred = VectorXd::Zero(n);
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    sigma_f[i] = model.f(sigma[i]);
    x_pred += wm(i) * sigma_f[i];
  }
  MatrixXd P_pred = model.Q_w;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    VectorXd d = sigma_f[i] - x_pred;
    P_pred += wc(i) * d * d.transpose();
  }
  P_pred = symmetrize(P_pred);

  std::vector<VectorXd> sigma_y(sigma.size());
  VectorXd y_pred = VectorXd::Zero(model.m);
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    sigma_y[i] = model.h(sigma_f[i]);
    y_pred += wm(i) * sigma_y[i];
  }
  MatrixXd S = model.R_v;
  MatrixXd C = MatrixXd::Zero(n, model.m);
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    VectorXd dy = sigma_y[i] - y_pred;
    VectorXd dx = sigma_f[i] - x_pred;
    S += wc(i) * dy * dy.transpose();
    C += wc(i) * dx * dy.transpose();
  }
  Eigen::FullPivLU<MatrixXd> lu(S);
  if (!lu.isInvertible()) {
    throw NumericError("ukf_step: singular innovation covariance");
  }
  MatrixXd K = C * lu.inverse();
  FilterState out;
  out.x_hat = x_pred + K * (y - y_pred);
  out.P = symmetrize(P_pred - K * S * K.transpose());
  return out;
}

std::vector<std::vector<VectorXd>> run_filter(const SystemModel& model,
                                              FilterKind kind,
                                              const std::vector<Trajectory>& split,
                                              const RunFilterOptions& opts) {
  if (kind == FilterKind::kKf && !model.linear) {
    throw ConfigError("run_filter: kf requires a linear model");
  }
  std::vector<std::vector<VectorXd>> all;
  all.reserve(split.size());
  for (const auto& tr : split) {
    if (static_cast<int>(tr.x0_mean.size()) != model.n) {
      throw ConfigError("run_filter: dataset/model dimension mismatch");
    }
    FilterState st;
    st.x_hat = opts.init == FilterInit::kX0Mean ? tr.x0_mean
                                                : VectorXd::Zero(model.n).eval();
    st.P = model.P0;
    std::vector<VectorXd> estimates;
    estimates.reserve(tr.measurements.size());
    for (std::size_t t = 0; t < tr.measurements.size(); ++t) {
      try {
        switch (kind) {
          case FilterKind::kKf:
            st = kf_step(model.linear->first, model.linear->second, model.Q_w,
                         model.R_v, st, tr.measurements[t]);
            break;
          case FilterKind::kEkf:
            st = ekf_step(model, st, tr.measurements[t], opts.ekf_mode);
            break;
          case FilterKind::kUkf:
            st = ukf_step(model, opts.ukf, st, tr.measurements[t]);
            break;
        }
      } catch (const NumericError& err) {
        throw NumericError(std::string(err.what()) + " (sequence " +
                           std::to_string(tr.seq_id) + ", step " +
                           std::to_string(t + 1) + ")");
      }
      estimates.push_back(st.x_hat);
    }
    all.push_back(std::move(estimates));
  }
  return all;
}

}  // namespace jrnlab

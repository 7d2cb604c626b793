#include "jrnlab/jrn.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "jrnlab/common.hpp"
#include "jrnlab/rng.hpp"

namespace jrnlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation: " + s);
}

std::string to_string(Activation a) {
  return a == Activation::kIdentity ? "identity" : "tanh";
}

namespace {

inline MatrixXd apply_activation(Activation act, const MatrixXd& z) {
  return act == Activation::kIdentity ? z : z.array().tanh().matrix();
}

// Batched forward pass; sequences are matrix columns.
struct BatchTrace {
  std::vector<MatrixXd> a;      // 1..T, hidden x B
  std::vector<MatrixXd> x_hat;  // 1..T, n x B
};

BatchTrace forward_batch(const JrnParameters& p,
                         const std::vector<MatrixXd>& y,  // 1..T, m x B
                         const MatrixXd& x_hat_0) {
  BatchTrace tr;
  const int T = static_cast<int>(y.size());
  tr.a.reserve(T);
  tr.x_hat.reserve(T);
  MatrixXd x_prev = x_hat_0;
  for (int t = 0; t < T; ++t) {
    MatrixXd z = p.W_ay * y[t] + p.W_ax * x_prev;
    tr.a.push_back(apply_activation(p.activation, z));
    tr.x_hat.push_back(p.W_xa * tr.a.back());
    x_prev = tr.x_hat.back();
  }
  return tr;
}

// Batched BPTT. x_true holds states 1..T. Returns gradients of the mean
// (over batch, time, components) squared error, plus that loss value.
double backward_batch(const JrnParameters& p, const std::vector<MatrixXd>& y,
                      const std::vector<MatrixXd>& x_true,
                      const MatrixXd& x_hat_0, JrnGradients& g) {
  const int T = static_cast<int>(y.size());
  const int n = p.n();
  const int B = static_cast<int>(x_hat_0.cols());
  BatchTrace tr = forward_batch(p, y, x_hat_0);

  g.W_ay = MatrixXd::Zero(p.W_ay.rows(), p.W_ay.cols());
  g.W_ax = MatrixXd::Zero(p.W_ax.rows(), p.W_ax.cols());
  g.W_xa = MatrixXd::Zero(p.W_xa.rows(), p.W_xa.cols());

  const double scale = 2.0 / (static_cast<double>(B) * T * n);
  double loss = 0.0;
  MatrixXd dz_next = MatrixXd::Zero(p.hidden, B);
  for (int t = T - 1; t >= 0; --t) {
    MatrixXd err = tr.x_hat[t] - x_true[t];
    loss += err.squaredNorm();
    MatrixXd dx = scale * err + p.W_ax.transpose() * dz_next;
    MatrixXd da = p.W_xa.transpose() * dx;
    MatrixXd dz = p.activation == Activation::kIdentity
                      ? da
                      : (da.array() * (1.0 - tr.a[t].array().square())).matrix();
    g.W_xa.noalias() += dx * tr.a[t].transpose();
    g.W_ay.noalias() += dz * y[t].transpose();
    const MatrixXd& x_prev = t > 0 ? tr.x_hat[t - 1] : x_hat_0;
    g.W_ax.noalias() += dz * x_prev.transpose();
    dz_next = std::move(dz);
  }
  return loss / (static_cast<double>(B) * T * n);
}

std::vector<MatrixXd> pack_measurements(const std::vector<const Trajectory*>& trs) {
  const int T = static_cast<int>(trs[0]->measurements.size());
  const int m = static_cast<int>(trs[0]->measurements[0].size());
  const int B = static_cast<int>(trs.size());
  std::vector<MatrixXd> y(T, MatrixXd(m, B));
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < B; ++b) y[t].col(b) = trs[b]->measurements[t];
  return y;
}

std::vector<MatrixXd> pack_states(const std::vector<const Trajectory*>& trs) {
  const int T = static_cast<int>(trs[0]->measurements.size());
  const int n = static_cast<int>(trs[0]->states[0].size());
  const int B = static_cast<int>(trs.size());
  std::vector<MatrixXd> x(T, MatrixXd(n, B));
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < B; ++b) x[t].col(b) = trs[b]->states[t + 1];
  return x;
}

double eval_split_loss(const JrnParameters& p, const std::vector<Trajectory>& split) {
  std::vector<const Trajectory*> ptrs;
  ptrs.reserve(split.size());
  for (const auto& tr : split) ptrs.push_back(&tr);
  auto y = pack_measurements(ptrs);
  auto x = pack_states(ptrs);
  MatrixXd x0 = MatrixXd::Zero(static_cast<int>(split[0].states[0].size()),
                               static_cast<int>(split.size()));
  BatchTrace trace = forward_batch(p, y, x0);
  double loss = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t)
    loss += (trace.x_hat[t] - x[t]).squaredNorm();
  return loss / (static_cast<double>(split.size()) * x.size() * x[0].rows());
}

MatrixXd glorot_uniform(int rows, int cols, RandomStream& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  MatrixXd W(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) W(i, j) = rng.uniform(-limit, limit);
  return W;
}

// Semi-orthogonal init: QR of a Gaussian matrix with R-diagonal sign fix.
MatrixXd orthogonal(int rows, int cols, RandomStream& rng) {
  const int big = std::max(rows, cols), small = std::min(rows, cols);
  MatrixXd G(big, small);
  for (int i = 0; i < big; ++i)
    for (int j = 0; j < small; ++j) G(i, j) = rng.gaussian();
  Eigen::HouseholderQR<MatrixXd> qr(G);
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(big, small);
  MatrixXd R = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  return rows >= cols ? Q : MatrixXd(Q.transpose());
}

}  // namespace

std::pair<std::vector<VectorXd>, std::vector<VectorXd>> jrn_forward(
    const JrnParameters& params, const std::vector<VectorXd>& y_seq,
    const VectorXd& x_hat_0) {
  if (!y_seq.empty() && y_seq[0].size() != params.m()) {
    throw ConfigError("jrn_forward: measurement dimension mismatch");
  }
  if (x_hat_0.size() != params.n()) {
    throw ConfigError("jrn_forward: state dimension mismatch");
  }
  std::vector<VectorXd> x_hat, a;
  x_hat.reserve(y_seq.size());
  a.reserve(y_seq.size());
  VectorXd x_prev = x_hat_0;
  for (const auto& y : y_seq) {
    VectorXd z = params.W_ay * y + params.W_ax * x_prev;
    VectorXd act = params.activation == Activation::kIdentity
                       ? z
                       : z.array().tanh().matrix().eval();
    a.push_back(act);
    x_hat.push_back(params.W_xa * act);
    x_prev = x_hat.back();
  }
  return {x_hat, a};
}

double mse_loss(const std::vector<VectorXd>& x_true_seq,
                const std::vector<VectorXd>& x_hat_seq) {
  if (x_true_seq.size() != x_hat_seq.size() || x_true_seq.empty()) {
    throw ConfigError("mse_loss: misaligned sequences");
  }
  double loss = 0.0;
  for (std::size_t t = 0; t < x_true_seq.size(); ++t) {
    loss += (x_true_seq[t] - x_hat_seq[t]).squaredNorm() / x_true_seq[t].size();
  }
  return loss / x_true_seq.size();
}

JrnGradients jrn_backward(const JrnParameters& params,
                          const std::vector<VectorXd>& y_seq,
                          const std::vector<VectorXd>& x_true_seq,
                          const VectorXd& x_hat_0) {
  std::vector<MatrixXd> y, x;
  y.reserve(y_seq.size());
  x.reserve(x_true_seq.size());
  for (const auto& v : y_seq) y.push_back(v);
  for (const auto& v : x_true_seq) x.push_back(v);
  JrnGradients g;
  backward_batch(params, y, x, x_hat_0, g);
  return g;
}

JrnParameters init_jrn(int n, int m, const TrainConfig& cfg) {
  RandomStream rng(derive_seed(cfg.seed, 0));
  JrnParameters p;
  p.hidden = cfg.hidden;
  p.activation = cfg.activation;
  p.W_ay = glorot_uniform(cfg.hidden, m, rng);
  p.W_ax = orthogonal(cfg.hidden, n, rng);
  p.W_xa = orthogonal(n, cfg.hidden, rng);
  return p;
}

std::pair<JrnParameters, TrainReport> train_jrn(const Dataset& dataset,
                                                const TrainConfig& cfg) {
  if (dataset.train.empty() || dataset.val.empty()) {
    throw ConfigError("train_jrn: empty train or validation split");
  }
  if (cfg.learning_rate <= 0 || cfg.patience < 1 || cfg.batch_size < 1) {
    throw ConfigError("train_jrn: invalid hyperparameters");
  }
  const auto t_start = std::chrono::steady_clock::now();
  const int n = static_cast<int>(dataset.train[0].states[0].size());
  const int m = static_cast<int>(dataset.train[0].measurements[0].size());
  JrnParameters p = init_jrn(n, m, cfg);

  MatrixXd m_ay = MatrixXd::Zero(p.W_ay.rows(), p.W_ay.cols());
  MatrixXd v_ay = m_ay;
  MatrixXd m_ax = MatrixXd::Zero(p.W_ax.rows(), p.W_ax.cols());
  MatrixXd v_ax = m_ax;
  MatrixXd m_xa = MatrixXd::Zero(p.W_xa.rows(), p.W_xa.cols());
  MatrixXd v_xa = m_xa;
  long adam_step = 0;

  auto adam_update = [&](MatrixXd& W, MatrixXd& mm, MatrixXd& vv,
                         const MatrixXd& grad) {
    mm = cfg.adam_beta1 * mm + (1.0 - cfg.adam_beta1) * grad;
    vv = cfg.adam_beta2 * vv +
         (1.0 - cfg.adam_beta2) * grad.array().square().matrix();
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, adam_step);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, adam_step);
    W.array() -= cfg.learning_rate * (mm.array() / bc1) /
                 ((vv.array() / bc2).sqrt() + cfg.adam_eps);
  };

  RandomStream shuffle_rng(derive_seed(cfg.seed, 1));
  std::vector<int> order(dataset.train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  JrnParameters best = p;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    // Fisher-Yates with the dedicated shuffle stream.
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle_rng.next_u64() % (i + 1));
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    int covered = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Trajectory*> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k)
        batch.push_back(&dataset.train[order[k]]);
      auto y = pack_measurements(batch);
      auto x = pack_states(batch);
      MatrixXd x0 = MatrixXd::Zero(n, static_cast<int>(batch.size()));
      JrnGradients g;
      double loss = backward_batch(p, y, x, x0, g);
      if (!std::isfinite(loss)) {
        throw NumericError("train_jrn: divergent loss at epoch " +
                           std::to_string(epoch));
      }
      epoch_loss += loss * static_cast<double>(batch.size());
      covered += static_cast<int>(batch.size());
      if (cfg.grad_clip_norm > 0.0) {
        const double gn = std::sqrt(g.W_ay.squaredNorm() + g.W_ax.squaredNorm() +
                                    g.W_xa.squaredNorm());
        if (gn > cfg.grad_clip_norm) {
          const double s = cfg.grad_clip_norm / gn;
          g.W_ay *= s;
          g.W_ax *= s;
          g.W_xa *= s;
        }
      }
      ++adam_step;
      adam_update(p.W_ay, m_ay, v_ay, g.W_ay);
      adam_update(p.W_ax, m_ax, v_ax, g.W_ax);
      adam_update(p.W_xa, m_xa, v_xa, g.W_xa);
    }
    report.train_loss.push_back(epoch_loss / covered);
    const double val = eval_split_loss(p, dataset.val);
    report.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      best = p;
      report.best_epoch = epoch;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= cfg.patience) {
      break;
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return {best, report};
}

void save_model(const JrnParameters& params, const std::string& path,
                std::uint64_t dataset_hash) {
  json j;
  j["format_version"] = 1;
  j["activation"] = to_string(params.activation);
  j["hidden"] = params.hidden;
  j["n"] = params.n();
  j["m"] = params.m();
  j["dataset_hash"] = to_hex(dataset_hash);
  auto mat = [](const MatrixXd& M) {
    json rows = json::array();
    for (int i = 0; i < M.rows(); ++i) {
      json r = json::array();
      for (int c = 0; c < M.cols(); ++c) r.push_back(M(i, c));
      rows.push_back(r);
    }
    return rows;
  };
  j["W_ay"] = mat(params.W_ay);
  j["W_ax"] = mat(params.W_ax);
  j["W_xa"] = mat(params.W_xa);
  write_file(path, j.dump(2) + "\n");
}

ModelFile load_model(const std::string& path) {
  json j = json::parse(read_file(path));
  if (j.at("format_version").get<int>() != 1) {
    throw IoError("load_model: unsupported format version in " + path);
  }
  ModelFile out;
  out.params.activation = activation_from_string(j.at("activation"));
  out.params.hidden = j.at("hidden").get<int>();
  const int n = j.at("n").get<int>();
  const int m = j.at("m").get<int>();
  out.dataset_hash = std::stoull(j.at("dataset_hash").get<std::string>(), nullptr, 16);
  auto mat = [&path](const json& rows, int er, int ec, const char* name) {
    if (static_cast<int>(rows.size()) != er ||
        (er > 0 && static_cast<int>(rows[0].size()) != ec)) {
      throw IoError(std::string("load_model: matrix ") + name +
                    " has wrong dimensions in " + path);
    }
    MatrixXd M(er, ec);
    for (int i = 0; i < er; ++i)
      for (int c = 0; c < ec; ++c) M(i, c) = rows[i][c].get<double>();
    return M;
  };
  out.params.W_ay = mat(j.at("W_ay"), out.params.hidden, m, "W_ay");
  out.params.W_ax = mat(j.at("W_ax"), out.params.hidden, n, "W_ax");
  out.params.W_xa = mat(j.at("W_xa"), n, out.params.hidden, "W_xa");
  return out;
}

void write_training_log(const TrainReport& report, const std::string& path) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
    out << e << "," << format_g17(report.train_loss[e]) << ","
        << format_g17(report.val_loss[e]) << "\n";
  }
  write_file(path, out.str());
}

}  // namespace jrnlab

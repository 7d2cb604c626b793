#include "jrnlab/dynamics.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>
#include <nlohmann/json.hpp>

#include "jrnlab/common.hpp"
#include "jrnlab/rng.hpp"

namespace jrnlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

MatrixXd discretize_linear_zoh(const MatrixXd& A_c, double dt) {
  if (dt <= 0.0) throw ConfigError("discretize_linear_zoh: dt must be positive");
  if (!A_c.allFinite()) throw ConfigError("discretize_linear_zoh: non-finite entries in A_c");
  MatrixXd M = A_c * dt;
  return M.exp();
}

VectorXd rk4_step(const DynFn& f_cont, const VectorXd& x, double dt) {
  VectorXd k1 = f_cont(x);
  VectorXd k2 = f_cont(x + 0.5 * dt * k1);
  VectorXd k3 = f_cont(x + 0.5 * dt * k2);
  VectorXd k4 = f_cont(x + dt * k3);
  VectorXd out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) throw NumericError("rk4_step: non-finite result");
  return out;
}

MatrixXd rk4_step_jacobian(const DynFn& f_cont, const JacFn& jac_cont,
                           const VectorXd& x, double dt) {
  const int n = static_cast<int>(x.size());
  MatrixXd I = MatrixXd::Identity(n, n);
  VectorXd k1 = f_cont(x);
  VectorXd x2 = x + 0.5 * dt * k1;
  VectorXd k2 = f_cont(x2);
  VectorXd x3 = x + 0.5 * dt * k2;
  VectorXd k3 = f_cont(x3);
  VectorXd x4 = x + dt * k3;

  MatrixXd K1 = jac_cont(x);
  MatrixXd K2 = jac_cont(x2) * (I + 0.5 * dt * K1);
  MatrixXd K3 = jac_cont(x3) * (I + 0.5 * dt * K2);
  MatrixXd K4 = jac_cont(x4) * (I + dt * K3);
  return I + (dt / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4);
}

MatrixXd fd_jacobian(const DynFn& fn, const VectorXd& x, double step) {
  VectorXd probe = x;
  probe(0) += step;
  const int rows = static_cast<int>(fn(x).size());
  const int n = static_cast<int>(x.size());
  MatrixXd J(rows, n);
  for (int j = 0; j < n; ++j) {
    VectorXd xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    J.col(j) = (fn(xp) - fn(xm)) / (2.0 * step);
  }
  return J;
}

MatrixXd sqrtm_psd(const MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
  VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Trajectory simulate_trajectory(const SystemModel& model, int T, std::uint64_t seed,
                               const std::optional<VectorXd>& x0_mean_override) {
  if (T < 1) throw ConfigError("simulate_trajectory: T must be >= 1");
  RandomStream rng(seed);
  const int n = model.n, m = model.m;

  VectorXd x0_mean(n);
  for (int i = 0; i < n; ++i) x0_mean(i) = rng.uniform(-1.0, 1.0);
  if (x0_mean_override) x0_mean = *x0_mean_override;

  MatrixXd sqrtP0 = sqrtm_psd(model.P0);
  MatrixXd sqrtQ = sqrtm_psd(model.Q_w);
  MatrixXd sqrtR = sqrtm_psd(model.R_v);

  auto draw = [&rng](int k) {
    VectorXd z(k);
    for (int i = 0; i < k; ++i) z(i) = rng.gaussian();
    return z;
  };

  Trajectory traj;
  traj.seed = seed;
  traj.x0_mean = x0_mean;
  traj.states.reserve(T + 1);
  traj.measurements.reserve(T);

  VectorXd x = x0_mean + sqrtP0 * draw(n);
  traj.states.push_back(x);
  for (int t = 0; t < T; ++t) {
    x = model.f(x) + sqrtQ * draw(n);
    if (!x.allFinite() || x.norm() > model.blowup_norm) {
      throw NumericError("simulate_trajectory: state diverged at step " +
                         std::to_string(t + 1) + " (model " + model.name + ")");
    }
    traj.states.push_back(x);
    traj.measurements.push_back(model.h(x) + sqrtR * draw(m));
  }
  return traj;
}

Dataset generate_dataset(const SystemModel& model, int num_sequences, int T,
                         std::uint64_t master_seed) {
  if (num_sequences <= 0 || num_sequences % 10 != 0) {
    throw ConfigError("generate_dataset: num_sequences must be a positive multiple of 10");
  }
  Dataset ds;
  ds.model_name = model.name;
  ds.dt = model.dt;
  ds.T = T;
  ds.master_seed = master_seed;
  ds.Q_w = model.Q_w;
  ds.R_v = model.R_v;
  ds.P0 = model.P0;
  const int n_train = num_sequences * 8 / 10;
  const int n_val = num_sequences / 10;
  for (int i = 0; i < num_sequences; ++i) {
    Trajectory tr = simulate_trajectory(model, T, derive_seed(master_seed, i));
    tr.seq_id = i;
    if (i < n_train) ds.train.push_back(std::move(tr));
    else if (i < n_train + n_val) ds.val.push_back(std::move(tr));
    else ds.test.push_back(std::move(tr));
  }
  return ds;
}

namespace {

// Continuous-time right-hand sides, written once for double and Expr.
template <class T>
std::array<T, 2> pendulum_rhs(const std::array<T, 2>& x, double g_over_l,
                              double damping) {
  using std::sin;
  return {x[1], -g_over_l * sin(x[0]) - damping * x[1]};
}

template <class T>
std::array<T, 2> reversed_vdp_rhs(const std::array<T, 2>& x, double mu) {
  return {-1.0 * x[1], x[0] - mu * (1.0 - x[0] * x[0]) * x[1]};
}

template <class T, class F>
std::array<T, 2> rk4_sym(F rhs, const std::array<T, 2>& x, double dt) {
  auto k1 = rhs(x);
  std::array<T, 2> x2{x[0] + (0.5 * dt) * k1[0], x[1] + (0.5 * dt) * k1[1]};
  auto k2 = rhs(x2);
  std::array<T, 2> x3{x[0] + (0.5 * dt) * k2[0], x[1] + (0.5 * dt) * k2[1]};
  auto k3 = rhs(x3);
  std::array<T, 2> x4{x[0] + dt * k3[0], x[1] + dt * k3[1]};
  auto k4 = rhs(x4);
  const double c = dt / 6.0;
  return {x[0] + c * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
          x[1] + c * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])};
}

SystemModel make_mass_spring(double dt, const BuiltinParams& p) {
  SystemModel model;
  model.name = "mass_spring";
  model.n = 2;
  model.m = 1;
  model.dt = dt;
  MatrixXd A_c(2, 2);
  A_c << 0.0, 1.0, -p.ms_stiffness / p.ms_mass, -p.ms_damping / p.ms_mass;
  MatrixXd A = discretize_linear_zoh(A_c, dt);
  MatrixXd H(1, 2);
  H << 1.0, 0.0;
  model.linear = std::make_pair(A, H);
  model.f = [A](const VectorXd& x) { return VectorXd(A * x); };
  model.h = [H](const VectorXd& x) { return VectorXd(H * x); };
  model.jacobian_f = [A](const VectorXd&) { return A; };
  model.jacobian_h = [H](const VectorXd&) { return H; };
  model.f_sym = [A](ExprArena& arena, const std::vector<Expr>& x) {
    std::vector<Expr> out;
    for (int i = 0; i < 2; ++i)
      out.push_back(A(i, 0) * x[0] + A(i, 1) * x[1]);
    (void)arena;
    return out;
  };
  model.h_sym = [](ExprArena&, const std::vector<Expr>& x) {
    return std::vector<Expr>{x[0]};
  };
  return model;
}

SystemModel make_pendulum(double dt, const BuiltinParams& p) {
  SystemModel model;
  model.name = "down_pendulum";
  model.n = 2;
  model.m = 1;
  model.dt = dt;
  const double g_over_l = p.gravity / p.pend_length;
  const double damping =
      p.pend_damping / (p.pend_mass * p.pend_length * p.pend_length);

  DynFn f_cont = [g_over_l, damping](const VectorXd& x) {
    auto r = pendulum_rhs<double>({x(0), x(1)}, g_over_l, damping);
    return VectorXd{{r[0], r[1]}};
  };
  JacFn jac_cont = [g_over_l, damping](const VectorXd& x) {
    MatrixXd J(2, 2);
    J << 0.0, 1.0, -g_over_l * std::cos(x(0)), -damping;
    return J;
  };
  model.f = [f_cont, dt](const VectorXd& x) { return rk4_step(f_cont, x, dt); };
  model.h = [](const VectorXd& x) { return VectorXd{{x(0)}}; };
  model.jacobian_f = [f_cont, jac_cont, dt](const VectorXd& x) {
    return rk4_step_jacobian(f_cont, jac_cont, x, dt);
  };
  model.jacobian_h = [](const VectorXd&) {
    MatrixXd H(1, 2);
    H << 1.0, 0.0;
    return H;
  };
  model.f_sym = [g_over_l, damping, dt](ExprArena&, const std::vector<Expr>& x) {
    auto rhs = [g_over_l, damping](const std::array<Expr, 2>& v) {
      return pendulum_rhs<Expr>(v, g_over_l, damping);
    };
    auto out = rk4_sym<Expr>(rhs, {x[0], x[1]}, dt);
    return std::vector<Expr>{out[0], out[1]};
  };
  model.h_sym = [](ExprArena&, const std::vector<Expr>& x) {
    return std::vector<Expr>{x[0]};
  };
  return model;
}

SystemModel make_reversed_vdp(double dt, const BuiltinParams& p) {
  SystemModel model;
  model.name = "reversed_vdp";
  model.n = 2;
  model.m = 1;
  model.dt = dt;
  const double mu = p.vdp_mu;

  DynFn f_cont = [mu](const VectorXd& x) {
    auto r = reversed_vdp_rhs<double>({x(0), x(1)}, mu);
    return VectorXd{{r[0], r[1]}};
  };
  JacFn jac_cont = [mu](const VectorXd& x) {
    MatrixXd J(2, 2);
    J << 0.0, -1.0, 1.0 + 2.0 * mu * x(0) * x(1), -mu * (1.0 - x(0) * x(0));
    return J;
  };
  model.f = [f_cont, dt](const VectorXd& x) { return rk4_step(f_cont, x, dt); };
  model.h = [](const VectorXd& x) { return VectorXd{{x(0)}}; };
  model.jacobian_f = [f_cont, jac_cont, dt](const VectorXd& x) {
    return rk4_step_jacobian(f_cont, jac_cont, x, dt);
  };
  model.jacobian_h = [](const VectorXd&) {
    MatrixXd H(1, 2);
    H << 1.0, 0.0;
    return H;
  };
  model.f_sym = [mu, dt](ExprArena&, const std::vector<Expr>& x) {
    auto rhs = [mu](const std::array<Expr, 2>& v) {
      return reversed_vdp_rhs<Expr>(v, mu);
    };
    auto out = rk4_sym<Expr>(rhs, {x[0], x[1]}, dt);
    return std::vector<Expr>{out[0], out[1]};
  };
  model.h_sym = [](ExprArena&, const std::vector<Expr>& x) {
    return std::vector<Expr>{x[0]};
  };
  return model;
}

}  // namespace

SystemModel builtin_model(const std::string& name, double dt,
                          const BuiltinParams& params) {
  if (dt <= 0.0) throw ConfigError("builtin_model: dt must be positive");
  SystemModel model;
  if (name == "mass_spring") model = make_mass_spring(dt, params);
  else if (name == "down_pendulum") model = make_pendulum(dt, params);
  else if (name == "reversed_vdp") model = make_reversed_vdp(dt, params);
  else throw ConfigError("builtin_model: unknown model name '" + name + "'");
  model.Q_w = 0.01 * MatrixXd::Identity(model.n, model.n);
  model.R_v = 0.01 * MatrixXd::Identity(model.m, model.m);
  model.P0 = 0.01 * MatrixXd::Identity(model.n, model.n);
  return model;
}

namespace {

json matrix_to_json(const MatrixXd& M) {
  json rows = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) M(i, c) = j[i][c].get<double>();
  return M;
}

void write_split_csv(const std::string& path,
                     const std::vector<Trajectory>& split, int n, int m) {
  std::ostringstream out;
  out << "seq,t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int i = 1; i <= m; ++i) out << ",y" << i;
  out << "\n";
  for (const auto& tr : split) {
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
      out << tr.seq_id << "," << t;
      for (int i = 0; i < n; ++i) out << "," << format_g17(tr.states[t](i));
      if (t == 0) {
        for (int i = 0; i < m; ++i) out << ",";
      } else {
        for (int i = 0; i < m; ++i)
          out << "," << format_g17(tr.measurements[t - 1](i));
      }
      out << "\n";
    }
  }
  write_file(path, out.str());
}

std::vector<Trajectory> read_split_csv(const std::string& path, int n, int m,
                                       int T) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file: " + path);
  std::vector<Trajectory> split;
  Trajectory* cur = nullptr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    // Trailing empty measurement cells are dropped by getline; pad.
    while (static_cast<int>(cells.size()) < 2 + n + m) cells.emplace_back();
    int seq = std::stoi(cells[0]);
    int t = std::stoi(cells[1]);
    if (cur == nullptr || cur->seq_id != seq) {
      split.emplace_back();
      cur = &split.back();
      cur->seq_id = seq;
    }
    VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = std::stod(cells[2 + i]);
    cur->states.push_back(x);
    if (t > 0) {
      VectorXd y(m);
      for (int i = 0; i < m; ++i) y(i) = std::stod(cells[2 + n + i]);
      cur->measurements.push_back(y);
    }
  }
  for (auto& tr : split) {
    if (static_cast<int>(tr.states.size()) != T + 1 ||
        static_cast<int>(tr.measurements.size()) != T) {
      throw IoError("dataset file " + path + ": sequence " +
                    std::to_string(tr.seq_id) + " has wrong length");
    }
  }
  return split;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& dir,
                   std::uint64_t config_hash) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  int n = ds.train.empty() ? 0 : static_cast<int>(ds.train[0].states[0].size());
  int m = ds.train.empty() ? 0 : static_cast<int>(ds.train[0].measurements[0].size());

  write_split_csv(dir + "/train.csv", ds.train, n, m);
  write_split_csv(dir + "/val.csv", ds.val, n, m);
  write_split_csv(dir + "/test.csv", ds.test, n, m);

  json meta;
  meta["format_version"] = 1;
  meta["model"] = ds.model_name;
  meta["dt"] = ds.dt;
  meta["T"] = ds.T;
  meta["n"] = n;
  meta["m"] = m;
  meta["master_seed"] = ds.master_seed;
  meta["split_sizes"] = {ds.train.size(), ds.val.size(), ds.test.size()};
  meta["config_hash"] = to_hex(config_hash);
  json seqs = json::array();
  auto add_seqs = [&seqs](const std::vector<Trajectory>& split,
                          const char* split_name) {
    for (const auto& tr : split) {
      json s;
      s["seq"] = tr.seq_id;
      s["split"] = split_name;
      s["seed"] = tr.seed;
      json x0 = json::array();
      for (int i = 0; i < tr.x0_mean.size(); ++i)
        x0.push_back(tr.x0_mean(i));
      s["x0_mean"] = x0;
      seqs.push_back(s);
    }
  };
  add_seqs(ds.train, "train");
  add_seqs(ds.val, "val");
  add_seqs(ds.test, "test");
  meta["sequences"] = seqs;
  meta["Q_w"] = matrix_to_json(ds.Q_w);
  meta["R_v"] = matrix_to_json(ds.R_v);
  meta["P0"] = matrix_to_json(ds.P0);
  write_file(dir + "/meta.json", meta.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  json meta = json::parse(read_file(dir + "/meta.json"));
  if (meta.at("format_version").get<int>() != 1)
    throw IoError("load_dataset: unsupported format version");
  Dataset ds;
  ds.model_name = meta.at("model").get<std::string>();
  ds.dt = meta.at("dt").get<double>();
  ds.T = meta.at("T").get<int>();
  ds.master_seed = meta.at("master_seed").get<std::uint64_t>();
  int n = meta.at("n").get<int>();
  int m = meta.at("m").get<int>();
  ds.Q_w = matrix_from_json(meta.at("Q_w"));
  ds.R_v = matrix_from_json(meta.at("R_v"));
  ds.P0 = matrix_from_json(meta.at("P0"));
  ds.train = read_split_csv(dir + "/train.csv", n, m, ds.T);
  ds.val = read_split_csv(dir + "/val.csv", n, m, ds.T);
  ds.test = read_split_csv(dir + "/test.csv", n, m, ds.T);

  for (const auto& s : meta.at("sequences")) {
    int seq = s.at("seq").get<int>();
    const std::string split = s.at("split").get<std::string>();
    auto* vec = split == "train" ? &ds.train : split == "val" ? &ds.val : &ds.test;
    for (auto& tr : *vec) {
      if (tr.seq_id == seq) {
        tr.seed = s.at("seed").get<std::uint64_t>();
        const auto& x0 = s.at("x0_mean");
        tr.x0_mean.resize(static_cast<int>(x0.size()));
        for (int i = 0; i < tr.x0_mean.size(); ++i)
          tr.x0_mean(i) = x0[i].get<double>();
      }
    }
  }
  return ds;
}

std::uint64_t dataset_hash(const std::string& dir) {
  std::uint64_t h = fnv1a64(read_file(dir + "/meta.json"));
  h = fnv1a64(read_file(dir + "/train.csv"), h);
  h = fnv1a64(read_file(dir + "/val.csv"), h);
  h = fnv1a64(read_file(dir + "/test.csv"), h);
  return h;
}

}  // namespace jrnlab

#include "jrnlab/lyapunov.hpp"

#include <algorithm>
#include <cmath>

#include <unsupported/Eigen/KroneckerProduct>
#include <nlohmann/json.hpp>

#include "jrnlab/common.hpp"
#include "jrnlab/rng.hpp"

namespace jrnlab {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using json = nlohmann::json;

ErrorSystem build_error_system(const SystemModel& model,
                               const JrnParameters& params) {
  if (params.n() != model.n || params.m() != model.m) {
    throw ConfigError("build_error_system: model/parameter dimension mismatch");
  }
  ErrorSystem es;
  es.n = model.n;
  const JrnParameters p = params;
  const DynFn f = model.f;
  const DynFn h = model.h;

  es.g = [p, f, h](const VectorXd& e, const VectorXd& x) {
    VectorXd fx = f(x);
    VectorXd z = p.W_ay * h(fx) + p.W_ax * x - p.W_ax * e;
    VectorXd a = p.activation == Activation::kIdentity
                     ? z
                     : z.array().tanh().matrix().eval();
    return VectorXd(fx - p.W_xa * a);
  };

  const SymFn f_sym = model.f_sym;
  const SymFn h_sym = model.h_sym;
  es.g_sym = [p, f_sym, h_sym](ExprArena& arena, const std::vector<Expr>& e,
                               const std::vector<Expr>& x) {
    if (!f_sym || !h_sym) {
      throw ConfigError("error system: model has no symbolic dynamics");
    }
    std::vector<Expr> fx = f_sym(arena, x);
    std::vector<Expr> hfx = h_sym(arena, fx);
    const int n = static_cast<int>(x.size());
    std::vector<Expr> a;
    a.reserve(p.hidden);
    for (int j = 0; j < p.hidden; ++j) {
      Expr z = constant(arena, 0.0);
      for (int k = 0; k < static_cast<int>(hfx.size()); ++k)
        z = z + p.W_ay(j, k) * hfx[k];
      for (int i = 0; i < n; ++i) z = z + p.W_ax(j, i) * x[i];
      for (int i = 0; i < n; ++i) z = z - p.W_ax(j, i) * e[i];
      a.push_back(p.activation == Activation::kIdentity ? z : tanh(z));
    }
    std::vector<Expr> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
      Expr acc = fx[i];
      for (int j = 0; j < p.hidden; ++j) acc = acc - p.W_xa(i, j) * a[j];
      out.push_back(acc);
    }
    return out;
  };

  // tanh'(0) = 1, so the origin linearization in e is W_xa W_ax for both
  // activations.
  es.origin_linearization = p.W_xa * p.W_ax;

  if (model.linear && params.activation == Activation::kIdentity) {
    const MatrixXd& A = model.linear->first;
    const MatrixXd& H = model.linear->second;
    MatrixXd Acal = p.W_xa * p.W_ax;
    MatrixXd Bcal = A - p.W_xa * p.W_ay * H * A - p.W_xa * p.W_ax;
    es.linear = std::make_pair(Acal, Bcal);
  }
  return es;
}

ErrorSystem linear_error_system(const MatrixXd& Acal, const MatrixXd& Bcal) {
  ErrorSystem es;
  es.n = static_cast<int>(Acal.rows());
  es.g = [Acal, Bcal](const VectorXd& e, const VectorXd& x) {
    return VectorXd(Acal * e + Bcal * x);
  };
  es.g_sym = [Acal, Bcal](ExprArena& arena, const std::vector<Expr>& e,
                          const std::vector<Expr>& x) {
    std::vector<Expr> out;
    for (int i = 0; i < Acal.rows(); ++i) {
      Expr acc = constant(arena, 0.0);
      for (int j = 0; j < Acal.cols(); ++j) acc = acc + Acal(i, j) * e[j];
      for (int j = 0; j < Bcal.cols(); ++j) acc = acc + Bcal(i, j) * x[j];
      out.push_back(acc);
    }
    return out;
  };
  es.origin_linearization = Acal;
  es.linear = std::make_pair(Acal, Bcal);
  return es;
}

double spectral_radius(const MatrixXd& A) {
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

MatrixXd solve_discrete_lyapunov(const MatrixXd& Acal, const MatrixXd& Q) {
  const int n = static_cast<int>(Acal.rows());
  if (Q.rows() != n || Q.cols() != n) {
    throw ConfigError("solve_discrete_lyapunov: dimension mismatch");
  }
  const double rho = spectral_radius(Acal);
  if (rho >= 1.0) {
    throw NumericError(
        "solve_discrete_lyapunov: spectral radius " + format_g17(rho) +
        " >= 1; the estimator error map is unstable and cannot be certified");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> qes(Q);
  if (qes.eigenvalues().minCoeff() <= 0.0) {
    throw ConfigError("solve_discrete_lyapunov: Q must be positive definite");
  }

  MatrixXd P;
  if (n <= 4) {
    MatrixXd At = Acal.transpose();
    MatrixXd K = Eigen::kroneckerProduct(At, At);
    MatrixXd I = MatrixXd::Identity(n * n, n * n);
    VectorXd q = Eigen::Map<const VectorXd>(Q.data(), n * n);
    VectorXd p = (I - K).fullPivLu().solve(q);
    P = Eigen::Map<const MatrixXd>(p.data(), n, n);
  } else {
    // Doubling: P_{k+1} = P_k + M_k' P_k M_k, M_{k+1} = M_k^2.
    P = Q;
    MatrixXd M = Acal;
    for (int iter = 0; iter < 200 && M.norm() > 1e-18; ++iter) {
      P = P + M.transpose() * P * M;
      M = M * M;
    }
  }
  P = 0.5 * (P + P.transpose());
  const double residual = (Acal.transpose() * P * Acal - P + Q).norm();
  if (!(residual < 1e-10)) {
    throw NumericError("solve_discrete_lyapunov: residual " +
                       format_g17(residual) + " exceeds 1e-10");
  }
  return P;
}

KFunctionEnvelope linear_iss_envelope(const MatrixXd& P, const MatrixXd& Q,
                                      const MatrixXd& Acal, const MatrixXd& Bcal) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> pes(P), qes(Q);
  const double lmin_p = pes.eigenvalues().minCoeff();
  const double lmax_p = pes.eigenvalues().maxCoeff();
  const double lmin_q = qes.eigenvalues().minCoeff();
  const double apb = (Acal.transpose() * P * Bcal).operatorNorm();
  const double bpb = (Bcal.transpose() * P * Bcal).operatorNorm();
  KFunctionEnvelope env;
  env.alpha1 = {KFunction::Kind::kQuadratic, lmin_p};
  env.alpha2 = {KFunction::Kind::kQuadratic, lmax_p};
  env.alpha3 = {KFunction::Kind::kQuadratic, 0.5 * lmin_q};
  env.gamma = {KFunction::Kind::kQuadratic, 2.0 * apb * apb / lmin_q + bpb * bpb};
  return env;
}

double eval_candidate(const LyapunovCandidate& candidate, const VectorXd& e) {
  if (const auto* q = std::get_if<QuadraticCandidate>(&candidate.form)) {
    return e.dot(q->P * e);
  }
  const auto& nc = std::get<NeuralCandidate>(candidate.form);
  VectorXd z = (nc.W1 * e).array().square();
  const double s = nc.W2.dot(z);
  return s * s;
}

namespace {

// Gradient of the neural V at e with respect to (W1, W2).
struct VGrad {
  MatrixXd dW1;
  RowVectorXd dW2;
  double value = 0.0;
};

VGrad neural_value_grad(const NeuralCandidate& nc, const VectorXd& e) {
  VGrad out;
  VectorXd u = nc.W1 * e;
  VectorXd z = u.array().square();
  const double s = nc.W2.dot(z);
  out.value = s * s;
  out.dW2 = 2.0 * s * z.transpose();
  VectorXd du = 4.0 * s * (nc.W2.transpose().array() * u.array()).matrix();
  out.dW1 = du * e.transpose();
  return out;
}

struct PreparedSample {
  VectorXd e, ge;
  double a1 = 0, a2 = 0, a3 = 0, gam = 0;
};

std::vector<PreparedSample> prepare_samples(const std::vector<SamplePoint>& samples,
                                            const KFunctionEnvelope& env,
                                            const ErrorSystem& es) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& [e, x] : samples) {
    PreparedSample ps;
    ps.e = e;
    ps.ge = es.g(e, x);
    const double re = e.norm();
    ps.a1 = env.alpha1(re);
    ps.a2 = env.alpha2(re);
    ps.a3 = env.alpha3(re);
    ps.gam = env.gamma(x.norm());
    out.push_back(std::move(ps));
  }
  return out;
}

double hinge_loss_prepared(const NeuralCandidate& nc,
                           const std::vector<PreparedSample>& samples,
                           MatrixXd* dW1, RowVectorXd* dW2) {
  double loss = 0.0;
  if (dW1) dW1->setZero();
  if (dW2) dW2->setZero();
  for (const auto& ps : samples) {
    VGrad ve = neural_value_grad(nc, ps.e);
    VGrad vg = neural_value_grad(nc, ps.ge);
    const double h1 = vg.value - ve.value + ps.a3 - ps.gam;
    const double h2 = ve.value - ps.a2;
    const double h3 = ps.a1 - ve.value;
    if (h1 > 0.0) {
      loss += h1;
      if (dW1) {
        *dW1 += vg.dW1 - ve.dW1;
        *dW2 += vg.dW2 - ve.dW2;
      }
    }
    if (h2 > 0.0) {
      loss += h2;
      if (dW1) {
        *dW1 += ve.dW1;
        *dW2 += ve.dW2;
      }
    }
    if (h3 > 0.0) {
      loss += h3;
      if (dW1) {
        *dW1 -= ve.dW1;
        *dW2 -= ve.dW2;
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(samples.size());
  if (dW1) {
    *dW1 *= scale;
    *dW2 *= scale;
  }
  return loss * scale;
}

Expr apply_kfn_sym(ExprArena& arena, const KFunction& k,
                   const std::vector<Expr>& parts) {
  if (k.kind == KFunction::Kind::kQuadratic) {
    Expr sum = constant(arena, 0.0);
    for (const auto& p : parts) sum = sum + square(p);
    return k.c * sum;
  }
  return k.c * norm(arena, parts);
}

Expr candidate_value_sym(ExprArena& arena, const LyapunovCandidate& cand,
                         const std::vector<Expr>& e) {
  if (const auto* q = std::get_if<QuadraticCandidate>(&cand.form)) {
    Expr acc = constant(arena, 0.0);
    const MatrixXd& P = q->P;
    for (int i = 0; i < P.rows(); ++i) {
      for (int j = 0; j < P.cols(); ++j) {
        if (i == j) acc = acc + P(i, i) * square(e[i]);
        else if (j > i) acc = acc + (2.0 * P(i, j)) * (e[i] * e[j]);
      }
    }
    return acc;
  }
  const auto& nc = std::get<NeuralCandidate>(cand.form);
  Expr s = constant(arena, 0.0);
  for (int j = 0; j < nc.W1.rows(); ++j) {
    Expr u = constant(arena, 0.0);
    for (int i = 0; i < nc.W1.cols(); ++i) u = u + nc.W1(j, i) * e[i];
    s = s + nc.W2(j) * square(u);
  }
  return square(s);
}

}  // namespace

double cegis_loss(const LyapunovCandidate& candidate,
                  const std::vector<SamplePoint>& samples,
                  const KFunctionEnvelope& envelope,
                  const ErrorSystem& error_system) {
  if (samples.empty()) throw ConfigError("cegis_loss: no samples");
  auto prepared = prepare_samples(samples, envelope, error_system);
  if (const auto* nc = std::get_if<NeuralCandidate>(&candidate.form)) {
    return hinge_loss_prepared(*nc, prepared, nullptr, nullptr);
  }
  // Quadratic candidates share the same hinge structure.
  double loss = 0.0;
  const auto& qc = std::get<QuadraticCandidate>(candidate.form);
  for (const auto& ps : prepared) {
    const double ve = ps.e.dot(qc.P * ps.e);
    const double vg = ps.ge.dot(qc.P * ps.ge);
    loss += std::max(0.0, vg - ve + ps.a3 - ps.gam) +
            std::max(0.0, ve - ps.a2) + std::max(0.0, ps.a1 - ve);
  }
  return loss / static_cast<double>(samples.size());
}

FalsifyQuery build_falsify_query(const ErrorSystem& error_system,
                                 const LyapunovCandidate& candidate) {
  const int n = error_system.n;
  const auto& region = candidate.region;
  FalsifyQuery q;
  q.arena = std::make_shared<ExprArena>();
  ExprArena& arena = *q.arena;

  std::vector<Expr> e_vars, x_vars;
  for (int i = 0; i < n; ++i) {
    q.var_names.push_back("e" + std::to_string(i + 1));
    e_vars.push_back(variable(arena, i));
  }
  for (int i = 0; i < n; ++i) {
    q.var_names.push_back("x" + std::to_string(i + 1));
    x_vars.push_back(variable(arena, n + i));
  }

  q.region.lower = VectorXd(2 * n);
  q.region.upper = VectorXd(2 * n);
  for (int i = 0; i < n; ++i) {
    q.region.lower(i) = -region.r_e;
    q.region.upper(i) = region.r_e;
    q.region.lower(n + i) = -region.r_x;
    q.region.upper(n + i) = region.r_x;
  }
  BallConstraint e_ball, x_ball;
  for (int i = 0; i < n; ++i) e_ball.dims.push_back(i);
  for (int i = 0; i < n; ++i) x_ball.dims.push_back(n + i);
  e_ball.radius = region.r_e;
  x_ball.radius = region.r_x;
  q.inside_balls = {e_ball, x_ball};
  q.exclusion.dims = e_ball.dims;
  q.exclusion.radius = region.exclusion_radius;

  Expr ve = candidate_value_sym(arena, candidate, e_vars);
  std::vector<Expr> ge = error_system.g_sym(arena, e_vars, x_vars);
  Expr vg = candidate_value_sym(arena, candidate, ge);
  Expr a1 = apply_kfn_sym(arena, candidate.envelope.alpha1, e_vars);
  Expr a2 = apply_kfn_sym(arena, candidate.envelope.alpha2, e_vars);
  Expr a3 = apply_kfn_sym(arena, candidate.envelope.alpha3, e_vars);
  Expr gm = apply_kfn_sym(arena, candidate.envelope.gamma, x_vars);

  q.violations = {(a1 - ve).id, (ve - a2).id, (vg - ve + a3 - gm).id};
  q.violation_names = {"lower_bound", "upper_bound", "decrease"};
  return q;
}

namespace {

// Best quadratic shape for the warm start: maximizes the worst margin of the
// three conditions on the x = 0 slice over rotated diagonal Gram matrices.
MatrixXd warm_start_shape(const ErrorSystem& es, const KFunctionEnvelope& env,
                          const VerificationRegion& region) {
  const int n = es.n;
  const double r0 = region.exclusion_radius, r1 = region.r_e;
  const double q_min = std::sqrt(env.alpha1(r0)) / (r0 * r0);
  const double q_max = std::sqrt(env.alpha2(r1)) / (r1 * r1);

  // Ring samples, dense near the exclusion boundary where margins pinch.
  std::vector<VectorXd> ring_e;
  std::vector<double> rs;
  for (double s = 1.0; s <= 4.01; s += 0.25) rs.push_back(r0 * s);
  for (double r = r0 * 5; r < r1; r += (r1 - r0 * 5) / 8.0) rs.push_back(r);
  rs.push_back(r1);
  const int dirs = n == 1 ? 2 : 48;
  for (double r : rs) {
    for (int d = 0; d < dirs; ++d) {
      VectorXd e(n);
      if (n == 1) {
        e(0) = d == 0 ? r : -r;
      } else {
        double th = 2.0 * M_PI * d / dirs;
        e.setZero();
        e(0) = r * std::cos(th);
        e(1) = r * std::sin(th);
      }
      ring_e.push_back(e);
    }
  }
  VectorXd x0 = VectorXd::Zero(n);

  auto score = [&](const MatrixXd& P) {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& e : ring_e) {
      const double r = e.norm();
      const double ve = e.dot(P * e);
      const double v2 = ve * ve;
      VectorXd ge = es.g(e, x0);
      const double vg = ge.dot(P * ge);
      const double m = std::min({v2 - env.alpha1(r), env.alpha2(r) - v2,
                                 v2 - vg * vg - env.alpha3(r)});
      worst = std::min(worst, m);
    }
    return worst;
  };

  MatrixXd best = MatrixXd::Identity(n, n) * 0.5 * (q_min + q_max);
  double best_score = score(best);
  if (n == 2) {
    for (int ti = 0; ti < 60; ++ti) {
      const double th = M_PI * ti / 60.0;
      MatrixXd R(2, 2);
      R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
      for (int ai = 0; ai <= 16; ++ai) {
        for (int bi = 0; bi <= 16; ++bi) {
          const double a = q_min + (q_max - q_min) * ai / 16.0;
          const double b = q_min + (q_max - q_min) * bi / 16.0;
          MatrixXd P = R * Eigen::DiagonalMatrix<double, 2>(a, b) * R.transpose();
          const double sc = score(P);
          if (sc > best_score) {
            best_score = sc;
            best = P;
          }
        }
      }
    }
  } else {
    for (int ai = 0; ai <= 32; ++ai) {
      const double a = q_min + (q_max - q_min) * ai / 32.0;
      MatrixXd P = a * MatrixXd::Identity(n, n);
      const double sc = score(P);
      if (sc > best_score) {
        best_score = sc;
        best = P;
      }
    }
  }
  return best;
}

NeuralCandidate init_candidate(const ErrorSystem& es, const KFunctionEnvelope& env,
                               const VerificationRegion& region, int hidden,
                               RandomStream& rng) {
  const int n = es.n;
  NeuralCandidate nc;
  nc.W1 = MatrixXd::Zero(hidden, n);
  nc.W2 = RowVectorXd::Zero(hidden);
  MatrixXd shape = warm_start_shape(es, env, region);
  Eigen::SelfAdjointEigenSolver<MatrixXd> esv(shape);
  for (int i = 0; i < n && i < hidden; ++i) {
    nc.W1.row(i) = esv.eigenvectors().col(i).transpose();
    nc.W2(i) = std::max(1e-6, esv.eigenvalues()(i));
  }
  for (int j = n; j < hidden; ++j) {
    for (int i = 0; i < n; ++i) nc.W1(j, i) = 0.05 * rng.gaussian();
    nc.W2(j) = 0.01;
  }
  return nc;
}

}  // namespace

Certificate learn_iss_lyapunov(const ErrorSystem& error_system,
                               const KFunctionEnvelope& envelope,
                               const VerificationRegion& region,
                               const CegisConfig& cfg) {
  const int n = error_system.n;
  if (!(region.r_e > region.exclusion_radius && region.exclusion_radius > 0.0)) {
    throw ConfigError("learn_iss_lyapunov: need r_e > exclusion_radius > 0");
  }
  RandomStream rng(derive_seed(cfg.seed, 17));

  // Initial samples: grid over the e-box paired with a shuffled x-grid, the
  // x=0 slice, a dense ring near the exclusion boundary, and random points.
  std::vector<SamplePoint> samples;
  {
    std::vector<VectorXd> e_grid, x_grid;
    const int per_dim = n == 1 ? cfg.grid_per_dim * cfg.grid_per_dim
                               : cfg.grid_per_dim;
    auto linspace = [](double lo, double hi, int k, int i) {
      return lo + (hi - lo) * (k <= 1 ? 0.5 : static_cast<double>(i) / (k - 1));
    };
    if (n == 1) {
      for (int i = 0; i < per_dim; ++i) {
        e_grid.push_back(VectorXd::Constant(1, linspace(-region.r_e, region.r_e, per_dim, i)));
        x_grid.push_back(VectorXd::Constant(1, linspace(-region.r_x, region.r_x, per_dim, i)));
      }
    } else {
      for (int i = 0; i < per_dim; ++i) {
        for (int j = 0; j < per_dim; ++j) {
          VectorXd e = VectorXd::Zero(n), x = VectorXd::Zero(n);
          e(0) = linspace(-region.r_e, region.r_e, per_dim, i);
          e(1) = linspace(-region.r_e, region.r_e, per_dim, j);
          x(0) = linspace(-region.r_x, region.r_x, per_dim, i);
          x(1) = linspace(-region.r_x, region.r_x, per_dim, j);
          e_grid.push_back(e);
          x_grid.push_back(x);
        }
      }
    }
    // Pair the grids by a seeded shuffle of the x side.
    for (int i = static_cast<int>(x_grid.size()) - 1; i > 0; --i) {
      std::swap(x_grid[i], x_grid[rng.next_u64() % (i + 1)]);
    }
    for (std::size_t k = 0; k < e_grid.size(); ++k) {
      const double re = e_grid[k].norm();
      if (re < region.exclusion_radius || re > region.r_e) continue;
      if (x_grid[k].norm() > region.r_x) continue;
      samples.emplace_back(e_grid[k], x_grid[k]);
    }
    // x = 0 slice (the binding input for the decrease condition).
    for (const auto& e : e_grid) {
      const double re = e.norm();
      if (re < region.exclusion_radius || re > region.r_e) continue;
      samples.emplace_back(e, VectorXd::Zero(n));
    }
    // Dense ring just outside the exclusion ball.
    const int ring = 256;
    for (int i = 0; i < ring; ++i) {
      for (double s : {1.0, 1.1, 1.25, 1.5, 2.0}) {
        VectorXd e = VectorXd::Zero(n);
        if (n == 1) {
          e(0) = (i % 2 ? -1.0 : 1.0) * region.exclusion_radius * s;
        } else {
          const double th = 2.0 * M_PI * i / ring;
          e(0) = region.exclusion_radius * s * std::cos(th);
          e(1) = region.exclusion_radius * s * std::sin(th);
        }
        if (e.norm() > region.r_e) continue;
        samples.emplace_back(e, VectorXd::Zero(n));
      }
    }
    for (int k = 0; k < cfg.extra_random_samples; ++k) {
      VectorXd e(n), x(n);
      for (int i = 0; i < n; ++i) e(i) = rng.uniform(-region.r_e, region.r_e);
      for (int i = 0; i < n; ++i) x(i) = rng.uniform(-region.r_x, region.r_x);
      const double re = e.norm();
      if (re < region.exclusion_radius || re > region.r_e || x.norm() > region.r_x)
        continue;
      samples.emplace_back(e, x);
    }
  }

  Certificate cert;
  cert.method = "cegis_interval";
  cert.candidate.envelope = envelope;
  cert.candidate.region = region;

  NeuralCandidate nc = init_candidate(error_system, envelope, region, cfg.hidden, rng);

  MatrixXd m1 = MatrixXd::Zero(cfg.hidden, n), v1 = m1;
  RowVectorXd m2 = RowVectorXd::Zero(cfg.hidden), v2 = m2;
  long adam_step = 0;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  for (int round = 0; round < cfg.max_rounds; ++round) {
    cert.cegis_rounds = round + 1;
    auto prepared = prepare_samples(samples, envelope, error_system);

    MatrixXd dW1(cfg.hidden, n);
    RowVectorXd dW2(cfg.hidden);
    int zero_streak = 0;
    for (int step = 0; step < cfg.steps_per_round; ++step) {
      const double loss = hinge_loss_prepared(nc, prepared, &dW1, &dW2);
      if (loss == 0.0) {
        if (++zero_streak >= 2) break;
        continue;
      }
      zero_streak = 0;
      ++adam_step;
      const double c1 = 1.0 - std::pow(b1, adam_step);
      const double c2 = 1.0 - std::pow(b2, adam_step);
      m1 = b1 * m1 + (1.0 - b1) * dW1;
      v1 = b2 * v1 + (1.0 - b2) * dW1.array().square().matrix();
      nc.W1.array() -=
          cfg.learning_rate * (m1.array() / c1) / ((v1.array() / c2).sqrt() + eps);
      m2 = b1 * m2 + (1.0 - b1) * dW2;
      v2 = b2 * v2 + (1.0 - b2) * dW2.array().square().matrix();
      nc.W2.array() -=
          cfg.learning_rate * (m2.array() / c1) / ((v2.array() / c2).sqrt() + eps);
    }

    cert.candidate.form = nc;
    FalsifyQuery query = build_falsify_query(error_system, cert.candidate);
    FalsifyResult res = falsify(query, cfg.falsify);
    cert.stats.boxes_explored += res.stats.boxes_explored;
    cert.stats.max_depth = std::max(cert.stats.max_depth, res.stats.max_depth);
    cert.stats.wall_seconds += res.stats.wall_seconds;

    if (res.verdict == Verdict::kUnsat) {
      cert.status = CertificateStatus::kVerified;
      return cert;
    }
    if (res.verdict == Verdict::kDepthExhausted) {
      cert.status = CertificateStatus::kInconclusive;
      return cert;
    }
    // Counterexample: record it, augment the samples, retrain.
    cert.cex_e = res.counterexample.head(n);
    cert.cex_x = res.counterexample.tail(n);
    samples.emplace_back(cert.cex_e, cert.cex_x);
    for (int k = 0; k < cfg.cex_perturbations; ++k) {
      VectorXd e = cert.cex_e, x = cert.cex_x;
      for (int i = 0; i < n; ++i) e(i) += cfg.perturb_sigma * rng.gaussian();
      for (int i = 0; i < n; ++i) x(i) += cfg.perturb_sigma * rng.gaussian();
      const double re = e.norm();
      if (re < region.exclusion_radius || re > region.r_e || x.norm() > region.r_x)
        continue;
      samples.emplace_back(e, x);
    }
  }
  cert.status = CertificateStatus::kCounterexample;
  return cert;
}

Certificate certify_linear(const ErrorSystem& error_system, const MatrixXd& Q,
                           const VerificationRegion& region) {
  if (!error_system.linear) {
    throw ConfigError(
        "certify_linear: error system has no linear specialization "
        "(nonlinear plant or tanh activation)");
  }
  const auto& [Acal, Bcal] = *error_system.linear;
  MatrixXd P = solve_discrete_lyapunov(Acal, Q);
  Certificate cert;
  cert.method = "analytic_quadratic";
  cert.candidate.form = QuadraticCandidate{P};
  cert.candidate.envelope = linear_iss_envelope(P, Q, Acal, Bcal);
  cert.candidate.region = region;
  cert.status = CertificateStatus::kVerified;
  return cert;
}

PlantStabilityEvidence linear_plant_evidence(const MatrixXd& A) {
  PlantStabilityEvidence ev;
  ev.kind = PlantStabilityEvidence::Kind::kLinearEigenvalues;
  ev.spectral_radius = spectral_radius(A);
  ev.note = "rho(A) = " + format_g17(ev.spectral_radius);
  return ev;
}

PlantStabilityEvidence empirical_decay_evidence(const SystemModel& model,
                                                int num_probes, double horizon_s,
                                                std::uint64_t seed) {
  RandomStream rng(seed);
  const int steps = static_cast<int>(std::ceil(horizon_s / model.dt));
  double worst = 0.0;
  for (int k = 0; k < num_probes; ++k) {
    VectorXd x(model.n);
    for (int i = 0; i < model.n; ++i) x(i) = rng.uniform(-1.0, 1.0);
    if (x.norm() > 1.2) x *= 1.2 / x.norm();
    const double x0n = std::max(x.norm(), 1e-12);
    for (int t = 0; t < steps; ++t) x = model.f(x);
    worst = std::max(worst, x.norm() / x0n);
  }
  PlantStabilityEvidence ev;
  ev.kind = PlantStabilityEvidence::Kind::kEmpiricalDecay;
  ev.decay_ratio = worst;
  ev.note = "noise-free decay over " + format_g17(horizon_s) + " s from " +
            std::to_string(num_probes) + " probes: worst |x(T)|/|x(0)| = " +
            format_g17(worst);
  return ev;
}

CascadeReport certify_cascade(const PlantStabilityEvidence& plant_evidence,
                              const Certificate& certificate) {
  CascadeReport report;
  bool plant_ok = false;
  switch (plant_evidence.kind) {
    case PlantStabilityEvidence::Kind::kLinearEigenvalues:
      plant_ok = plant_evidence.spectral_radius < 1.0;
      report.evidence_chain.push_back("plant: " + plant_evidence.note +
                                      (plant_ok ? " < 1" : " >= 1"));
      break;
    case PlantStabilityEvidence::Kind::kEmpiricalDecay:
      plant_ok = plant_evidence.decay_ratio < 0.05;
      report.evidence_chain.push_back(
          "plant (assumed GAS, empirically checked): " + plant_evidence.note);
      break;
    case PlantStabilityEvidence::Kind::kNone:
      report.evidence_chain.push_back("plant: no stability evidence supplied");
      break;
  }
  const bool error_ok = certificate.status == CertificateStatus::kVerified;
  report.evidence_chain.push_back(
      std::string("error system: ISS certificate ") +
      (error_ok ? "verified (" + certificate.method + ")" : "not verified"));
  if (plant_ok && error_ok) {
    report.certified = true;
    report.evidence_chain.push_back(
        "cascade: plant GAS + error-system ISS => cascade origin "
        "asymptotically stable");
  } else {
    report.certified = false;
    report.reason = !plant_ok ? "plant stability evidence missing or failed"
                              : "error-system ISS certificate not verified";
  }
  return report;
}

namespace {

json kfn_to_json(const KFunction& k) {
  return {{"kind", k.kind == KFunction::Kind::kLinear ? "linear" : "quadratic"},
          {"c", k.c}};
}

json matrix_to_json(const MatrixXd& M) {
  json rows = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (int c = 0; c < M.cols(); ++c) r.push_back(M(i, c));
    rows.push_back(r);
  }
  return rows;
}

json certificate_to_json(const Certificate& cert) {
  json j;
  j["method"] = cert.method;
  switch (cert.status) {
    case CertificateStatus::kVerified: j["verdict"] = "verified"; break;
    case CertificateStatus::kCounterexample: j["verdict"] = "counterexample"; break;
    case CertificateStatus::kInconclusive: j["verdict"] = "inconclusive"; break;
  }
  if (const auto* q = std::get_if<QuadraticCandidate>(&cert.candidate.form)) {
    j["candidate"]["kind"] = "quadratic";
    j["candidate"]["P"] = matrix_to_json(q->P);
  } else if (const auto* nn = std::get_if<NeuralCandidate>(&cert.candidate.form)) {
    j["candidate"]["kind"] = "neural";
    j["candidate"]["W1"] = matrix_to_json(nn->W1);
    j["candidate"]["W2"] = matrix_to_json(nn->W2);
    j["candidate"]["activation"] = "square";
  }
  j["envelope"]["alpha1"] = kfn_to_json(cert.candidate.envelope.alpha1);
  j["envelope"]["alpha2"] = kfn_to_json(cert.candidate.envelope.alpha2);
  j["envelope"]["alpha3"] = kfn_to_json(cert.candidate.envelope.alpha3);
  j["envelope"]["gamma"] = kfn_to_json(cert.candidate.envelope.gamma);
  j["region"] = {{"r_e", cert.candidate.region.r_e},
                 {"r_x", cert.candidate.region.r_x},
                 {"exclusion_radius", cert.candidate.region.exclusion_radius}};
  if (cert.status == CertificateStatus::kCounterexample && cert.cex_e.size() > 0) {
    json e = json::array(), x = json::array();
    for (int i = 0; i < cert.cex_e.size(); ++i) e.push_back(cert.cex_e(i));
    for (int i = 0; i < cert.cex_x.size(); ++i) x.push_back(cert.cex_x(i));
    j["counterexample"] = {{"e", e}, {"x", x}};
  }
  j["verifier_stats"] = {{"boxes_explored", cert.stats.boxes_explored},
                         {"max_depth", cert.stats.max_depth}};
  j["cegis_rounds"] = cert.cegis_rounds;
  return j;
}

}  // namespace

void write_certificate(const Certificate& cert, const std::string& path,
                       std::uint64_t model_hash,
                       const std::optional<Certificate>& near_origin,
                       const std::optional<CascadeReport>& cascade) {
  json j = certificate_to_json(cert);
  j["format_version"] = 1;
  j["model_hash"] = to_hex(model_hash);
  if (near_origin) j["near_origin"] = certificate_to_json(*near_origin);
  if (cascade) {
    j["cascade"]["certified"] = cascade->certified;
    j["cascade"]["evidence"] = cascade->evidence_chain;
    if (!cascade->certified) j["cascade"]["reason"] = cascade->reason;
  }
  write_file(path, j.dump(2) + "\n");
}

}  // namespace jrnlab

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "jrnlab/dynamics.hpp"
#include "jrnlab/jrn.hpp"
#include "jrnlab/verifier.hpp"

namespace jrnlab {

// Comparison function alpha(r) = c*r or c*r^2 with c > 0.
struct KFunction {
  enum class Kind { kLinear, kQuadratic };
  Kind kind = Kind::kQuadratic;
  double c = 1.0;

  double operator()(double r) const {
    return kind == Kind::kLinear ? c * r : c * r * r;
  }
};

struct KFunctionEnvelope {
  KFunction alpha1, alpha2, alpha3, gamma;
};

// Error recursion e(t+1) = g(e(t), x(t)) of the estimator against the
// noise-free plant, with the plant state acting as the input.
struct ErrorSystem {
  int n = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> g;
  std::function<std::vector<Expr>(ExprArena&, const std::vector<Expr>&,
                                  const std::vector<Expr>&)>
      g_sym;
  Eigen::MatrixXd origin_linearization;  // dg/de at (0,0)
  // Exact (Acal, Bcal) when the plant is linear and the activation is the
  // identity: g(e,x) = Acal e + Bcal x.
  std::optional<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> linear;
};

// g(e,x) = f(x) - W_xa act(W_ay h(f(x)) + W_ax x - W_ax e).
ErrorSystem build_error_system(const SystemModel& model,
                               const JrnParameters& params);

// Direct construction from (Acal, Bcal); used for analytic test systems.
ErrorSystem linear_error_system(const Eigen::MatrixXd& Acal,
                                const Eigen::MatrixXd& Bcal);

// Unique SPD solution of Acal' P Acal - P + Q = 0. Requires rho(Acal) < 1
// and Q SPD; solved by Kronecker vectorization for n <= 4, doubling
// iteration otherwise. Residual is checked to 1e-10.
Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& Acal,
                                        const Eigen::MatrixXd& Q);

// K-function instantiation for the linear path:
//   alpha1 = lmin(P) r^2, alpha2 = lmax(P) r^2, alpha3 = lmin(Q)/2 r^2,
//   gamma  = (2|Acal' P Bcal|^2 / lmin(Q) + |Bcal' P Bcal|^2) r^2,
// with |.| the spectral norm.
KFunctionEnvelope linear_iss_envelope(const Eigen::MatrixXd& P,
                                      const Eigen::MatrixXd& Q,
                                      const Eigen::MatrixXd& Acal,
                                      const Eigen::MatrixXd& Bcal);

struct VerificationRegion {
  double r_e = 2.0;
  double r_x = 2.0;
  double exclusion_radius = 0.1;
};

struct QuadraticCandidate {
  Eigen::MatrixXd P;  // SPD
};

// V(e) = (W2 . (W1 e)^{.2})^2: one hidden layer, square activations, no
// biases. Always the square of a quadratic form, hence nonnegative.
struct NeuralCandidate {
  Eigen::MatrixXd W1;     // hidden x n
  Eigen::RowVectorXd W2;  // 1 x hidden
};

struct LyapunovCandidate {
  std::variant<QuadraticCandidate, NeuralCandidate> form;
  KFunctionEnvelope envelope;
  VerificationRegion region;
};

double eval_candidate(const LyapunovCandidate& candidate,
                      const Eigen::VectorXd& e);

// Mean over samples of the three hinge penalties from the falsification
// constraints.
using SamplePoint = std::pair<Eigen::VectorXd, Eigen::VectorXd>;  // (e, x)
double cegis_loss(const LyapunovCandidate& candidate,
                  const std::vector<SamplePoint>& samples,
                  const KFunctionEnvelope& envelope,
                  const ErrorSystem& error_system);

// Falsification query for the three ISS-Lyapunov conditions over
//   excl^2 <= sum e_i^2 <= r_e^2  and  sum x_i^2 <= r_x^2.
FalsifyQuery build_falsify_query(const ErrorSystem& error_system,
                                 const LyapunovCandidate& candidate);

struct CertificateStatus {
  enum Value { kVerified, kCounterexample, kInconclusive } value = kInconclusive;
};

struct Certificate {
  LyapunovCandidate candidate;
  CertificateStatus::Value status = CertificateStatus::kInconclusive;
  Eigen::VectorXd cex_e, cex_x;  // set for kCounterexample
  VerifierStats stats;
  int cegis_rounds = 0;
  std::string method;  // "analytic_quadratic" | "cegis_interval"
};

struct CegisConfig {
  int grid_per_dim = 50;
  int extra_random_samples = 500;
  double learning_rate = 0.01;
  int steps_per_round = 2000;
  int max_rounds = 20;
  int hidden = 6;
  std::uint64_t seed = 0;
  int cex_perturbations = 20;
  double perturb_sigma = 0.05;
  FalsifyOptions falsify;
};

// CEGIS loop: gradient-train a neural candidate on the hinge loss, falsify,
// fold counterexamples back into the sample set, repeat. Exhausting the
// round or box budget yields an inconclusive certificate, not an error.
Certificate learn_iss_lyapunov(const ErrorSystem& error_system,
                               const KFunctionEnvelope& envelope,
                               const VerificationRegion& region,
                               const CegisConfig& cfg);

// Analytic certificate for linear error systems (quadratic V from the
// discrete Lyapunov equation); throws NumericError when rho(Acal) >= 1.
Certificate certify_linear(const ErrorSystem& error_system,
                           const Eigen::MatrixXd& Q,
                           const VerificationRegion& region);

struct PlantStabilityEvidence {
  enum class Kind { kNone, kLinearEigenvalues, kEmpiricalDecay };
  Kind kind = Kind::kNone;
  double spectral_radius = 0.0;  // kLinearEigenvalues
  double decay_ratio = 0.0;      // kEmpiricalDecay: |x(T)| / |x(0)| worst case
  std::string note;
};

// Checks that a decay ratio qualifies as evidence (looser than certified).
PlantStabilityEvidence linear_plant_evidence(const Eigen::MatrixXd& A);
PlantStabilityEvidence empirical_decay_evidence(const SystemModel& model,
                                                int num_probes, double horizon_s,
                                                std::uint64_t seed);

struct CascadeReport {
  bool certified = false;
  std::vector<std::string> evidence_chain;
  std::string reason;  // set when not certified
};

// Cascade conclusion: plant GAS evidence + verified ISS certificate for the
// error system => cascade asymptotically stable. Refuses when a leg is
// missing.
CascadeReport certify_cascade(const PlantStabilityEvidence& plant_evidence,
                              const Certificate& certificate);

// Certificate persistence (JSON; excludes wall-clock so files are
// byte-reproducible). near_origin optionally records the linear hand-off
// certificate for the neural path.
void write_certificate(const Certificate& cert, const std::string& path,
                       std::uint64_t model_hash,
                       const std::optional<Certificate>& near_origin = std::nullopt,
                       const std::optional<CascadeReport>& cascade = std::nullopt);

}  // namespace jrnlab

#include "jrnlab/workbench.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "jrnlab/common.hpp"
#include "jrnlab/rng.hpp"

namespace jrnlab {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

EstimateSet true_states(const std::vector<Trajectory>& split) {
  EstimateSet xs;
  xs.reserve(split.size());
  for (const auto& tr : split) {
    std::vector<Eigen::VectorXd> seq(tr.states.begin() + 1, tr.states.end());
    xs.push_back(std::move(seq));
  }
  return xs;
}

EstimateSet jrn_estimates(const JrnParameters& params,
                          const std::vector<Trajectory>& split) {
  EstimateSet xs;
  xs.reserve(split.size());
  for (const auto& tr : split) {
    // The JRN receives no information about the initial condition.
    auto [x_hat, a] = jrn_forward(params, tr.measurements,
                                  Eigen::VectorXd::Zero(params.n()));
    xs.push_back(std::move(x_hat));
  }
  return xs;
}

}  // namespace

Dataset run_gen(const RunConfig& cfg) {
  SystemModel model = cfg.make_model();
  Dataset ds = generate_dataset(model, cfg.sequences, cfg.steps, cfg.data_seed);
  fs::create_directories(cfg.out);
  write_file(cfg.out + "/config.txt", config_to_text(cfg));
  write_dataset(ds, cfg.out + "/dataset", config_hash(cfg));
  return ds;
}

std::pair<JrnParameters, TrainReport> run_train(const RunConfig& cfg) {
  const std::string ds_dir = cfg.out + "/dataset";
  if (!fs::exists(ds_dir + "/meta.json")) run_gen(cfg);
  Dataset ds = load_dataset(ds_dir);
  if (ds.model_name != cfg.model_name) {
    throw ConfigError("run_train: dataset was generated for model " +
                      ds.model_name + ", config asks for " + cfg.model_name);
  }
  auto [params, report] = train_jrn(ds, cfg.train);
  save_model(params, cfg.out + "/model.json", dataset_hash(ds_dir));
  write_training_log(report, cfg.out + "/training_log.csv");
  return {params, report};
}

ComparisonReport run_eval(const RunConfig& cfg) {
  const std::string ds_dir = cfg.out + "/dataset";
  const std::string model_path = cfg.out + "/model.json";
  if (!fs::exists(model_path)) run_train(cfg);
  Dataset ds = load_dataset(ds_dir);
  ModelFile mf = load_model(model_path);
  SystemModel model = cfg.make_model();

  ComparisonReport report;
  report.T = ds.T;
  report.test_sequences = static_cast<int>(ds.test.size());
  report.config_hash_hex = to_hex(config_hash(cfg));
  report.dataset_hash_hex = to_hex(dataset_hash(ds_dir));
  report.model_hash_hex = to_hex(hash_file(model_path));

  EstimateSet truth = true_states(ds.test);

  auto clock = []() { return std::chrono::steady_clock::now(); };
  {
    auto t0 = clock();
    EstimateSet est = jrn_estimates(mf.params, ds.test);
    report.test_seconds["jrn"] = std::chrono::duration<double>(clock() - t0).count();
    report.rmse["jrn"] = rmse(truth, est);
    report.error_curves["jrn"] = error_curve(truth, est);
  }
  RunFilterOptions fopts;
  fopts.ekf_mode = cfg.ekf_mode;
  fopts.ukf = cfg.ukf;
  fopts.init = cfg.filter_init;
  for (FilterKind kind : cfg.filter_kinds) {
    auto t0 = clock();
    EstimateSet est = run_filter(model, kind, ds.test, fopts);
    const std::string name = to_string(kind);
    report.test_seconds[name] = std::chrono::duration<double>(clock() - t0).count();
    report.rmse[name] = rmse(truth, est);
    report.error_curves[name] = error_curve(truth, est);
  }

  write_report_json(report, cfg.out + "/report.json");
  write_error_curves_csv(report, cfg.out + "/error_curves.csv");
  {
    json t;
    for (const auto& [k, v] : report.test_seconds) t[k] = v;
    write_file(cfg.out + "/timings.json", t.dump(2) + "\n");
  }
  return report;
}

CertificationOutcome run_certify(const RunConfig& cfg,
                                 const std::string& model_path_arg) {
  const std::string model_path =
      model_path_arg.empty() ? cfg.out + "/model.json" : model_path_arg;
  if (!fs::exists(model_path)) {
    if (!model_path_arg.empty())
      throw ConfigError("run_certify: model file not found: " + model_path);
    run_train(cfg);
  }
  ModelFile mf = load_model(model_path);
  SystemModel model = cfg.make_model();
  ErrorSystem es = build_error_system(model, mf.params);

  CertificationOutcome out;
  PlantStabilityEvidence evidence;
  if (model.linear) {
    evidence = linear_plant_evidence(model.linear->first);
  } else {
    evidence = empirical_decay_evidence(model, 32, std::max(20.0, 40.0 * model.dt),
                                        derive_seed(cfg.seed, 400));
  }

  if (mf.params.activation == Activation::kIdentity && es.linear) {
    Eigen::MatrixXd Q =
        cfg.lyapunov_q * Eigen::MatrixXd::Identity(es.n, es.n);
    out.certificate = certify_linear(es, Q, cfg.region);
  } else {
    // Near-origin hand-off: quadratic certificate for the linearized error
    // map, valid inside the exclusion ball where the CEGIS query does not
    // reach.
    Eigen::MatrixXd Q = cfg.lyapunov_q * Eigen::MatrixXd::Identity(es.n, es.n);
    Eigen::MatrixXd P_lin = solve_discrete_lyapunov(es.origin_linearization, Q);
    Certificate near;
    near.method = "analytic_quadratic";
    near.candidate.form = QuadraticCandidate{P_lin};
    near.candidate.envelope = linear_iss_envelope(
        P_lin, Q, es.origin_linearization, Eigen::MatrixXd::Zero(es.n, es.n));
    near.candidate.region = {cfg.region.exclusion_radius, cfg.region.r_x, 0.0};
    near.status = CertificateStatus::kVerified;
    out.near_origin = near;

    CegisConfig cegis = cfg.cegis;
    out.certificate = learn_iss_lyapunov(es, cfg.envelope, cfg.region, cegis);
  }

  out.cascade = certify_cascade(evidence, out.certificate);

  fs::create_directories(cfg.out);
  write_certificate(out.certificate, cfg.out + "/certificate.json",
                    hash_file(model_path), out.near_origin, out.cascade);
  std::ostringstream summary;
  summary << "certification summary\n";
  summary << "  model: " << model_path << "\n";
  summary << "  method: " << out.certificate.method << "\n";
  summary << "  verdict: "
          << (out.certificate.status == CertificateStatus::kVerified
                  ? "verified"
                  : out.certificate.status == CertificateStatus::kCounterexample
                        ? "counterexample"
                        : "inconclusive")
          << "\n";
  for (const auto& line : out.cascade.evidence_chain)
    summary << "  " << line << "\n";
  summary << "  cascade certified: " << (out.cascade.certified ? "yes" : "no")
          << "\n";
  if (!out.cascade.certified) summary << "  reason: " << out.cascade.reason << "\n";
  summary << "  verifier boxes: " << out.certificate.stats.boxes_explored
          << ", max depth: " << out.certificate.stats.max_depth
          << ", cegis rounds: " << out.certificate.cegis_rounds << "\n";
  write_file(cfg.out + "/certificate_summary.txt", summary.str());
  return out;
}

void write_report_json(const ComparisonReport& report, const std::string& path) {
  json j;
  j["format_version"] = 1;
  j["T"] = report.T;
  j["test_sequences"] = report.test_sequences;
  j["config_hash"] = report.config_hash_hex;
  j["dataset_hash"] = report.dataset_hash_hex;
  j["model_hash"] = report.model_hash_hex;
  for (const auto& [name, value] : report.rmse) j["rmse"][name] = value;
  for (const auto& [name, curve] : report.error_curves) {
    json arr = json::array();
    for (double v : curve) arr.push_back(v);
    j["error_curves"][name] = arr;
  }
  write_file(path, j.dump(2) + "\n");
}

void write_error_curves_csv(const ComparisonReport& report,
                            const std::string& path) {
  std::ostringstream out;
  out << "t";
  for (const auto& [name, curve] : report.error_curves) out << ",error_" << name;
  out << "\n";
  for (int t = 0; t < report.T; ++t) {
    out << (t + 1);
    for (const auto& [name, curve] : report.error_curves)
      out << "," << format_g17(curve[t]);
    out << "\n";
  }
  write_file(path, out.str());
}

std::string render_report(const std::string& out_dir) {
  json j = json::parse(read_file(out_dir + "/report.json"));
  std::ostringstream out;
  out << "comparison report (" << out_dir << ")\n";
  out << "  T = " << j.at("T").get<int>()
      << ", test sequences = " << j.at("test_sequences").get<int>() << "\n";
  out << "  hashes: config " << j.at("config_hash").get<std::string>()
      << ", dataset " << j.at("dataset_hash").get<std::string>() << ", model "
      << j.at("model_hash").get<std::string>() << "\n";
  for (const auto& [name, value] : j.at("rmse").items()) {
    const auto& curve = j.at("error_curves").at(name);
    double mean_err = 0.0;
    for (const auto& v : curve) mean_err += v.get<double>();
    mean_err /= static_cast<double>(curve.size());
    const double r = value.get<double>();
    if (std::abs(r * r - mean_err) > 1e-12 * std::max(1.0, mean_err)) {
      throw NumericError("report identity violated for " + name +
                         ": rmse^2 != mean Error(t)");
    }
    out << "  " << name << ": rmse = " << r << ", Error(1) = "
        << curve.front().get<double>() << ", Error(T) = "
        << curve.back().get<double>() << "\n";
  }
  return out.str();
}

}  // namespace jrnlab

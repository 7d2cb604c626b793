#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jrnlab/config.hpp"
#include "jrnlab/metrics.hpp"

namespace jrnlab {

// Per-method comparison on the test split. rmse^2 equals the time-mean of
// the Error(t) curve for each method (checked in tests).
struct ComparisonReport {
  std::map<std::string, double> rmse;
  std::map<std::string, std::vector<double>> error_curves;
  std::map<std::string, double> test_seconds;  // reported, never asserted
  std::string config_hash_hex, dataset_hash_hex, model_hash_hex;
  int T = 0;
  int test_sequences = 0;
};

// Stage entry points used by both the CLI and the acceptance suite. Each
// writes its artifacts under cfg.out and returns the in-memory result.
Dataset run_gen(const RunConfig& cfg);
std::pair<JrnParameters, TrainReport> run_train(const RunConfig& cfg);
ComparisonReport run_eval(const RunConfig& cfg);

struct CertificationOutcome {
  Certificate certificate;
  std::optional<Certificate> near_origin;  // linear hand-off for tanh models
  CascadeReport cascade;
};

CertificationOutcome run_certify(const RunConfig& cfg,
                                 const std::string& model_path = "");

// Reads report.json back and renders a human-readable summary; validates the
// rmse^2 = mean Error(t) identity.
std::string render_report(const std::string& out_dir);

void write_report_json(const ComparisonReport& report, const std::string& path);
void write_error_curves_csv(const ComparisonReport& report, const std::string& path);

}  // namespace jrnlab

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jrnlab/filters.hpp"
#include "jrnlab/jrn.hpp"
#include "jrnlab/lyapunov.hpp"

namespace jrnlab {

// Full description of an experiment run. Parsed from a flat key-value file
// with [model] / [data] / [train] / [filters] / [certify] tables; unknown
// keys are rejected.
struct RunConfig {
  int version = 1;
  std::uint64_t seed = 0;  // base seed; data/train seeds derive when unset
  std::string out = "run";
  int threads = 1;

  // [model]
  std::string model_name = "mass_spring";
  double dt = 0.01;
  double gravity = 9.81;
  double vdp_mu = 1.0;

  // [data]
  int sequences = 100;
  int steps = 300;
  std::uint64_t data_seed = 0;

  // [train]
  TrainConfig train;

  // [filters]
  std::vector<FilterKind> filter_kinds = {FilterKind::kEkf, FilterKind::kUkf};
  EkfLinearization ekf_mode = EkfLinearization::kCurrentEstimate;
  UkfConfig ukf;
  FilterInit filter_init = FilterInit::kZero;

  // [certify]
  KFunctionEnvelope envelope{{KFunction::Kind::kQuadratic, 0.01},
                             {KFunction::Kind::kQuadratic, 100.0},
                             {KFunction::Kind::kQuadratic, 0.01},
                             {KFunction::Kind::kQuadratic, 100.0}};
  VerificationRegion region;
  double lyapunov_q = 1.0;  // Q = q I for the linear certification path
  CegisConfig cegis;

  SystemModel make_model() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical serialization; also the byte stream hashed into meta.json.
std::string config_to_text(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

// Benchmark presets ("mass_spring", "down_pendulum", "reversed_vdp") with
// the training hyperparameters and sampling periods used in the comparison
// experiments.
RunConfig preset(const std::string& name);

}  // namespace jrnlab

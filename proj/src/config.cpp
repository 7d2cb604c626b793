#include "jrnlab/config.hpp"

#include <cctype>
#include <map>
#include <sstream>

#include "jrnlab/common.hpp"
#include "jrnlab/rng.hpp"

namespace jrnlab {

SystemModel RunConfig::make_model() const {
  BuiltinParams params;
  params.gravity = gravity;
  params.vdp_mu = vdp_mu;
  return builtin_model(model_name, dt, params);
}

namespace {

struct KeyValue {
  std::string raw;
  bool used = false;
};

class Table {
 public:
  void insert(const std::string& key, const std::string& value) {
    if (entries_.count(key)) throw ConfigError("duplicate config key: " + key);
    entries_[key] = {value, false};
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    std::string v = it->second.raw;
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
      return v.substr(1, v.size() - 2);
    return v;
  }

  double get_double(const std::string& key, double fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    try {
      std::size_t used = 0;
      double v = std::stod(it->second.raw, &used);
      if (used != it->second.raw.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected a number, got '" +
                        it->second.raw + "'");
    }
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) {
    double v = get_double(key, static_cast<double>(fallback));
    auto i = static_cast<std::int64_t>(v);
    if (static_cast<double>(i) != v)
      throw ConfigError("config key " + key + ": expected an integer");
    return i;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    try {
      return std::stoull(it->second.raw);
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected an unsigned integer");
    }
  }

  void check_all_used(const std::string& table_name) const {
    for (const auto& [key, kv] : entries_) {
      if (!kv.used) {
        throw ConfigError("unknown config key: " +
                          (table_name.empty() ? key : table_name + "." + key));
      }
    }
  }

 private:
  std::map<std::string, KeyValue> entries_;
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

KFunction::Kind kfn_kind_from_string(const std::string& s) {
  if (s == "linear") return KFunction::Kind::kLinear;
  if (s == "quadratic") return KFunction::Kind::kQuadratic;
  throw ConfigError("envelope kind must be 'linear' or 'quadratic', got " + s);
}

std::string to_string(KFunction::Kind k) {
  return k == KFunction::Kind::kLinear ? "linear" : "quadratic";
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  std::map<std::string, Table> tables;
  std::string section;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed table header: " + line);
      section = trim(line.substr(1, line.size() - 2));
      tables[section];  // table may stay empty
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config line: " + line);
    tables[section].insert(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  for (const auto& [name, _] : tables) {
    if (name != "" && name != "model" && name != "data" && name != "train" &&
        name != "filters" && name != "certify") {
      throw ConfigError("unknown config table: [" + name + "]");
    }
  }

  RunConfig cfg;
  Table& top = tables[""];
  cfg.version = static_cast<int>(top.get_int("version", 1));
  if (cfg.version != 1) throw ConfigError("unsupported config version");
  cfg.seed = top.get_u64("seed", 0);
  cfg.out = top.get_string("out", cfg.out);
  cfg.threads = static_cast<int>(top.get_int("threads", 1));

  Table& model = tables["model"];
  cfg.model_name = model.get_string("name", cfg.model_name);
  cfg.dt = model.get_double("dt", cfg.dt);
  cfg.gravity = model.get_double("gravity", cfg.gravity);
  cfg.vdp_mu = model.get_double("vdp_mu", cfg.vdp_mu);

  Table& data = tables["data"];
  cfg.sequences = static_cast<int>(data.get_int("sequences", cfg.sequences));
  cfg.steps = static_cast<int>(data.get_int("steps", cfg.steps));
  cfg.data_seed = data.get_u64("seed", derive_seed(cfg.seed, 100));

  Table& train = tables["train"];
  cfg.train.activation =
      activation_from_string(train.get_string("activation", "identity"));
  cfg.train.hidden = static_cast<int>(train.get_int("hidden", 50));
  cfg.train.learning_rate = train.get_double("learning_rate", 0.01);
  cfg.train.batch_size = static_cast<int>(train.get_int("batch_size", 40));
  cfg.train.max_epochs = static_cast<int>(train.get_int("max_epochs", 600));
  cfg.train.patience = static_cast<int>(train.get_int("patience", 10));
  cfg.train.grad_clip_norm = train.get_double("grad_clip_norm", 0.0);
  cfg.train.seed = train.get_u64("seed", derive_seed(cfg.seed, 200));
  cfg.train.adam_beta1 = train.get_double("adam_beta1", 0.9);
  cfg.train.adam_beta2 = train.get_double("adam_beta2", 0.999);
  cfg.train.adam_eps = train.get_double("adam_eps", 1e-8);

  Table& filters = tables["filters"];
  std::string kinds = filters.get_string("kinds", "ekf,ukf");
  cfg.filter_kinds.clear();
  std::stringstream ks(kinds);
  std::string kind;
  while (std::getline(ks, kind, ',')) {
    if (!kind.empty()) cfg.filter_kinds.push_back(filter_kind_from_string(trim(kind)));
  }
  std::string mode = filters.get_string("ekf_mode", "current_estimate");
  if (mode == "current_estimate") cfg.ekf_mode = EkfLinearization::kCurrentEstimate;
  else if (mode == "fixed_origin") cfg.ekf_mode = EkfLinearization::kFixedOrigin;
  else throw ConfigError("filters.ekf_mode must be current_estimate or fixed_origin");
  cfg.ukf.alpha = filters.get_double("ukf_alpha", 1.0);
  cfg.ukf.beta = filters.get_double("ukf_beta", 2.0);
  cfg.ukf.kappa = filters.get_double("ukf_kappa", 0.0);
  std::string init = filters.get_string("init", "zero");
  if (init == "zero") cfg.filter_init = FilterInit::kZero;
  else if (init == "x0_mean") cfg.filter_init = FilterInit::kX0Mean;
  else throw ConfigError("filters.init must be zero or x0_mean");

  Table& certify = tables["certify"];
  std::string env_kind = certify.get_string("envelope", "quadratic");
  KFunction::Kind kk = kfn_kind_from_string(env_kind);
  cfg.envelope.alpha1 = {kk, certify.get_double("alpha1", 0.01)};
  cfg.envelope.alpha2 = {kk, certify.get_double("alpha2", 100.0)};
  cfg.envelope.alpha3 = {kk, certify.get_double("alpha3", 0.01)};
  cfg.envelope.gamma = {kk, certify.get_double("gamma", 100.0)};
  cfg.region.r_e = certify.get_double("r_e", 2.0);
  cfg.region.r_x = certify.get_double("r_x", 2.0);
  cfg.region.exclusion_radius = certify.get_double("exclusion_radius", 0.1);
  cfg.lyapunov_q = certify.get_double("lyapunov_q", 1.0);
  cfg.cegis.max_rounds = static_cast<int>(certify.get_int("max_rounds", 20));
  cfg.cegis.steps_per_round =
      static_cast<int>(certify.get_int("steps_per_round", 2000));
  cfg.cegis.learning_rate = certify.get_double("cegis_learning_rate", 0.01);
  cfg.cegis.hidden = static_cast<int>(certify.get_int("cegis_hidden", 6));
  cfg.cegis.grid_per_dim = static_cast<int>(certify.get_int("grid_per_dim", 50));
  cfg.cegis.seed = certify.get_u64("seed", derive_seed(cfg.seed, 300));
  cfg.cegis.falsify.max_boxes = certify.get_u64("max_boxes", 1'000'000);

  for (const auto& [name, table] : tables) table.check_all_used(name);

  if (cfg.train.learning_rate <= 0) throw ConfigError("train.learning_rate must be > 0");
  if (cfg.train.patience < 1) throw ConfigError("train.patience must be >= 1");
  if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (cfg.sequences <= 0 || cfg.sequences % 10 != 0)
    throw ConfigError("data.sequences must be a positive multiple of 10");
  if (cfg.steps < 1) throw ConfigError("data.steps must be >= 1");
  if (cfg.dt <= 0) throw ConfigError("model.dt must be > 0");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  return parse_config(read_file(path));
}

std::string config_to_text(const RunConfig& cfg) {
  std::ostringstream out;
  out << "version = " << cfg.version << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "out = \"" << cfg.out << "\"\n";
  out << "threads = " << cfg.threads << "\n\n";
  out << "[model]\n";
  out << "name = \"" << cfg.model_name << "\"\n";
  out << "dt = " << format_g17(cfg.dt) << "\n";
  out << "gravity = " << format_g17(cfg.gravity) << "\n";
  out << "vdp_mu = " << format_g17(cfg.vdp_mu) << "\n\n";
  out << "[data]\n";
  out << "sequences = " << cfg.sequences << "\n";
  out << "steps = " << cfg.steps << "\n";
  out << "seed = " << cfg.data_seed << "\n\n";
  out << "[train]\n";
  out << "activation = \"" << to_string(cfg.train.activation) << "\"\n";
  out << "hidden = " << cfg.train.hidden << "\n";
  out << "learning_rate = " << format_g17(cfg.train.learning_rate) << "\n";
  out << "batch_size = " << cfg.train.batch_size << "\n";
  out << "max_epochs = " << cfg.train.max_epochs << "\n";
  out << "patience = " << cfg.train.patience << "\n";
  out << "grad_clip_norm = " << format_g17(cfg.train.grad_clip_norm) << "\n";
  out << "seed = " << cfg.train.seed << "\n";
  out << "adam_beta1 = " << format_g17(cfg.train.adam_beta1) << "\n";
  out << "adam_beta2 = " << format_g17(cfg.train.adam_beta2) << "\n";
  out << "adam_eps = " << format_g17(cfg.train.adam_eps) << "\n\n";
  out << "[filters]\n";
  out << "kinds = \"";
  for (std::size_t i = 0; i < cfg.filter_kinds.size(); ++i) {
    if (i) out << ",";
    out << to_string(cfg.filter_kinds[i]);
  }
  out << "\"\n";
  out << "ekf_mode = \""
      << (cfg.ekf_mode == EkfLinearization::kCurrentEstimate ? "current_estimate"
                                                             : "fixed_origin")
      << "\"\n";
  out << "ukf_alpha = " << format_g17(cfg.ukf.alpha) << "\n";
  out << "ukf_beta = " << format_g17(cfg.ukf.beta) << "\n";
  out << "ukf_kappa = " << format_g17(cfg.ukf.kappa) << "\n";
  out << "init = \"" << (cfg.filter_init == FilterInit::kZero ? "zero" : "x0_mean")
      << "\"\n\n";
  out << "[certify]\n";
  out << "envelope = \"" << to_string(cfg.envelope.alpha1.kind) << "\"\n";
  out << "alpha1 = " << format_g17(cfg.envelope.alpha1.c) << "\n";
  out << "alpha2 = " << format_g17(cfg.envelope.alpha2.c) << "\n";
  out << "alpha3 = " << format_g17(cfg.envelope.alpha3.c) << "\n";
  out << "gamma = " << format_g17(cfg.envelope.gamma.c) << "\n";
  out << "r_e = " << format_g17(cfg.region.r_e) << "\n";
  out << "r_x = " << format_g17(cfg.region.r_x) << "\n";
  out << "exclusion_radius = " << format_g17(cfg.region.exclusion_radius) << "\n";
  out << "lyapunov_q = " << format_g17(cfg.lyapunov_q) << "\n";
  out << "max_rounds = " << cfg.cegis.max_rounds << "\n";
  out << "steps_per_round = " << cfg.cegis.steps_per_round << "\n";
  out << "cegis_learning_rate = " << format_g17(cfg.cegis.learning_rate) << "\n";
  out << "cegis_hidden = " << cfg.cegis.hidden << "\n";
  out << "grid_per_dim = " << cfg.cegis.grid_per_dim << "\n";
  out << "seed = " << cfg.cegis.seed << "\n";
  out << "max_boxes = " << cfg.cegis.falsify.max_boxes << "\n";
  return out.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
  return fnv1a64(config_to_text(cfg));
}

RunConfig preset(const std::string& name) {
  RunConfig cfg;
  cfg.model_name = name;
  if (name == "mass_spring") {
    cfg.dt = 0.1;
    cfg.sequences = 100;
    cfg.steps = 300;
    cfg.train.activation = Activation::kIdentity;
    cfg.train.learning_rate = 0.01;
    cfg.train.patience = 10;
    cfg.train.grad_clip_norm = 0.0;
    cfg.filter_kinds = {FilterKind::kKf};
  } else if (name == "down_pendulum") {
    cfg.dt = 0.08;
    cfg.sequences = 200;
    cfg.steps = 300;
    cfg.train.activation = Activation::kTanh;
    cfg.train.learning_rate = 0.01;
    cfg.train.patience = 25;
    cfg.train.grad_clip_norm = 10.0;
    cfg.filter_kinds = {FilterKind::kEkf, FilterKind::kUkf};
  } else if (name == "reversed_vdp") {
    cfg.dt = 0.2;
    cfg.sequences = 200;
    cfg.steps = 200;
    cfg.train.activation = Activation::kTanh;
    cfg.train.learning_rate = 0.001;
    cfg.train.patience = 25;
    cfg.train.grad_clip_norm = 10.0;
    cfg.filter_kinds = {FilterKind::kEkf, FilterKind::kUkf};
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  cfg.train.batch_size = 40;
  cfg.train.hidden = 50;
  cfg.train.max_epochs = 600;
  cfg.out = "runs/" + name;
  cfg.data_seed = derive_seed(cfg.seed, 100);
  cfg.train.seed = derive_seed(cfg.seed, 200);
  cfg.cegis.seed = derive_seed(cfg.seed, 300);
  return cfg;
}

}  // namespace jrnlab

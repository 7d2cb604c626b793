#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "jrnlab/common.hpp"
#include "jrnlab/rng.hpp"
#include "jrnlab/verifier.hpp"
#include "jrnlab/workbench.hpp"

using namespace jrnlab;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string preset_name;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

RunConfig resolve_config(const GlobalArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) {
    cfg = load_config(args.config_path);
  } else if (!args.preset_name.empty()) {
    cfg = preset(args.preset_name);
  } else {
    throw ConfigError("pass --config <file> or --preset <name>");
  }
  if (args.seed_set) {
    cfg.seed = args.seed;
    cfg.data_seed = derive_seed(cfg.seed, 100);
    cfg.train.seed = derive_seed(cfg.seed, 200);
    cfg.cegis.seed = derive_seed(cfg.seed, 300);
  }
  if (!args.out.empty()) cfg.out = args.out;
  if (args.threads > 0) cfg.threads = args.threads;
  return cfg;
}

void add_globals(CLI::App* cmd, GlobalArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration file");
  cmd->add_option("--preset", args.preset_name,
                  "builtin preset: mass_spring | down_pendulum | reversed_vdp");
  cmd->add_option("--seed", args.seed, "base seed override")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--out", args.out, "output directory override");
  cmd->add_option("--threads", args.threads, "worker threads (reserved)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"jrnlab: recurrent state estimation with ISS certification"};
  app.require_subcommand(1);

  GlobalArgs args;
  std::string model_path, smt2_path, report_dir;
  std::uint64_t vq_max_boxes = 1'000'000;

  CLI::App* gen = app.add_subcommand("gen", "generate a dataset");
  add_globals(gen, args);
  CLI::App* train = app.add_subcommand("train", "train the JRN estimator");
  add_globals(train, args);
  CLI::App* eval = app.add_subcommand("eval", "evaluate JRN vs filters on the test split");
  add_globals(eval, args);
  CLI::App* certify = app.add_subcommand("certify", "certify error-system stability");
  add_globals(certify, args);
  certify->add_option("--model", model_path, "model file (defaults to <out>/model.json)");
  CLI::App* verify = app.add_subcommand("verify-query", "falsify an SMT-LIB query file");
  verify->add_option("--smt2", smt2_path, "query file (jrnlab dialect)")->required();
  verify->add_option("--max-boxes", vq_max_boxes, "box budget");
  CLI::App* report = app.add_subcommand("report", "summarize a finished run");
  report->add_option("--out", report_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      RunConfig cfg = resolve_config(args);
      Dataset ds = run_gen(cfg);
      std::cout << "dataset: " << ds.train.size() << "/" << ds.val.size() << "/"
                << ds.test.size() << " sequences, T=" << ds.T << " -> " << cfg.out
                << "/dataset\n";
    } else if (train->parsed()) {
      RunConfig cfg = resolve_config(args);
      auto [params, rep] = run_train(cfg);
      std::cout << "trained " << cfg.model_name << ": best epoch "
                << rep.best_epoch << ", val loss "
                << rep.val_loss[rep.best_epoch] << ", " << rep.wall_seconds
                << " s -> " << cfg.out << "/model.json\n";
    } else if (eval->parsed()) {
      RunConfig cfg = resolve_config(args);
      ComparisonReport rep = run_eval(cfg);
      std::cout << "test RMSE:";
      for (const auto& [name, value] : rep.rmse) std::cout << "  " << name << "=" << value;
      std::cout << "\nreport -> " << cfg.out << "/report.json\n";
    } else if (certify->parsed()) {
      RunConfig cfg = resolve_config(args);
      CertificationOutcome outcome = run_certify(cfg, model_path);
      std::cout << read_file(cfg.out + "/certificate_summary.txt");
      if (!outcome.cascade.certified) return kExitNotCertified;
    } else if (verify->parsed()) {
      FalsifyQuery query = parse_smtlib(read_file(smt2_path));
      FalsifyOptions opts;
      opts.max_boxes = vq_max_boxes;
      FalsifyResult res = falsify(query, opts);
      std::cout << "verdict: " << to_string(res.verdict) << " (boxes "
                << res.stats.boxes_explored << ", depth " << res.stats.max_depth
                << ", " << res.stats.wall_seconds << " s)\n";
      if (res.verdict == Verdict::kCounterexample) {
        std::cout << "counterexample:";
        for (int i = 0; i < res.counterexample.size(); ++i)
          std::cout << " " << query.var_names[i] << "="
                    << format_g17(res.counterexample(i));
        std::cout << "\nviolated: " << query.violation_names[res.violated_condition]
                  << " (value " << res.violation_value << ")\n";
        return kExitNotCertified;
      }
      if (res.verdict == Verdict::kDepthExhausted) return kExitNumerical;
    } else if (report->parsed()) {
      std::cout << render_report(report_dir);
    }
  } catch (const ConfigError& err) {
    std::cerr << "configuration error: " << err.what() << "\n";
    return kExitValidation;
  } catch (const IoError& err) {
    std::cerr << "io error: " << err.what() << "\n";
    return kExitValidation;
  } catch (const NumericError& err) {
    std::cerr << "numerical error: " << err.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

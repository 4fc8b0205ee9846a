#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "semaug/experiment.hpp"

// Experiment runner. Verbs: run <config>, sweep <config> <param> <v1,v2,...>,
// compare <config>. --out/--seeds/--mode override the corresponding config
// keys. Exit codes: 0 success, 2 config error, 3 numerical failure.

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::string seeds_override;
  std::string mode_override;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("config", args.config_path, "config file (key = value lines)")->required();
  cmd->add_option("--out", args.out_override, "override the output directory");
  cmd->add_option("--seeds", args.seeds_override, "override the seed list (comma separated)");
  cmd->add_option("--mode", args.mode_override,
                  "override the training mode (meta|naive_joint|classwise_isda|ce_baseline)");
}

semaug::ExperimentConfig load_config(const CommonArgs& args) {
  semaug::ExperimentConfig cfg = semaug::parse_config_file(args.config_path);
  if (!args.out_override.empty()) semaug::apply_override(cfg, "out_dir", args.out_override);
  if (!args.seeds_override.empty()) semaug::apply_override(cfg, "seeds", args.seeds_override);
  if (!args.mode_override.empty()) semaug::apply_override(cfg, "mode", args.mode_override);
  return cfg;
}

std::vector<std::string> split_commas(const std::string& joined) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  while (start <= joined.size()) {
    const std::string::size_type comma = joined.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(joined.substr(start));
      break;
    }
    out.push_back(joined.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semantic-augmentation training experiments"};
  app.require_subcommand(1);

  CommonArgs run_args;
  CLI::App* run_cmd = app.add_subcommand("run", "train every seed of one config");
  add_common(run_cmd, run_args);

  CommonArgs sweep_args;
  std::string sweep_param;
  std::string sweep_values;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "rerun one config across parameter values");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("param", sweep_param, "config key to sweep")->required();
  sweep_cmd->add_option("values", sweep_values, "comma-separated value list")->required();

  CommonArgs compare_args;
  CLI::App* compare_cmd =
      app.add_subcommand("compare", "baseline / per-class / predicted-covariance comparison");
  add_common(compare_cmd, compare_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) return semaug::cmd_run(load_config(run_args));
    if (sweep_cmd->parsed())
      return semaug::cmd_sweep(load_config(sweep_args), sweep_param, split_commas(sweep_values));
    return semaug::cmd_compare(load_config(compare_args));
  } catch (const semaug::ConfigError& e) {
    if (e.line > 0)
      std::cerr << "config error (line " << e.line << "): " << e.what() << "\n";
    else
      std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const semaug::NumericalError& e) {
    std::cerr << "numerical failure in the " << e.phase << ": " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

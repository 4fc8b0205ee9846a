#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "semaug/datakit.hpp"
#include "semaug/trainer.hpp"

// Experiment plumbing: the flat key = value config format, overrides, and
// the run / sweep / compare commands with their CSV and JSON outputs.

namespace semaug {

struct ConfigError : std::runtime_error {
  ConfigError(int line_number, const std::string& what)
      : std::runtime_error(what), line(line_number) {}
  int line;  // 1-based config line; 0 when raised by an override
};

struct ExperimentConfig {
  TrainConfig train;
  bool use_synthetic = true;
  SynthConfig synth;
  std::string idx_train_images;
  std::string idx_train_labels;
  std::string idx_test_images;
  std::string idx_test_labels;
  std::uint64_t data_seed = 7;
  std::string out_dir = "out";
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

// Parses `key = value` lines; `#` starts a comment, lists are comma-joined.
// Unknown keys and bad values raise ConfigError with the offending line.
ExperimentConfig parse_config_file(const std::string& path);
// Applies one key/value pair (same keys as the file). ConfigError line 0.
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

std::string mode_name(TrainMode mode);

// Trains every seed, writing metrics_seed<k>.csv per seed and summary.json
// with the mean and stddev of final test accuracy. Returns the exit status.
int cmd_run(const ExperimentConfig& cfg);
// Reruns cmd_run once per value of `param` in a subdirectory, then writes a
// combined table (value, mean, stddev, wall-clock seconds).
int cmd_sweep(const ExperimentConfig& base, const std::string& param,
              const std::vector<std::string>& values);
// Runs the plain-baseline, per-class, and predicted-covariance modes on the
// same data and seeds; writes a three-row accuracy table.
int cmd_compare(const ExperimentConfig& cfg);

}  // namespace semaug

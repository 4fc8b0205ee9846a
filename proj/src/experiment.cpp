#include "semaug/experiment.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace semaug {
namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  const std::size_t first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const std::size_t last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": not a number: " + value);
  }
  if (used != value.size()) throw std::invalid_argument(key + ": not a number: " + value);
  return out;
}

long long parse_ll(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": not an integer: " + value);
  }
  if (used != value.size()) throw std::invalid_argument(key + ": not an integer: " + value);
  return out;
}

int parse_int(const std::string& key, const std::string& value) {
  return static_cast<int>(parse_ll(key, value));
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  const long long v = parse_ll(key, value);
  if (v < 0) throw std::invalid_argument(key + ": must be nonnegative: " + value);
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument(key + ": expected true/false: " + value);
}

TrainMode parse_mode(const std::string& value) {
  if (value == "meta") return TrainMode::meta;
  if (value == "naive_joint") return TrainMode::naive_joint;
  if (value == "classwise_isda") return TrainMode::classwise_isda;
  if (value == "ce_baseline") return TrainMode::ce_baseline;
  throw std::invalid_argument("mode: unknown value: " + value);
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  TrainConfig& t = cfg.train;
  if (key == "mode") {
    t.mode = parse_mode(value);
  } else if (key == "lambda0") {
    t.lambda0 = parse_double(key, value);
  } else if (key == "schedule_alpha") {
    t.schedule_alpha = parse_double(key, value);
  } else if (key == "total_iterations") {
    t.total_iterations = parse_int(key, value);
  } else if (key == "batch_size") {
    t.batch_size = parse_int(key, value);
  } else if (key == "lr_f") {
    t.lr_f = parse_double(key, value);
  } else if (key == "lr_f_schedule") {
    if (value == "cosine") t.lr_f_schedule = LrfSchedule::cosine;
    else if (value == "constant") t.lr_f_schedule = LrfSchedule::constant;
    else if (value == "theoretical") t.lr_f_schedule = LrfSchedule::theoretical;
    else throw std::invalid_argument("lr_f_schedule: unknown value: " + value);
  } else if (key == "lr_g") {
    t.lr_g = parse_double(key, value);
  } else if (key == "lr_g_schedule") {
    if (value == "constant") t.lr_g_schedule = LrgSchedule::constant;
    else if (value == "theoretical") t.lr_g_schedule = LrgSchedule::theoretical;
    else throw std::invalid_argument("lr_g_schedule: unknown value: " + value);
  } else if (key == "meta_update_every") {
    t.meta_update_every = parse_int(key, value);
  } else if (key == "freeze_blocks") {
    t.freeze_blocks = parse_int(key, value);
  } else if (key == "freeze_real_update") {
    t.freeze_real_update = parse_bool(key, value);
  } else if (key == "theory_k") {
    t.theory_k = parse_double(key, value);
  } else if (key == "theory_c") {
    t.theory_c = parse_double(key, value);
  } else if (key == "theory_l") {
    t.theory_l = parse_double(key, value);
  } else if (key == "theory_sigma") {
    t.theory_sigma = parse_double(key, value);
  } else if (key == "epsilon_scale") {
    t.epsilon_scale = parse_double(key, value);
  } else if (key == "exact_mode_max_params") {
    t.exact_mode_max_params = parse_int(key, value);
  } else if (key == "metric_interval") {
    t.metric_interval = parse_int(key, value);
  } else if (key == "block_widths") {
    std::vector<int> widths;
    for (const std::string& part : split_list(value)) widths.push_back(parse_int(key, part));
    t.block_widths = std::move(widths);
  } else if (key == "covnet_hidden") {
    t.covnet_hidden = parse_int(key, value);
  } else if (key == "dataset") {
    if (value == "synthetic") cfg.use_synthetic = true;
    else if (value == "idx") cfg.use_synthetic = false;
    else throw std::invalid_argument("dataset: expected synthetic or idx: " + value);
  } else if (key == "idx_train_images") {
    cfg.idx_train_images = value;
  } else if (key == "idx_train_labels") {
    cfg.idx_train_labels = value;
  } else if (key == "idx_test_images") {
    cfg.idx_test_images = value;
  } else if (key == "idx_test_labels") {
    cfg.idx_test_labels = value;
  } else if (key == "data_seed") {
    cfg.data_seed = parse_u64(key, value);
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else if (key == "seeds") {
    std::vector<std::uint64_t> seeds;
    for (const std::string& part : split_list(value)) seeds.push_back(parse_u64(key, part));
    if (seeds.empty()) throw std::invalid_argument("seeds: list must be non-empty");
    cfg.seeds = std::move(seeds);
  } else if (key == "synth_meta_categories") {
    cfg.synth.meta_categories = parse_int(key, value);
  } else if (key == "synth_subclasses_per_meta") {
    cfg.synth.subclasses_per_meta = parse_int(key, value);
  } else if (key == "synth_input_dim") {
    cfg.synth.input_dim = parse_int(key, value);
  } else if (key == "synth_train_per_class") {
    cfg.synth.train_per_class = parse_int(key, value);
  } else if (key == "synth_test_per_class") {
    cfg.synth.test_per_class = parse_int(key, value);
  } else if (key == "synth_meta_separation") {
    cfg.synth.meta_separation = parse_double(key, value);
  } else if (key == "synth_sub_separation") {
    cfg.synth.sub_separation = parse_double(key, value);
  } else if (key == "synth_pose_states") {
    cfg.synth.pose_states = parse_int(key, value);
  } else if (key == "synth_pose_noise_scale") {
    cfg.synth.pose_noise_scale = parse_double(key, value);
  } else if (key == "synth_base_noise_scale") {
    cfg.synth.base_noise_scale = parse_double(key, value);
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "iteration,train_loss,meta_loss,test_acc,mean_cov,meta_grad_norm_sq,"
        "running_min_grad,scatter_ratio\n";
  char buf[512];
  for (const MetricsRecord& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.iteration, r.train_loss, r.meta_loss, r.test_acc, r.mean_cov,
                  r.meta_grad_norm_sq, r.running_min_grad, r.scatter_ratio_val);
    os << buf;
  }
}

std::pair<Dataset, Dataset> build_datasets(const ExperimentConfig& cfg) {
  if (cfg.use_synthetic) return gen_synthetic(cfg.synth, RngState{cfg.data_seed, 0});
  if (cfg.idx_train_images.empty() || cfg.idx_train_labels.empty() ||
      cfg.idx_test_images.empty() || cfg.idx_test_labels.empty())
    throw std::invalid_argument("dataset = idx requires all four idx_* paths");
  return {load_idx(cfg.idx_train_images, cfg.idx_train_labels),
          load_idx(cfg.idx_test_images, cfg.idx_test_labels)};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

struct RunSummary {
  std::vector<double> finals;
  double mean = 0.0;
  double stddev = 0.0;
};

RunSummary run_all_seeds(const ExperimentConfig& cfg, const Dataset& train, const Dataset& test,
                         bool write_csvs) {
  if (cfg.seeds.empty()) throw std::invalid_argument("seed list must be non-empty");
  RunSummary summary;
  for (const std::uint64_t seed : cfg.seeds) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const RunResult result = run(tc, train, test);
    if (write_csvs)
      write_metrics_csv(cfg.out_dir + "/metrics_seed" + std::to_string(seed) + ".csv",
                        result.metrics);
    summary.finals.push_back(result.metrics.back().test_acc);
  }
  summary.mean = mean_of(summary.finals);
  summary.stddev = stddev_of(summary.finals, summary.mean);
  return summary;
}

std::string sanitize_dir_component(const std::string& value) {
  std::string out;
  for (char c : value)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ||
                          c == '_'
                      ? c
                      : '-');
  return out;
}

}  // namespace

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(0, "cannot open config file: " + path);
  ExperimentConfig cfg;
  std::string line;
  int line_number = 0;
  while (std::getline(is, line)) {
    ++line_number;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(line_number, "expected key = value, got: " + stripped);
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError(line_number, "empty key");
    try {
      set_key(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(line_number, e.what());
    }
  }
  return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  try {
    set_key(cfg, key, value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
}

std::string mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::meta: return "meta";
    case TrainMode::naive_joint: return "naive_joint";
    case TrainMode::classwise_isda: return "classwise_isda";
    case TrainMode::ce_baseline: return "ce_baseline";
  }
  return "unknown";
}

int cmd_run(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const auto [train, test] = build_datasets(cfg);
  const RunSummary summary = run_all_seeds(cfg, train, test, /*write_csvs=*/true);

  nlohmann::json j;
  j["mode"] = mode_name(cfg.train.mode);
  j["iterations"] = cfg.train.total_iterations;
  j["seeds"] = cfg.seeds;
  j["final_test_acc"] = summary.finals;
  j["mean_final_test_acc"] = summary.mean;
  j["stddev_final_test_acc"] = summary.stddev;
  std::ofstream os(cfg.out_dir + "/summary.json");
  if (!os) throw std::runtime_error("cannot write " + cfg.out_dir + "/summary.json");
  os << j.dump(2) << "\n";

  std::cout << mode_name(cfg.train.mode) << ": mean final test acc " << summary.mean
            << " (stddev " << summary.stddev << ") over " << cfg.seeds.size() << " seed(s)\n";
  return 0;
}

int cmd_sweep(const ExperimentConfig& base, const std::string& param,
              const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError(0, "sweep: empty value list");
  {
    ExperimentConfig probe = base;  // reject unknown parameters up front
    apply_override(probe, param, values.front());
  }
  fs::create_directories(base.out_dir);

  struct SweepRow {
    std::string value;
    double mean, stddev, seconds;
  };
  std::vector<SweepRow> rows;
  for (const std::string& value : values) {
    ExperimentConfig point = base;
    apply_override(point, param, value);
    point.out_dir = base.out_dir + "/" + param + "_" + sanitize_dir_component(value);
    const auto start = std::chrono::steady_clock::now();
    cmd_run(point);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ifstream summary_in(point.out_dir + "/summary.json");
    const nlohmann::json j = nlohmann::json::parse(summary_in);
    rows.push_back({value, j["mean_final_test_acc"], j["stddev_final_test_acc"], seconds});
  }

  const std::string table_path = base.out_dir + "/sweep_summary.csv";
  std::ofstream os(table_path);
  if (!os) throw std::runtime_error("cannot write " + table_path);
  os << "value,mean_final_test_acc,stddev_final_test_acc,wall_clock_seconds\n";
  char buf[256];
  for (const SweepRow& row : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.3f\n", row.value.c_str(), row.mean,
                  row.stddev, row.seconds);
    os << buf;
  }
  std::cout << "sweep over " << param << " finished; table at " << table_path << "\n";
  return 0;
}

int cmd_compare(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const auto [train, test] = build_datasets(cfg);

  const TrainMode modes[3] = {TrainMode::ce_baseline, TrainMode::classwise_isda,
                              TrainMode::meta};
  std::vector<RunSummary> summaries;
  for (const TrainMode mode : modes) {
    ExperimentConfig point = cfg;
    point.train.mode = mode;
    summaries.push_back(run_all_seeds(point, train, test, /*write_csvs=*/false));
  }

  std::ostringstream table;
  table << "method";
  for (const std::uint64_t seed : cfg.seeds) table << ",acc_seed" << seed;
  table << ",mean\n";
  char buf[64];
  for (std::size_t m = 0; m < 3; ++m) {
    table << mode_name(modes[m]);
    for (const double acc : summaries[m].finals) {
      std::snprintf(buf, sizeof buf, ",%.17g", acc);
      table << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g", summaries[m].mean);
    table << buf << "\n";
  }

  const std::string table_path = cfg.out_dir + "/compare.csv";
  std::ofstream os(table_path);
  if (!os) throw std::runtime_error("cannot write " + table_path);
  os << table.str();
  std::cout << table.str();
  return 0;
}

}  // namespace semaug

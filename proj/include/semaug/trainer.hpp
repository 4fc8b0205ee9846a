#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "semaug/datakit.hpp"
#include "semaug/metagrad.hpp"

// The full training loop: split-and-swap half batches, the three-phase
// lookahead / covnet / real update cycle, augmentation-strength and
// learning-rate schedules, the comparison modes, evaluation, and metrics.

namespace semaug {

enum class TrainMode { meta, naive_joint, classwise_isda, ce_baseline };

enum class LrfSchedule { cosine, constant, theoretical };
enum class LrgSchedule { constant, theoretical };

struct TrainConfig {
  TrainMode mode = TrainMode::meta;
  double lambda0 = 1.0;
  double schedule_alpha = 1.0;  // exponent of the strength ramp (t/T)^alpha
  int total_iterations = 2000;
  int batch_size = 64;
  double lr_f = 0.05;
  LrfSchedule lr_f_schedule = LrfSchedule::cosine;
  double lr_g = 0.05;
  LrgSchedule lr_g_schedule = LrgSchedule::constant;
  int meta_update_every = 1;
  int freeze_blocks = 0;
  bool freeze_real_update = false;  // freezing applies to the real phase too
  std::uint64_t seed = 1;
  // Constants of the theoretical schedules alpha_t = min{1, k/T} and
  // beta_t = min{1/L, c/(sigma sqrt(T))}.
  double theory_k = 1.0;
  double theory_c = 1.0;
  double theory_l = 1.0;
  double theory_sigma = 1.0;
  double epsilon_scale = 1e-2;        // finite-difference covnet gradient step
  int exact_mode_max_params = 10000;  // larger classifiers switch to fd mode
  int metric_interval = 50;
  std::vector<int> block_widths = {32, 32, 32};
  int covnet_hidden = 0;  // 0 means a quarter of the feature dimension
};

struct MetricsRecord {
  int iteration = 0;
  double train_loss = 0.0;
  double meta_loss = 0.0;
  double test_acc = 0.0;
  double mean_cov = 0.0;
  double meta_grad_norm_sq = 0.0;
  double running_min_grad = 0.0;
  double scatter_ratio_val = 0.0;
};

// Thrown when a training phase produces non-finite numbers; `phase` names it.
struct NumericalError : std::runtime_error {
  NumericalError(const std::string& phase_name, const std::string& what)
      : std::runtime_error(what), phase(phase_name) {}
  std::string phase;
};

struct TrainState {
  ClassifierParams classifier;
  CovNetParams covnet;
  ClasswiseCovTable table{1, 1};
  int iteration = 0;
  RngState split_rng{0, 0};
  // Diagnostics of the most recent iteration.
  double last_train_loss = 0.0;
  double last_meta_loss = 0.0;
  double last_meta_grad_norm_sq = 0.0;
  bool meta_updated_yet = false;
  bool shift_clamped = false;
};

// Augmentation strength ramp (t/T)^alpha * lambda0.
double lambda_at(int t, int total, double lambda0, double schedule_alpha);
// Classifier and covnet step sizes at iteration t.
std::pair<double, double> lr_at(int t, const TrainConfig& cfg);

// Seeded in-place shuffle, then the first ceil(n/2) indices form the
// training half and the rest the held-out half.
std::pair<std::vector<int>, std::vector<int>> split_batch(std::vector<int> batch, RngState& rng);

// Fraction of samples whose highest logit (ties -> lowest class index)
// matches the label.
double evaluate(const ClassifierParams& cls, const Dataset& data);

// trace(between-class scatter) / (trace(within-class scatter) + 1e-12).
double scatter_ratio(const std::vector<std::vector<double>>& features,
                     std::span<const int> labels);

// One full iteration on a pre-split batch. The lookahead/covnet/real cycle
// runs on (train half, held-out half), then the halves swap roles and the
// cycle runs again; the other modes process the two halves sequentially so
// every mode sees the identical sample schedule.
void train_step(TrainState& state, std::span<const Example> train_half,
                std::span<const Example> meta_half, const TrainConfig& cfg);

TrainState init_state(const TrainConfig& cfg, const Dataset& train);

struct RunResult {
  std::vector<MetricsRecord> metrics;
  TrainState final_state;
};

// Full run: iterate batches for total_iterations steps, recording metrics at
// iteration 0, every metric_interval, and the final iteration.
RunResult run(const TrainConfig& cfg, const Dataset& train, const Dataset& test);

}  // namespace semaug

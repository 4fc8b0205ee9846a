#include "semaug/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace semaug {
namespace {

void require(bool ok, const char* message) {
  if (!ok) throw std::invalid_argument(message);
}

void check_finite(double value, const char* phase, const char* what) {
  if (!std::isfinite(value))
    throw NumericalError(phase, std::string(what) + " became non-finite in the " + phase);
}

void validate_config(const TrainConfig& cfg, const Dataset& train) {
  require(cfg.total_iterations >= 0, "config: total_iterations must be >= 0");
  require(cfg.batch_size >= 2, "config: batch_size must be >= 2");
  require(cfg.batch_size <= train.size(), "config: batch_size exceeds training set size");
  require(cfg.lambda0 >= 0.0, "config: lambda0 must be >= 0");
  require(cfg.schedule_alpha > 0.0, "config: schedule_alpha must be positive");
  require(cfg.lr_f >= 0.0 && cfg.lr_g >= 0.0, "config: learning rates must be >= 0");
  require(cfg.meta_update_every >= 1, "config: meta_update_every must be >= 1");
  require(cfg.metric_interval >= 1, "config: metric_interval must be >= 1");
  require(cfg.freeze_blocks >= 0 &&
              cfg.freeze_blocks <= static_cast<int>(cfg.block_widths.size()),
          "config: freeze_blocks out of range");
  require(cfg.epsilon_scale > 0.0, "config: epsilon_scale must be positive");
  require(cfg.covnet_hidden >= 0, "config: covnet_hidden must be >= 0");
  for (int w : cfg.block_widths) require(w >= 1, "config: block widths must be >= 1");
  if (cfg.lr_f_schedule == LrfSchedule::theoretical ||
      cfg.lr_g_schedule == LrgSchedule::theoretical)
    require(cfg.theory_k > 0.0 && cfg.theory_c > 0.0 && cfg.theory_l > 0.0 &&
                cfg.theory_sigma > 0.0,
            "config: theoretical schedule constants must be positive");
}

// Deterministic probe: up to 64 samples taken at a fixed stride so every
// class of a class-ordered dataset is represented.
std::vector<int> probe_indices(int n) {
  const int stride = (n + 63) / 64;
  std::vector<int> idx;
  for (int i = 0; i * stride < n && static_cast<int>(idx.size()) < 64; ++i)
    idx.push_back(i * stride);
  return idx;
}

}  // namespace

double lambda_at(int t, int total, double lambda0, double schedule_alpha) {
  if (total < 1) throw std::invalid_argument("lambda_at: total iterations must be >= 1");
  if (t < 0 || t > total) throw std::invalid_argument("lambda_at: iteration out of range");
  return std::pow(static_cast<double>(t) / static_cast<double>(total), schedule_alpha) * lambda0;
}

std::pair<double, double> lr_at(int t, const TrainConfig& cfg) {
  const double total = static_cast<double>(cfg.total_iterations);
  double alpha = cfg.lr_f;
  switch (cfg.lr_f_schedule) {
    case LrfSchedule::cosine:
      alpha = cfg.lr_f * 0.5 * (1.0 + std::cos(std::numbers::pi * t / total));
      break;
    case LrfSchedule::constant:
      break;
    case LrfSchedule::theoretical:
      require(cfg.theory_k > 0.0, "lr_at: theoretical constant k must be positive");
      alpha = std::min(1.0, cfg.theory_k / total);
      break;
  }
  double beta = cfg.lr_g;
  switch (cfg.lr_g_schedule) {
    case LrgSchedule::constant:
      break;
    case LrgSchedule::theoretical:
      require(cfg.theory_c > 0.0 && cfg.theory_l > 0.0 && cfg.theory_sigma > 0.0,
              "lr_at: theoretical constants must be positive");
      beta = std::min(1.0 / cfg.theory_l, cfg.theory_c / (cfg.theory_sigma * std::sqrt(total)));
      break;
  }
  return {alpha, beta};
}

std::pair<std::vector<int>, std::vector<int>> split_batch(std::vector<int> batch, RngState& rng) {
  if (batch.size() < 2) throw std::invalid_argument("split_batch: need at least two samples");
  rng_shuffle(batch, rng);
  const std::size_t first = (batch.size() + 1) / 2;
  std::vector<int> train_half(batch.begin(), batch.begin() + first);
  std::vector<int> meta_half(batch.begin() + first, batch.end());
  return {std::move(train_half), std::move(meta_half)};
}

double evaluate(const ClassifierParams& cls, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  int correct = 0;
  for (int i = 0; i < data.size(); ++i) {
    const ClassifierTape tape = classifier_forward(data.inputs.row(i), cls);
    int best = 0;
    for (int j = 1; j < static_cast<int>(tape.logits.size()); ++j)
      if (tape.logits[j] > tape.logits[best]) best = j;
    if (best == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / data.size();
}

double scatter_ratio(const std::vector<std::vector<double>>& features,
                     std::span<const int> labels) {
  if (features.empty() || features.size() != labels.size())
    throw std::invalid_argument("scatter_ratio: features/labels mismatch");
  const std::size_t dim = features.front().size();
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;

  std::vector<std::vector<double>> class_mean(classes, std::vector<double>(dim, 0.0));
  std::vector<int> counts(classes, 0);
  std::vector<double> grand(dim, 0.0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const int c = labels[i];
    if (c < 0) throw std::invalid_argument("scatter_ratio: negative label");
    ++counts[c];
    for (std::size_t d = 0; d < dim; ++d) {
      class_mean[c][d] += features[i][d];
      grand[d] += features[i][d];
    }
  }
  int present = 0;
  for (int c = 0; c < classes; ++c)
    if (counts[c] > 0) ++present;
  if (present < 2) throw std::invalid_argument("scatter_ratio: need at least two classes");
  for (int c = 0; c < classes; ++c)
    if (counts[c] > 0)
      for (std::size_t d = 0; d < dim; ++d) class_mean[c][d] /= counts[c];
  for (std::size_t d = 0; d < dim; ++d) grand[d] /= static_cast<double>(features.size());

  double within = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::vector<double>& mu = class_mean[labels[i]];
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = features[i][d] - mu[d];
      within += diff * diff;
    }
  }
  double between = 0.0;
  for (int c = 0; c < classes; ++c) {
    if (counts[c] == 0) continue;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = class_mean[c][d] - grand[d];
      between += counts[c] * diff * diff;
    }
  }
  return between / (within + 1e-12);
}

TrainState init_state(const TrainConfig& cfg, const Dataset& train) {
  const RngState base{cfg.seed, 0};
  TrainState state;
  ClassifierArch cls_arch{train.input_dim(), cfg.block_widths, train.classes()};
  RngState cls_rng = rng_derive(base, 101);
  state.classifier = init_classifier(cls_arch, cls_rng);
  const int feature_dim =
      cfg.block_widths.empty() ? train.input_dim() : cfg.block_widths.back();
  CovNetArch cov_arch{feature_dim, cfg.covnet_hidden};
  RngState cov_rng = rng_derive(base, 102);
  state.covnet = init_covnet(cov_arch, cov_rng);
  state.table = ClasswiseCovTable(train.classes(), feature_dim);
  state.split_rng = rng_derive(base, 103);
  return state;
}

namespace {

// One lookahead / covnet-update / real-update cycle of the default mode.
void meta_cycle(TrainState& state, std::span<const Example> train_half,
                std::span<const Example> meta_half, const TrainConfig& cfg, double lambda,
                double alpha, double beta, FreezeMask meta_mask, FreezeMask real_mask,
                double& loss_acc, double& meta_loss_acc, double& meta_grad_acc,
                int& meta_cycles) {
  auto [pseudo, rec] =
      pseudo_step(state.classifier, state.covnet, train_half, lambda, alpha, meta_mask);
  check_finite(rec.train_loss, "pseudo update", "training loss");
  state.shift_clamped = state.shift_clamped || rec.clamped;

  if (state.iteration % cfg.meta_update_every == 0) {
    const bool exact =
        state.classifier.param_count() <= static_cast<std::size_t>(cfg.exact_mode_max_params);
    MetaGradStats stats;
    const CovNetParams grad =
        exact ? meta_gradient_exact(rec, state.covnet, meta_half, &stats)
              : meta_gradient_fd(rec, state.covnet, meta_half, cfg.epsilon_scale, &stats);
    const double norm_sq = param_norm_sq(grad);
    check_finite(stats.meta_loss, "meta update", "held-out loss");
    check_finite(norm_sq, "meta update", "covnet gradient");
    state.covnet = sgd_step(state.covnet, grad, beta);
    meta_loss_acc += stats.meta_loss;
    meta_grad_acc += norm_sq;
    ++meta_cycles;
  }

  BatchLoss real =
      batch_train_loss(state.classifier, state.covnet, train_half, lambda, real_mask, false);
  check_finite(real.loss, "real update", "training loss");
  state.shift_clamped = state.shift_clamped || real.clamped;
  state.classifier = sgd_step(state.classifier, real.cls_grad, alpha, real_mask);
  loss_acc += real.loss;
}

}  // namespace

void train_step(TrainState& state, std::span<const Example> train_half,
                std::span<const Example> meta_half, const TrainConfig& cfg) {
  const int t = state.iteration;
  const auto [alpha, beta] = lr_at(t - 1, cfg);
  const double lambda =
      lambda_at(t, cfg.total_iterations, cfg.lambda0, cfg.schedule_alpha);
  const FreezeMask meta_mask{cfg.freeze_blocks};
  const FreezeMask real_mask{cfg.freeze_real_update ? cfg.freeze_blocks : 0};
  const std::span<const Example> halves[2] = {train_half, meta_half};
  double loss_acc = 0.0;

  switch (cfg.mode) {
    case TrainMode::meta: {
      double meta_loss_acc = 0.0;
      double meta_grad_acc = 0.0;
      int meta_cycles = 0;
      meta_cycle(state, train_half, meta_half, cfg, lambda, alpha, beta, meta_mask, real_mask,
                 loss_acc, meta_loss_acc, meta_grad_acc, meta_cycles);
      meta_cycle(state, meta_half, train_half, cfg, lambda, alpha, beta, meta_mask, real_mask,
                 loss_acc, meta_loss_acc, meta_grad_acc, meta_cycles);
      if (meta_cycles > 0) {
        state.last_meta_loss = meta_loss_acc / meta_cycles;
        state.last_meta_grad_norm_sq = meta_grad_acc / meta_cycles;
        state.meta_updated_yet = true;
      }
      break;
    }
    case TrainMode::naive_joint: {
      for (const std::span<const Example>& half : halves) {
        BatchLoss bl =
            batch_train_loss(state.classifier, state.covnet, half, lambda, real_mask, true);
        check_finite(bl.loss, "joint update", "training loss");
        state.shift_clamped = state.shift_clamped || bl.clamped;
        state.classifier = sgd_step(state.classifier, bl.cls_grad, alpha, real_mask);
        state.covnet = sgd_step(state.covnet, bl.cov_grad, beta);
        loss_acc += bl.loss;
      }
      break;
    }
    case TrainMode::classwise_isda: {
      const std::vector<double> zero_logits(
          static_cast<std::size_t>(state.classifier.classes()), 0.0);
      for (const std::span<const Example>& half : halves) {
        std::vector<ClassifierTape> tapes;
        tapes.reserve(half.size());
        for (const Example& ex : half) {
          tapes.push_back(classifier_forward(ex.input, state.classifier));
          state.table.update(tapes.back().feature(), ex.label);
        }
        ClassifierParams acc = zeros_like(state.classifier);
        const double inv_n = 1.0 / static_cast<double>(half.size());
        double total = 0.0;
        for (std::size_t i = 0; i < half.size(); ++i) {
          const DiagCovariance diag = state.table.lookup(half[i].label);
          const IsdaEval eval = isda_eval(tapes[i].feature(), half[i].label,
                                          state.classifier.head.w, state.classifier.head.b,
                                          diag, lambda);
          const IsdaGradients g = isda_grads(eval, tapes[i].feature(), half[i].label,
                                             state.classifier.head.w, diag, lambda);
          total += eval.loss;
          state.shift_clamped = state.shift_clamped || eval.clamped;
          ClassifierParams sample = classifier_backward(state.classifier, tapes[i],
                                                        g.d_feature, zero_logits, real_mask);
          axpy(sample.head.w, 1.0, g.d_head_weights);
          axpy(sample.head.b, 1.0, g.d_head_bias);
          param_axpy(acc, inv_n, sample);
        }
        const double mean_loss = total / static_cast<double>(half.size());
        check_finite(mean_loss, "classwise update", "training loss");
        state.classifier = sgd_step(state.classifier, acc, alpha, real_mask);
        loss_acc += mean_loss;
      }
      break;
    }
    case TrainMode::ce_baseline: {
      for (const std::span<const Example>& half : halves) {
        BatchLoss bl =
            batch_train_loss(state.classifier, state.covnet, half, 0.0, real_mask, false);
        check_finite(bl.loss, "baseline update", "training loss");
        state.classifier = sgd_step(state.classifier, bl.cls_grad, alpha, real_mask);
        loss_acc += bl.loss;
      }
      break;
    }
  }
  state.last_train_loss = loss_acc / 2.0;
}

RunResult run(const TrainConfig& cfg, const Dataset& train, const Dataset& test) {
  validate_config(cfg, train);
  TrainState state = init_state(cfg, train);
  const RngState base{cfg.seed, 0};
  BatchIter batches(train.size(), cfg.batch_size, /*drop_short=*/true, rng_derive(base, 104));
  const std::vector<int> probe = probe_indices(train.size());
  const std::vector<Example> probe_examples = gather(train, probe);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double running_min = nan;

  std::vector<MetricsRecord> records;
  auto record_row = [&](int t) {
    MetricsRecord rec;
    rec.iteration = t;
    std::vector<std::vector<double>> feats;
    feats.reserve(probe.size());
    std::vector<int> labels;
    labels.reserve(probe.size());
    double cov_sum = 0.0;
    std::size_t cov_entries = 0;
    for (int i : probe) {
      const ClassifierTape tape = classifier_forward(train.inputs.row(i), state.classifier);
      const CovNetTape cov = covnet_forward(tape.feature(), state.covnet);
      for (double v : cov.diag) cov_sum += v;
      cov_entries += cov.diag.size();
      feats.push_back(tape.feature());
      labels.push_back(train.labels[i]);
    }
    rec.mean_cov = cov_sum / static_cast<double>(cov_entries);
    rec.scatter_ratio_val = scatter_ratio(feats, labels);
    rec.test_acc = evaluate(state.classifier, test);
    rec.train_loss =
        t == 0 ? batch_train_loss(state.classifier, state.covnet, probe_examples, 0.0,
                                  FreezeMask{}, false)
                     .loss
               : state.last_train_loss;
    if (cfg.mode == TrainMode::meta) {
      if (state.meta_updated_yet) {
        rec.meta_loss = state.last_meta_loss;
        rec.meta_grad_norm_sq = state.last_meta_grad_norm_sq;
      } else {
        rec.meta_loss = nan;
        rec.meta_grad_norm_sq = nan;
      }
      rec.running_min_grad = running_min;
    }
    records.push_back(rec);
  };

  record_row(0);
  for (int t = 1; t <= cfg.total_iterations; ++t) {
    const std::vector<int> batch = batches.next();
    auto [train_idx, meta_idx] = split_batch(batch, state.split_rng);
    const std::vector<Example> train_half = gather(train, train_idx);
    const std::vector<Example> meta_half = gather(train, meta_idx);
    state.iteration = t;
    train_step(state, train_half, meta_half, cfg);
    if (cfg.mode == TrainMode::meta && t % cfg.meta_update_every == 0) {
      const double v = state.last_meta_grad_norm_sq;
      running_min = std::isnan(running_min) ? v : std::min(running_min, v);
    }
    if (t % cfg.metric_interval == 0 || t == cfg.total_iterations) record_row(t);
  }
  return RunResult{std::move(records), std::move(state)};
}

}  // namespace semaug

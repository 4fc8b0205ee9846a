// Python bindings for the core operations: the closed-form augmented loss,
// its Monte-Carlo estimate, synthetic data generation, and full training runs.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "semaug/augment_loss.hpp"
#include "semaug/datakit.hpp"
#include "semaug/networks.hpp"
#include "semaug/numkit.hpp"
#include "semaug/trainer.hpp"

namespace py = pybind11;
using namespace semaug;

namespace {

Matrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("weight matrix needs at least one row");
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size())
      throw std::invalid_argument("weight matrix rows have unequal lengths");
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  }
  return m;
}

TrainMode mode_from_string(const std::string& name) {
  if (name == "meta") return TrainMode::meta;
  if (name == "naive_joint") return TrainMode::naive_joint;
  if (name == "classwise_isda") return TrainMode::classwise_isda;
  if (name == "ce_baseline") return TrainMode::ce_baseline;
  throw std::invalid_argument("unknown mode: " + name);
}

py::dict record_to_dict(const MetricsRecord& r) {
  py::dict d;
  d["iteration"] = r.iteration;
  d["train_loss"] = r.train_loss;
  d["meta_loss"] = r.meta_loss;
  d["test_acc"] = r.test_acc;
  d["mean_cov"] = r.mean_cov;
  d["meta_grad_norm_sq"] = r.meta_grad_norm_sq;
  d["running_min_grad"] = r.running_min_grad;
  d["scatter_ratio"] = r.scatter_ratio_val;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "semantic-augmentation training core";

  m.def(
      "ce_loss",
      [](const std::vector<double>& logits, int label) { return ce_loss(logits, label); },
      py::arg("logits"), py::arg("label"),
      "Cross-entropy of a logit vector against an integer label.");

  m.def(
      "isda_loss",
      [](const std::vector<double>& feature, int label,
         const std::vector<std::vector<double>>& head_w, const std::vector<double>& head_b,
         const std::vector<double>& diag, double strength) {
        return isda_loss(feature, label, matrix_from_rows(head_w), head_b, diag, strength);
      },
      py::arg("feature"), py::arg("label"), py::arg("head_w"), py::arg("head_b"),
      py::arg("diag"), py::arg("strength"),
      "Closed-form expected cross-entropy surrogate under Gaussian feature "
      "perturbations with per-dimension variances.");

  m.def(
      "mc_isda_loss",
      [](const std::vector<double>& feature, int label,
         const std::vector<std::vector<double>>& head_w, const std::vector<double>& head_b,
         const std::vector<double>& diag, double strength, int draws, std::uint64_t seed) {
        RngState rng{seed, 0};
        return mc_isda_loss(feature, label, matrix_from_rows(head_w), head_b, diag,
                            strength, draws, rng);
      },
      py::arg("feature"), py::arg("label"), py::arg("head_w"), py::arg("head_b"),
      py::arg("diag"), py::arg("strength"), py::arg("draws"), py::arg("seed"),
      "Monte-Carlo estimate of the augmented loss by sampling perturbed features.");

  m.def(
      "synthetic_summary",
      [](std::uint64_t data_seed) {
        const SynthConfig cfg;
        auto [train, test] = gen_synthetic(cfg, RngState{data_seed, 0});
        py::dict d;
        d["train_size"] = train.size();
        d["test_size"] = test.size();
        d["input_dim"] = train.inputs.cols;
        d["classes"] = train.classes();
        return d;
      },
      py::arg("data_seed") = 7,
      "Generate the default synthetic benchmark and report its shape.");

  m.def(
      "train",
      [](const std::string& mode, int iterations, std::uint64_t seed, double lambda0,
         std::uint64_t data_seed, int batch_size, int metric_interval) {
        TrainConfig cfg;
        cfg.mode = mode_from_string(mode);
        cfg.total_iterations = iterations;
        cfg.seed = seed;
        cfg.lambda0 = lambda0;
        cfg.batch_size = batch_size;
        cfg.metric_interval = metric_interval;
        const SynthConfig synth;
        auto [train_set, test_set] = gen_synthetic(synth, RngState{data_seed, 0});
        const RunResult result = run(cfg, train_set, test_set);
        py::dict d;
        d["final_test_acc"] = result.metrics.back().test_acc;
        d["final_train_loss"] = result.metrics.back().train_loss;
        d["final_mean_cov"] = result.metrics.back().mean_cov;
        py::list rows;
        for (const MetricsRecord& r : result.metrics) rows.append(record_to_dict(r));
        d["rows"] = rows;
        return d;
      },
      py::arg("mode") = "meta", py::arg("iterations") = 50, py::arg("seed") = 1,
      py::arg("lambda0") = 1.0, py::arg("data_seed") = 7, py::arg("batch_size") = 64,
      py::arg("metric_interval") = 10,
      "Run one training job on the synthetic benchmark and return its metrics.");
}

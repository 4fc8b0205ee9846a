#pragma once

#include <span>
#include <vector>

#include "semaug/numkit.hpp"

// Cross-entropy and its augmented variant: the closed-form expected loss over
// Gaussian feature perturbations with a per-sample diagonal covariance, its
// analytic gradients, a Monte-Carlo estimator used as a correctness oracle,
// and a streaming per-class covariance table.

namespace semaug {

// Diagonal of a positive-semidefinite covariance; entries >= 0.
using DiagCovariance = std::vector<double>;

// Shift terms are capped here before exponentiation; hitting the cap signals
// divergent strength or weights and is surfaced as a flag, never an error.
inline constexpr double kShiftCap = 700.0;

struct IsdaEval {
  std::vector<double> logits;  // z_j = w_j . a + b_j
  std::vector<double> shift;   // quadratic augmentation term, exactly 0 at the label
  std::vector<double> probs;   // softmax(z + shift)
  double loss = 0.0;
  bool clamped = false;  // some shift hit kShiftCap
};

struct IsdaGradients {
  std::vector<double> d_feature;
  Matrix d_head_weights;
  std::vector<double> d_head_bias;
  std::vector<double> d_diag;
};

double ce_loss(std::span<const double> logits, int label);
// d(ce_loss)/d(logits) = softmax(logits) - onehot(label)
std::vector<double> ce_grad(std::span<const double> logits, int label);

// loss = -log( e^{z_y} / sum_j e^{z_j + shift_j} ) with
// shift_j = (lambda/2) sum_d diag_d (w_{j,d} - w_{y,d})^2.
IsdaEval isda_eval(std::span<const double> feature, int label, const Matrix& head_weights,
                   std::span<const double> head_bias, const DiagCovariance& diag, double lambda);
double isda_loss(std::span<const double> feature, int label, const Matrix& head_weights,
                 std::span<const double> head_bias, const DiagCovariance& diag, double lambda,
                 bool* clamped = nullptr);
// Exact analytic gradients of isda_loss; classes whose shift sits on the cap
// contribute no shift-path gradient (the cap is locally flat).
IsdaGradients isda_grads(std::span<const double> feature, int label, const Matrix& head_weights,
                         std::span<const double> head_bias, const DiagCovariance& diag,
                         double lambda, bool* clamped = nullptr);
// Same, reusing an evaluation already computed for these exact inputs.
IsdaGradients isda_grads(const IsdaEval& eval, std::span<const double> feature, int label,
                         const Matrix& head_weights, const DiagCovariance& diag, double lambda);

// Mean cross-entropy over m_samples features drawn from N(feature, lambda*diag).
double mc_isda_loss(std::span<const double> feature, int label, const Matrix& head_weights,
                    std::span<const double> head_bias, const DiagCovariance& diag, double lambda,
                    int m_samples, RngState& rng);

// Streaming per-class feature statistics (count, running sum, running sum of
// squared deviations), read out as a population-variance diagonal.
class ClasswiseCovTable {
 public:
  ClasswiseCovTable(int classes, int dim);

  void update(std::span<const double> feature, int label);
  // Population variance (sum of squared deviations / count); zeros if count <= 1.
  DiagCovariance lookup(int label) const;
  std::vector<double> mean(int label) const;  // zeros if count == 0

  long long count(int label) const;
  int classes() const { return classes_; }
  int dim() const { return dim_; }

 private:
  int classes_;
  int dim_;
  std::vector<long long> count_;
  Matrix sum_;     // per-class running sum of features
  Matrix sq_dev_;  // per-class running sum of squared deviations
};

}  // namespace semaug

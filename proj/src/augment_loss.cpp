#include "semaug/augment_loss.hpp"

#include <cmath>
#include <stdexcept>

namespace semaug {
namespace {

void check_label(int label, int classes) {
  if (label < 0 || label >= classes) throw std::invalid_argument("label out of range");
}

void check_isda_inputs(std::span<const double> feature, int label, const Matrix& head_weights,
                       std::span<const double> head_bias, const DiagCovariance& diag,
                       double lambda) {
  check_label(label, head_weights.rows);
  if (static_cast<int>(feature.size()) != head_weights.cols ||
      static_cast<int>(head_bias.size()) != head_weights.rows ||
      static_cast<int>(diag.size()) != head_weights.cols)
    throw std::invalid_argument("augmented loss: shape mismatch");
  if (lambda < 0.0) throw std::invalid_argument("augmented loss: negative lambda");
  for (double d : diag)
    if (d < 0.0) throw std::invalid_argument("augmented loss: negative covariance entry");
}

}  // namespace

double ce_loss(std::span<const double> logits, int label) {
  check_label(label, static_cast<int>(logits.size()));
  return logsumexp(logits) - logits[label];
}

std::vector<double> ce_grad(std::span<const double> logits, int label) {
  check_label(label, static_cast<int>(logits.size()));
  const double lse = logsumexp(logits);
  std::vector<double> g(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) g[j] = std::exp(logits[j] - lse);
  g[label] -= 1.0;
  return g;
}

IsdaEval isda_eval(std::span<const double> feature, int label, const Matrix& head_weights,
                   std::span<const double> head_bias, const DiagCovariance& diag, double lambda) {
  check_isda_inputs(feature, label, head_weights, head_bias, diag, lambda);
  const int classes = head_weights.rows;
  const int dim = head_weights.cols;

  IsdaEval eval;
  eval.logits.assign(head_bias.begin(), head_bias.end());
  matvec_acc(head_weights, feature, eval.logits);

  eval.shift.assign(classes, 0.0);
  const double* wy = head_weights.data.data() + static_cast<std::size_t>(label) * dim;
  for (int j = 0; j < classes; ++j) {
    if (j == label) continue;  // the label's shift is exactly zero
    const double* wj = head_weights.data.data() + static_cast<std::size_t>(j) * dim;
    double s = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double u = wj[d] - wy[d];
      s += diag[d] * u * u;
    }
    s *= 0.5 * lambda;
    if (s > kShiftCap) {
      s = kShiftCap;
      eval.clamped = true;
    }
    eval.shift[j] = s;
  }

  std::vector<double> shifted(classes);
  for (int j = 0; j < classes; ++j) shifted[j] = eval.logits[j] + eval.shift[j];
  const double lse = logsumexp(shifted);
  eval.loss = lse - shifted[label];
  eval.probs.resize(classes);
  for (int j = 0; j < classes; ++j) eval.probs[j] = std::exp(shifted[j] - lse);
  return eval;
}

double isda_loss(std::span<const double> feature, int label, const Matrix& head_weights,
                 std::span<const double> head_bias, const DiagCovariance& diag, double lambda,
                 bool* clamped) {
  const IsdaEval eval = isda_eval(feature, label, head_weights, head_bias, diag, lambda);
  if (clamped != nullptr) *clamped = eval.clamped;
  return eval.loss;
}

IsdaGradients isda_grads(std::span<const double> feature, int label, const Matrix& head_weights,
                         std::span<const double> head_bias, const DiagCovariance& diag,
                         double lambda, bool* clamped) {
  const IsdaEval eval = isda_eval(feature, label, head_weights, head_bias, diag, lambda);
  if (clamped != nullptr) *clamped = eval.clamped;
  return isda_grads(eval, feature, label, head_weights, diag, lambda);
}

IsdaGradients isda_grads(const IsdaEval& eval, std::span<const double> feature, int label,
                         const Matrix& head_weights, const DiagCovariance& diag, double lambda) {
  const int classes = head_weights.rows;
  const int dim = head_weights.cols;
  const double* wy = head_weights.data.data() + static_cast<std::size_t>(label) * dim;

  IsdaGradients g{std::vector<double>(dim, 0.0), Matrix(classes, dim),
                  std::vector<double>(classes, 0.0), std::vector<double>(dim, 0.0)};

  // Logit path: residual r_j = p_j - [j == label] flows into bias, feature,
  // and the plain outer-product part of the weight gradient.
  std::vector<double> residual = eval.probs;
  residual[label] -= 1.0;
  g.d_head_bias = residual;
  matvec_t_acc(head_weights, residual, g.d_feature);
  add_outer(g.d_head_weights, residual, feature, 1.0);

  // Shift path: each unclamped off-label class j contributes p_j times the
  // derivative of its quadratic term. m_d collects the label-row backflow.
  std::vector<double> m(dim, 0.0);
  for (int j = 0; j < classes; ++j) {
    if (j == label || eval.shift[j] >= kShiftCap) continue;
    const double* wj = head_weights.data.data() + static_cast<std::size_t>(j) * dim;
    double* gj = g.d_head_weights.data.data() + static_cast<std::size_t>(j) * dim;
    const double pj = eval.probs[j];
    for (int d = 0; d < dim; ++d) {
      const double u = wj[d] - wy[d];
      gj[d] += lambda * diag[d] * pj * u;
      m[d] += pj * u;
      g.d_diag[d] += 0.5 * lambda * pj * u * u;
    }
  }
  double* gy = g.d_head_weights.data.data() + static_cast<std::size_t>(label) * dim;
  for (int d = 0; d < dim; ++d) gy[d] -= lambda * diag[d] * m[d];
  return g;
}

double mc_isda_loss(std::span<const double> feature, int label, const Matrix& head_weights,
                    std::span<const double> head_bias, const DiagCovariance& diag, double lambda,
                    int m_samples, RngState& rng) {
  check_isda_inputs(feature, label, head_weights, head_bias, diag, lambda);
  if (m_samples < 1) throw std::invalid_argument("mc_isda_loss: sample count must be >= 1");
  std::vector<double> var(diag.size());
  for (std::size_t d = 0; d < diag.size(); ++d) var[d] = lambda * diag[d];

  double total = 0.0;
  std::vector<double> logits(head_bias.size());
  for (int m = 0; m < m_samples; ++m) {
    const std::vector<double> sample = gaussian_sample(feature, var, rng);
    logits.assign(head_bias.begin(), head_bias.end());
    matvec_acc(head_weights, sample, logits);
    total += ce_loss(logits, label);
  }
  return total / m_samples;
}

ClasswiseCovTable::ClasswiseCovTable(int classes, int dim)
    : classes_(classes),
      dim_(dim),
      count_(static_cast<std::size_t>(classes), 0),
      sum_(classes, dim),
      sq_dev_(classes, dim) {
  if (classes < 1 || dim < 1)
    throw std::invalid_argument("ClasswiseCovTable: classes and dim must be >= 1");
}

void ClasswiseCovTable::update(std::span<const double> feature, int label) {
  check_label(label, classes_);
  if (static_cast<int>(feature.size()) != dim_)
    throw std::invalid_argument("ClasswiseCovTable: feature dimension mismatch");
  const long long n = ++count_[label];
  double* sum = sum_.data.data() + static_cast<std::size_t>(label) * dim_;
  double* sq = sq_dev_.data.data() + static_cast<std::size_t>(label) * dim_;
  for (int d = 0; d < dim_; ++d) {
    sum[d] += feature[d];
    if (n > 1) {
      // Running sum-of-squared-deviations update; keeps the mean a plain sum.
      const double excess = static_cast<double>(n) * feature[d] - sum[d];
      sq[d] += excess * excess / (static_cast<double>(n) * static_cast<double>(n - 1));
    }
  }
}

DiagCovariance ClasswiseCovTable::lookup(int label) const {
  check_label(label, classes_);
  DiagCovariance v(static_cast<std::size_t>(dim_), 0.0);
  const long long n = count_[label];
  if (n <= 1) return v;
  const double* sq = sq_dev_.data.data() + static_cast<std::size_t>(label) * dim_;
  for (int d = 0; d < dim_; ++d) v[d] = sq[d] / static_cast<double>(n);
  return v;
}

std::vector<double> ClasswiseCovTable::mean(int label) const {
  check_label(label, classes_);
  std::vector<double> m(static_cast<std::size_t>(dim_), 0.0);
  const long long n = count_[label];
  if (n == 0) return m;
  const double* sum = sum_.data.data() + static_cast<std::size_t>(label) * dim_;
  for (int d = 0; d < dim_; ++d) m[d] = sum[d] / static_cast<double>(n);
  return m;
}

long long ClasswiseCovTable::count(int label) const {
  check_label(label, classes_);
  return count_[label];
}

}  // namespace semaug

#include "semaug/metagrad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace semaug {
namespace {

void check_nonempty(std::span<const Example> batch, const char* where) {
  if (batch.empty()) throw std::invalid_argument(std::string(where) + ": empty batch");
}

void check_record(const PseudoStepRecord& rec, const CovNetParams& covnet) {
  const std::size_t n = rec.labels.size();
  if (n == 0 || rec.cls_tapes.size() != n || rec.cov_tapes.size() != n || rec.diags.size() != n)
    throw std::invalid_argument("meta gradient: malformed lookahead record");
  if (covnet.feature_dim() != rec.base.feature_dim() ||
      static_cast<int>(rec.cov_tapes[0].hidden_out.size()) != covnet.output.w.cols ||
      static_cast<int>(rec.cov_tapes[0].diag.size()) != covnet.feature_dim())
    throw std::invalid_argument("meta gradient: record does not match this covnet");
}

// Mean gradient of the training loss w.r.t. the covnet at perturbed
// classifier parameters, holding the recorded covnet tapes (covariance
// values and their inputs) fixed.
CovNetParams covnet_train_grad_at(const ClassifierParams& cls, const PseudoStepRecord& rec,
                                  const CovNetParams& covnet) {
  CovNetParams grad = zeros_like(covnet);
  const double inv_n = 1.0 / static_cast<double>(rec.labels.size());
  for (std::size_t i = 0; i < rec.labels.size(); ++i) {
    const ClassifierTape tape = classifier_forward(rec.cls_tapes[i].input, cls);
    const IsdaGradients g = isda_grads(tape.feature(), rec.labels[i], cls.head.w, cls.head.b,
                                       rec.diags[i], rec.lambda);
    const CovNetParams sample = covnet_backward(covnet, rec.cov_tapes[i], g.d_diag);
    param_axpy(grad, inv_n, sample);
  }
  return grad;
}

}  // namespace

BatchLoss batch_train_loss(const ClassifierParams& cls, const CovNetParams& covnet,
                           std::span<const Example> batch, double lambda, FreezeMask mask,
                           bool want_covnet_grads) {
  check_nonempty(batch, "batch_train_loss");
  if (covnet.feature_dim() != cls.feature_dim())
    throw std::invalid_argument("batch_train_loss: covnet/classifier dimension mismatch");

  BatchLoss out;
  out.cls_grad = zeros_like(cls);
  out.cov_grad = zeros_like(covnet);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const std::vector<double> zero_logits(static_cast<std::size_t>(cls.classes()), 0.0);
  double total = 0.0;
  for (const Example& ex : batch) {
    ClassifierTape tape = classifier_forward(ex.input, cls);
    CovNetTape cov_tape = covnet_forward(tape.feature(), covnet);
    const IsdaEval eval =
        isda_eval(tape.feature(), ex.label, cls.head.w, cls.head.b, cov_tape.diag, lambda);
    const IsdaGradients g =
        isda_grads(eval, tape.feature(), ex.label, cls.head.w, cov_tape.diag, lambda);
    total += eval.loss;
    out.clamped = out.clamped || eval.clamped;

    // Backbone gradients come from the feature path; the head rows carry both
    // the plain logit term and the quadratic-shift term already combined.
    ClassifierParams sample = classifier_backward(cls, tape, g.d_feature, zero_logits, mask);
    axpy(sample.head.w, 1.0, g.d_head_weights);
    axpy(sample.head.b, 1.0, g.d_head_bias);
    param_axpy(out.cls_grad, inv_n, sample);

    if (want_covnet_grads) {
      const CovNetParams cov_sample = covnet_backward(covnet, cov_tape, g.d_diag);
      param_axpy(out.cov_grad, inv_n, cov_sample);
    }

    out.cls_tapes.push_back(std::move(tape));
    out.cov_tapes.push_back(std::move(cov_tape));
    out.diags.push_back(out.cov_tapes.back().diag);
  }
  out.loss = total / static_cast<double>(batch.size());
  return out;
}

std::pair<double, ClassifierParams> batch_ce_grads(const ClassifierParams& cls,
                                                   std::span<const Example> batch,
                                                   FreezeMask mask) {
  check_nonempty(batch, "batch_ce_grads");
  ClassifierParams grad = zeros_like(cls);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const Example& ex : batch) {
    const ClassifierTape tape = classifier_forward(ex.input, cls);
    total += ce_loss(tape.logits, ex.label);
    const std::vector<double> d_logits = ce_grad(tape.logits, ex.label);
    const ClassifierParams sample = classifier_backward(cls, tape, {}, d_logits, mask);
    param_axpy(grad, inv_n, sample);
  }
  return {total / static_cast<double>(batch.size()), std::move(grad)};
}

ClassifierParams sgd_step(const ClassifierParams& params, const ClassifierParams& grads,
                          double step, FreezeMask mask) {
  if (!congruent(params, grads)) throw std::invalid_argument("sgd_step: shape mismatch");
  ClassifierParams next = params;
  if (step == 0.0) return next;
  const int frozen = std::max(0, mask.frozen_blocks);
  for (std::size_t l = static_cast<std::size_t>(frozen); l < next.blocks.size(); ++l) {
    axpy(next.blocks[l].w, -step, grads.blocks[l].w);
    axpy(next.blocks[l].b, -step, grads.blocks[l].b);
  }
  axpy(next.head.w, -step, grads.head.w);
  axpy(next.head.b, -step, grads.head.b);
  return next;
}

CovNetParams sgd_step(const CovNetParams& params, const CovNetParams& grads, double step) {
  CovNetParams next = params;
  if (step == 0.0) return next;
  param_axpy(next, -step, grads);
  return next;
}

std::pair<ClassifierParams, PseudoStepRecord> pseudo_step(const ClassifierParams& cls,
                                                          const CovNetParams& covnet,
                                                          std::span<const Example> batch,
                                                          double lambda, double alpha,
                                                          FreezeMask mask) {
  check_nonempty(batch, "pseudo_step");
  if (alpha < 0.0) throw std::invalid_argument("pseudo_step: negative step size");
  BatchLoss bl = batch_train_loss(cls, covnet, batch, lambda, mask, /*want_covnet_grads=*/false);

  PseudoStepRecord rec;
  rec.base = cls;
  rec.train_grads = std::move(bl.cls_grad);
  rec.step_size = alpha;
  rec.lambda = lambda;
  rec.mask = mask;
  rec.labels.reserve(batch.size());
  for (const Example& ex : batch) rec.labels.push_back(ex.label);
  rec.cls_tapes = std::move(bl.cls_tapes);
  rec.cov_tapes = std::move(bl.cov_tapes);
  rec.diags = std::move(bl.diags);
  rec.train_loss = bl.loss;
  rec.clamped = bl.clamped;

  ClassifierParams pseudo = rec.pseudo();
  return {std::move(pseudo), std::move(rec)};
}

CovNetParams meta_gradient_exact(const PseudoStepRecord& rec, const CovNetParams& covnet,
                                 std::span<const Example> meta_batch, MetaGradStats* stats) {
  check_nonempty(meta_batch, "meta_gradient_exact");
  check_record(rec, covnet);
  const auto [meta_loss, dir] = batch_ce_grads(rec.pseudo(), meta_batch, rec.mask);
  if (stats != nullptr) {
    stats->meta_loss = meta_loss;
    stats->direction_norm_sq = param_norm_sq(dir);
    stats->epsilon = 0.0;
  }

  const Matrix& w = rec.base.head.w;
  const int classes = w.rows;
  const int dim = w.cols;
  const double lambda = rec.lambda;
  const double inv_n = 1.0 / static_cast<double>(rec.labels.size());

  CovNetParams total = zeros_like(covnet);
  std::vector<double> shift_rate(classes);   // derivative of each shifted logit along dir
  std::vector<double> d_sigma(dim);
  for (std::size_t i = 0; i < rec.labels.size(); ++i) {
    const int y = rec.labels[i];
    const ClassifierTape& tape = rec.cls_tapes[i];
    const DiagCovariance& sigma = rec.diags[i];
    const std::vector<double>& feat = tape.feature();
    const IsdaEval eval = isda_eval(feat, y, w, rec.base.head.b, sigma, lambda);
    const std::vector<double> tangent = feature_jvp(rec.base, tape, dir, rec.mask);
    const std::span<const double> wy = w.row(y);
    const std::span<const double> dy = dir.head.w.row(y);

    // Directional derivative of each shifted logit: the affine part moves
    // through head weights, bias, and the feature; the quadratic part moves
    // through its weight differences (flat where the shift sits on the cap).
    for (int j = 0; j < classes; ++j) {
      double c = dot(w.row(j), tangent) + dot(dir.head.w.row(j), feat) + dir.head.b[j];
      if (j != y && eval.shift[j] < kShiftCap) {
        const std::span<const double> wj = w.row(j);
        const std::span<const double> dj = dir.head.w.row(j);
        double g = 0.0;
        for (int d = 0; d < dim; ++d)
          g += sigma[d] * (wj[d] - wy[d]) * (dj[d] - dy[d]);
        c += lambda * g;
      }
      shift_rate[j] = c;
    }
    double p_dot_rate = 0.0;
    for (int j = 0; j < classes; ++j) p_dot_rate += eval.probs[j] * shift_rate[j];

    // d/d(sigma_d) of <training gradient, dir>: softmax reweighting plus the
    // direct quadratic term, per covariance coordinate.
    std::fill(d_sigma.begin(), d_sigma.end(), 0.0);
    for (int d = 0; d < dim; ++d) {
      double sum_pq_rate = 0.0;  // sum_j p_j u_jd^2 * rate_j  (shift-active j)
      double qbar = 0.0;         // sum_j p_j u_jd^2
      double a_acc = 0.0;        // sum_j p_j u_jd dir_jd
      double m_acc = 0.0;        // sum_j p_j u_jd
      for (int j = 0; j < classes; ++j) {
        if (j == y || eval.shift[j] >= kShiftCap) continue;
        const double u = w.at(j, d) - wy[d];
        const double pu = eval.probs[j] * u;
        sum_pq_rate += pu * u * shift_rate[j];
        qbar += pu * u;
        a_acc += pu * dir.head.w.at(j, d);
        m_acc += pu;
      }
      d_sigma[d] = 0.5 * lambda * (sum_pq_rate - qbar * p_dot_rate) +
                   lambda * (a_acc - m_acc * dy[d]);
      d_sigma[d] *= inv_n;
    }
    const CovNetParams sample = covnet_backward(covnet, rec.cov_tapes[i], d_sigma);
    param_axpy(total, 1.0, sample);
  }

  CovNetParams out = zeros_like(covnet);
  param_axpy(out, -rec.step_size, total);
  return out;
}

CovNetParams meta_gradient_fd(const PseudoStepRecord& rec, const CovNetParams& covnet,
                              std::span<const Example> meta_batch, double epsilon_scale,
                              MetaGradStats* stats) {
  check_nonempty(meta_batch, "meta_gradient_fd");
  check_record(rec, covnet);
  if (epsilon_scale <= 0.0)
    throw std::invalid_argument("meta_gradient_fd: epsilon_scale must be positive");
  const auto [meta_loss, dir] = batch_ce_grads(rec.pseudo(), meta_batch, rec.mask);
  const double dir_norm_sq = param_norm_sq(dir);
  const double eps = epsilon_scale / (std::sqrt(dir_norm_sq) + 1e-12);
  if (stats != nullptr) {
    stats->meta_loss = meta_loss;
    stats->direction_norm_sq = dir_norm_sq;
    stats->epsilon = eps;
  }

  ClassifierParams plus = rec.base;
  param_axpy(plus, eps, dir);
  ClassifierParams minus = rec.base;
  param_axpy(minus, -eps, dir);
  const CovNetParams grad_plus = covnet_train_grad_at(plus, rec, covnet);
  const CovNetParams grad_minus = covnet_train_grad_at(minus, rec, covnet);

  CovNetParams out = zeros_like(covnet);
  const double scale = rec.step_size / (2.0 * eps);
  param_axpy(out, -scale, grad_plus);
  param_axpy(out, scale, grad_minus);
  return out;
}

double grad_check(const std::function<double(std::span<const double>)>& probe,
                  std::span<const double> params, std::span<const double> analytic_grad,
                  double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
  if (params.size() != analytic_grad.size())
    throw std::invalid_argument("grad_check: gradient length mismatch");
  std::vector<double> point(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double origin = point[i];
    point[i] = origin + step;
    const double f_plus = probe(point);
    point[i] = origin - step;
    const double f_minus = probe(point);
    point[i] = origin;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
      throw std::runtime_error("grad_check: probe returned a non-finite value");
    const double numeric = (f_plus - f_minus) / (2.0 * step);
    const double denom = std::max({std::abs(analytic_grad[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic_grad[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace semaug

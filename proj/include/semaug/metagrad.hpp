#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "semaug/augment_loss.hpp"
#include "semaug/networks.hpp"

// Bilevel machinery: batch losses and gradients, the transient lookahead SGD
// step on the classifier, and the gradient of the held-out cross-entropy with
// respect to the covariance predictor through that step — computed exactly
// (hand-differentiated) and by a central-difference Hessian-vector product.

namespace semaug {

struct BatchLoss {
  double loss = 0.0;                  // mean over the batch
  ClassifierParams cls_grad;          // d loss / d classifier
  CovNetParams cov_grad;              // d loss / d covnet (when requested)
  std::vector<ClassifierTape> cls_tapes;
  std::vector<CovNetTape> cov_tapes;
  std::vector<DiagCovariance> diags;
  bool clamped = false;
};

// Mean augmented loss over the batch with per-sample covariances predicted by
// `covnet` from the (detached) feature. Covnet gradients are computed only
// when requested; classifier gradients always respect the freeze mask.
BatchLoss batch_train_loss(const ClassifierParams& cls, const CovNetParams& covnet,
                           std::span<const Example> batch, double lambda, FreezeMask mask,
                           bool want_covnet_grads);

// Mean plain cross-entropy and its classifier gradients (freeze mask applied).
std::pair<double, ClassifierParams> batch_ce_grads(const ClassifierParams& cls,
                                                   std::span<const Example> batch,
                                                   FreezeMask mask);

// params - step * grads, leaving frozen blocks bit-identical (not touched).
ClassifierParams sgd_step(const ClassifierParams& params, const ClassifierParams& grads,
                          double step, FreezeMask mask);
CovNetParams sgd_step(const CovNetParams& params, const CovNetParams& grads, double step);

// Everything needed to differentiate through the lookahead step later: the
// base classifier, its training gradients, and the per-sample tapes and
// covariances that produced them.
struct PseudoStepRecord {
  ClassifierParams base;
  ClassifierParams train_grads;
  double step_size = 0.0;
  double lambda = 0.0;
  FreezeMask mask;
  std::vector<int> labels;
  std::vector<ClassifierTape> cls_tapes;
  std::vector<CovNetTape> cov_tapes;
  std::vector<DiagCovariance> diags;
  double train_loss = 0.0;
  bool clamped = false;

  ClassifierParams pseudo() const { return sgd_step(base, train_grads, step_size, mask); }
};

std::pair<ClassifierParams, PseudoStepRecord> pseudo_step(const ClassifierParams& cls,
                                                          const CovNetParams& covnet,
                                                          std::span<const Example> batch,
                                                          double lambda, double alpha,
                                                          FreezeMask mask);

struct MetaGradStats {
  double meta_loss = 0.0;         // held-out cross-entropy at the lookahead params
  double direction_norm_sq = 0.0; // squared norm of its classifier gradient
  double epsilon = 0.0;           // step actually used (finite-difference mode)
};

// Gradient of the held-out cross-entropy at the lookahead parameters with
// respect to the covnet, i.e. -alpha * (mixed second derivative of the
// training loss)^T (held-out gradient). Exact mode differentiates the
// recorded training-gradient expression by hand; fd mode evaluates the
// training gradient w.r.t. the covnet at classifier +- epsilon * direction.
// Both hold the recorded covnet tapes (and thus the covnet inputs) fixed.
CovNetParams meta_gradient_exact(const PseudoStepRecord& record, const CovNetParams& covnet,
                                 std::span<const Example> meta_batch,
                                 MetaGradStats* stats = nullptr);
CovNetParams meta_gradient_fd(const PseudoStepRecord& record, const CovNetParams& covnet,
                              std::span<const Example> meta_batch, double epsilon_scale,
                              MetaGradStats* stats = nullptr);

// Worst relative error between analytic gradients and central differences of
// `probe` over the flat parameter vector, with absolute floor 1e-8.
double grad_check(const std::function<double(std::span<const double>)>& probe,
                  std::span<const double> params, std::span<const double> analytic_grad,
                  double step);

}  // namespace semaug

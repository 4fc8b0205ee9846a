#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "semaug/numkit.hpp"

// The classification network (tanh blocks + linear head) and the covariance
// prediction network (one tanh hidden layer, sigmoid output), with
// hand-derived backward passes and a forward-mode tangent for the feature.

namespace semaug {

struct Example {
  std::vector<double> input;
  int label = 0;
};

// y = W x + b
struct Affine {
  Matrix w;
  std::vector<double> b;
};

struct ClassifierParams {
  std::vector<Affine> blocks;  // each followed by tanh
  Affine head;                 // linear, rows = classes

  int input_dim() const { return blocks.empty() ? head.w.cols : blocks.front().w.cols; }
  int feature_dim() const { return head.w.cols; }
  int classes() const { return head.w.rows; }
  std::size_t param_count() const;
};

struct CovNetParams {
  Affine hidden;  // D -> H, tanh
  Affine output;  // H -> D, sigmoid

  int feature_dim() const { return hidden.w.cols; }
  std::size_t param_count() const;
};

// First `frozen_blocks` backbone blocks get exactly-zero gradients. The head
// is never frozen.
struct FreezeMask {
  int frozen_blocks = 0;
};

struct ClassifierArch {
  int input_dim = 0;
  std::vector<int> block_widths;
  int classes = 0;
};

struct CovNetArch {
  int feature_dim = 0;
  int hidden_dim = 0;  // <= 0 means ceil(feature_dim / 4)
};

struct ClassifierTape {
  std::vector<double> input;
  std::vector<std::vector<double>> block_out;  // tanh outputs, one per block
  std::vector<double> logits;

  const std::vector<double>& feature() const {
    return block_out.empty() ? input : block_out.back();
  }
};

struct CovNetTape {
  std::vector<double> input;
  std::vector<double> hidden_out;  // tanh
  std::vector<double> diag;        // sigmoid, every entry in (0, 1)
};

// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
ClassifierParams init_classifier(const ClassifierArch& arch, RngState& rng);
CovNetParams init_covnet(const CovNetArch& arch, RngState& rng);

ClassifierTape classifier_forward(std::span<const double> x, const ClassifierParams& params);

// Gradients of a scalar loss given upstream d_logits and, optionally, a
// gradient injected directly at the feature node (empty span = absent).
// Frozen blocks come back exactly zero.
ClassifierParams classifier_backward(const ClassifierParams& params, const ClassifierTape& tape,
                                     std::span<const double> d_feature,
                                     std::span<const double> d_logits, FreezeMask mask);

CovNetTape covnet_forward(std::span<const double> feature, const CovNetParams& params);
CovNetParams covnet_backward(const CovNetParams& params, const CovNetTape& tape,
                             std::span<const double> d_diag);

// Directional derivative of the feature with respect to the block parameters,
// along `dir` (head entries ignored). Frozen blocks contribute no parameter
// tangent, so the pass starts at the first unfrozen block.
std::vector<double> feature_jvp(const ClassifierParams& params, const ClassifierTape& tape,
                                const ClassifierParams& dir, FreezeMask mask);

// Parameter-set algebra; shapes must be congruent.
ClassifierParams zeros_like(const ClassifierParams& p);
CovNetParams zeros_like(const CovNetParams& p);
void param_axpy(ClassifierParams& dst, double scale, const ClassifierParams& grad);
void param_axpy(CovNetParams& dst, double scale, const CovNetParams& grad);
double param_norm_sq(const ClassifierParams& p);
double param_norm_sq(const CovNetParams& p);

std::vector<double> flatten(const ClassifierParams& p);
std::vector<double> flatten(const CovNetParams& p);
void unflatten(ClassifierParams& p, std::span<const double> flat);
void unflatten(CovNetParams& p, std::span<const double> flat);

bool congruent(const ClassifierParams& a, const ClassifierParams& b);
bool congruent(const CovNetParams& a, const CovNetParams& b);

// Textual architecture header followed by the flat little-endian 64-bit
// value stream (blocks in order, then head; each layer W row-major then b).
void save_params(std::ostream& os, const ClassifierParams& p);
void save_params(std::ostream& os, const CovNetParams& p);
ClassifierParams load_classifier_params(std::istream& is);
CovNetParams load_covnet_params(std::istream& is);

}  // namespace semaug

#include "semaug/networks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace semaug {
namespace {

std::size_t affine_count(const Affine& a) { return a.w.size() + a.b.size(); }

Affine glorot_affine(int out_dim, int in_dim, RngState& rng) {
  Affine a{Matrix(out_dim, in_dim), std::vector<double>(out_dim, 0.0)};
  const double limit = std::sqrt(6.0 / (in_dim + out_dim));
  for (double& w : a.w.data) w = (2.0 * rng_uniform(rng) - 1.0) * limit;
  return a;
}

std::vector<double> affine_apply(const Affine& a, std::span<const double> x) {
  std::vector<double> y = a.b;
  matvec_acc(a.w, x, y);
  return y;
}

void tanh_inplace(std::vector<double>& v) {
  for (double& x : v) x = std::tanh(x);
}

// d(loss)/d(pre-activation) -> weight/bias grads, then d(loss)/d(input).
void affine_backward(const Affine& a, std::span<const double> input,
                     std::span<const double> d_pre, Affine& grad,
                     std::vector<double>* d_input) {
  add_outer(grad.w, d_pre, input, 1.0);
  axpy(grad.b, 1.0, d_pre);
  if (d_input != nullptr) {
    d_input->assign(input.size(), 0.0);
    matvec_t_acc(a.w, d_pre, *d_input);
  }
}

void write_doubles(std::ostream& os, std::span<const double> v) {
  static_assert(std::endian::native == std::endian::little,
                "value stream assumes a little-endian host");
  for (double x : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    char buf[8];
    std::memcpy(buf, &bits, sizeof(bits));
    os.write(buf, sizeof(buf));
  }
}

std::vector<double> read_doubles(std::istream& is, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) {
    char buf[8];
    is.read(buf, sizeof(buf));
    if (!is) throw std::runtime_error("parameter stream truncated");
    std::uint64_t bits;
    std::memcpy(&bits, buf, sizeof(bits));
    std::memcpy(&x, &bits, sizeof(bits));
  }
  return v;
}

std::string read_header_line(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("parameter header truncated");
  return line;
}

}  // namespace

std::size_t ClassifierParams::param_count() const {
  std::size_t n = affine_count(head);
  for (const Affine& b : blocks) n += affine_count(b);
  return n;
}

std::size_t CovNetParams::param_count() const {
  return affine_count(hidden) + affine_count(output);
}

ClassifierParams init_classifier(const ClassifierArch& arch, RngState& rng) {
  if (arch.input_dim <= 0 || arch.classes <= 0)
    throw std::invalid_argument("classifier arch needs positive input_dim and classes");
  ClassifierParams p;
  int in = arch.input_dim;
  for (int width : arch.block_widths) {
    if (width <= 0) throw std::invalid_argument("block width must be positive");
    p.blocks.push_back(glorot_affine(width, in, rng));
    in = width;
  }
  p.head = glorot_affine(arch.classes, in, rng);
  return p;
}

CovNetParams init_covnet(const CovNetArch& arch, RngState& rng) {
  if (arch.feature_dim <= 0)
    throw std::invalid_argument("covnet arch needs positive feature_dim");
  const int h = arch.hidden_dim > 0 ? arch.hidden_dim : (arch.feature_dim + 3) / 4;
  CovNetParams p;
  p.hidden = glorot_affine(h, arch.feature_dim, rng);
  p.output = glorot_affine(arch.feature_dim, h, rng);
  return p;
}

ClassifierTape classifier_forward(std::span<const double> x, const ClassifierParams& params) {
  if (static_cast<int>(x.size()) != params.input_dim())
    throw std::invalid_argument("classifier input dimension mismatch");
  ClassifierTape tape;
  tape.input.assign(x.begin(), x.end());
  std::span<const double> cur = tape.input;
  for (const Affine& block : params.blocks) {
    std::vector<double> out = affine_apply(block, cur);
    tanh_inplace(out);
    tape.block_out.push_back(std::move(out));
    cur = tape.block_out.back();
  }
  tape.logits = affine_apply(params.head, cur);
  return tape;
}

ClassifierParams classifier_backward(const ClassifierParams& params, const ClassifierTape& tape,
                                     std::span<const double> d_feature,
                                     std::span<const double> d_logits, FreezeMask mask) {
  if (static_cast<int>(d_logits.size()) != params.classes())
    throw std::invalid_argument("d_logits size mismatch");
  if (!d_feature.empty() && static_cast<int>(d_feature.size()) != params.feature_dim())
    throw std::invalid_argument("d_feature size mismatch");
  ClassifierParams grad = zeros_like(params);

  std::vector<double> d_cur;
  affine_backward(params.head, tape.feature(), d_logits, grad.head, &d_cur);
  if (!d_feature.empty()) axpy(d_cur, 1.0, d_feature);

  const int frozen = std::max(0, mask.frozen_blocks);
  for (int l = static_cast<int>(params.blocks.size()) - 1; l >= frozen; --l) {
    const std::vector<double>& out = tape.block_out[l];
    std::vector<double> d_pre(out.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      d_pre[i] = d_cur[i] * (1.0 - out[i] * out[i]);
    std::span<const double> in =
        l == 0 ? std::span<const double>(tape.input) : std::span<const double>(tape.block_out[l - 1]);
    // The last needed input gradient is the one feeding block `frozen`.
    affine_backward(params.blocks[l], in, d_pre, grad.blocks[l], l > frozen ? &d_cur : nullptr);
  }
  return grad;
}

CovNetTape covnet_forward(std::span<const double> feature, const CovNetParams& params) {
  if (static_cast<int>(feature.size()) != params.feature_dim())
    throw std::invalid_argument("covnet input dimension mismatch");
  CovNetTape tape;
  tape.input.assign(feature.begin(), feature.end());
  tape.hidden_out = affine_apply(params.hidden, tape.input);
  tanh_inplace(tape.hidden_out);
  tape.diag = affine_apply(params.output, tape.hidden_out);
  for (double& d : tape.diag) d = 1.0 / (1.0 + std::exp(-d));
  return tape;
}

CovNetParams covnet_backward(const CovNetParams& params, const CovNetTape& tape,
                             std::span<const double> d_diag) {
  if (d_diag.size() != tape.diag.size())
    throw std::invalid_argument("d_diag size mismatch");
  CovNetParams grad = zeros_like(params);

  std::vector<double> d_pre2(tape.diag.size());
  for (std::size_t i = 0; i < tape.diag.size(); ++i)
    d_pre2[i] = d_diag[i] * tape.diag[i] * (1.0 - tape.diag[i]);
  std::vector<double> d_hidden;
  affine_backward(params.output, tape.hidden_out, d_pre2, grad.output, &d_hidden);

  std::vector<double> d_pre1(tape.hidden_out.size());
  for (std::size_t i = 0; i < tape.hidden_out.size(); ++i)
    d_pre1[i] = d_hidden[i] * (1.0 - tape.hidden_out[i] * tape.hidden_out[i]);
  affine_backward(params.hidden, tape.input, d_pre1, grad.hidden, nullptr);
  return grad;
}

std::vector<double> feature_jvp(const ClassifierParams& params, const ClassifierTape& tape,
                                const ClassifierParams& dir, FreezeMask mask) {
  if (!congruent(params, dir)) throw std::invalid_argument("feature_jvp direction shape mismatch");
  const int frozen = std::max(0, mask.frozen_blocks);
  const int n_blocks = static_cast<int>(params.blocks.size());
  std::vector<double> tangent(params.feature_dim(), 0.0);
  if (frozen >= n_blocks) return tangent;  // feature does not move

  // Tangent is zero through the frozen prefix (those parameters carry no
  // direction and the input itself is constant), so start at block `frozen`.
  std::vector<double> v_dot;
  for (int l = frozen; l < n_blocks; ++l) {
    std::span<const double> in =
        l == 0 ? std::span<const double>(tape.input) : std::span<const double>(tape.block_out[l - 1]);
    std::vector<double> pre_dot = dir.blocks[l].b;
    matvec_acc(dir.blocks[l].w, in, pre_dot);
    if (!v_dot.empty()) matvec_acc(params.blocks[l].w, v_dot, pre_dot);
    const std::vector<double>& out = tape.block_out[l];
    for (std::size_t i = 0; i < out.size(); ++i)
      pre_dot[i] *= 1.0 - out[i] * out[i];
    v_dot = std::move(pre_dot);
  }
  return v_dot;
}

ClassifierParams zeros_like(const ClassifierParams& p) {
  ClassifierParams z;
  for (const Affine& b : p.blocks)
    z.blocks.push_back({Matrix(b.w.rows, b.w.cols), std::vector<double>(b.b.size(), 0.0)});
  z.head = {Matrix(p.head.w.rows, p.head.w.cols), std::vector<double>(p.head.b.size(), 0.0)};
  return z;
}

CovNetParams zeros_like(const CovNetParams& p) {
  CovNetParams z;
  z.hidden = {Matrix(p.hidden.w.rows, p.hidden.w.cols), std::vector<double>(p.hidden.b.size(), 0.0)};
  z.output = {Matrix(p.output.w.rows, p.output.w.cols), std::vector<double>(p.output.b.size(), 0.0)};
  return z;
}

namespace {

void affine_axpy(Affine& dst, double scale, const Affine& src) {
  axpy(dst.w, scale, src.w);
  axpy(dst.b, scale, src.b);
}

double affine_norm_sq(const Affine& a) {
  return dot(a.w.data, a.w.data) + dot(a.b, a.b);
}

}  // namespace

void param_axpy(ClassifierParams& dst, double scale, const ClassifierParams& grad) {
  if (!congruent(dst, grad)) throw std::invalid_argument("param_axpy shape mismatch");
  for (std::size_t l = 0; l < dst.blocks.size(); ++l)
    affine_axpy(dst.blocks[l], scale, grad.blocks[l]);
  affine_axpy(dst.head, scale, grad.head);
}

void param_axpy(CovNetParams& dst, double scale, const CovNetParams& grad) {
  if (!congruent(dst, grad)) throw std::invalid_argument("param_axpy shape mismatch");
  affine_axpy(dst.hidden, scale, grad.hidden);
  affine_axpy(dst.output, scale, grad.output);
}

double param_norm_sq(const ClassifierParams& p) {
  double s = 0.0;
  for (const Affine& b : p.blocks) s += affine_norm_sq(b);
  return s + affine_norm_sq(p.head);
}

double param_norm_sq(const CovNetParams& p) {
  return affine_norm_sq(p.hidden) + affine_norm_sq(p.output);
}

namespace {

void append_affine(std::vector<double>& flat, const Affine& a) {
  flat.insert(flat.end(), a.w.data.begin(), a.w.data.end());
  flat.insert(flat.end(), a.b.begin(), a.b.end());
}

std::size_t take_affine(Affine& a, std::span<const double> flat, std::size_t pos) {
  std::copy_n(flat.begin() + pos, a.w.size(), a.w.data.begin());
  pos += a.w.size();
  std::copy_n(flat.begin() + pos, a.b.size(), a.b.begin());
  return pos + a.b.size();
}

}  // namespace

std::vector<double> flatten(const ClassifierParams& p) {
  std::vector<double> flat;
  flat.reserve(p.param_count());
  for (const Affine& b : p.blocks) append_affine(flat, b);
  append_affine(flat, p.head);
  return flat;
}

std::vector<double> flatten(const CovNetParams& p) {
  std::vector<double> flat;
  flat.reserve(p.param_count());
  append_affine(flat, p.hidden);
  append_affine(flat, p.output);
  return flat;
}

void unflatten(ClassifierParams& p, std::span<const double> flat) {
  if (flat.size() != p.param_count()) throw std::invalid_argument("unflatten size mismatch");
  std::size_t pos = 0;
  for (Affine& b : p.blocks) pos = take_affine(b, flat, pos);
  take_affine(p.head, flat, pos);
}

void unflatten(CovNetParams& p, std::span<const double> flat) {
  if (flat.size() != p.param_count()) throw std::invalid_argument("unflatten size mismatch");
  std::size_t pos = take_affine(p.hidden, flat, 0);
  take_affine(p.output, flat, pos);
}

bool congruent(const ClassifierParams& a, const ClassifierParams& b) {
  if (a.blocks.size() != b.blocks.size()) return false;
  for (std::size_t l = 0; l < a.blocks.size(); ++l) {
    if (a.blocks[l].w.rows != b.blocks[l].w.rows || a.blocks[l].w.cols != b.blocks[l].w.cols)
      return false;
  }
  return a.head.w.rows == b.head.w.rows && a.head.w.cols == b.head.w.cols;
}

bool congruent(const CovNetParams& a, const CovNetParams& b) {
  return a.hidden.w.rows == b.hidden.w.rows && a.hidden.w.cols == b.hidden.w.cols &&
         a.output.w.rows == b.output.w.rows && a.output.w.cols == b.output.w.cols;
}

void save_params(std::ostream& os, const ClassifierParams& p) {
  os << "classifier\n";
  os << "input " << p.input_dim() << "\n";
  for (const Affine& b : p.blocks) os << "block " << b.w.rows << " tanh\n";
  os << "head " << p.classes() << " linear\n";
  std::vector<double> flat = flatten(p);
  os << "values " << flat.size() << "\n";
  write_doubles(os, flat);
}

void save_params(std::ostream& os, const CovNetParams& p) {
  os << "covnet\n";
  os << "input " << p.feature_dim() << "\n";
  os << "hidden " << p.hidden.w.rows << " tanh\n";
  os << "output " << p.output.w.rows << " sigmoid\n";
  std::vector<double> flat = flatten(p);
  os << "values " << flat.size() << "\n";
  write_doubles(os, flat);
}

namespace {

// "key value [extra]" -> value; throws when key differs.
int header_int(const std::string& line, const std::string& key) {
  std::istringstream ss(line);
  std::string k;
  long long v = 0;
  if (!(ss >> k >> v) || k != key)
    throw std::runtime_error("bad parameter header line: " + line);
  return static_cast<int>(v);
}

}  // namespace

ClassifierParams load_classifier_params(std::istream& is) {
  if (read_header_line(is) != "classifier")
    throw std::runtime_error("not a classifier parameter stream");
  ClassifierArch arch;
  arch.input_dim = header_int(read_header_line(is), "input");
  std::string line = read_header_line(is);
  while (line.rfind("block ", 0) == 0) {
    arch.block_widths.push_back(header_int(line, "block"));
    line = read_header_line(is);
  }
  arch.classes = header_int(line, "head");
  const auto n_values = static_cast<std::size_t>(header_int(read_header_line(is), "values"));

  RngState dummy{0, 0};
  ClassifierParams p = init_classifier(arch, dummy);
  if (n_values != p.param_count()) throw std::runtime_error("parameter count mismatch in header");
  unflatten(p, read_doubles(is, n_values));
  return p;
}

CovNetParams load_covnet_params(std::istream& is) {
  if (read_header_line(is) != "covnet")
    throw std::runtime_error("not a covnet parameter stream");
  CovNetArch arch;
  arch.feature_dim = header_int(read_header_line(is), "input");
  arch.hidden_dim = header_int(read_header_line(is), "hidden");
  const int out_dim = header_int(read_header_line(is), "output");
  if (out_dim != arch.feature_dim)
    throw std::runtime_error("covnet output width must match feature dimension");
  const auto n_values = static_cast<std::size_t>(header_int(read_header_line(is), "values"));

  RngState dummy{0, 0};
  CovNetParams p = init_covnet(arch, dummy);
  if (n_values != p.param_count()) throw std::runtime_error("parameter count mismatch in header");
  unflatten(p, read_doubles(is, n_values));
  return p;
}

}  // namespace semaug

#include "semaug/numkit.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace semaug {

namespace {
std::size_t checked_extent(int r, int c) {
  if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative dimension");
  return static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
}
}  // namespace

Matrix::Matrix(int r, int c, double fill) : rows(r), cols(c), data(checked_extent(r, c), fill) {}

std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
  if (static_cast<int>(x.size()) != m.cols) throw std::invalid_argument("matvec: dimension mismatch");
  std::vector<double> y(static_cast<std::size_t>(m.rows), 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
    double acc = 0.0;
    for (int c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

std::vector<double> matvec_t(const Matrix& m, std::span<const double> x) {
  if (static_cast<int>(x.size()) != m.rows) throw std::invalid_argument("matvec_t: dimension mismatch");
  std::vector<double> y(static_cast<std::size_t>(m.cols), 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
    const double xr = x[r];
    for (int c = 0; c < m.cols; ++c) y[c] += xr * row[c];
  }
  return y;
}

void matvec_acc(const Matrix& m, std::span<const double> x, std::span<double> y) {
  if (static_cast<int>(x.size()) != m.cols || static_cast<int>(y.size()) != m.rows)
    throw std::invalid_argument("matvec_acc: dimension mismatch");
  for (int r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
    double acc = 0.0;
    for (int c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

void matvec_t_acc(const Matrix& m, std::span<const double> x, std::span<double> y) {
  if (static_cast<int>(x.size()) != m.rows || static_cast<int>(y.size()) != m.cols)
    throw std::invalid_argument("matvec_t_acc: dimension mismatch");
  for (int r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
    const double xr = x[r];
    for (int c = 0; c < m.cols; ++c) y[c] += xr * row[c];
  }
}

void add_outer(Matrix& m, std::span<const double> u, std::span<const double> v, double scale) {
  if (static_cast<int>(u.size()) != m.rows || static_cast<int>(v.size()) != m.cols)
    throw std::invalid_argument("add_outer: dimension mismatch");
  for (int r = 0; r < m.rows; ++r) {
    double* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
    const double su = scale * u[r];
    for (int c = 0; c < m.cols; ++c) row[c] += su * v[c];
  }
}

void axpy(std::span<double> dst, double scale, std::span<const double> grad) {
  if (dst.size() != grad.size()) throw std::invalid_argument("axpy: shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * grad[i];
}

void axpy(Matrix& dst, double scale, const Matrix& grad) {
  if (dst.rows != grad.rows || dst.cols != grad.cols)
    throw std::invalid_argument("axpy: shape mismatch");
  axpy(std::span<double>(dst.data), scale, std::span<const double>(grad.data));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

}  // namespace

std::uint64_t rng_next_u64(RngState& rng) {
  rng.counter += 1;
  return mix64(rng.seed + kGamma * rng.counter);
}

double rng_uniform(RngState& rng) {
  return static_cast<double>(rng_next_u64(rng) >> 11) * 0x1.0p-53;
}

double rng_normal(RngState& rng) {
  // u1 in (0,1] so the log never sees zero.
  const double u1 = static_cast<double>((rng_next_u64(rng) >> 11) + 1) * 0x1.0p-53;
  const double u2 = static_cast<double>(rng_next_u64(rng) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngState rng_derive(const RngState& rng, std::uint64_t stream) {
  return RngState{mix64(rng.seed ^ mix64(stream + 0x632BE59BD9B4E019ull)), 0};
}

void rng_shuffle(std::span<int> values, RngState& rng) {
  if (values.size() < 2) return;
  for (std::size_t i = values.size() - 1; i > 0; --i) {
    // Unbiased bounded draw by rejection.
    const std::uint64_t bound = i + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = rng_next_u64(rng);
    while (x >= limit) x = rng_next_u64(rng);
    std::swap(values[i], values[x % bound]);
  }
}

std::vector<double> gaussian_sample(std::span<const double> mean,
                                    std::span<const double> diag_var,
                                    RngState& rng) {
  if (mean.size() != diag_var.size())
    throw std::invalid_argument("gaussian_sample: dimension mismatch");
  std::vector<double> out(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (diag_var[i] < 0.0) throw std::invalid_argument("gaussian_sample: negative variance entry");
    const double z = rng_normal(rng);
    out[i] = diag_var[i] == 0.0 ? mean[i] : mean[i] + std::sqrt(diag_var[i]) * z;
  }
  return out;
}

double logsumexp(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("logsumexp: empty input");
  double m = values[0];
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > m) m = values[i];
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) acc += std::exp(values[i] - m);
  return m + std::log(acc);
}

bool all_finite(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace semaug

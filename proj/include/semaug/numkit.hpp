#pragma once

#include <cstdint>
#include <span>
#include <vector>

// Dense double-precision linear algebra, stable reductions and counter-based
// random sampling. Every reduction runs in a fixed left-to-right order so
// results are bit-stable across runs and platforms.

namespace semaug {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0);

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::span<const double> row(int r) const {
    return std::span<const double>(data).subspan(static_cast<std::size_t>(r) * cols, cols);
  }
  std::size_t size() const { return data.size(); }
};

// y = M x  (length rows)
std::vector<double> matvec(const Matrix& m, std::span<const double> x);
// y = M^T x  (length cols)
std::vector<double> matvec_t(const Matrix& m, std::span<const double> x);
// y += m x  /  y += m^T x, with y already sized.
void matvec_acc(const Matrix& m, std::span<const double> x, std::span<double> y);
void matvec_t_acc(const Matrix& m, std::span<const double> x, std::span<double> y);
// m += scale * u v^T
void add_outer(Matrix& m, std::span<const double> u, std::span<const double> v, double scale);

void axpy(std::span<double> dst, double scale, std::span<const double> grad);
void axpy(Matrix& dst, double scale, const Matrix& grad);
double dot(std::span<const double> a, std::span<const double> b);

// Counter-based RNG. A draw at (seed, counter) is the splitmix64 mix of
// seed + GAMMA * (counter + 1); identical state gives bit-identical sequences
// everywhere. Normal draws use the cosine branch of Box-Muller on two 53-bit
// uniforms, u1 in (0,1], u2 in [0,1):  z = sqrt(-2 ln u1) * cos(2 pi u2).
// Each normal consumes exactly two counter steps.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  friend bool operator==(const RngState&, const RngState&) = default;
};

std::uint64_t rng_next_u64(RngState& rng);
double rng_uniform(RngState& rng);            // [0, 1)
double rng_normal(RngState& rng);
// Independent substream keyed by `stream`; counter starts at zero.
RngState rng_derive(const RngState& rng, std::uint64_t stream);
// Fisher-Yates shuffle driven by rng_next_u64 with rejection sampling.
void rng_shuffle(std::span<int> values, RngState& rng);

// mean + sqrt(diag_var) .* z with z standard normal per coordinate.
// diag_var == 0 coordinates return mean exactly; the rng still advances
// uniformly (two steps per coordinate).
std::vector<double> gaussian_sample(std::span<const double> mean,
                                    std::span<const double> diag_var,
                                    RngState& rng);

// log sum_i exp(v_i), max-shifted; throws on empty input.
double logsumexp(std::span<const double> values);

bool all_finite(std::span<const double> values);

}  // namespace semaug

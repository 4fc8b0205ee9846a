#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "semaug/numkit.hpp"

using namespace semaug;

TEST_CASE("matrix storage is row-major and mutable") {
  Matrix m(2, 3);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) m.at(r, c) = 10.0 * r + c;
  CHECK(m.data[0] == 0.0);
  CHECK(m.data[1] == 1.0);
  CHECK(m.data[3] == 10.0);
  CHECK(m.row(1)[2] == 12.0);
  CHECK(m.size() == 6);
  CHECK_THROWS_AS(Matrix(-1, 2), std::invalid_argument);
}

TEST_CASE("matvec and transpose matvec agree with hand arithmetic") {
  Matrix m(2, 3);
  // [[1 2 3], [4 5 6]]
  for (int i = 0; i < 6; ++i) m.data[i] = 1.0 + i;
  const std::vector<double> x = {1.0, 0.0, -1.0};
  const std::vector<double> y = matvec(m, x);
  REQUIRE(y.size() == 2);
  CHECK(y[0] == -2.0);
  CHECK(y[1] == -2.0);

  const std::vector<double> u = {1.0, 2.0};
  const std::vector<double> v = matvec_t(m, u);
  REQUIRE(v.size() == 3);
  CHECK(v[0] == 9.0);   // 1*1 + 4*2
  CHECK(v[1] == 12.0);  // 2*1 + 5*2
  CHECK(v[2] == 15.0);  // 3*1 + 6*2

  std::vector<double> acc = {100.0, 100.0};
  matvec_acc(m, x, acc);
  CHECK(acc[0] == 98.0);
  CHECK(acc[1] == 98.0);
  std::vector<double> acc_t = {1.0, 1.0, 1.0};
  matvec_t_acc(m, u, acc_t);
  CHECK(acc_t[0] == 10.0);
  CHECK(acc_t[1] == 13.0);
  CHECK(acc_t[2] == 16.0);
}

TEST_CASE("add_outer accumulates scale * u v^T") {
  Matrix m(2, 2);
  std::fill(m.data.begin(), m.data.end(), 1.0);
  const std::vector<double> u = {2.0, -1.0};
  const std::vector<double> v = {3.0, 5.0};
  add_outer(m, u, v, 0.5);
  CHECK(m.at(0, 0) == 4.0);   // 1 + 0.5*2*3
  CHECK(m.at(0, 1) == 6.0);   // 1 + 0.5*2*5
  CHECK(m.at(1, 0) == -0.5);  // 1 - 0.5*3
  CHECK(m.at(1, 1) == -1.5);  // 1 - 0.5*5
}

TEST_CASE("axpy and dot basics") {
  std::vector<double> dst = {1.0, 2.0};
  const std::vector<double> g = {10.0, -10.0};
  axpy(dst, 0.1, g);
  CHECK(dst[0] == 2.0);
  CHECK(dst[1] == 1.0);
  CHECK(dot(dst, g) == 10.0);

  Matrix a(1, 2), b(1, 2);
  a.data = {1.0, 1.0};
  b.data = {3.0, 4.0};
  axpy(a, 2.0, b);
  CHECK(a.data[0] == 7.0);
  CHECK(a.data[1] == 9.0);
}

TEST_CASE("logsumexp matches naive evaluation on moderate inputs") {
  RngState rng{42, 0};
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng_uniform(rng) * 8);
    std::vector<double> v(n);
    for (double& x : v) x = (rng_uniform(rng) - 0.5) * 20.0;
    double naive = 0.0;
    for (double x : v) naive += std::exp(x);
    naive = std::log(naive);
    CHECK(logsumexp(v) == doctest::Approx(naive).epsilon(1e-12));
  }
}

TEST_CASE("logsumexp stays finite for inputs that overflow exp") {
  const std::vector<double> v = {1000.0, 0.0};
  const double r = logsumexp(v);
  CHECK(std::isfinite(r));
  CHECK(r == doctest::Approx(1000.0).epsilon(1e-15));

  const std::vector<double> single = {-7.25};
  CHECK(logsumexp(single) == -7.25);
  CHECK_THROWS_AS(logsumexp(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("counter rng is deterministic and stateless by construction") {
  RngState a{123, 0};
  RngState b{123, 0};
  for (int i = 0; i < 100; ++i) CHECK(rng_next_u64(a) == rng_next_u64(b));

  // Restarting at the same counter replays the same value.
  RngState c{123, 0};
  const std::uint64_t first = rng_next_u64(c);
  RngState d{123, 0};
  CHECK(rng_next_u64(d) == first);

  // Different seeds disagree immediately.
  RngState e{124, 0};
  CHECK(rng_next_u64(e) != first);
}

TEST_CASE("uniform draws live in [0,1) and look unbiased") {
  RngState rng{7, 0};
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng_uniform(rng);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal draws have unit-scale moments and consume two counter steps") {
  RngState rng{11, 0};
  const std::uint64_t before = rng.counter;
  (void)rng_normal(rng);
  CHECK(rng.counter == before + 2);

  double sum = 0.0, sum_sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = rng_normal(rng);
    REQUIRE(std::isfinite(z));
    sum += z;
    sum_sq += z * z;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("derived streams are independent of draw order on the base stream") {
  const RngState base{99, 0};
  RngState s1 = rng_derive(base, 1);
  RngState s2 = rng_derive(base, 2);
  CHECK(rng_next_u64(s1) != rng_next_u64(s2));

  // Deriving is a pure function of (base seed, stream id).
  RngState base_used{99, 0};
  for (int i = 0; i < 5; ++i) (void)rng_next_u64(base_used);
  RngState s1_again = rng_derive(RngState{99, 0}, 1);
  RngState s1_from_used = rng_derive(base_used, 1);
  CHECK(s1_again.seed == s1_from_used.seed);
  CHECK(rng_next_u64(s1_again) == rng_next_u64(s1_from_used));
}

TEST_CASE("shuffle is a deterministic permutation") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  RngState rng{5, 0};
  rng_shuffle(v, rng);

  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);

  std::vector<int> w(50);
  std::iota(w.begin(), w.end(), 0);
  RngState rng2{5, 0};
  rng_shuffle(w, rng2);
  CHECK(v == w);

  // A different seed produces a different order (overwhelmingly likely and
  // frozen here as a determinism check).
  std::vector<int> u(50);
  std::iota(u.begin(), u.end(), 0);
  RngState rng3{6, 0};
  rng_shuffle(u, rng3);
  CHECK(u != v);
}

TEST_CASE("gaussian sampling returns the mean exactly at zero variance") {
  const std::vector<double> mean = {1.5, -2.25, 0.0};
  const std::vector<double> var = {0.0, 0.0, 0.0};
  RngState rng{3, 0};
  const std::vector<double> s = gaussian_sample(mean, var, rng);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == 1.5);
  CHECK(s[1] == -2.25);
  CHECK(s[2] == 0.0);
}

TEST_CASE("gaussian sampling consumes the same randomness regardless of variances") {
  const std::vector<double> mean = {0.0, 0.0};
  RngState rng_a{21, 0};
  RngState rng_b{21, 0};
  const std::vector<double> zero_var = {0.0, 0.0};
  const std::vector<double> pos_var = {1.0, 2.0};
  (void)gaussian_sample(mean, zero_var, rng_a);
  (void)gaussian_sample(mean, pos_var, rng_b);
  CHECK(rng_a.counter == rng_b.counter);
}

TEST_CASE("gaussian sampling has the requested moments") {
  const std::vector<double> mean = {2.0};
  const std::vector<double> var = {4.0};
  RngState rng{17, 0};
  double sum = 0.0, sum_sq = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double x = gaussian_sample(mean, var, rng)[0];
    sum += x;
    sum_sq += x * x;
  }
  const double m = sum / n;
  CHECK(std::abs(m - 2.0) < 0.05);
  CHECK(sum_sq / n - m * m == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("gaussian sampling validates its inputs") {
  RngState rng{1, 0};
  const std::vector<double> mean1{0.0};
  const std::vector<double> var2{0.0, 1.0};
  const std::vector<double> neg1{-1.0};
  CHECK_THROWS_AS(gaussian_sample(mean1, var2, rng), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_sample(mean1, neg1, rng), std::invalid_argument);
}

TEST_CASE("all_finite flags nan and inf") {
  CHECK(all_finite(std::vector<double>{1.0, -2.0, 0.0}));
  CHECK_FALSE(all_finite(std::vector<double>{1.0, std::nan("")}));
  CHECK_FALSE(all_finite(std::vector<double>{std::numeric_limits<double>::infinity()}));
}

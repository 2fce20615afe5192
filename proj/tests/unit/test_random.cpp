#include <doctest.h>

#include <cmath>
#include <set>

#include "tbudget/random.hpp"

using namespace tbudget;

TEST_CASE("same seed gives the same stream") {
  RandomStream a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(RandomStream(42).next_u64() != c.next_u64());
}

TEST_CASE("derived streams depend on every path element") {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t i = 0; i < 4; ++i)
    for (std::uint64_t j = 0; j < 4; ++j) firsts.insert(RandomStream::derive(7, {i, j}).next_u64());
  CHECK(firsts.size() == 16);
  CHECK(RandomStream::derive(7, {1, 2}) == RandomStream::derive(7, {1, 2}));
  CHECK(!(RandomStream::derive(7, {1, 2}) == RandomStream::derive(7, {2, 1})));
}

TEST_CASE("uniform stays inside the open unit interval") {
  RandomStream rng(1);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal draws have unit moments") {
  RandomStream rng(2);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s1 += z;
    s2 += z * z;
  }
  // 5 sigma bounds for the sample mean and variance.
  CHECK(std::abs(s1 / n) < 5.0 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("normal quantile inverts the normal CDF") {
  for (double p : {1e-8, 0.001, 0.02425, 0.1, 0.5, 0.8, 0.97575, 0.999}) {
    const double z = normal_quantile(p);
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    CHECK(cdf == doctest::Approx(p).epsilon(1e-8));
  }
}

TEST_CASE("below is unbiased over a small range") {
  RandomStream rng(3);
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 30000; ++i) ++counts[rng.below(3)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 5 * std::sqrt(30000 * (1.0 / 3) * (2.0 / 3)));
}

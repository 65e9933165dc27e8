#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <amd/rng.hpp>

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

using amd::Rng;

TEST_CASE("fnv1a64 matches reference vectors") {
  // Reference values for the classic 64-bit FNV-1a parameters.
  CHECK(amd::fnv1a64("") == UINT64_C(0xcbf29ce484222325));
  CHECK(amd::fnv1a64("a") == UINT64_C(0xaf63dc4c8601ec8c));
  CHECK(amd::fnv1a64("foobar") == UINT64_C(0x85944171f73967e8));
}

TEST_CASE("rng streams are deterministic and seed-sensitive") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
  }
  bool any_diff = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) any_diff |= (a2.next_u64() != c.next_u64());
  CHECK(any_diff);
}

TEST_CASE("uniform stays in [0,1) and covers the range") {
  Rng r(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("uniform_int is inclusive on both ends and roughly flat") {
  Rng r(11);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) {
    const int v = r.uniform_int(2, 7);
    REQUIRE(v >= 2);
    REQUIRE(v <= 7);
    counts[v - 2]++;
  }
  for (int c : counts) {
    CHECK(c > 9000);
    CHECK(c < 11000);
  }
}

TEST_CASE("normal has near-zero mean and unit variance") {
  Rng r(123);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("normal_mat is reproducible for equal seeds") {
  Rng r1(9), r2(9);
  const auto m1 = r1.normal_mat<float>(4, 5);
  const auto m2 = r2.normal_mat<float>(4, 5);
  CHECK((m1 - m2).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("derive_seed separates streams") {
  const std::uint64_t master = 1234;
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 64; ++i) seen.insert(amd::derive_seed(master, i));
  CHECK(seen.size() == 64);
  CHECK(amd::derive_seed(master, 3) == amd::derive_seed(master, 3));
  CHECK(amd::derive_seed(master, "corpus") != amd::derive_seed(master, "train"));
  CHECK(amd::derive_seed(master, "corpus") == amd::derive_seed(master, "corpus"));
}

TEST_CASE("bernoulli respects probability") {
  Rng r(77);
  int hits = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) hits += r.bernoulli(0.1) ? 1 : 0;
  const double p = double(hits) / n;
  CHECK(p > 0.09);
  CHECK(p < 0.11);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "fedclust/rng.hpp"

using namespace fedclust;

TEST_CASE("derive_seed separates purposes and is stable") {
  const auto a = derive_seed(42, {seed_purpose::kSampling, 3});
  const auto b = derive_seed(42, {seed_purpose::kSampling, 3});
  const auto c = derive_seed(42, {seed_purpose::kSampling, 4});
  const auto d = derive_seed(42, {seed_purpose::kClientTrain, 3});
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a != d);
}

TEST_CASE("uniform stays in [0,1) and reproduces per seed") {
  Rng r1(7);
  Rng r2(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = r1.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == r2.uniform());
  }
}

TEST_CASE("below is unbiased enough and in range") {
  Rng rng(11);
  std::map<std::uint64_t, int> counts;
  const int draws = 30000;
  for (int i = 0; i < draws; ++i) ++counts[rng.below(7)];
  CHECK(counts.size() == 7);
  for (const auto& [value, count] : counts) {
    CHECK(value < 7);
    CHECK(count > draws / 7 - 600);
    CHECK(count < draws / 7 + 600);
  }
}

TEST_CASE("normal has roughly unit variance") {
  Rng rng(3);
  double sum = 0.0;
  double sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("gamma matches mean and variance of the distribution") {
  Rng rng(5);
  for (const double shape : {0.1, 0.5, 1.0, 3.5}) {
    double sum = 0.0;
    double sq = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
      const double x = rng.gamma(shape);
      CHECK(x >= 0.0);
      sum += x;
      sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(mean == doctest::Approx(shape).epsilon(0.08));
    CHECK(var == doctest::Approx(shape).epsilon(0.15));
  }
}

TEST_CASE("shuffle permutes and sample_without_replacement is sorted distinct") {
  Rng rng(9);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  auto w = v;
  rng.shuffle(w);
  auto sorted = w;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == v);

  const auto sample = rng.sample_without_replacement(100, 10);
  CHECK(sample.size() == 10);
  CHECK(std::is_sorted(sample.begin(), sample.end()));
  CHECK(std::adjacent_find(sample.begin(), sample.end()) == sample.end());
  CHECK(sample.front() >= 0);
  CHECK(sample.back() < 100);
}

TEST_CASE("ceil_fraction snaps near-integer products") {
  CHECK(ceil_fraction(0.1, 100) == 10);
  CHECK(ceil_fraction(0.07, 100) == 7);
  CHECK(ceil_fraction(0.3, 10) == 3);
  CHECK(ceil_fraction(0.2, 10) == 2);
  CHECK(ceil_fraction(1.0 / 3.0, 10) == 4);
  CHECK(ceil_fraction(0.001, 100) == 1);
  CHECK(floor_fraction(0.2, 20) == 4);
  CHECK(floor_fraction(0.7, 10) == 7);
  CHECK(floor_fraction(0.25, 10) == 2);
}

#include "flowkit/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <vector>

using namespace flowkit;

TEST_CASE("empty shapes sample to empty tensors") {
  Rng rng(42);
  CHECK(sample_standard_normal(rng, Shape{0}).size() == 0);
  CHECK(sample_logit_normal(rng, 0).size() == 0);
}

TEST_CASE("identical seed and stream replay bit-identical sequences") {
  Rng a(42, 3);
  Rng b(42, 3);
  const Tensor ta = sample_standard_normal(a, Shape{256});
  const Tensor tb = sample_standard_normal(b, Shape{256});
  CHECK(exact_equal(ta, tb));

  Rng c(42, 4);
  const Tensor tc = sample_standard_normal(c, Shape{256});
  CHECK_FALSE(exact_equal(ta, tc));
}

TEST_CASE("split streams are reproducible and distinct") {
  Rng root(7);
  Rng a1 = root.split(0);
  Rng a2 = root.split(0);
  Rng b = root.split(1);
  CHECK(a1.next_u64() == a2.next_u64());
  Rng a3 = root.split(0);
  CHECK(a3.next_u64() != b.next_u64());
}

TEST_CASE("standard normal matches its moments at 1e5 samples") {
  Rng rng(42);
  const Index n = 100000;
  const Tensor x = sample_standard_normal(rng, Shape{n});
  const double mean = x.array().mean();
  const double var = (x.array() - mean).square().sum() / static_cast<double>(n);
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("logit-normal stays strictly inside (0,1) with median near one half") {
  Rng rng(13);
  const Index n = 100000;
  const Tensor t = sample_logit_normal(rng, n);
  CHECK((t.array() > 0.0).all());
  CHECK((t.array() < 1.0).all());

  std::vector<double> sorted(t.array().data(), t.array().data() + n);
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  CHECK(std::abs(sorted[static_cast<size_t>(n / 2)] - 0.5) < 0.01);
}

TEST_CASE("uniform_index covers its range") {
  Rng rng(99);
  std::vector<int> seen(5, 0);
  for (int i = 0; i < 500; ++i) seen[static_cast<size_t>(rng.uniform_index(5))] += 1;
  for (int count : seen) CHECK(count > 0);
  CHECK_THROWS(rng.uniform_index(0));
}

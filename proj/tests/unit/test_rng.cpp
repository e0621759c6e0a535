#include <doctest.h>

#include "driftbo/rng.hpp"

using driftbo::Rng;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  CHECK(a.normal() == b.normal());
  CHECK(a.uniform() == b.uniform());
}

TEST_CASE("forked streams are independent of parent consumption") {
  Rng parent(7);
  Rng child_before = parent.fork("stage");
  for (int i = 0; i < 100; ++i) parent.next_u64();
  Rng child_after = parent.fork("stage");
  for (int i = 0; i < 100; ++i) {
    CHECK(child_before.next_u64() == child_after.next_u64());
  }
  Rng other = parent.fork("other-stage");
  CHECK(other.next_u64() != parent.fork("stage").next_u64());
}

TEST_CASE("indexed forks differ") {
  Rng parent(7);
  CHECK(parent.fork("x", 0).next_u64() != parent.fork("x", 1).next_u64());
}

TEST_CASE("uniform stays in [0,1) and has sane mean") {
  Rng rng(3);
  double acc = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    acc += u;
  }
  CHECK(acc / 20000 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("normal has approximately unit variance") {
  Rng rng(11);
  double sum = 0.0;
  double sq = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  CHECK(mean == doctest::Approx(0.0).epsilon(0.02));
  CHECK(sq / n - mean * mean == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("uniform_int covers the range uniformly") {
  Rng rng(5);
  int counts[7] = {0};
  for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_int(7)];
  for (int c : counts) {
    CHECK(c > 9000);
    CHECK(c < 11000);
  }
}

#include <cstdio>
#include <string>

#include "doctest.h"
#include "klab/model.hpp"
#include "klab/snapshot.hpp"

using namespace klab;

TEST_CASE("snapshot round trip is bit-exact") {
  auto m = make_model(ModelKind::P1Symmetric, 128, 16.0);
  Rng rng(99);
  Potential phi = random_admissible(m, rng, 0.3);
  std::string path = "klab_test_snapshot.dat";
  save_snapshot(path, phi);
  Vec back = load_field(path, m);
  CHECK((back - phi.samples).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("snapshot descriptor mismatch is rejected") {
  auto m = make_model(ModelKind::P1Symmetric, 128, 16.0);
  auto other = make_model(ModelKind::P1Symmetric, 256, 16.0);
  Rng rng(3);
  Potential phi = random_admissible(m, rng, 0.3);
  std::string path = "klab_test_snapshot2.dat";
  save_snapshot(path, phi);
  CHECK_THROWS_AS(load_field(path, other), SnapshotMismatch);
  std::remove(path.c_str());
}

TEST_CASE("full-precision formatting round trips doubles") {
  Rng rng(123);
  for (int i = 0; i < 1000; ++i) {
    double x = rng.normal() * std::pow(10.0, rng.uniform(-8.0, 8.0));
    CHECK(std::stod(format_full(x)) == x);
  }
  CHECK(format_full(0.1) == format_full(0.1));
}

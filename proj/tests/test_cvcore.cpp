#include <catch2/catch_amalgamated.hpp>

#include "qnet/cvcore.hpp"
#include "qnet/rng.hpp"
#include "test_support.hpp"

using namespace qnet;
using Catch::Approx;

TEST_CASE("batch means are plain arithmetic means", "[cvcore]") {
  BatchSeries bs = batch({1, 2, 3, 4}, {}, 4);
  CHECK(bs.x == std::vector<double>{1, 2, 3, 4});
  bs = batch({1, 2, 3, 4}, {}, 3);  // m = 1, last value dropped
  CHECK(bs.x == std::vector<double>{1, 2, 3});

  std::vector<double> ten{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  bs = batch(ten, {}, 3);
  CHECK(bs.m == 3);
  CHECK(bs.x == std::vector<double>{2, 5, 8});  // first 9 values only
}

TEST_CASE("constant series gives equal batch means", "[cvcore]") {
  BatchSeries bs = batch(std::vector<double>(12, 2.5), {}, 4);
  for (double x : bs.x) CHECK(x == 2.5);
}

TEST_CASE("too few batches is an error", "[cvcore]") {
  try {
    batch({1, 2, 3, 4}, {}, 2);
    FAIL("expected TooFewBatches");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TooFewBatches);
  }
}

TEST_CASE("worked estimate", "[cvcore]") {
  BatchSeries bs;
  bs.x = {2, 4, 6, 8};
  bs.c = {1, -1, 1, -1};
  bs.m = 1;
  EstimatorResult r = loh_estimate(bs);
  CHECK(r.beta == Approx(1.0));
  CHECK(r.point == Approx(5.0));
  CHECK(r.dof == 2);
  // R^2 = 8, Cbar = 0
  CHECK(r.s2 == Approx(2.0));
  CHECK(r.ci_half_width == Approx(t_quantile_975(2) * std::sqrt(2.0)));
}

TEST_CASE("all-zero control degenerates to the plain estimate", "[cvcore]") {
  BatchSeries bs;
  bs.x = {2, 4, 6, 8};
  bs.c = {0, 0, 0, 0};
  bs.m = 1;
  EstimatorResult r = loh_estimate(bs);
  CHECK(r.degenerate_control);
  CHECK(r.point == Approx(5.0));
  CHECK(r.beta == 0.0);
  CHECK(r.dof == 3);
}

TEST_CASE("constant response gives zero variance", "[cvcore]") {
  BatchSeries bs;
  bs.x = {3, 3, 3, 3};
  bs.c = {1, -2, 0, 1};
  bs.m = 1;
  EstimatorResult r = loh_estimate(bs);
  CHECK(r.beta == 0.0);
  CHECK(r.point == 3.0);
  CHECK(r.s2 == 0.0);
  CHECK(r.ci_half_width == 0.0);
}

TEST_CASE("beta minimizes the combined batch variance", "[cvcore]") {
  RngStream rng(31, 0);
  std::vector<double> x(2000), c(2000);
  for (size_t i = 0; i < x.size(); ++i) {
    double z = test::box_muller(rng);
    x[i] = 1.0 + z + 0.4 * test::box_muller(rng);
    c[i] = 0.7 * z + 0.3 * test::box_muller(rng);
  }
  BatchSeries bs = batch(x, c, 20);
  EstimatorResult r = loh_estimate(bs);

  auto combined_var = [&](double beta) {
    std::vector<double> v;
    for (int i = 0; i < bs.batches(); ++i) v.push_back(bs.x[i] + beta * bs.c[i]);
    double mean = 0.0;
    for (double t : v) mean += t;
    mean /= v.size();
    double var = 0.0;
    for (double t : v) var += (t - mean) * (t - mean);
    return var;
  };
  double at = combined_var(r.beta);
  CHECK(at <= combined_var(r.beta + 1e-3));
  CHECK(at <= combined_var(r.beta - 1e-3));
}

TEST_CASE("point estimate is invariant to rescaling the control", "[cvcore]") {
  RngStream rng(32, 0);
  std::vector<double> x(500), c(500);
  for (size_t i = 0; i < x.size(); ++i) {
    double z = test::box_muller(rng);
    x[i] = 2.0 + z;
    c[i] = z + 0.2 * test::box_muller(rng);
  }
  EstimatorResult base = loh_estimate(batch(x, c, 10));
  for (double a : {3.0, -0.5, 1e6}) {
    std::vector<double> scaled(c);
    for (double& v : scaled) v *= a;
    EstimatorResult r = loh_estimate(batch(x, scaled, 10));
    CHECK(r.point == Approx(base.point).margin(1e-12 * std::abs(base.point)));
    CHECK(r.beta * a == Approx(base.beta).epsilon(1e-10));
  }
}

TEST_CASE("frozen beta bypasses estimation", "[cvcore]") {
  BatchSeries bs;
  bs.x = {2, 4, 6, 8};
  bs.c = {1, -1, 1, -1};
  bs.m = 1;
  EstimatorResult r = loh_estimate(bs, 0.5);
  CHECK(r.beta_frozen);
  CHECK(r.beta == 0.5);
  CHECK(r.point == Approx(5.0));  // Cbar = 0
  CHECK(r.dof == 3);
}

TEST_CASE("interval coverage on correlated gaussian pairs", "[cvcore]") {
  // i.i.d. pairs with correlation 0.7; the t interval with b-2 dof should
  // cover at the nominal rate
  const double rho = 0.7;
  int covered = 0;
  const int trials = 2000;
  RngStream rng(33, 0);
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> x(400), c(400);
    for (size_t i = 0; i < x.size(); ++i) {
      double z = test::box_muller(rng);
      x[i] = 10.0 + z;
      c[i] = rho * z + std::sqrt(1 - rho * rho) * test::box_muller(rng);
    }
    EstimatorResult r = loh_estimate(batch(x, c, 20));
    if (std::abs(r.point - 10.0) <= r.ci_half_width) ++covered;
  }
  double rate = static_cast<double>(covered) / trials;
  CHECK(rate >= 0.90);
  CHECK(rate <= 0.99);
}

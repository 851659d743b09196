#include <catch2/catch_amalgamated.hpp>

#include "qnet/network.hpp"
#include "test_support.hpp"

using namespace qnet;
using Catch::Approx;

TEST_CASE("figure-one network validates", "[network]") {
  NetworkSpec spec = validate(two_station_three_buffer());
  CHECK(spec.num_classes == 3);
  CHECK(spec.num_stations == 2);
  CHECK(spec.exit_prob(2) == Approx(1.0));
}

TEST_CASE("single queue validates", "[network]") {
  CHECK_NOTHROW(validate(test::mm1_spec()));
}

TEST_CASE("self-loop routing is rejected", "[network]") {
  NetworkSpec spec = test::mm1_spec();
  spec.routing = {1.0};
  try {
    validate(spec);
    FAIL("expected NonTransientRouting");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonTransientRouting);
  }
}

TEST_CASE("row sums above one are rejected", "[network]") {
  NetworkSpec spec = test::tandem_spec();
  spec.r(0, 1) = 1.2;
  try {
    validate(spec);
    FAIL("expected NonTransientRouting");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonTransientRouting);
  }
}

TEST_CASE("bad station maps are rejected", "[network]") {
  NetworkSpec spec = test::tandem_spec();
  spec.station_of = {0, 2};  // station 3 does not exist
  try {
    validate(spec);
    FAIL("expected BadStationMap");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BadStationMap);
  }

  spec = test::tandem_spec();
  spec.station_of = {0, 0};  // station 2 left empty
  try {
    validate(spec);
    FAIL("expected BadStationMap");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BadStationMap);
  }
}

TEST_CASE("zero traffic is rejected", "[network]") {
  NetworkSpec spec = two_station_three_buffer(0.0);
  try {
    validate(spec);
    FAIL("expected ZeroTraffic");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ZeroTraffic);
  }
}

TEST_CASE("traffic equations on the figure-one network", "[network]") {
  TrafficSolution ts = solve_traffic(validate(two_station_three_buffer(9.0)));
  CHECK(ts.gamma[0] == Approx(9.0));
  CHECK(ts.gamma[1] == Approx(9.0));
  CHECK(ts.gamma[2] == Approx(9.0));
  CHECK(ts.station_load[0] == Approx(9.0 / 11.0));
  CHECK(ts.station_load[1] == Approx(0.9));
}

TEST_CASE("traffic equations without feedback", "[network]") {
  TrafficSolution ts = solve_traffic(validate(test::mm1_spec(0.3, 0.7)));
  CHECK(ts.gamma[0] == Approx(0.3));
  CHECK(ts.station_load[0] == Approx(3.0 / 7.0));
}

TEST_CASE("traffic equations on a tandem pair", "[network]") {
  TrafficSolution ts = solve_traffic(validate(test::tandem_spec(1.0, 4.0, 2.0)));
  CHECK(ts.gamma[0] == Approx(1.0));
  CHECK(ts.gamma[1] == Approx(1.0));
  CHECK(ts.station_load[0] == Approx(0.25));
  CHECK(ts.station_load[1] == Approx(0.5));
}

TEST_CASE("uniformization of the figure-one network", "[network]") {
  UniformizedNetwork u = uniformize(validate(two_station_three_buffer(9.0)));
  CHECK(u.spec.arrival_rates[0] == Approx(1.0 / 7.0));
  CHECK(u.spec.service_rates[0] == Approx(22.0 / 63.0));
  CHECK(u.spec.service_rates[1] == Approx(10.0 / 63.0));
  CHECK(u.spec.service_rates[2] == Approx(22.0 / 63.0));
  CHECK(u.mu0 == Approx(1.0 / 7.0));
  CHECK(u.arrival_split[0] == Approx(1.0));
  CHECK(u.arrival_split[1] == 0.0);

  double total = 0.0;
  for (double x : u.spec.arrival_rates) total += x;
  for (double x : u.spec.service_rates) total += x;
  CHECK(total == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("uniformization scales proportionally", "[network]") {
  UniformizedNetwork u = uniformize(validate(test::mm1_spec(3.0, 7.0)));
  CHECK(u.spec.arrival_rates[0] == Approx(0.3));
  CHECK(u.spec.service_rates[0] == Approx(0.7));
}

TEST_CASE("uniformization preserves station loads", "[network]") {
  RngStream rng(2024, 0);
  for (int trial = 0; trial < 20; ++trial) {
    NetworkSpec spec = test::random_network(rng, 2 + trial % 3, 1 + trial % 2);
    TrafficSolution before = solve_traffic(spec);
    TrafficSolution after = solve_traffic(uniformize(spec).spec);
    for (int s = 0; s < spec.num_stations; ++s)
      CHECK(after.station_load[s] == Approx(before.station_load[s]).epsilon(1e-12));
  }
}

TEST_CASE("uniformize is idempotent", "[network]") {
  UniformizedNetwork once = uniformize(validate(two_station_three_buffer()));
  UniformizedNetwork twice = uniformize(once.spec);
  CHECK(once.spec == twice.spec);
  CHECK(once.mu0 == twice.mu0);
}

TEST_CASE("traffic residual stays tiny on random networks", "[network]") {
  RngStream rng(7, 0);
  for (int trial = 0; trial < 50; ++trial) {
    NetworkSpec spec = test::random_network(rng, 2 + trial % 4, 1 + trial % 3);
    TrafficSolution ts = solve_traffic(spec);
    double lam_max = 0.0;
    for (double lam : spec.arrival_rates) lam_max = std::max(lam_max, lam);
    // residual of gamma = lambda + R' gamma
    for (int i = 0; i < spec.num_classes; ++i) {
      double lhs = ts.gamma[i] - spec.arrival_rates[i];
      for (int j = 0; j < spec.num_classes; ++j) lhs -= spec.r(j, i) * ts.gamma[j];
      CHECK(std::abs(lhs) <= 1e-10 * (1.0 + lam_max));
    }
  }
}

TEST_CASE("neumann series agrees with the direct inverse", "[network]") {
  RngStream rng(99, 0);
  for (int trial = 0; trial < 20; ++trial) {
    NetworkSpec spec = test::random_network(rng, 3, 2);
    const int l = spec.num_classes;
    Eigen::MatrixXd r(l, l);
    for (int i = 0; i < l; ++i)
      for (int j = 0; j < l; ++j) r(i, j) = spec.r(i, j);
    Eigen::MatrixXd direct = (Eigen::MatrixXd::Identity(l, l) - r).inverse();
    Eigen::MatrixXd series = Eigen::MatrixXd::Identity(l, l);
    Eigen::MatrixXd power = Eigen::MatrixXd::Identity(l, l);
    for (int k = 0; k < 1000; ++k) {
      power = power * r;
      series += power;
    }
    CHECK((direct - series).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(direct.minCoeff() >= 0.0);
  }
}

TEST_CASE("network json round-trips and matches the shipped file", "[network]") {
  NetworkSpec fig1 = two_station_three_buffer();
  nlohmann::json j = network_to_json(fig1);
  CHECK(network_from_json(j) == fig1);

  NetworkSpec loaded = load_network("examples/two_station_three_buffer.json");
  CHECK(loaded == fig1);
}

TEST_CASE("flat routing arrays are accepted", "[network]") {
  nlohmann::json j = network_to_json(test::tandem_spec());
  j["routing"] = std::vector<double>{0.0, 1.0, 0.0, 0.0};
  CHECK(network_from_json(j) == test::tandem_spec());
}

#include <catch2/catch_amalgamated.hpp>

#include "qnet/policy.hpp"
#include "test_support.hpp"

using namespace qnet;

TEST_CASE("fbfs serves the first nonempty buffer", "[policy]") {
  NetworkSpec fig1 = validate(two_station_three_buffer());
  PriorityPolicy p = fbfs(fig1);
  REQUIRE(p.order() == std::vector<std::vector<int>>{{0, 2}, {1}});

  CHECK(p.allocation({2, 1, 5}) == std::vector<uint8_t>{1, 1, 0});
  CHECK(p.allocation({0, 0, 2}) == std::vector<uint8_t>{0, 0, 1});
  CHECK(p.allocation({0, 0, 0}) == std::vector<uint8_t>{0, 0, 0});
}

TEST_CASE("lbfs reverses the buffer order", "[policy]") {
  NetworkSpec fig1 = validate(two_station_three_buffer());
  PriorityPolicy p = lbfs(fig1);
  CHECK(p.allocation({2, 1, 5}) == std::vector<uint8_t>{0, 1, 1});
}

TEST_CASE("verify_policy accepts a complete order", "[policy]") {
  NetworkSpec fig1 = validate(two_station_three_buffer());
  CHECK_NOTHROW(verify_policy(PriorityPolicy({{0, 2}, {1}}), fig1));
}

TEST_CASE("verify_policy rejects a missing class", "[policy]") {
  NetworkSpec fig1 = validate(two_station_three_buffer());
  try {
    verify_policy(PriorityPolicy({{0}, {1}}), fig1);
    FAIL("expected IncompleteOrder");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IncompleteOrder);
  }
}

TEST_CASE("verify_policy rejects a duplicated class", "[policy]") {
  NetworkSpec fig1 = validate(two_station_three_buffer());
  try {
    verify_policy(PriorityPolicy({{0, 2, 0}, {1}}), fig1);
    FAIL("expected DuplicateClass");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DuplicateClass);
  }
}

TEST_CASE("verify_policy rejects a class at the wrong station", "[policy]") {
  NetworkSpec fig1 = validate(two_station_three_buffer());
  try {
    verify_policy(PriorityPolicy({{0}, {1, 2}}), fig1);
    FAIL("expected IncompleteOrder");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IncompleteOrder);
  }
}

TEST_CASE("policy json parses shorthand and files", "[policy]") {
  NetworkSpec fig1 = validate(two_station_three_buffer());
  nlohmann::json j = {{"type", "priority"}, {"order", {{"1", {1, 3}}, {"2", {2}}}}};
  PriorityPolicy p = policy_from_json(j, fig1);
  CHECK(p.order() == fbfs(fig1).order());

  CHECK(resolve_policy("fbfs", fig1).order() == fbfs(fig1).order());
  CHECK(resolve_policy("lbfs", fig1).order() == lbfs(fig1).order());
  CHECK(resolve_policy("examples/fbfs_policy.json", fig1).order() == fbfs(fig1).order());
}

TEST_CASE("allocations satisfy the station constraints on random states", "[policy]") {
  RngStream rng(11, 0);
  for (int net_trial = 0; net_trial < 5; ++net_trial) {
    NetworkSpec spec = test::random_network(rng, 2 + net_trial % 3, 1 + net_trial % 2);
    PriorityPolicy policy = net_trial % 2 ? fbfs(spec) : lbfs(spec);
    verify_policy(policy, spec);
    for (int trial = 0; trial < 10000; ++trial) {
      std::vector<int32_t> y = test::random_state(rng, spec.num_classes, 4);
      std::vector<uint8_t> w = policy.allocation(y);
      for (int s = 0; s < spec.num_stations; ++s) {
        int busy = 0;
        int pop = 0;
        for (int i = 0; i < spec.num_classes; ++i) {
          if (spec.station_of[i] != s) continue;
          busy += w[i];
          pop += y[i];
          CHECK(w[i] <= (y[i] > 0 ? 1 : 0));  // only nonempty classes may be served
        }
        CHECK(busy <= 1);
        if (pop > 0) CHECK(busy == 1);  // non-idling
      }
    }
  }
}

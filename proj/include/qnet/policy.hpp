#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "qnet/errors.hpp"
#include "qnet/network.hpp"

namespace qnet {

// A scheduling policy is a deterministic map from the population vector y to a
// 0-1 allocation w: w[i] = 1 when station s(i) devotes its full effort to
// class i. Implementations must be stateless in time (the allocation may
// depend on y only).
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void allocate(const std::vector<int32_t>& y, std::vector<uint8_t>& w) const = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;

  std::vector<uint8_t> allocation(const std::vector<int32_t>& y) const {
    std::vector<uint8_t> w(y.size(), 0);
    allocate(y, w);
    return w;
  }
};

// Preemptive priority: each station serves the first class in its order list
// that has customers present; an empty station idles.
class PriorityPolicy final : public Policy {
 public:
  PriorityPolicy() = default;
  explicit PriorityPolicy(std::vector<std::vector<int>> order_by_station)
      : order_(std::move(order_by_station)) {
    num_classes_ = 0;
    for (const auto& st : order_) num_classes_ += static_cast<int>(st.size());
  }

  void allocate(const std::vector<int32_t>& y, std::vector<uint8_t>& w) const override {
    std::fill(w.begin(), w.end(), uint8_t{0});
    for (const auto& st : order_) {
      for (int i : st) {
        if (y[i] > 0) {
          w[i] = 1;
          break;
        }
      }
    }
  }

  std::unique_ptr<Policy> clone() const override { return std::make_unique<PriorityPolicy>(*this); }

  const std::vector<std::vector<int>>& order() const { return order_; }
  int num_classes() const { return num_classes_; }

 private:
  std::vector<std::vector<int>> order_;  // per station, highest priority first
  int num_classes_ = 0;
};

// Arbitrary state-feedback allocation, mainly for tests and experiments.
class CallbackPolicy final : public Policy {
 public:
  using Fn = std::function<void(const std::vector<int32_t>&, std::vector<uint8_t>&)>;
  explicit CallbackPolicy(Fn fn) : fn_(std::move(fn)) {}

  void allocate(const std::vector<int32_t>& y, std::vector<uint8_t>& w) const override { fn_(y, w); }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<CallbackPolicy>(*this); }

 private:
  Fn fn_;
};

// First buffer, first served: lower class index wins at each station.
inline PriorityPolicy fbfs(const NetworkSpec& spec) {
  std::vector<std::vector<int>> order(spec.num_stations);
  for (int i = 0; i < spec.num_classes; ++i) order[spec.station_of[i]].push_back(i);
  return PriorityPolicy(std::move(order));
}

inline PriorityPolicy lbfs(const NetworkSpec& spec) {
  std::vector<std::vector<int>> order(spec.num_stations);
  for (int i = spec.num_classes - 1; i >= 0; --i) order[spec.station_of[i]].push_back(i);
  return PriorityPolicy(std::move(order));
}

// Every class must appear exactly once, in its own station's list.
inline void verify_policy(const PriorityPolicy& policy, const NetworkSpec& spec) {
  const auto& order = policy.order();
  if (static_cast<int>(order.size()) != spec.num_stations)
    raise(Errc::IncompleteOrder, "policy lists " + std::to_string(order.size()) + " stations, network has " +
                                     std::to_string(spec.num_stations));
  std::vector<int> seen(spec.num_classes, 0);
  for (int s = 0; s < spec.num_stations; ++s) {
    for (int i : order[s]) {
      if (i < 0 || i >= spec.num_classes) raise(Errc::IncompleteOrder, "unknown class id " + std::to_string(i + 1));
      if (seen[i]++) raise(Errc::DuplicateClass, "class " + std::to_string(i + 1) + " listed twice");
      if (spec.station_of[i] != s)
        raise(Errc::IncompleteOrder,
              "class " + std::to_string(i + 1) + " listed at station " + std::to_string(s + 1) +
                  " but served at station " + std::to_string(spec.station_of[i] + 1));
    }
  }
  for (int i = 0; i < spec.num_classes; ++i)
    if (!seen[i]) raise(Errc::IncompleteOrder, "class " + std::to_string(i + 1) + " missing from the order");
}

// {"type":"priority","order":{"1":[1,3],"2":[2]}} with 1-based ids.
inline PriorityPolicy policy_from_json(const nlohmann::json& j, const NetworkSpec& spec) {
  try {
    if (j.at("type").get<std::string>() != "priority")
      raise(Errc::IoError, "unsupported policy type " + j.at("type").get<std::string>());
    std::vector<std::vector<int>> order(spec.num_stations);
    for (const auto& [key, val] : j.at("order").items()) {
      int s = std::stoi(key) - 1;
      if (s < 0 || s >= spec.num_stations) raise(Errc::IoError, "unknown station id " + key);
      for (int cls : val.get<std::vector<int>>()) order[s].push_back(cls - 1);
    }
    PriorityPolicy p(std::move(order));
    verify_policy(p, spec);
    return p;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::IoError, std::string("bad policy json: ") + e.what());
  }
}

// Accepts "fbfs", "lbfs", or a path to a policy json file.
inline PriorityPolicy resolve_policy(const std::string& name, const NetworkSpec& spec) {
  if (name == "fbfs") return fbfs(spec);
  if (name == "lbfs") return lbfs(spec);
  std::ifstream in(name);
  if (!in) raise(Errc::IoError, "cannot open policy file " + name);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::IoError, name + ": " + e.what());
  }
  return policy_from_json(j, spec);
}

}  // namespace qnet

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "qnet/errors.hpp"

namespace qnet {

// Open multiclass network: `num_classes` customer classes served at
// `num_stations` single-server stations. A class-i completion turns into a
// class-j customer with probability routing[i][j] and leaves the system with
// the remaining probability. Classes and stations are 0-based internally;
// files and reports use 1-based ids (0 is reserved for the exterior).
struct NetworkSpec {
  int num_classes = 0;
  int num_stations = 0;
  std::vector<int> station_of;         // class -> station
  std::vector<double> arrival_rates;   // per class, may be zero
  std::vector<double> service_rates;   // per class, positive
  std::vector<double> routing;         // row-major num_classes x num_classes

  double r(int i, int j) const { return routing[static_cast<size_t>(i) * num_classes + j]; }
  double& r(int i, int j) { return routing[static_cast<size_t>(i) * num_classes + j]; }

  double exit_prob(int i) const {
    double s = 0.0;
    for (int j = 0; j < num_classes; ++j) s += r(i, j);
    return 1.0 - s;
  }

  std::vector<int> station_classes(int s) const {
    std::vector<int> cs;
    for (int i = 0; i < num_classes; ++i)
      if (station_of[i] == s) cs.push_back(i);
    return cs;
  }

  bool operator==(const NetworkSpec&) const = default;
};

struct TrafficSolution {
  std::vector<double> gamma;         // total arrival rate per class
  std::vector<double> station_load;  // rho_s = sum_{i at s} gamma_i / mu_i

  bool operator==(const TrafficSolution&) const = default;
};

// Network with all rates divided by sum(lambda) + sum(mu), so that exactly one
// event (arrival, service completion, or virtual completion) happens per unit
// time. Arrivals are pooled into a single stream of rate mu0 that picks class
// k with probability arrival_split[k].
struct UniformizedNetwork {
  NetworkSpec spec;
  double mu0 = 0.0;
  std::vector<double> arrival_split;  // R_{0,k} = lambda_k / mu0

  bool operator==(const UniformizedNetwork&) const = default;
};

namespace detail {

inline Eigen::MatrixXd routing_matrix(const NetworkSpec& spec) {
  const int l = spec.num_classes;
  Eigen::MatrixXd rm(l, l);
  for (int i = 0; i < l; ++i)
    for (int j = 0; j < l; ++j) rm(i, j) = spec.r(i, j);
  return rm;
}

inline Eigen::VectorXd solve_gamma(const NetworkSpec& spec) {
  const int l = spec.num_classes;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(l, l) - routing_matrix(spec).transpose();
  Eigen::VectorXd lambda(l);
  for (int i = 0; i < l; ++i) lambda(i) = spec.arrival_rates[i];
  return a.partialPivLu().solve(lambda);
}

}  // namespace detail

// Checks every structural invariant and returns the spec unchanged.
// Transience of the routing matrix is tested by iterating v <- R v from the
// all-ones vector; the iterates must vanish.
inline NetworkSpec validate(NetworkSpec spec) {
  const int l = spec.num_classes;
  const int d = spec.num_stations;
  if (l < 1 || d < 1) raise(Errc::InvalidSpec, "need at least one class and one station");
  if (static_cast<int>(spec.station_of.size()) != l ||
      static_cast<int>(spec.arrival_rates.size()) != l ||
      static_cast<int>(spec.service_rates.size()) != l ||
      static_cast<int>(spec.routing.size()) != l * l)
    raise(Errc::InvalidSpec, "field sizes do not match num_classes");

  for (int i = 0; i < l; ++i) {
    if (spec.station_of[i] < 0 || spec.station_of[i] >= d)
      raise(Errc::BadStationMap, "class " + std::to_string(i + 1) + " mapped outside 1.." + std::to_string(d));
  }
  for (int s = 0; s < d; ++s) {
    if (spec.station_classes(s).empty())
      raise(Errc::BadStationMap, "station " + std::to_string(s + 1) + " has no classes");
  }

  for (int i = 0; i < l; ++i) {
    if (!(spec.arrival_rates[i] >= 0.0) || !std::isfinite(spec.arrival_rates[i]))
      raise(Errc::InvalidSpec, "arrival rates must be nonnegative");
    if (!(spec.service_rates[i] > 0.0) || !std::isfinite(spec.service_rates[i]))
      raise(Errc::InvalidSpec, "service rates must be positive");
  }

  for (int i = 0; i < l; ++i) {
    double row = 0.0;
    for (int j = 0; j < l; ++j) {
      if (!(spec.r(i, j) >= 0.0)) raise(Errc::InvalidSpec, "routing probabilities must be nonnegative");
      row += spec.r(i, j);
    }
    if (row > 1.0 + 1e-12)
      raise(Errc::NonTransientRouting, "routing row " + std::to_string(i + 1) + " sums to " + std::to_string(row));
  }

  // v <- R v from v = e must contract to zero for (I-R)^{-1} = sum R^k to exist.
  {
    Eigen::MatrixXd rm = detail::routing_matrix(spec);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(l);
    bool transient = false;
    for (int it = 0; it < 100000; ++it) {
      v = rm * v;
      if (v.lpNorm<Eigen::Infinity>() < 1e-12) {
        transient = true;
        break;
      }
    }
    if (!transient) raise(Errc::NonTransientRouting, "powers of the routing matrix do not vanish");
  }

  {
    Eigen::VectorXd gamma = detail::solve_gamma(spec);
    double gmax = gamma.maxCoeff();
    for (int i = 0; i < l; ++i)
      if (!(gamma(i) > 1e-12 * std::max(1.0, gmax)))
        raise(Errc::ZeroTraffic, "class " + std::to_string(i + 1) + " has zero total arrival rate");
  }

  return spec;
}

// gamma = lambda + R' gamma, solved directly; loads per station.
inline TrafficSolution solve_traffic(const NetworkSpec& spec) {
  const int l = spec.num_classes;
  Eigen::VectorXd gamma = detail::solve_gamma(spec);
  TrafficSolution ts;
  ts.gamma.assign(gamma.data(), gamma.data() + l);
  ts.station_load.assign(spec.num_stations, 0.0);
  for (int i = 0; i < l; ++i) ts.station_load[spec.station_of[i]] += ts.gamma[i] / spec.service_rates[i];
  return ts;
}

inline UniformizedNetwork uniformize(const NetworkSpec& spec) {
  double total = std::accumulate(spec.arrival_rates.begin(), spec.arrival_rates.end(), 0.0) +
                 std::accumulate(spec.service_rates.begin(), spec.service_rates.end(), 0.0);
  // snap so that re-uniformizing an already normalized spec is a no-op
  if (std::abs(total - 1.0) < 1e-12) total = 1.0;

  UniformizedNetwork u;
  u.spec = spec;
  for (double& x : u.spec.arrival_rates) x /= total;
  for (double& x : u.spec.service_rates) x /= total;
  u.mu0 = std::accumulate(u.spec.arrival_rates.begin(), u.spec.arrival_rates.end(), 0.0);
  u.arrival_split.assign(spec.num_classes, 0.0);
  if (u.mu0 > 0.0)
    for (int k = 0; k < spec.num_classes; ++k) u.arrival_split[k] = u.spec.arrival_rates[k] / u.mu0;
  return u;
}

// Returns a copy with all arrival rates multiplied by `factor` (service rates
// held fixed). Station loads scale by the same factor.
inline NetworkSpec scale_arrivals(NetworkSpec spec, double factor) {
  for (double& x : spec.arrival_rates) x *= factor;
  return spec;
}

// ---- file format ----------------------------------------------------------
//
// {
//   "classes": 3, "stations": 2,
//   "station_of": [1, 2, 1],            // 1-based station ids
//   "arrival_rates": [9.0, 0.0, 0.0],
//   "service_rates": [22.0, 10.0, 22.0],
//   "routing": [[0,1,0],[0,0,1],[0,0,0]]  // row-major, nested or flat
// }

inline NetworkSpec network_from_json(const nlohmann::json& j) {
  NetworkSpec spec;
  try {
    spec.num_classes = j.at("classes").get<int>();
    spec.num_stations = j.at("stations").get<int>();
    for (int s : j.at("station_of").get<std::vector<int>>()) spec.station_of.push_back(s - 1);
    spec.arrival_rates = j.at("arrival_rates").get<std::vector<double>>();
    spec.service_rates = j.at("service_rates").get<std::vector<double>>();
    const auto& r = j.at("routing");
    if (!r.empty() && r.front().is_array()) {
      for (const auto& row : r)
        for (const auto& x : row) spec.routing.push_back(x.get<double>());
    } else {
      spec.routing = r.get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::IoError, std::string("bad network json: ") + e.what());
  }
  return spec;
}

inline nlohmann::json network_to_json(const NetworkSpec& spec) {
  nlohmann::json j;
  j["classes"] = spec.num_classes;
  j["stations"] = spec.num_stations;
  std::vector<int> st;
  for (int s : spec.station_of) st.push_back(s + 1);
  j["station_of"] = st;
  j["arrival_rates"] = spec.arrival_rates;
  j["service_rates"] = spec.service_rates;
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < spec.num_classes; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < spec.num_classes; ++k) row.push_back(spec.r(i, k));
    rows.push_back(row);
  }
  j["routing"] = rows;
  return j;
}

inline NetworkSpec load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::IoError, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::IoError, path + ": " + e.what());
  }
  return network_from_json(j);
}

// The two-station, three-class network used throughout the examples:
// classes 1 and 3 at station 1, class 2 at station 2, deterministic routing
// 1 -> 2 -> 3 -> out, a single exogenous stream into class 1.
inline NetworkSpec two_station_three_buffer(double lambda1 = 9.0) {
  NetworkSpec spec;
  spec.num_classes = 3;
  spec.num_stations = 2;
  spec.station_of = {0, 1, 0};
  spec.arrival_rates = {lambda1, 0.0, 0.0};
  spec.service_rates = {22.0, 10.0, 22.0};
  spec.routing.assign(9, 0.0);
  spec.r(0, 1) = 1.0;
  spec.r(1, 2) = 1.0;
  return spec;
}

}  // namespace qnet

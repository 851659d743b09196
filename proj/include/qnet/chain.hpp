#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qnet/errors.hpp"
#include "qnet/network.hpp"
#include "qnet/policy.hpp"
#include "qnet/rng.hpp"

namespace qnet {

// One uniformized event: a class-`from` customer completes service and turns
// into a class-`to` customer. Classes are 1-based here so that 0 can stand for
// the exterior: from == 0 is an exogenous arrival, to == 0 an exit. An event
// whose serving class is inactive (w[from-1] == 0) is virtual and leaves the
// state unchanged, but still advances the step counter.
struct Event {
  double prob;
  int from;
  int to;
};

class EventTable {
 public:
  explicit EventTable(const UniformizedNetwork& net) {
    const auto& spec = net.spec;
    const int l = spec.num_classes;
    for (int k = 0; k < l; ++k)
      if (spec.arrival_rates[k] > 0.0) events_.push_back({spec.arrival_rates[k], 0, k + 1});
    for (int j = 0; j < l; ++j) {
      double mu = spec.service_rates[j];
      double exit = spec.exit_prob(j);
      if (exit > 0.0) events_.push_back({mu * exit, j + 1, 0});
      for (int k = 0; k < l; ++k)
        if (spec.r(j, k) > 0.0) events_.push_back({mu * spec.r(j, k), j + 1, k + 1});
    }
    cum_.reserve(events_.size());
    double acc = 0.0;
    for (const Event& e : events_) {
      acc += e.prob;
      cum_.push_back(acc);
    }
    cum_.back() = 1.0;  // probabilities sum to 1 by construction; pin the tail exactly
  }

  const Event& sample(double u) const {
    size_t lo = 0, hi = cum_.size() - 1;
    while (lo < hi) {
      size_t mid = (lo + hi) / 2;
      if (u < cum_[mid])
        hi = mid;
      else
        lo = mid + 1;
    }
    return events_[lo];
  }

  const std::vector<Event>& events() const { return events_; }

 private:
  std::vector<Event> events_;
  std::vector<double> cum_;
};

// Applies the event given the current allocation. Returns false when the event
// was virtual.
inline bool apply_event(const Event& e, const std::vector<uint8_t>& w, std::vector<int32_t>& y) {
  if (e.from == 0) {
    ++y[e.to - 1];
    return true;
  }
  if (!w[e.from - 1]) return false;
  --y[e.from - 1];
  if (e.to != 0) ++y[e.to - 1];
  return true;
}

struct ChainState {
  std::vector<int32_t> y;
  long long n = 0;

  bool operator==(const ChainState&) const = default;
};

inline ChainState step(ChainState state, const Policy& policy, const EventTable& table, RngStream& rng) {
  std::vector<uint8_t> w(state.y.size(), 0);
  policy.allocate(state.y, w);
  apply_event(table.sample(rng.uniform()), w, state.y);
  ++state.n;
  return state;
}

// A per-step statistic recorded alongside the trajectory, evaluated at the
// state before each transition.
struct StepControl {
  std::string name;
  std::function<double(const std::vector<int32_t>& y, const std::vector<uint8_t>& w)> eval;
};

struct RunAccumulator {
  long long n = 0;
  std::vector<double> ybar;  // mean of Y_j over steps 0..n-1
  std::vector<double> zbar;  // mean of Z_ij = W_i Y_j, row-major (i major)
  std::vector<double> pop_series;  // |Y(k)| per step
  std::vector<double> pz_series;   // p'Z(k) per step (== |Y(k)| under non-idling policies)
  std::vector<std::string> control_names;
  std::vector<std::vector<double>> control_series;

  const std::vector<double>& control(const std::string& name) const {
    for (size_t i = 0; i < control_names.size(); ++i)
      if (control_names[i] == name) return control_series[i];
    raise(Errc::InvalidSpec, "no control series named " + name);
  }

  bool operator==(const RunAccumulator&) const = default;
};

// Simulates n_steps transitions of the uniformized chain and accumulates the
// state seen before each transition (step 0 contributes Y(0)). Warm-up steps,
// when requested, are simulated but not accumulated.
inline RunAccumulator run(const UniformizedNetwork& net, const Policy& policy, long long n_steps,
                          std::vector<int32_t> init, RngStream rng,
                          const std::vector<StepControl>& controls = {}, long long warmup = 0) {
  const auto& spec = net.spec;
  const int l = spec.num_classes;
  const int d = spec.num_stations;
  if (n_steps < 1) raise(Errc::InvalidSpec, "n_steps must be >= 1");
  if (init.empty()) init.assign(l, 0);

  EventTable table(net);
  std::vector<int32_t> y = std::move(init);
  std::vector<uint8_t> w(l, 0);

  RunAccumulator acc;
  acc.ybar.assign(l, 0.0);
  acc.zbar.assign(static_cast<size_t>(l) * l, 0.0);
  acc.pop_series.reserve(n_steps);
  acc.pz_series.reserve(n_steps);
  for (const auto& c : controls) {
    acc.control_names.push_back(c.name);
    acc.control_series.emplace_back();
    acc.control_series.back().reserve(n_steps);
  }

  std::vector<double> station_pop(d, 0.0);
  std::vector<uint8_t> station_busy(d, 0);

  for (long long k = 0; k < warmup; ++k) {
    policy.allocate(y, w);
    apply_event(table.sample(rng.uniform()), w, y);
  }

  for (long long k = 0; k < n_steps; ++k) {
    policy.allocate(y, w);

    double pop = 0.0;
    std::fill(station_pop.begin(), station_pop.end(), 0.0);
    std::fill(station_busy.begin(), station_busy.end(), uint8_t{0});
    for (int j = 0; j < l; ++j) {
      acc.ybar[j] += y[j];
      pop += y[j];
      station_pop[spec.station_of[j]] += y[j];
      if (w[j]) station_busy[spec.station_of[j]] = 1;
    }
    for (int i = 0; i < l; ++i) {
      if (!w[i]) continue;
      double* zrow = acc.zbar.data() + static_cast<size_t>(i) * l;
      for (int j = 0; j < l; ++j) zrow[j] += y[j];
    }
    double pz = 0.0;
    for (int s = 0; s < d; ++s)
      if (station_busy[s]) pz += station_pop[s];
    acc.pop_series.push_back(pop);
    acc.pz_series.push_back(pz);

    for (size_t c = 0; c < controls.size(); ++c) {
      try {
        acc.control_series[c].push_back(controls[c].eval(y, w));
      } catch (const std::exception& e) {
        raise(Errc::ControlEvaluationFailure,
              "control '" + controls[c].name + "' at step " + std::to_string(k) + ": " + e.what());
      }
    }

    apply_event(table.sample(rng.uniform()), w, y);
  }

  acc.n = n_steps;
  for (double& v : acc.ybar) v /= static_cast<double>(n_steps);
  for (double& v : acc.zbar) v /= static_cast<double>(n_steps);
  return acc;
}

// Mean one-step displacement of the state under allocation w (the drift term
// of the random linear system; the residual is a martingale difference).
inline std::vector<double> mean_drift(const UniformizedNetwork& net, const std::vector<uint8_t>& w) {
  const auto& spec = net.spec;
  const int l = spec.num_classes;
  std::vector<double> drift(spec.arrival_rates);
  for (int j = 0; j < l; ++j) {
    if (!w[j]) continue;
    double mu = spec.service_rates[j];
    drift[j] -= mu;
    for (int k = 0; k < l; ++k) drift[k] += mu * spec.r(j, k);
  }
  return drift;
}

}  // namespace qnet

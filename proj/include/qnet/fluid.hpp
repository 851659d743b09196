#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <list>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "qnet/chain.hpp"
#include "qnet/cvcore.hpp"
#include "qnet/errors.hpp"
#include "qnet/network.hpp"
#include "qnet/policy.hpp"

namespace qnet {

struct FluidAllocation {
  std::vector<double> u;      // per-class effort, station sums <= 1
  std::vector<double> drift;  // dphi/dt
};

// Fluid allocation of a preemptive priority policy at buffer levels phi.
// Walking each station in priority order: a positive buffer takes all effort
// that is left; an empty buffer takes just enough to balance its instantaneous
// inflow (capped by what is left, in which case it starts to grow). Inflows
// couple the stations, so the assignment is repeated until it stops changing.
inline FluidAllocation fluid_drift(const NetworkSpec& spec, const PriorityPolicy& policy,
                                   const std::vector<double>& phi) {
  const int l = spec.num_classes;
  const auto& lam = spec.arrival_rates;
  const auto& mu = spec.service_rates;

  FluidAllocation fa;
  fa.u.assign(l, 0.0);

  auto inflow = [&](int i) {
    double f = lam[i];
    for (int j = 0; j < l; ++j) f += mu[j] * fa.u[j] * spec.r(j, i);
    return f;
  };

  const int max_passes = l * l + 1;
  bool converged = false;
  for (int pass = 0; pass < max_passes && !converged; ++pass) {
    converged = true;
    for (const auto& st : policy.order()) {
      double remaining = 1.0;
      for (int i : st) {
        double ui;
        if (phi[i] > 0.0) {
          ui = remaining;
        } else {
          ui = std::min(inflow(i) / mu[i], remaining);
        }
        if (std::abs(ui - fa.u[i]) > 1e-14 * (1.0 + std::abs(ui))) converged = false;
        fa.u[i] = ui;
        remaining -= ui;
        if (remaining < 0.0) remaining = 0.0;
      }
    }
  }
  if (!converged) {
    std::string state;
    for (int i = 0; i < l; ++i) state += (i ? "," : "") + std::to_string(phi[i]);
    raise(Errc::NonConvergentBoundary, "boundary allocation did not settle at phi=(" + state + ")");
  }

  fa.drift.assign(l, 0.0);
  for (int i = 0; i < l; ++i) fa.drift[i] = inflow(i) - mu[i] * fa.u[i];
  return fa;
}

struct FluidSegment {
  double t_start = 0.0;
  double duration = 0.0;
  std::vector<double> phi_start;
  std::vector<double> u;
  std::vector<double> drift;
};

struct FluidPath {
  std::vector<FluidSegment> segments;
  double drain_time = 0.0;
  double value = 0.0;  // integral of |phi(t)|_1 up to the drain time
};

// Integrates the fluid trajectory from y exactly: the allocation is constant
// on cones of the state space, so the path is piecewise linear and each
// segment ends when some positive buffer empties. The trajectory of a stable
// policy drains in finitely many segments; revisiting a cone without having
// reduced |phi| means it never will.
inline FluidPath solve_fluid(const NetworkSpec& spec, const PriorityPolicy& policy, std::vector<double> y0) {
  const int l = spec.num_classes;
  for (double v : y0)
    if (!(v >= 0.0)) raise(Errc::InvalidSpec, "fluid state must be nonnegative");

  FluidPath path;
  std::vector<double> phi = std::move(y0);
  double scale = 1.0;
  for (double v : phi) scale = std::max(scale, v);
  const double snap = 1e-12 * scale;
  const size_t max_segments = static_cast<size_t>(64) * l * l;

  std::unordered_map<std::string, double> cone_entry;  // positivity pattern -> |phi| when entered
  double t = 0.0;

  for (;;) {
    double norm = 0.0;
    for (double& v : phi) {
      if (v < snap) v = 0.0;
      norm += v;
    }
    if (norm == 0.0) break;

    std::string cone(l, '0');
    for (int i = 0; i < l; ++i)
      if (phi[i] > 0.0) cone[i] = '1';
    auto [it, fresh] = cone_entry.try_emplace(cone, norm);
    if (!fresh) {
      if (norm >= it->second - snap)
        raise(Errc::FluidUnstable, "trajectory re-entered a cone without draining");
      it->second = norm;
    }

    FluidAllocation fa = fluid_drift(spec, policy, phi);

    double tau = std::numeric_limits<double>::infinity();
    for (int i = 0; i < l; ++i)
      if (phi[i] > 0.0 && fa.drift[i] < 0.0) tau = std::min(tau, -phi[i] / fa.drift[i]);
    if (!std::isfinite(tau)) raise(Errc::FluidUnstable, "no positive buffer is draining");

    double norm_end = 0.0;
    for (int i = 0; i < l; ++i) norm_end += std::max(0.0, phi[i] + tau * fa.drift[i]);
    path.value += tau * 0.5 * (norm + norm_end);

    path.segments.push_back({t, tau, phi, fa.u, fa.drift});
    for (int i = 0; i < l; ++i) phi[i] = std::max(0.0, phi[i] + tau * fa.drift[i]);
    t += tau;

    if (path.segments.size() > max_segments)
      raise(Errc::FluidUnstable, "segment budget exhausted; fluid model appears unstable");
  }

  path.drain_time = t;
  return path;
}

namespace detail {

struct StateHash {
  size_t operator()(const std::vector<int32_t>& v) const noexcept {
    size_t h = 1469598103934665603ull;
    for (int32_t x : v) {
      h ^= static_cast<uint32_t>(x);
      h *= 1099511628211ull;
    }
    return h;
  }
};

using StateMap = std::unordered_map<std::vector<int32_t>, double, StateHash>;

// Bounded map with least-recently-used eviction.
class LruCache {
 public:
  explicit LruCache(size_t capacity) : capacity_(capacity) {}

  const double* get(const std::vector<int32_t>& key) {
    auto it = map_.find(key);
    if (it == map_.end()) return nullptr;
    order_.splice(order_.begin(), order_, it->second);
    return &it->second->second;
  }

  void put(std::vector<int32_t> key, double value) {
    auto it = map_.find(key);
    if (it != map_.end()) {
      it->second->second = value;
      order_.splice(order_.begin(), order_, it->second);
      return;
    }
    order_.emplace_front(std::move(key), value);
    map_[order_.front().first] = order_.begin();
    if (map_.size() > capacity_) {
      map_.erase(order_.back().first);
      order_.pop_back();
    }
  }

  size_t size() const { return map_.size(); }

  void drain_into(StateMap& out) {
    for (auto& [k, v] : order_) out.emplace(std::move(k), v);
    order_.clear();
    map_.clear();
  }

 private:
  size_t capacity_;
  std::list<std::pair<std::vector<int32_t>, double>> order_;
  std::unordered_map<std::vector<int32_t>,
                     std::list<std::pair<std::vector<int32_t>, double>>::iterator, StateHash>
      map_;
};

}  // namespace detail

// Value function of the fluid model, V(y) = integral of |phi| from y to the
// drain time, in uniformized time units, with transparent per-state caching.
// value() and delta() are pure functions of the state; forks share a frozen
// read-only layer (filled by freeze()) and keep private caches for new states,
// so concurrent replications never touch shared mutable data.
class FluidValueFn {
 public:
  FluidValueFn(UniformizedNetwork net, PriorityPolicy policy, size_t cache_capacity = 1000000)
      : net_(std::move(net)),
        policy_(std::move(policy)),
        capacity_(cache_capacity),
        frozen_(std::make_shared<detail::StateMap>()),
        values_(cache_capacity),
        deltas_(cache_capacity),
        frozen_deltas_(std::make_shared<detail::StateMap>()) {}

  const UniformizedNetwork& network() const { return net_; }
  const PriorityPolicy& policy() const { return policy_; }

  double value(const std::vector<int32_t>& y) const {
    if (auto it = frozen_->find(y); it != frozen_->end()) return it->second;
    if (const double* hit = values_.get(y)) return *hit;
    std::vector<double> phi(y.begin(), y.end());
    double v = solve_fluid(net_.spec, policy_, phi).value;
    values_.put(y, v);
    return v;
  }

  // Delta_V(y) = PV(y) - V(y), with the self-loop mass of inactive classes
  // kept explicitly so the one-step probabilities sum to one.
  double delta(const std::vector<int32_t>& y) const {
    std::vector<uint8_t> w(y.size(), 0);
    policy_.allocate(y, w);
    return delta(y, w);
  }

  double delta(const std::vector<int32_t>& y, const std::vector<uint8_t>& w) const {
    if (auto it = frozen_deltas_->find(y); it != frozen_deltas_->end()) return it->second;
    if (const double* hit = deltas_.get(y)) return *hit;

    const NetworkSpec& spec = net_.spec;
    const int l = spec.num_classes;
    const double vy = value(y);
    double pv = 0.0;
    double self_mass = 0.0;
    std::vector<int32_t> nb(y);

    for (int k = 0; k < l; ++k) {
      if (spec.arrival_rates[k] <= 0.0) continue;
      ++nb[k];
      pv += spec.arrival_rates[k] * value(nb);
      --nb[k];
    }
    for (int j = 0; j < l; ++j) {
      const double mu = spec.service_rates[j];
      if (!w[j]) {
        self_mass += mu;
        continue;
      }
      --nb[j];
      const double exit = spec.exit_prob(j);
      if (exit > 0.0) pv += mu * exit * value(nb);
      for (int k = 0; k < l; ++k) {
        if (spec.r(j, k) <= 0.0) continue;
        ++nb[k];
        pv += mu * spec.r(j, k) * value(nb);
        --nb[k];
      }
      ++nb[j];
    }
    pv += self_mass * vy;

    double d = pv - vy;
    deltas_.put(y, d);
    return d;
  }

  // Publishes everything cached so far as the shared read-only layer.
  void freeze() {
    auto fv = std::make_shared<detail::StateMap>(*frozen_);
    values_.drain_into(*fv);
    frozen_ = std::move(fv);
    auto fd = std::make_shared<detail::StateMap>(*frozen_deltas_);
    deltas_.drain_into(*fd);
    frozen_deltas_ = std::move(fd);
  }

  // Cheap copy sharing the frozen layer; private caches start empty.
  FluidValueFn fork() const {
    FluidValueFn f(net_, policy_, capacity_);
    f.frozen_ = frozen_;
    f.frozen_deltas_ = frozen_deltas_;
    return f;
  }

  size_t cached_states() const { return frozen_->size() + values_.size(); }

 private:
  UniformizedNetwork net_;
  PriorityPolicy policy_;
  size_t capacity_;
  std::shared_ptr<const detail::StateMap> frozen_;
  mutable detail::LruCache values_;
  mutable detail::LruCache deltas_;
  std::shared_ptr<const detail::StateMap> frozen_deltas_;
};

// Per-step control Delta_V(Y(k)) for chain::run. The value function is shared,
// not copied; the caller keeps it alive for the duration of the run.
inline StepControl make_fluid_control(const std::shared_ptr<FluidValueFn>& fn) {
  return StepControl{"fluid", [fn](const std::vector<int32_t>& y, const std::vector<uint8_t>& w) {
                       return fn->delta(y, w);
                     }};
}

// Batch-means estimate on response |Y| with control Delta_V(Y).
inline EstimatorResult fluid_estimate(const RunAccumulator& acc, int batches,
                                      std::optional<double> frozen_beta = std::nullopt) {
  return loh_estimate(batch(acc.pop_series, acc.control("fluid"), batches), frozen_beta, "fluid");
}

}  // namespace qnet

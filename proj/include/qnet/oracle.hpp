#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "qnet/chain.hpp"
#include "qnet/errors.hpp"
#include "qnet/network.hpp"
#include "qnet/policy.hpp"

namespace qnet {

// Closed forms for the single queue, with rates normalized to lambda + mu = 1
// so the embedded chain moves up with probability lambda and down (or stays,
// at zero) with probability mu. hstar solves P h - h = -y + alpha.
struct Mm1 {
  double lambda = 0.0;
  double mu = 0.0;

  double rho() const { return lambda / mu; }
  double alpha() const { return lambda / (mu - lambda); }
  double a() const { return 0.5 / (mu - lambda); }
  double hstar(double y) const { return a() * (y * y + y); }

  double p_up() const { return lambda; }
  double p_down(long long y) const { return y > 0 ? mu : 0.0; }
  double p_stay(long long y) const { return y > 0 ? 0.0 : mu; }

  double apply_p_hstar(long long y) const {
    double s = p_up() * hstar(static_cast<double>(y + 1));
    if (y > 0)
      s += mu * hstar(static_cast<double>(y - 1));
    else
      s += mu * hstar(0.0);
    return s;
  }

  // P hstar(y) - hstar(y); equals -y + alpha for every y >= 0
  double poisson_residual(long long y) const {
    return apply_p_hstar(y) - hstar(static_cast<double>(y)) - (-static_cast<double>(y) + alpha());
  }
};

inline Mm1 mm1_analytics(double lambda, double mu) {
  if (!(lambda > 0.0) || !(mu > 0.0)) raise(Errc::InvalidSpec, "rates must be positive");
  if (lambda >= mu) raise(Errc::UnstableQueue, "lambda >= mu");
  const double total = lambda + mu;
  return Mm1{lambda / total, mu / total};
}

// The uniformized chain restricted to the box {0..cap_i}^l; transitions that
// would leave the box become self-loops, which keeps every row stochastic.
// The stationary vector is found by power iteration.
class TruncatedChain {
 public:
  TruncatedChain(const UniformizedNetwork& net, const Policy& policy, std::vector<int32_t> caps)
      : net_(net), caps_(std::move(caps)) {
    const int l = net.spec.num_classes;
    if (static_cast<int>(caps_.size()) != l) raise(Errc::InvalidSpec, "need one cap per class");

    num_states_ = 1;
    strides_.assign(l, 0);
    for (int i = 0; i < l; ++i) {
      strides_[i] = num_states_;
      num_states_ *= static_cast<size_t>(caps_[i]) + 1;
      if (num_states_ > 1000000) raise(Errc::InvalidSpec, "truncation box exceeds 1e6 states");
    }

    EventTable table(net);
    std::vector<int32_t> y(l, 0);
    std::vector<uint8_t> w(l, 0);
    row_begin_.assign(num_states_ + 1, 0);

    for (size_t s = 0; s < num_states_; ++s) {
      decode(s, y);
      policy.allocate(y, w);
      double self = 0.0;
      for (const Event& e : table.events()) {
        size_t target = s;
        if (e.from == 0) {
          if (y[e.to - 1] == caps_[e.to - 1]) {
            self += e.prob;  // reflected
            continue;
          }
          target = s + strides_[e.to - 1];
        } else if (!w[e.from - 1]) {
          self += e.prob;  // virtual
          continue;
        } else {
          if (e.to != 0 && y[e.to - 1] == caps_[e.to - 1]) {
            self += e.prob;  // reflected
            continue;
          }
          target = s - strides_[e.from - 1] + (e.to != 0 ? strides_[e.to - 1] : 0);
        }
        targets_.push_back(target);
        probs_.push_back(e.prob);
      }
      if (self > 0.0) {
        targets_.push_back(s);
        probs_.push_back(self);
      }
      row_begin_[s + 1] = targets_.size();
    }
  }

  void solve(double tol = 1e-10, long long max_iters = 1000000) {
    pi_.assign(num_states_, 1.0 / static_cast<double>(num_states_));
    std::vector<double> next(num_states_);
    for (long long it = 0; it < max_iters; ++it) {
      std::fill(next.begin(), next.end(), 0.0);
      for (size_t s = 0; s < num_states_; ++s) {
        const double ps = pi_[s];
        if (ps == 0.0) continue;
        for (size_t e = row_begin_[s]; e < row_begin_[s + 1]; ++e) next[targets_[e]] += ps * probs_[e];
      }
      double diff = 0.0;
      for (size_t s = 0; s < num_states_; ++s) diff += std::abs(next[s] - pi_[s]);
      pi_.swap(next);
      if (diff <= tol) {
        residual_ = diff;
        return;
      }
    }
    raise(Errc::NoConvergence, "power iteration did not reach tolerance");
  }

  size_t num_states() const { return num_states_; }
  double stationary_residual() const { return residual_; }
  const std::vector<double>& pi() const { return pi_; }

  double expectation(const std::function<double(const std::vector<int32_t>&)>& f) const {
    std::vector<int32_t> y(caps_.size(), 0);
    double s = 0.0;
    for (size_t i = 0; i < num_states_; ++i) {
      decode(i, y);
      s += pi_[i] * f(y);
    }
    return s;
  }

  std::vector<double> ybar() const {
    const int l = static_cast<int>(caps_.size());
    std::vector<double> yb(l, 0.0);
    std::vector<int32_t> y(l, 0);
    for (size_t i = 0; i < num_states_; ++i) {
      decode(i, y);
      for (int j = 0; j < l; ++j) yb[j] += pi_[i] * y[j];
    }
    return yb;
  }

  // E[w_i y_j], row-major in i
  std::vector<double> zbar(const Policy& policy) const {
    const int l = static_cast<int>(caps_.size());
    std::vector<double> zb(static_cast<size_t>(l) * l, 0.0);
    std::vector<int32_t> y(l, 0);
    std::vector<uint8_t> w(l, 0);
    for (size_t i = 0; i < num_states_; ++i) {
      decode(i, y);
      policy.allocate(y, w);
      for (int a = 0; a < l; ++a) {
        if (!w[a]) continue;
        for (int b = 0; b < l; ++b) zb[static_cast<size_t>(a) * l + b] += pi_[i] * y[b];
      }
    }
    return zb;
  }

  double alpha() const {
    auto yb = ybar();
    double s = 0.0;
    for (double v : yb) s += v;
    return s;
  }

  // Time-average variance constant of |Y| via the stationary identity
  // sigma^2 = E[h(Y)(|Y| - E|Y|)] - Var|Y| with h the (dense) solution of
  // P h - h = -|y| + alpha on the box. Small boxes only.
  double tavc() const {
    if (num_states_ > 4096) raise(Errc::InvalidSpec, "tavc solve limited to 4096 states");
    const Eigen::Index n = static_cast<Eigen::Index>(num_states_);
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
    for (size_t s = 0; s < num_states_; ++s)
      for (size_t e = row_begin_[s]; e < row_begin_[s + 1]; ++e)
        a(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(targets_[e])) -= probs_[e];

    const double al = alpha();
    Eigen::VectorXd rhs(n);
    std::vector<int32_t> y(caps_.size(), 0);
    for (size_t s = 0; s < num_states_; ++s) {
      decode(s, y);
      double pop = 0.0;
      for (int32_t v : y) pop += v;
      rhs(static_cast<Eigen::Index>(s)) = pop - al;
    }
    // (I - P) is singular; pin h(0) = 0
    a.row(0).setZero();
    a(0, 0) = 1.0;
    rhs(0) = 0.0;
    Eigen::VectorXd h = a.partialPivLu().solve(rhs);

    double cross = 0.0, var = 0.0;
    for (size_t s = 0; s < num_states_; ++s) {
      decode(s, y);
      double pop = 0.0;
      for (int32_t v : y) pop += v;
      cross += pi_[s] * h(static_cast<Eigen::Index>(s)) * (pop - al);
      var += pi_[s] * (pop - al) * (pop - al);
    }
    return cross - var;
  }

 private:
  void decode(size_t index, std::vector<int32_t>& y) const {
    for (size_t i = 0; i < caps_.size(); ++i) {
      size_t base = static_cast<size_t>(caps_[i]) + 1;
      y[i] = static_cast<int32_t>((index / strides_[i]) % base);
    }
  }

  UniformizedNetwork net_;
  std::vector<int32_t> caps_;
  std::vector<size_t> strides_;
  size_t num_states_ = 0;
  std::vector<size_t> row_begin_;
  std::vector<size_t> targets_;
  std::vector<double> probs_;
  std::vector<double> pi_;
  double residual_ = 0.0;
};

inline TruncatedChain truncated_stationary(const UniformizedNetwork& net, const Policy& policy,
                                           std::vector<int32_t> caps, double tol = 1e-10) {
  TruncatedChain tc(net, policy, std::move(caps));
  tc.solve(tol);
  return tc;
}

// Small-step integration of the fluid dynamics that needs no boundary rule:
// within each dt the station serves its buffers in priority order, each taking
// the lesser of its content and what the remaining server time can process.
// Returns the integral of |phi| until the fluid is (numerically) drained.
inline double euler_fluid(const NetworkSpec& spec, const PriorityPolicy& policy,
                          const std::vector<double>& y0, double dt) {
  if (!(dt > 0.0) || dt > 1e-3) raise(Errc::InvalidSpec, "dt must be in (0, 1e-3]");
  const int l = spec.num_classes;
  double total_rate = 0.0;
  for (int i = 0; i < l; ++i) total_rate += spec.arrival_rates[i] + spec.service_rates[i];
  const double stop = 2.0 * l * dt * total_rate;
  const double horizon = 1e6 * dt * l;

  std::vector<double> phi(y0);
  std::vector<double> served(l, 0.0);
  double value = 0.0;
  double t = 0.0;

  for (;;) {
    double norm = 0.0;
    for (double v : phi) norm += v;
    if (norm <= stop) break;
    if (t > horizon) raise(Errc::HorizonExceeded, "fluid not drained within the integration horizon");

    std::fill(served.begin(), served.end(), 0.0);
    for (const auto& st : policy.order()) {
      double time_left = dt;
      for (int i : st) {
        if (time_left <= 0.0) break;
        if (phi[i] <= 0.0) continue;
        double q = std::min(phi[i], spec.service_rates[i] * time_left);
        served[i] = q;
        time_left -= q / spec.service_rates[i];
      }
    }

    double norm_after = 0.0;
    for (int i = 0; i < l; ++i) {
      double next = phi[i] - served[i] + spec.arrival_rates[i] * dt;
      for (int j = 0; j < l; ++j) next += served[j] * spec.r(j, i);
      phi[i] = next;
      norm_after += next;
    }
    value += dt * 0.5 * (norm + norm_after);
    t += dt;
  }
  return value;
}

}  // namespace qnet

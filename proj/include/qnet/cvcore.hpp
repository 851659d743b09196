#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "qnet/errors.hpp"

namespace qnet {

// Batch means of a response series and (optionally) a single control series.
// The raw series is split into b contiguous batches of m observations each;
// a trailing remainder is dropped.
struct BatchSeries {
  std::vector<double> x;  // response batch means
  std::vector<double> c;  // control batch means, empty when no control
  long long m = 0;        // batch size

  int batches() const { return static_cast<int>(x.size()); }
  bool has_control() const { return !c.empty(); }
};

inline BatchSeries batch(const std::vector<double>& response, const std::vector<double>& control, int b) {
  if (b < 3) raise(Errc::TooFewBatches, "need at least 3 batches, got " + std::to_string(b));
  long long m = static_cast<long long>(response.size()) / b;
  if (m < 1) raise(Errc::TooFewBatches, "series of length " + std::to_string(response.size()) +
                                            " cannot fill " + std::to_string(b) + " batches");
  if (!control.empty() && control.size() != response.size())
    raise(Errc::InvalidSpec, "control series length differs from response");

  BatchSeries bs;
  bs.m = m;
  bs.x.resize(b);
  if (!control.empty()) bs.c.resize(b);
  for (int i = 0; i < b; ++i) {
    double sx = 0.0, sc = 0.0;
    for (long long j = static_cast<long long>(i) * m; j < (i + 1LL) * m; ++j) {
      sx += response[j];
      if (!control.empty()) sc += control[j];
    }
    bs.x[i] = sx / m;
    if (!control.empty()) bs.c[i] = sc / m;
  }
  return bs;
}

inline BatchSeries batch(const std::vector<double>& response, int b) { return batch(response, {}, b); }

struct EstimatorResult {
  std::string label;
  double point = 0.0;
  double beta = 0.0;
  double s2 = 0.0;  // estimated variance of the point estimate
  int dof = 0;
  double ci_half_width = 0.0;  // 95% two-sided Student-t interval
  bool degenerate_control = false;
  bool beta_frozen = false;

  double ci_lo() const { return point - ci_half_width; }
  double ci_hi() const { return point + ci_half_width; }
};

inline double t_quantile_975(int dof) {
  return boost::math::quantile(boost::math::students_t(static_cast<double>(dof)), 0.975);
}

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

// Point estimate, control coefficient and variance from batch means.
//
// With a control: beta = -V_XC / V_CC, point = Xbar + beta * Cbar,
//   R^2 = (b-1)/(b-2) * (V_XX - V_XC^2 / V_CC),
//   S^2 = R^2 * (1/b + Cbar^2 / ((b-1) V_CC)),  dof = b-2.
// Without a control (or when the control batch means are constant, which is
// flagged): point = Xbar, S^2 = V_XX / b, dof = b-1.
// `frozen_beta` bypasses the beta estimate and uses the classical formula for
// the variance of the combined series.
inline EstimatorResult loh_estimate(const BatchSeries& bs, std::optional<double> frozen_beta = std::nullopt,
                                    const std::string& label = "") {
  const int b = bs.batches();
  if (b < 3) raise(Errc::TooFewBatches, "need at least 3 batches, got " + std::to_string(b));

  EstimatorResult res;
  res.label = label;
  const double xbar = detail::mean_of(bs.x);

  double vxx = 0.0;
  for (double x : bs.x) vxx += (x - xbar) * (x - xbar);
  vxx /= (b - 1);

  auto plain = [&](double point, double beta) {
    res.point = point;
    res.beta = beta;
    res.s2 = vxx / b;
    res.dof = b - 1;
  };

  if (!bs.has_control()) {
    plain(xbar, 0.0);
  } else {
    const double cbar = detail::mean_of(bs.c);
    double vcc = 0.0, vxc = 0.0;
    for (int i = 0; i < b; ++i) {
      vcc += (bs.c[i] - cbar) * (bs.c[i] - cbar);
      vxc += (bs.x[i] - xbar) * (bs.c[i] - cbar);
    }
    vcc /= (b - 1);
    vxc /= (b - 1);

    if (frozen_beta) {
      const double beta = *frozen_beta;
      res.beta = beta;
      res.beta_frozen = true;
      res.point = xbar + beta * cbar;
      double v = 0.0;
      for (int i = 0; i < b; ++i) {
        double t = bs.x[i] + beta * bs.c[i] - res.point;
        v += t * t;
      }
      res.s2 = v / (b - 1) / b;
      res.dof = b - 1;
    } else if (vcc <= 0.0 || vcc < 1e-26 * (1.0 + cbar * cbar)) {
      plain(xbar, 0.0);
      res.degenerate_control = true;
    } else {
      res.beta = -vxc / vcc;
      res.point = xbar + res.beta * cbar;
      double r2 = (static_cast<double>(b - 1) / (b - 2)) * (vxx - vxc * vxc / vcc);
      if (r2 < 0.0) r2 = 0.0;  // Cauchy-Schwarz holds up to rounding
      res.s2 = r2 * (1.0 / b + cbar * cbar / ((b - 1) * vcc));
      res.dof = b - 2;
    }
  }

  res.ci_half_width = t_quantile_975(res.dof) * std::sqrt(res.s2);
  return res;
}

}  // namespace qnet

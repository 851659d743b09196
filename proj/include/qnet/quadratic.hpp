#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qnet/chain.hpp"
#include "qnet/cvcore.hpp"
#include "qnet/errors.hpp"
#include "qnet/network.hpp"
#include "qnet/policy.hpp"
#include "qnet/rng.hpp"

namespace qnet {

// Linear constraints on the stationary moments zbar_ij = E[W_i Y_j], one per
// unordered pair of classes, assembled so that U' zbar = c holds exactly in
// steady state. The response |y| equals p'z with p_ij = 1{s(i) = s(j)}, and
// nu'(U'z - c) is a mean-zero control. All coefficients are in uniformized
// rates.
struct QuadraticCV {
  int num_classes = 0;
  Eigen::MatrixXd U;               // l^2 rows, l(l+1)/2 columns
  Eigen::VectorXd c;               // l(l+1)/2
  Eigen::VectorXd p;               // l^2, 0/1 entries
  std::vector<uint8_t> zero_mask;  // l^2; 1 marks a z-coordinate known to vanish
  Eigen::VectorXd nu;
  double residual = std::numeric_limits<double>::quiet_NaN();  // ||U nu + p||_2
  bool rank_deficient = false;

  Eigen::VectorXd u_nu;   // U * nu, cached for per-step evaluation
  double nu_dot_c = 0.0;

  int z_index(int i, int j) const { return i * num_classes + j; }
  int col_index(int j, int k) const {  // j <= k, 0-based
    // columns ordered (0,0),(0,1),...,(0,l-1),(1,1),...
    return j * num_classes - j * (j - 1) / 2 + (k - j);
  }
  int num_pairs() const { return num_classes * (num_classes + 1) / 2; }
};

// Coordinates z_ij that vanish along every trajectory of a preemptive
// priority policy: w_i = 1 forces every higher-priority class at the same
// station to be empty.
inline std::vector<uint8_t> priority_zero_mask(const PriorityPolicy& policy, const NetworkSpec& spec) {
  const int l = spec.num_classes;
  std::vector<uint8_t> mask(static_cast<size_t>(l) * l, 0);
  for (const auto& st : policy.order())
    for (size_t a = 0; a < st.size(); ++a)
      for (size_t b = a + 1; b < st.size(); ++b) mask[static_cast<size_t>(st[b]) * l + st[a]] = 1;
  return mask;
}

// Builds U, c, p from the stationarity of the test functions y_j y_k and
// y_j^2, with every ybar_j occurrence replaced by sum_{i at s(j)} zbar_ij so
// that the constraints are linear in zbar alone. The traffic solution must
// belong to the same (uniformized) rates.
inline QuadraticCV build_constraints(const UniformizedNetwork& net, const TrafficSolution& traffic,
                                     const std::vector<uint8_t>& zero_mask = {}) {
  const NetworkSpec& spec = net.spec;
  const int l = spec.num_classes;
  const auto& lam = spec.arrival_rates;
  const auto& mu = spec.service_rates;
  const auto& gamma = traffic.gamma;

  QuadraticCV cv;
  cv.num_classes = l;
  cv.U = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l) * l, cv.num_pairs());
  cv.c = Eigen::VectorXd::Zero(cv.num_pairs());
  cv.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(l) * l);

  for (int i = 0; i < l; ++i)
    for (int j = 0; j < l; ++j)
      if (spec.station_of[i] == spec.station_of[j]) cv.p(cv.z_index(i, j)) = 1.0;

  // coef * ybar_j expressed in z coordinates
  auto add_ybar = [&](int col, int j, double coef) {
    for (int i = 0; i < l; ++i)
      if (spec.station_of[i] == spec.station_of[j]) cv.U(cv.z_index(i, j), col) += coef;
  };

  for (int j = 0; j < l; ++j) {
    for (int k = j; k < l; ++k) {
      const int col = cv.col_index(j, k);
      if (j == k) {
        // 2 mu_j z_jj - 2 lambda_j ybar_j - 2 sum_i mu_i R_ij z_ij = 2 gamma_j
        add_ybar(col, j, -2.0 * lam[j]);
        cv.U(cv.z_index(j, j), col) += 2.0 * mu[j];
        for (int i = 0; i < l; ++i) cv.U(cv.z_index(i, j), col) -= 2.0 * mu[i] * spec.r(i, j);
        cv.c(col) = 2.0 * gamma[j];
      } else {
        // lambda_j ybar_k + lambda_k ybar_j - mu_j z_jk - mu_k z_kj
        //   + sum_i mu_i (R_ij z_ik + R_ik z_ij) = gamma_j R_jk + gamma_k R_kj
        add_ybar(col, k, lam[j]);
        add_ybar(col, j, lam[k]);
        cv.U(cv.z_index(j, k), col) -= mu[j];
        cv.U(cv.z_index(k, j), col) -= mu[k];
        for (int i = 0; i < l; ++i) {
          cv.U(cv.z_index(i, k), col) += mu[i] * spec.r(i, j);
          cv.U(cv.z_index(i, j), col) += mu[i] * spec.r(i, k);
        }
        cv.c(col) = gamma[j] * spec.r(j, k) + gamma[k] * spec.r(k, j);
      }
    }
  }

  if (!zero_mask.empty()) {
    if (zero_mask.size() != static_cast<size_t>(l) * l) raise(Errc::InvalidSpec, "zero mask has wrong size");
    cv.zero_mask = zero_mask;
    for (int z = 0; z < l * l; ++z)
      if (zero_mask[z]) cv.U.row(z).setZero();
  }

  return cv;
}

// nu = argmin ||U nu + p||_2 by complete orthogonal decomposition, which also
// yields the minimum-norm solution when U is rank deficient (flagged). Masked
// z-coordinates are excluded from the objective.
inline void choose_nu(QuadraticCV& cv) {
  Eigen::VectorXd p = cv.p;
  if (!cv.zero_mask.empty())
    for (int z = 0; z < cv.num_classes * cv.num_classes; ++z)
      if (cv.zero_mask[z]) p(z) = 0.0;

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(cv.U);
  cv.nu = cod.solve(-p);
  cv.rank_deficient = cod.rank() < cv.U.cols();
  cv.residual = (cv.U * cv.nu + p).norm();
  cv.u_nu = cv.U * cv.nu;
  cv.nu_dot_c = cv.nu.dot(cv.c);
}

inline QuadraticCV make_quadratic_cv(const UniformizedNetwork& net, const TrafficSolution& traffic,
                                     const std::vector<uint8_t>& zero_mask = {}) {
  QuadraticCV cv = build_constraints(net, traffic, zero_mask);
  choose_nu(cv);
  return cv;
}

// nu'(U'z - c) for one snapshot z_ij = w_i y_j.
inline double control_value(const QuadraticCV& cv, const std::vector<double>& z_snapshot) {
  double s = -cv.nu_dot_c;
  for (int z = 0; z < cv.num_classes * cv.num_classes; ++z) s += cv.u_nu(z) * z_snapshot[z];
  return s;
}

// Per-step control for chain::run. Only rows of active classes contribute.
// The control owns a copy of the (small) coefficient structure.
inline StepControl make_quadratic_control(QuadraticCV cv) {
  return StepControl{"quadratic", [cv = std::move(cv)](const std::vector<int32_t>& y, const std::vector<uint8_t>& w) {
                       const int l = cv.num_classes;
                       double s = -cv.nu_dot_c;
                       for (int i = 0; i < l; ++i) {
                         if (!w[i]) continue;
                         const double* row = cv.u_nu.data() + static_cast<size_t>(i) * l;
                         for (int j = 0; j < l; ++j) s += row[j] * y[j];
                       }
                       return s;
                     }};
}

// Batch-means estimate on response p'Z with control nu'(U'Z - c).
inline EstimatorResult quadratic_estimate(const RunAccumulator& acc, int batches,
                                          std::optional<double> frozen_beta = std::nullopt) {
  return loh_estimate(batch(acc.pz_series, acc.control("quadratic"), batches), frozen_beta, "quadratic");
}

// Estimate of the best variance any choice of nu could reach, obtained by
// estimating the time-average covariance matrix Lambda of Z from one long run
// (batch-means scaling: Lambda ~ m * Cov(batch means)) and minimizing
// (p + U nu)' Lambda (p + U nu).
struct NuDiagnostic {
  Eigen::MatrixXd lambda;
  Eigen::VectorXd nu_lambda;
  double standard_tavc = 0.0;  // p' Lambda p
  double best_tavc = 0.0;      // minimized quadratic form
  double reduction = 0.0;
  bool regularized = false;
};

inline NuDiagnostic optimal_nu_diagnostic(const UniformizedNetwork& net, const Policy& policy,
                                          const QuadraticCV& cv, long long n_steps, int batches,
                                          RngStream rng) {
  const int l = net.spec.num_classes;
  const int zn = l * l;
  const long long m = n_steps / batches;
  if (m < 1) raise(Errc::TooFewBatches, "run too short for requested batches");

  // stream batch sums of the z snapshot
  Eigen::MatrixXd bsum = Eigen::MatrixXd::Zero(batches, zn);
  EventTable table(net);
  std::vector<int32_t> y(l, 0);
  std::vector<uint8_t> w(l, 0);
  for (long long k = 0; k < m * batches; ++k) {
    policy.allocate(y, w);
    const int b = static_cast<int>(k / m);
    for (int i = 0; i < l; ++i) {
      if (!w[i]) continue;
      for (int j = 0; j < l; ++j) bsum(b, cv.z_index(i, j)) += y[j];
    }
    apply_event(table.sample(rng.uniform()), w, y);
  }
  bsum /= static_cast<double>(m);

  Eigen::RowVectorXd mean = bsum.colwise().mean();
  Eigen::MatrixXd centered = bsum.rowwise() - mean;
  Eigen::MatrixXd lambda =
      static_cast<double>(m) / (batches - 1) * (centered.transpose() * centered);
  lambda = 0.5 * (lambda + lambda.transpose());

  NuDiagnostic diag;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lambda);
  const double trace = lambda.trace();
  if (eig.eigenvalues().minCoeff() < 1e-12 * std::max(1.0, trace)) {
    lambda += (1e-8 * trace / zn) * Eigen::MatrixXd::Identity(zn, zn);
    diag.regularized = true;
  }
  diag.lambda = lambda;

  Eigen::MatrixXd a = cv.U.transpose() * lambda * cv.U;
  Eigen::VectorXd rhs = -cv.U.transpose() * lambda * cv.p;
  diag.nu_lambda = a.ldlt().solve(rhs);

  Eigen::VectorXd resid = cv.p + cv.U * diag.nu_lambda;
  diag.standard_tavc = cv.p.dot(lambda * cv.p);
  diag.best_tavc = resid.dot(lambda * resid);
  diag.reduction = diag.standard_tavc / diag.best_tavc;
  return diag;
}

}  // namespace qnet

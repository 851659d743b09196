#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "qnet/chain.hpp"
#include "qnet/cvcore.hpp"
#include "qnet/errors.hpp"
#include "qnet/fluid.hpp"
#include "qnet/network.hpp"
#include "qnet/policy.hpp"
#include "qnet/quadratic.hpp"
#include "qnet/rng.hpp"

namespace qnet {

inline constexpr const char* kVersion = "qnet 0.1.0";

struct ExperimentConfig {
  NetworkSpec network;
  PriorityPolicy policy;
  std::vector<std::string> estimators = {"standard", "quadratic", "fluid"};
  long long steps = 100000;
  int batches = 20;
  int reps = 50;
  std::uint64_t seed = 42;
  std::vector<double> rho2;           // target loads at the sweep station
  std::vector<double> lambda_scales;  // or explicit arrival-rate factors
  int load_station = 0;               // 1-based; 0 picks the bottleneck
  long long warmup = 0;
  bool use_zero_mask = false;
  int threads = 0;  // 0: hardware concurrency; NETSIM_THREADS caps either way
};

struct Cell {
  double load = 0.0;
  std::string estimator;
  std::vector<EstimatorResult> reps;
  double mean = 0.0;
  double variance = 0.0;
  double mean_s2 = 0.0;
  double reduction = 0.0;  // var(standard points) / var(these points)
  bool insufficient_reps = false;
  std::string error;
};

struct ExperimentReport {
  std::vector<double> loads;
  std::vector<std::string> estimators;
  std::vector<Cell> cells;  // load-major, estimator order as configured

  const Cell* cell(double load, const std::string& estimator) const {
    for (const auto& c : cells)
      if (c.load == load && c.estimator == estimator) return &c;
    return nullptr;
  }
  const Cell& cell_at(size_t load_idx, const std::string& estimator) const {
    const Cell* c = cell(loads.at(load_idx), estimator);
    if (!c) raise(Errc::InvalidSpec, "no such cell");
    return *c;
  }
};

inline std::pair<double, double> mean_and_variance(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var = xs.size() > 1 ? var / static_cast<double>(xs.size() - 1) : 0.0;
  return {mean, var};
}

inline int resolve_threads(int requested, int work_items) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("NETSIM_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1 && cap < n) n = cap;
  }
  return std::min(n, std::max(1, work_items));
}

namespace detail {

inline int sweep_station(const ExperimentConfig& cfg, const TrafficSolution& base) {
  if (cfg.load_station > 0) {
    if (cfg.load_station > cfg.network.num_stations) raise(Errc::InvalidSpec, "load station out of range");
    return cfg.load_station - 1;
  }
  int s = 0;
  for (int i = 1; i < cfg.network.num_stations; ++i)
    if (base.station_load[i] > base.station_load[s]) s = i;
  return s;
}

}  // namespace detail

// Runs the configured sweep. For each load point the arrival rates are scaled,
// the network re-uniformized, and the control structures built once; the R
// replications then share one trajectory pass per replication, so every
// estimator for a replication is a paired measurement on the same path.
// Replication 0 runs first on its own; it fills the fluid value cache, which
// is then frozen and shared read-only with the worker threads.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.reps < 1) raise(Errc::InvalidSpec, "need at least one replication");
  NetworkSpec base = validate(cfg.network);
  TrafficSolution base_traffic = solve_traffic(base);
  const int sweep_station = detail::sweep_station(cfg, base_traffic);

  std::vector<double> scales;
  if (!cfg.rho2.empty() && !cfg.lambda_scales.empty())
    raise(Errc::InvalidSpec, "give either rho2 targets or lambda scales, not both");
  for (double rho : cfg.rho2) scales.push_back(rho / base_traffic.station_load[sweep_station]);
  for (double f : cfg.lambda_scales) scales.push_back(f);
  if (scales.empty()) scales.push_back(1.0);

  const bool want_std =
      std::find(cfg.estimators.begin(), cfg.estimators.end(), "standard") != cfg.estimators.end();
  const bool want_quad =
      std::find(cfg.estimators.begin(), cfg.estimators.end(), "quadratic") != cfg.estimators.end();
  const bool want_fluid =
      std::find(cfg.estimators.begin(), cfg.estimators.end(), "fluid") != cfg.estimators.end();
  (void)want_std;

  ExperimentReport report;
  report.estimators = cfg.estimators;

  for (double scale : scales) {
    double load = std::numeric_limits<double>::quiet_NaN();
    std::vector<Cell> load_cells;
    for (const auto& est : cfg.estimators) {
      Cell c;
      c.estimator = est;
      load_cells.push_back(std::move(c));
    }

    try {
      NetworkSpec spec = validate(scale_arrivals(base, scale));
      TrafficSolution traffic = solve_traffic(spec);
      load = traffic.station_load[sweep_station];
      for (double rho : traffic.station_load)
        if (rho >= 1.0) raise(Errc::UnstableQueue, "station load " + std::to_string(rho) + " >= 1");

      UniformizedNetwork unet = uniformize(spec);
      TrafficSolution utraffic = solve_traffic(unet.spec);

      QuadraticCV qcv;
      if (want_quad) {
        std::vector<uint8_t> mask;
        if (cfg.use_zero_mask) mask = priority_zero_mask(cfg.policy, unet.spec);
        qcv = make_quadratic_cv(unet, utraffic, mask);
      }
      std::shared_ptr<FluidValueFn> fvf;
      if (want_fluid) fvf = std::make_shared<FluidValueFn>(unet, cfg.policy);

      std::vector<std::vector<EstimatorResult>> per_rep(cfg.reps);
      std::vector<std::string> rep_errors(cfg.reps);

      auto run_rep = [&](int rep, const std::shared_ptr<FluidValueFn>& fn) {
        std::vector<StepControl> controls;
        if (want_quad) controls.push_back(make_quadratic_control(qcv));
        if (want_fluid) controls.push_back(make_fluid_control(fn));
        RunAccumulator acc =
            run(unet, cfg.policy, cfg.steps, {}, RngStream(cfg.seed, rep), controls, cfg.warmup);
        std::vector<EstimatorResult> out;
        for (const auto& est : cfg.estimators) {
          if (est == "standard")
            out.push_back(loh_estimate(batch(acc.pop_series, cfg.batches), std::nullopt, "standard"));
          else if (est == "quadratic")
            out.push_back(quadratic_estimate(acc, cfg.batches));
          else if (est == "fluid")
            out.push_back(fluid_estimate(acc, cfg.batches));
          else
            raise(Errc::InvalidSpec, "unknown estimator " + est);
        }
        return out;
      };

      per_rep[0] = run_rep(0, fvf);
      if (fvf) fvf->freeze();

      if (cfg.reps > 1) {
        const int workers = resolve_threads(cfg.threads, cfg.reps - 1);
        std::atomic<int> next{1};
        auto work = [&]() {
          std::shared_ptr<FluidValueFn> local =
              fvf ? std::make_shared<FluidValueFn>(fvf->fork()) : nullptr;
          for (;;) {
            int rep = next.fetch_add(1);
            if (rep >= cfg.reps) break;
            try {
              per_rep[rep] = run_rep(rep, local);
            } catch (const std::exception& e) {
              rep_errors[rep] = e.what();
            }
          }
        };
        if (workers <= 1) {
          work();
        } else {
          std::vector<std::thread> pool;
          for (int t = 0; t < workers; ++t) pool.emplace_back(work);
          for (auto& th : pool) th.join();
        }
      }

      for (int rep = 0; rep < cfg.reps; ++rep)
        if (!rep_errors[rep].empty()) raise(Errc::ControlEvaluationFailure, rep_errors[rep]);

      for (size_t e = 0; e < cfg.estimators.size(); ++e) {
        Cell& c = load_cells[e];
        for (int rep = 0; rep < cfg.reps; ++rep) c.reps.push_back(per_rep[rep][e]);
      }

      // aggregates; reduction is relative to the standard cell of this load
      std::vector<double> std_points;
      for (size_t e = 0; e < cfg.estimators.size(); ++e)
        if (cfg.estimators[e] == "standard")
          for (const auto& r : load_cells[e].reps) std_points.push_back(r.point);
      double std_var = 0.0;
      if (std_points.size() > 1) std_var = mean_and_variance(std_points).second;

      for (Cell& c : load_cells) {
        std::vector<double> points, s2s;
        for (const auto& r : c.reps) {
          points.push_back(r.point);
          s2s.push_back(r.s2);
        }
        auto [m, v] = mean_and_variance(points);
        c.mean = m;
        c.mean_s2 = mean_and_variance(s2s).first;
        if (points.size() < 2) {
          c.insufficient_reps = true;
        } else {
          c.variance = v;
          if (std_var > 0.0 && v > 0.0) c.reduction = std_var / v;
        }
      }
    } catch (const std::exception& e) {
      for (Cell& c : load_cells) c.error = e.what();
    }

    report.loads.push_back(load);
    for (Cell& c : load_cells) {
      c.load = load;
      report.cells.push_back(std::move(c));
    }
  }

  return report;
}

// ---- emission ---------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

inline std::string csv_string(const ExperimentReport& report) {
  std::string out = "load,estimator,rep,point,beta,s2,ci_lo,ci_hi\n";
  for (const auto& c : report.cells) {
    for (size_t rep = 0; rep < c.reps.size(); ++rep) {
      const auto& r = c.reps[rep];
      out += detail::fmt_double(c.load);
      out += ',';
      out += c.estimator;
      out += ',';
      out += std::to_string(rep);
      out += ',';
      out += detail::fmt_double(r.point);
      out += ',';
      out += detail::fmt_double(r.beta);
      out += ',';
      out += detail::fmt_double(r.s2);
      out += ',';
      out += detail::fmt_double(r.ci_lo());
      out += ',';
      out += detail::fmt_double(r.ci_hi());
      out += '\n';
    }
  }
  return out;
}

inline nlohmann::ordered_json summary_json(const ExperimentReport& report, const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["version"] = kVersion;

  nlohmann::ordered_json conf;
  conf["steps"] = cfg.steps;
  conf["batches"] = cfg.batches;
  conf["reps"] = cfg.reps;
  conf["seed"] = cfg.seed;
  conf["warmup"] = cfg.warmup;
  conf["zero_mask"] = cfg.use_zero_mask;
  conf["estimators"] = cfg.estimators;
  conf["rho2"] = cfg.rho2;
  conf["lambda_scales"] = cfg.lambda_scales;
  conf["network"] = network_to_json(cfg.network);
  nlohmann::ordered_json order = nlohmann::ordered_json::object();
  for (size_t s = 0; s < cfg.policy.order().size(); ++s) {
    std::vector<int> classes;
    for (int i : cfg.policy.order()[s]) classes.push_back(i + 1);
    order[std::to_string(s + 1)] = classes;
  }
  conf["policy"] = {{"type", "priority"}, {"order", order}};
  j["config"] = conf;

  j["seeds"] = {{"base", cfg.seed}, {"stream", "one RngStream(seed, rep) per replication"}};

  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : report.cells) {
    nlohmann::ordered_json jc;
    jc["load"] = c.load;
    jc["estimator"] = c.estimator;
    jc["reps"] = c.reps.size();
    if (!c.error.empty()) {
      jc["error"] = c.error;
    } else {
      jc["mean"] = c.mean;
      if (c.insufficient_reps) {
        jc["variance"] = nullptr;
        jc["note"] = "insufficient reps";
      } else {
        jc["variance"] = c.variance;
        if (c.reduction > 0.0) jc["reduction"] = c.reduction;
      }
      jc["mean_s2"] = c.mean_s2;
    }
    cells.push_back(jc);
  }
  j["cells"] = cells;
  return j;
}

inline void emit(const ExperimentReport& report, const ExperimentConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) raise(Errc::IoError, "cannot create " + out_dir + ": " + ec.message());

  {
    std::ofstream f(fs::path(out_dir) / "results.csv", std::ios::binary);
    if (!f) raise(Errc::IoError, "cannot write results.csv");
    f << csv_string(report);
  }
  {
    std::ofstream f(fs::path(out_dir) / "summary.json", std::ios::binary);
    if (!f) raise(Errc::IoError, "cannot write summary.json");
    f << summary_json(report, cfg).dump(2) << '\n';
  }
}

}  // namespace qnet

// Command-line front end: simulation sweeps, the paper-style summary tables,
// and inspection helpers for the control structures and the fluid model.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qnet/qnet.hpp"

using namespace qnet;

namespace {

NetworkSpec load_or_default(const std::string& path) {
  if (path.empty()) return validate(two_station_three_buffer());
  return validate(load_network(path));
}

// Scales the arrival vector so the chosen station (default: the bottleneck)
// carries load rho.
NetworkSpec with_target_load(const NetworkSpec& base, double rho, int station_1based) {
  TrafficSolution ts = solve_traffic(base);
  int s;
  if (station_1based > 0) {
    if (station_1based > base.num_stations) raise(Errc::InvalidSpec, "load station out of range");
    s = station_1based - 1;
  } else {
    s = 0;
    for (int i = 1; i < base.num_stations; ++i)
      if (ts.station_load[i] > ts.station_load[s]) s = i;
  }
  return validate(scale_arrivals(base, rho / ts.station_load[s]));
}

std::vector<double> parse_state(const std::string& text, int num_classes) {
  std::vector<double> y;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) y.push_back(std::stod(part));
  if (static_cast<int>(y.size()) != num_classes)
    raise(Errc::InvalidSpec, "state has " + std::to_string(y.size()) + " entries, network has " +
                                 std::to_string(num_classes) + " classes");
  return y;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2g", v);
  return buf;
}

void print_table(const ExperimentReport& rep, const std::vector<std::string>& estimators) {
  std::printf("%-8s", "rho");
  for (const auto& est : estimators) {
    std::printf("%-12s%-12s", (est + " mean").c_str(), (est + " var").c_str());
    if (est != "standard") std::printf("%-12s", "reduction");
  }
  std::printf("\n");
  for (size_t li = 0; li < rep.loads.size(); ++li) {
    std::printf("%-8.3g", rep.loads[li]);
    for (const auto& est : estimators) {
      const Cell& c = rep.cell_at(li, est);
      if (!c.error.empty()) {
        std::printf("%-24s", ("error: " + c.error).substr(0, 23).c_str());
        if (est != "standard") std::printf("%-12s", "-");
        continue;
      }
      std::printf("%-12.3g%-12s", c.mean, sci(c.variance).c_str());
      if (est != "standard") std::printf("%-12.2g", c.reduction);
    }
    std::printf("\n");
  }
}

int cmd_simulate(const std::string& network_path, const std::string& policy_name,
                 const std::string& estimators_csv, long long steps, int batches, int reps,
                 std::uint64_t seed, const std::vector<double>& rho2,
                 const std::vector<double>& scales, int load_station, long long warmup,
                 bool zero_mask, int threads, const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.network = load_or_default(network_path);
  cfg.policy = resolve_policy(policy_name, cfg.network);
  verify_policy(cfg.policy, cfg.network);
  cfg.estimators.clear();
  std::stringstream ss(estimators_csv);
  std::string est;
  while (std::getline(ss, est, ',')) cfg.estimators.push_back(est);
  cfg.steps = steps;
  cfg.batches = batches;
  cfg.reps = reps;
  cfg.seed = seed;
  cfg.rho2 = rho2;
  cfg.lambda_scales = scales;
  cfg.load_station = load_station;
  cfg.warmup = warmup;
  cfg.use_zero_mask = zero_mask;
  cfg.threads = threads;

  ExperimentReport rep = run_experiment(cfg);
  print_table(rep, cfg.estimators);
  if (!out_dir.empty()) {
    emit(rep, cfg, out_dir);
    std::printf("wrote %s/results.csv and %s/summary.json\n", out_dir.c_str(), out_dir.c_str());
  }
  return 0;
}

int cmd_table(int paper, bool full, const std::string& network_path, std::uint64_t seed,
              const std::string& out_dir) {
  NetworkSpec net = load_or_default(network_path);

  if (paper == 2) {
    // covariance-optimal diagnostic per load
    std::printf("%-8s%-14s%-14s%-12s\n", "rho", "standard", "quadratic", "reduction");
    for (double rho : {0.2, 0.4, 0.6, 0.8, 0.9}) {
      NetworkSpec spec = with_target_load(net, rho, 0);
      UniformizedNetwork unet = uniformize(spec);
      QuadraticCV cv = make_quadratic_cv(unet, solve_traffic(unet.spec));
      NuDiagnostic diag = optimal_nu_diagnostic(unet, fbfs(unet.spec), cv, full ? 4000000 : 2000000,
                                                200, RngStream(seed, 0));
      std::printf("%-8.3g%-14.3g%-14.3g%-12.0f\n", rho, diag.standard_tavc, diag.best_tavc,
                  diag.reduction);
    }
    return 0;
  }

  ExperimentConfig cfg;
  cfg.network = net;
  cfg.policy = fbfs(net);
  cfg.estimators = paper == 1 ? std::vector<std::string>{"standard", "quadratic"}
                              : std::vector<std::string>{"standard", "fluid"};
  cfg.steps = 100000;
  cfg.batches = 20;
  cfg.reps = full ? 200 : 50;
  cfg.seed = seed;
  cfg.rho2 = {0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99};
  ExperimentReport rep = run_experiment(cfg);
  print_table(rep, cfg.estimators);
  if (!out_dir.empty()) {
    emit(rep, cfg, out_dir);
    std::printf("wrote %s/results.csv and %s/summary.json\n", out_dir.c_str(), out_dir.c_str());
  }
  return 0;
}

int cmd_nu(const std::string& network_path, const std::string& policy_name, double rho2,
           int load_station, bool zero_mask) {
  NetworkSpec spec = load_or_default(network_path);
  if (rho2 > 0.0) spec = with_target_load(spec, rho2, load_station);
  UniformizedNetwork net = uniformize(spec);
  PriorityPolicy policy = resolve_policy(policy_name, net.spec);

  std::vector<uint8_t> mask;
  if (zero_mask) mask = priority_zero_mask(policy, net.spec);
  QuadraticCV cv = make_quadratic_cv(net, solve_traffic(net.spec), mask);

  nlohmann::ordered_json j;
  const int l = cv.num_classes;
  nlohmann::ordered_json u_rows = nlohmann::ordered_json::array();
  for (int r = 0; r < l * l; ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int col = 0; col < cv.U.cols(); ++col) row.push_back(cv.U(r, col));
    u_rows.push_back(row);
  }
  j["U"] = u_rows;
  j["c"] = std::vector<double>(cv.c.data(), cv.c.data() + cv.c.size());
  j["p"] = std::vector<double>(cv.p.data(), cv.p.data() + cv.p.size());
  j["nu"] = std::vector<double>(cv.nu.data(), cv.nu.data() + cv.nu.size());
  j["residual"] = cv.residual;
  j["rank_deficient"] = cv.rank_deficient;
  if (zero_mask) j["zero_mask"] = std::vector<int>(mask.begin(), mask.end());
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_fluid_value(const std::string& network_path, const std::string& policy_name,
                    const std::string& state, double rho2, int load_station) {
  NetworkSpec spec = load_or_default(network_path);
  if (rho2 > 0.0) spec = with_target_load(spec, rho2, load_station);
  UniformizedNetwork net = uniformize(spec);
  PriorityPolicy policy = resolve_policy(policy_name, net.spec);

  std::vector<double> y = parse_state(state, net.spec.num_classes);
  FluidPath path = solve_fluid(net.spec, policy, y);

  nlohmann::ordered_json j;
  j["state"] = y;
  j["drain_time"] = path.drain_time;
  j["value"] = path.value;
  nlohmann::ordered_json segs = nlohmann::ordered_json::array();
  for (const auto& s : path.segments) {
    nlohmann::ordered_json seg;
    seg["t"] = s.t_start;
    seg["duration"] = s.duration;
    seg["phi"] = s.phi_start;
    seg["u"] = s.u;
    seg["drift"] = s.drift;
    segs.push_back(seg);
  }
  j["segments"] = segs;
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"steady-state estimators for multiclass queueing networks"};
  app.require_subcommand(1);

  // simulate
  std::string network_path, policy_name = "fbfs", estimators = "standard,quadratic,fluid";
  long long steps = 100000, warmup = 0;
  int batches = 20, reps = 50, load_station = 0, threads = 0;
  std::uint64_t seed = 42;
  std::vector<double> rho2_list, scale_list;
  bool zero_mask = false;
  std::string out_dir = "out";

  auto* sim = app.add_subcommand("simulate", "run a replication sweep and emit csv/json");
  sim->add_option("--network", network_path, "network json file")->required();
  sim->add_option("--policy", policy_name, "fbfs, lbfs, or a policy json file");
  sim->add_option("--estimators", estimators, "comma list from standard,quadratic,fluid");
  sim->add_option("--steps", steps, "steps per replication");
  sim->add_option("--batches", batches, "batch count for the interval estimates");
  sim->add_option("--reps", reps, "independent replications");
  sim->add_option("--seed", seed, "base seed; replication r uses stream (seed, r)");
  sim->add_option("--rho2", rho2_list, "target loads for the sweep station")->delimiter(',');
  sim->add_option("--scale", scale_list, "explicit arrival-rate factors")->delimiter(',');
  sim->add_option("--load-station", load_station, "1-based station for --rho2 (default: bottleneck)");
  sim->add_option("--warmup", warmup, "steps discarded before accumulation");
  sim->add_flag("--zero-mask", zero_mask, "drop known-zero z coordinates from the nu fit");
  sim->add_option("--threads", threads, "worker threads (NETSIM_THREADS caps this)");
  sim->add_option("--out", out_dir, "output directory (empty to skip files)");

  // table
  int paper = 1;
  bool full = false;
  std::string table_network, table_out;
  std::uint64_t table_seed = 42;
  auto* tab = app.add_subcommand("table", "reproduce a summary table at desk scale");
  tab->add_option("--paper", paper, "1: quadratic, 2: best-possible diagnostic, 3: fluid")
      ->check(CLI::Range(1, 3));
  tab->add_flag("--full", full, "200 replications instead of 50");
  tab->add_option("--network", table_network, "network json (default: built-in two-station example)");
  tab->add_option("--seed", table_seed, "base seed");
  tab->add_option("--out", table_out, "also write csv/json here");

  // nu
  std::string nu_network, nu_policy = "fbfs";
  double nu_rho2 = 0.0;
  int nu_station = 0;
  bool nu_mask = false;
  auto* nu = app.add_subcommand("nu", "print the control structure U, c, p, nu as json");
  nu->add_option("--network", nu_network, "network json (default: built-in example)");
  nu->add_option("--policy", nu_policy, "policy for the zero mask");
  nu->add_option("--rho2", nu_rho2, "rescale arrivals to this bottleneck load first");
  nu->add_option("--load-station", nu_station, "1-based station for --rho2");
  nu->add_flag("--zero-mask", nu_mask, "apply the policy's known-zero mask");

  // fluid-value
  std::string fv_network, fv_policy = "fbfs", fv_state;
  double fv_rho2 = 0.0;
  int fv_station = 0;
  auto* fv = app.add_subcommand("fluid-value", "print drain time, value, and segments as json");
  fv->add_option("--network", fv_network, "network json (default: built-in example)");
  fv->add_option("--policy", fv_policy, "fbfs, lbfs, or a policy json file");
  fv->add_option("--state", fv_state, "initial fluid levels, e.g. \"0,0,1\"")->required();
  fv->add_option("--rho2", fv_rho2, "rescale arrivals to this bottleneck load first");
  fv->add_option("--load-station", fv_station, "1-based station for --rho2");

  // oracle
  auto* orc = app.add_subcommand("oracle", "ground-truth helpers");
  double o_lambda = 0.3, o_mu = 0.7, o_dt = 1e-4, o_rho2 = 0.0;
  long long o_ymax = 50;
  std::string o_network, o_policy = "fbfs", o_caps, o_state;
  auto* omm1 = orc->add_subcommand("mm1", "closed forms for the single queue");
  omm1->add_option("--lambda", o_lambda);
  omm1->add_option("--mu", o_mu);
  omm1->add_option("--ymax", o_ymax, "range for the identity check");
  auto* otrunc = orc->add_subcommand("truncated", "stationary vector of the boxed chain");
  otrunc->add_option("--network", o_network);
  otrunc->add_option("--policy", o_policy);
  otrunc->add_option("--caps", o_caps, "per-class caps, e.g. \"8,8,8\"")->required();
  otrunc->add_option("--rho2", o_rho2, "rescale arrivals to this bottleneck load first");
  auto* oeuler = orc->add_subcommand("euler", "small-step fluid value");
  oeuler->add_option("--network", o_network);
  oeuler->add_option("--policy", o_policy);
  oeuler->add_option("--state", o_state)->required();
  oeuler->add_option("--dt", o_dt);
  orc->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return cmd_simulate(network_path, policy_name, estimators, steps, batches, reps, seed,
                          rho2_list, scale_list, load_station, warmup, zero_mask, threads, out_dir);
    if (tab->parsed()) return cmd_table(paper, full, table_network, table_seed, table_out);
    if (nu->parsed()) return cmd_nu(nu_network, nu_policy, nu_rho2, nu_station, nu_mask);
    if (fv->parsed()) return cmd_fluid_value(fv_network, fv_policy, fv_state, fv_rho2, fv_station);
    if (orc->parsed()) {
      NetworkSpec spec = load_or_default(o_network);
      if (omm1->parsed()) {
        Mm1 q = mm1_analytics(o_lambda, o_mu);
        double worst = 0.0;
        for (long long y = 0; y <= o_ymax; ++y)
          worst = std::max(worst, std::abs(q.poisson_residual(y)));
        nlohmann::ordered_json j;
        j["alpha"] = q.alpha();
        j["a"] = q.a();
        j["max_poisson_residual"] = worst;
        std::cout << j.dump(2) << '\n';
      } else if (otrunc->parsed()) {
        if (o_rho2 > 0.0) spec = with_target_load(spec, o_rho2, 0);
        UniformizedNetwork net = uniformize(spec);
        PriorityPolicy policy = resolve_policy(o_policy, net.spec);
        std::vector<int32_t> caps;
        std::stringstream ss(o_caps);
        std::string part;
        while (std::getline(ss, part, ',')) caps.push_back(std::stoi(part));
        TruncatedChain tc = truncated_stationary(net, policy, caps);
        QuadraticCV cv = make_quadratic_cv(net, solve_traffic(net.spec));
        std::vector<double> zb = tc.zbar(policy);
        Eigen::Map<const Eigen::VectorXd> z(zb.data(), static_cast<Eigen::Index>(zb.size()));
        nlohmann::ordered_json j;
        j["states"] = tc.num_states();
        j["alpha"] = tc.alpha();
        j["ybar"] = tc.ybar();
        j["constraint_residual"] = (cv.U.transpose() * z - cv.c).lpNorm<Eigen::Infinity>();
        std::cout << j.dump(2) << '\n';
      } else if (oeuler->parsed()) {
        UniformizedNetwork net = uniformize(spec);
        PriorityPolicy policy = resolve_policy(o_policy, net.spec);
        std::vector<double> y = parse_state(o_state, net.spec.num_classes);
        nlohmann::ordered_json j;
        j["value"] = euler_fluid(net.spec, policy, y, o_dt);
        std::cout << j.dump(2) << '\n';
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

// Acceptance run: one PASS/FAIL line per criterion.
//
//   dpgp_acceptance               all criteria
//   dpgp_acceptance --criterion 7 one criterion
//
// Exit status is 0 only when every selected criterion passes.

#include "dpgp/config.hpp"
#include "dpgp/io.hpp"
#include "dpgp/moves.hpp"
#include "dpgp/optimizer.hpp"
#include "dpgp/pipeline.hpp"
#include "dpgp/synth.hpp"
#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>

#include <sys/wait.h>

using namespace dpgp;
namespace dt = dpgp::testing;
namespace fs = std::filesystem;

namespace {

// ---- pinned tolerances and sizes ----
constexpr double kBoundSlack = 1e-9;          // 1
constexpr double kHardJointTol = 1e-9;        // 1
constexpr double kRuntimeLimit1 = 60.0;       // 1, seconds
constexpr double kSingleGroupTol = 1e-10;     // 2
constexpr int kMcSamples = 1000000;           // 2
constexpr double kMcSigmas = 3.0;             // 2
constexpr double kGradRelTol = 1e-6;          // 3
constexpr double kVbemTol = 1e-8;             // 4
constexpr double kMonotoneTol = -1e-9;        // 4
constexpr double kRowSumTol = 1e-12;          // 5
constexpr double kFisherTol = 1e-8;           // 5
constexpr double kPermutationTol = 1e-12;     // 6
constexpr double kAriTarget = 0.80;           // 7
constexpr int kSeedsNeeded = 15;              // 7
constexpr double kPerSeedLimit = 600.0;       // 7, seconds
constexpr double kPerturbSd = 0.5;            // 8, sd of log-normal hyper perturbation
constexpr double kWithinNats = 10.0;          // 8
constexpr int kRunsNeeded = 12;               // 8
constexpr double kRaceSlack = 1.0;            // 9, nats below the steepest bound

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Eigen::MatrixXd one_hot(const std::vector<int>& labels, Eigen::Index k) {
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), k);
  for (std::size_t n = 0; n < labels.size(); ++n) phi(static_cast<Eigen::Index>(n), labels[n]) = 1.0;
  return phi;
}

// ---- 1 ----
Verdict bound_validity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  double worst_excess = -1e300, worst_hard = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const int n = dt::uniform_int(rng, 1, 6), k = dt::uniform_int(rng, 1, 3), d = dt::uniform_int(rng, 1, 4);
    const GroupedDataset data = dt::random_dataset(rng, n, d);
    const ModelSpec m = dt::random_model(rng);
    const double exact = exact_log_marginal_small(data, k, m);
    for (int trial = 0; trial < 5; ++trial) {
      const double b = bound(data, dt::random_resp(rng, n, k, 2.0), m).total;
      worst_excess = std::max(worst_excess, b - exact);
    }
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = dt::uniform_int(rng, 0, k - 1);
    const double hard = bound(data, Responsibilities::from_phi(one_hot(labels, k)), m).total;
    worst_hard = std::max(worst_hard, std::abs(hard - exact_log_joint(data, labels, k, m)));
    worst_hard = std::max(worst_hard, std::abs(hard - dt::oracle_log_joint(data, labels, k, m)));
  }
  const double elapsed = seconds_since(t0);
  return {worst_excess <= kBoundSlack && worst_hard <= kHardJointTol && elapsed < kRuntimeLimit1,
          "max(bound - exact)=" + fmt(worst_excess) + " max|hard - joint|=" + fmt(worst_hard) + " time=" +
              fmt(elapsed) + "s"};
}

// ---- 2 ----
Verdict collapsed_integral() {
  std::mt19937_64 rng(1002);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const GroupedDataset data = dt::random_dataset(rng, 1, dt::uniform_int(rng, 1, 8));
    const ModelSpec m = dt::random_model(rng);
    const double got = data_term(data, Eigen::MatrixXd::Ones(1, 1), m.cluster_kernel, m.structure).value;
    const double want = log_marginal(data.values.row(0).transpose(), compound_gram(m.cluster_kernel, m.structure, data.design));
    worst = std::max(worst, std::abs(got - want));
  }
  GroupedDataset data = dt::random_dataset(rng, 2, 2);
  ModelSpec m;
  m.cluster_kernel = KernelSpec::squared_exponential(1.0, 0.5);
  m.structure.layers = {Layer{KernelSpec::squared_exponential(0.2, 0.5)}, Layer{KernelSpec::white_noise(0.4)}};
  Eigen::MatrixXd phi(2, 2);
  phi << 0.65, 0.35, 0.25, 0.75;
  const auto mc = dt::mc_data_term(data, phi, m, kMcSamples, 2024);
  const double got = data_term(data, phi, m.cluster_kernel, m.structure).value;
  const double z = std::abs(got - mc.value) / mc.standard_error;
  return {worst <= kSingleGroupTol && z <= kMcSigmas,
          "max single-group error=" + fmt(worst) + " soft: closed=" + fmt(got, 8) + " mc=" + fmt(mc.value, 8) +
              " se=" + fmt(mc.standard_error) + " |z|=" + fmt(z)};
}

// ---- 3 ----
Verdict gradient_suite() {
  std::mt19937_64 rng(1003);
  double e_phi = 0.0, e_hyp = 0.0, e_gam = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = dt::uniform_int(rng, 2, 6), k = dt::uniform_int(rng, 1, 4);
    const GroupedDataset data = dt::random_dataset(rng, n, dt::uniform_int(rng, 1, 5));
    const ModelSpec m = dt::random_model(rng);
    const Responsibilities r = dt::random_resp(rng, n, k);
    const Eigen::MatrixXd g = grad_phi(data, r, m);

    const Eigen::VectorXd phi_vec = Eigen::Map<const Eigen::VectorXd>(r.phi().data(), r.phi().size());
    const Eigen::VectorXd fd_phi = dt::central_difference(
        [&](const Eigen::VectorXd& v) { return dt::bound_of_free_phi(data, Eigen::Map<const Eigen::MatrixXd>(v.data(), n, k), m); },
        phi_vec, 1e-6);
    e_phi = std::max(e_phi, dt::max_rel_error(Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()), fd_phi));

    const Eigen::VectorXd fd_hyp = dt::central_difference(
        [&](const Eigen::VectorXd& x) { return bound(data, r, m.with_log_hypers(x)).total; }, m.log_hypers(), 1e-5);
    e_hyp = std::max(e_hyp, dt::max_rel_error(grad_hypers(data, r, m), fd_hyp));

    const Eigen::MatrixXd eg = euclid_gamma_grad(r.phi(), g);
    const Eigen::VectorXd gam_vec = Eigen::Map<const Eigen::VectorXd>(r.gamma().data(), r.gamma().size());
    const Eigen::VectorXd fd_gam = dt::central_difference(
        [&](const Eigen::VectorXd& v) {
          return bound(data, Responsibilities(Eigen::Map<const Eigen::MatrixXd>(v.data(), n, k)), m).total;
        },
        gam_vec, 1e-5);
    e_gam = std::max(e_gam, dt::max_rel_error(Eigen::Map<const Eigen::VectorXd>(eg.data(), eg.size()), fd_gam));
  }
  return {e_phi <= kGradRelTol && e_hyp <= kGradRelTol && e_gam <= kGradRelTol,
          "max rel error grad_phi=" + fmt(e_phi) + " grad_hypers=" + fmt(e_hyp) + " euclid_gamma_grad=" + fmt(e_gam)};
}

// ---- 4 ----
Verdict vbem_equivalence() {
  std::mt19937_64 rng(1004);
  double worst = 0.0, worst_step = 1e300;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = dt::uniform_int(rng, 2, 10), k = dt::uniform_int(rng, 1, 5);
    const GroupedDataset data = dt::random_dataset(rng, n, dt::uniform_int(rng, 1, 6));
    const ModelSpec m = dt::random_model(rng);
    const Responsibilities r = dt::random_resp(rng, n, k, 2.0);
    const Eigen::MatrixXd stepped = softmax_rows(r.gamma() + natural_gradient(r.phi(), grad_phi(data, r, m)));
    const Eigen::MatrixXd vbem = meanfield_vbem_round(data, r.phi(), m.cluster_kernel, m.structure, m.alpha);
    worst = std::max(worst, (stepped - vbem).cwiseAbs().maxCoeff());

    const CollapsedObjective obj(data, m);
    const OptimizeResult o = optimize(obj, r, OptimizerConfig{.mode = OptimizerMode::Steepest, .max_iters = 300});
    double prev = o.initial_bound;
    for (const auto& t : o.trace) {
      worst_step = std::min(worst_step, t.bound - prev);
      prev = t.bound;
    }
  }
  return {worst <= kVbemTol && worst_step >= kMonotoneTol,
          "max |unit step - vbem round|=" + fmt(worst) + " min per-step change=" + fmt(worst_step)};
}

// ---- 5 ----
Verdict natural_gradient_identities() {
  std::mt19937_64 rng(1005);
  double row_sum = 0.0, ratio = 0.0, constant = 0.0, fisher = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const int n = dt::uniform_int(rng, 1, 8), k = dt::uniform_int(rng, 2, 5);
    const Eigen::MatrixXd phi = softmax_rows(dt::random_normal(rng, n, k, 1.5));
    Eigen::MatrixXd g = dt::random_normal(rng, n, k, 3.0);
    const Eigen::MatrixXd eu = euclid_gamma_grad(phi, g);
    const Eigen::MatrixXd nat = natural_gradient(phi, g);
    row_sum = std::max(row_sum, eu.rowwise().sum().cwiseAbs().maxCoeff());
    ratio = std::max(ratio, dt::max_rel_error(eu.cwiseQuotient(phi), nat));
    Eigen::MatrixXd flat = Eigen::VectorXd::Random(n).replicate(1, k);
    constant = std::max(constant, natural_gradient(phi, flat).cwiseAbs().maxCoeff());
    for (Eigen::Index row = 0; row < n; ++row) {
      const Eigen::VectorXd p = phi.row(row).transpose();
      // gamma_K pinned to zero; Sherman-Morrison inverse of the reduced Fisher.
      Eigen::MatrixXd inv = Eigen::MatrixXd::Constant(k - 1, k - 1, 1.0 / p[k - 1]);
      inv.diagonal() += p.head(k - 1).cwiseInverse();
      const Eigen::VectorXd solved = inv * eu.row(row).head(k - 1).transpose();
      const Eigen::VectorXd shifted = nat.row(row).head(k - 1).transpose().array() - nat(row, k - 1);
      const Eigen::VectorXd dense = fisher_matrix(p).topLeftCorner(k - 1, k - 1).lu().solve(eu.row(row).head(k - 1).transpose());
      fisher = std::max({fisher, dt::max_rel_error(solved, shifted), dt::max_rel_error(dense, shifted)});
    }
  }
  return {row_sum <= kRowSumTol && ratio <= kFisherTol && constant <= kRowSumTol && fisher <= kFisherTol,
          "row sum=" + fmt(row_sum) + " |euclid/phi - nat|=" + fmt(ratio) + " constant-row nat=" + fmt(constant) +
              " fisher solve=" + fmt(fisher)};
}

// ---- 6 ----
Verdict reorder_property() {
  std::mt19937_64 rng(1006);
  int violations = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int k = dt::uniform_int(rng, 2, 10);
    const double alpha = dt::uniform(rng, 0.1, 5.0);
    std::vector<double> v(static_cast<std::size_t>(k));
    for (auto& x : v) x = dt::uniform(rng, 0.0, 30.0);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const double best = stick_term(Eigen::Map<Eigen::VectorXd>(sorted.data(), k), alpha);
    for (int p = 0; p < 100; ++p) {
      std::shuffle(v.begin(), v.end(), rng);
      if (stick_term(Eigen::Map<Eigen::VectorXd>(v.data(), k), alpha) > best + 1e-12) ++violations;
    }
  }
  double invariance = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = dt::uniform_int(rng, 2, 8), k = dt::uniform_int(rng, 2, 5);
    const GroupedDataset data = dt::random_dataset(rng, n, dt::uniform_int(rng, 1, 5));
    const ModelSpec m = dt::random_model(rng);
    const Responsibilities r = dt::random_resp(rng, n, k, 2.0);
    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Eigen::MatrixXd permuted(n, k);
    for (int c = 0; c < k; ++c) permuted.col(c) = r.gamma().col(order[static_cast<std::size_t>(c)]);
    const BoundBreakdown a = bound(data, r, m), b = bound(data, Responsibilities(permuted), m);
    invariance = std::max({invariance, std::abs(a.data_term - b.data_term), std::abs(a.entropy_term - b.entropy_term)});
  }
  return {violations == 0 && invariance <= kPermutationTol,
          "permutations beating descending order=" + std::to_string(violations) + "/10000 max term change=" + fmt(invariance)};
}

// ---- 7 ----
Verdict synthetic_recovery() {
  int recovered = 0, ablation_more = 0;
  double slowest = 0.0;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SyntheticData s = generate(SyntheticSpec{.seed = seed});
    RunConfig c;
    c.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    const ResultBundle b = fit(c, s.data);
    slowest = std::max(slowest, seconds_since(t0));
    const double ari = adjusted_rand_index(b.labels, s.labels);
    const int k = count_distinct(b.labels);
    if (ari >= kAriTarget && k >= 8 && k <= 12) ++recovered;

    RunConfig iid = c;
    iid.structure.layers = {Layer{KernelSpec::white_noise(1.0)}};
    const ResultBundle flat = fit(iid, s.data);
    const int k_iid = count_distinct(flat.labels);
    if (k_iid > k) ++ablation_more;
    per_seed << ' ' << seed << ":" << fmt(ari, 2) << "/" << k << "/" << k_iid;
  }
  return {recovered >= kSeedsNeeded && ablation_more >= kSeedsNeeded && slowest < kPerSeedLimit,
          "seeds with ARI>=0.8 and K in [8,12]: " + std::to_string(recovered) +
              "/20; iid ablation with more clusters: " + std::to_string(ablation_more) +
              "/20; slowest seed " + fmt(slowest) + "s; seed:ARI/K/K_iid" + per_seed.str()};
}

// ---- 8 ----
Verdict restart_robustness() {
  const SyntheticData s = generate(SyntheticSpec{.seed = 0});
  const RunConfig c;
  const ModelSpec base = c.resolve_model(s.data);
  std::mt19937_64 rng(1008);
  std::normal_distribution<double> z(0.0, kPerturbSd);
  std::vector<double> finals;
  for (int r = 0; r < 20; ++r) {
    Eigen::VectorXd lp = base.log_hypers();
    for (Eigen::Index i = 0; i < lp.size(); ++i) lp[i] += z(rng);
    FitOptions opt;
    opt.model = base.with_log_hypers(lp);
    finals.push_back(fit(c, s.data, opt).bound.total);
  }
  const double best = *std::max_element(finals.begin(), finals.end());
  const auto close = std::count_if(finals.begin(), finals.end(), [&](double v) { return v >= best - kWithinNats; });
  std::sort(finals.begin(), finals.end(), std::greater<>());
  std::string gaps;
  for (double v : finals) gaps += ' ' + fmt(best - v, 3);
  return {close >= kRunsNeeded, "runs within 10 nats of best " + fmt(best, 7) + ": " + std::to_string(close) +
                                    "/20; gaps to best:" + gaps};
}

// ---- 9 ----
// Per pair, the target is the bound the steepest run ends on, minus 1 nat.
// Runs that never reach a target count as max_iters + 1. The same count against
// the best steepest bound over all restarts is printed for reference.
Verdict optimizer_race() {
  const SyntheticData s = generate(SyntheticSpec{.seed = 0});
  const RunConfig c;
  const CompareResult r = compare(c, s.data, 20);
  double best_steepest = -std::numeric_limits<double>::infinity();
  for (const auto& row : r.rows) {
    if (row.mode == OptimizerMode::Steepest) best_steepest = std::max(best_steepest, row.final_bound);
  }
  const double target = best_steepest - kRaceSlack;
  const auto iters = [&](const CompareRow& row, double goal) {
    const int n = iterations_to_reach(row.trace, goal);
    return n < 0 ? c.optimizer.max_iters + 1 : n;
  };
  std::vector<double> steepest_iters, conjugate_iters, pair_steepest, pair_conjugate;
  for (std::size_t i = 0; i + 1 < r.rows.size(); i += 2) {
    const CompareRow& sd = r.rows[i];
    const CompareRow& cg = r.rows[i + 1];
    steepest_iters.push_back(iters(sd, target));
    conjugate_iters.push_back(iters(cg, target));
    pair_steepest.push_back(iters(sd, sd.final_bound - kRaceSlack));
    pair_conjugate.push_back(iters(cg, sd.final_bound - kRaceSlack));
  }
  const double ms = median(pair_steepest), mc = median(pair_conjugate);
  const auto reached = [&](const std::vector<double>& v) {
    return std::count_if(v.begin(), v.end(), [&](double n) { return n <= c.optimizer.max_iters; });
  };
  return {mc < ms, "median iterations to paired steepest bound - 1 nat: steepest=" + fmt(ms) + " conjugate=" + fmt(mc) +
                       "; against the overall best steepest bound: steepest " + fmt(median(steepest_iters)) + " (" +
                       std::to_string(reached(steepest_iters)) + "/20 reach) conjugate " + fmt(median(conjugate_iters)) +
                       " (" + std::to_string(reached(conjugate_iters)) + "/20 reach)"};
}

// ---- 10 ----
std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// trace.csv without its wall-clock column
std::string strip_wall_time(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
  return out;
}

int run_cli(const std::string& args) {
#ifdef DPGP_EXE
  const int status = std::system((std::string(DPGP_EXE) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
#else
  (void)args;
  return -1;
#endif
}

Verdict determinism_and_io() {
  const fs::path root = fs::temp_directory_path() / "dpgp_acceptance_10";
  fs::remove_all(root);
  fs::create_directories(root);
  std::string notes;
  bool ok = true;

  const SyntheticData s = generate(SyntheticSpec{.seed = 11});
  RunConfig c;
  c.seed = 5;
  write_bundle(fit(c, s.data), root / "a");
  write_bundle(fit(c, s.data), root / "b");
  int identical = 0, files = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const auto name = entry.path().filename();
    std::string x = read_file(root / "a" / name), y = read_file(root / "b" / name);
    if (name == "trace.csv") {
      x = strip_wall_time(x);
      y = strip_wall_time(y);
    }
    ++files;
    identical += x == y;
  }
  ok &= identical == files && files >= 10;
  notes += "bundle files identical " + std::to_string(identical) + "/" + std::to_string(files);

  std::ostringstream emitted;
  emit(emitted, s.data);
  std::istringstream in(emitted.str());
  const GroupedDataset back = ingest(in);
  std::ostringstream again;
  emit(again, back);
  const bool round_trip = back.values == s.data.values && back.design == s.data.design && back.names == s.data.names &&
                          again.str() == emitted.str();
  ok &= round_trip;
  notes += std::string("; csv round trip ") + (round_trip ? "exact" : "differs");

  // exit codes
  emit(root / "data.csv", s.data);
  std::ofstream(root / "fast.cfg") << "k_init=4\nschedule.phases=1\nschedule.vb_iters_per_phase=30\nmoves.rounds=1\n";
  std::ofstream(root / "bad.cfg") << "k_init=4\nno_such_key=1\n";
  std::ofstream(root / "numerical.cfg") << "kernel.f.variance=1e308\nstructure.0.kind=white_noise\nstructure.0.noise=1e-300\n";
  std::ofstream(root / "slow.cfg") << "schedule.phases=1\nschedule.vb_iters_per_phase=1\nschedule.hyper_steps_per_phase=0\n"
                                      "moves.rounds=0\noptimizer.max_iters=1\n";
  const std::string data = " --data " + (root / "data.csv").string() + " --out " + (root / "cli").string();
  const int code0 = run_cli("fit --config " + (root / "fast.cfg").string() + data);
  const int code2 = run_cli("fit --config " + (root / "bad.cfg").string() + data);
  const int code3 = run_cli("fit --config " + (root / "numerical.cfg").string() + data);
  const int code4 = run_cli("fit --config " + (root / "slow.cfg").string() + data);
  const bool codes = code0 == 0 && code2 == 2 && code3 == 3 && code4 == 4;
  ok &= codes;
  notes += "; exit codes ok/input/numerical/nonconvergence = " + std::to_string(code0) + "/" + std::to_string(code2) +
           "/" + std::to_string(code3) + "/" + std::to_string(code4);
  return {ok, notes};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"bound validity", bound_validity},
      {"collapsed integral", collapsed_integral},
      {"gradient suite", gradient_suite},
      {"vbem equivalence", vbem_equivalence},
      {"natural-gradient identities", natural_gradient_identities},
      {"reorder property", reorder_property},
      {"synthetic recovery", synthetic_recovery},
      {"restart robustness", restart_robustness},
      {"optimizer race", optimizer_race},
      {"determinism and io", determinism_and_io},
  };
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--criterion" && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::cerr << "criterion must be 1.." << criteria.size() << '\n';
    return 2;
  }
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i) + 1 != only) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    all &= v.pass;
    std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): " << (v.pass ? "PASS" : "FAIL") << "  "
              << v.detail << std::endl;
  }
  return all ? 0 : 1;
}

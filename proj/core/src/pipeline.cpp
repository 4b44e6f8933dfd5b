#include "dpgp/pipeline.hpp"

#include "dpgp/errors.hpp"
#include "dpgp/hypers.hpp"
#include "dpgp/io.hpp"
#include "dpgp/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace dpgp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

std::string slurp(const fs::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double to_real(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw InputError(where + ": malformed number '" + s + "'");
  }
  return v;
}

// Rows of a CSV file after the header, split on commas.
std::vector<std::vector<std::string>> read_rows(const fs::path& path, std::size_t width) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (width != 0 && fields.size() != width) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                       " fields");
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

json kernel_to_json(const KernelSpec& k) {
  json j;
  j["kind"] = std::string(kind_name(k.kind()));
  if (k.kind() == KernelKind::Sum) {
    j["children"] = json::array();
    for (const auto& c : k.children()) j["children"].push_back(kernel_to_json(c));
  } else {
    j["params"] = json::object();
    for (const auto& p : k.params()) j["params"][p.name] = p.value;
  }
  return j;
}

KernelSpec kernel_from_json(const json& j) {
  const KernelKind kind = kind_from_name(j.at("kind").get<std::string>());
  if (kind == KernelKind::Sum) {
    std::vector<KernelSpec> children;
    for (const auto& c : j.at("children")) children.push_back(kernel_from_json(c));
    return KernelSpec::sum(std::move(children));
  }
  const auto& p = j.at("params");
  switch (kind) {
    case KernelKind::SquaredExponential:
      return KernelSpec::squared_exponential(p.at("variance").get<double>(), p.at("lengthscale").get<double>());
    case KernelKind::WhiteNoise:
      return KernelSpec::white_noise(p.at("noise").get<double>());
    case KernelKind::Periodic:
      return KernelSpec::periodic(p.at("variance").get<double>(), p.at("lengthscale").get<double>(),
                                  p.at("period").get<double>());
    default:
      break;
  }
  throw InputError("unsupported kernel in bundle");
}

json model_to_json(const ModelSpec& m) {
  json j;
  j["alpha"] = m.alpha;
  j["cluster_kernel"] = kernel_to_json(m.cluster_kernel);
  j["structure"] = json::array();
  for (const auto& l : m.structure.layers) j["structure"].push_back({{"level", l.level}, {"kernel", kernel_to_json(l.kernel)}});
  return j;
}

ModelSpec model_from_json(const json& j) {
  ModelSpec m{kernel_from_json(j.at("cluster_kernel")), {}, j.at("alpha").get<double>()};
  for (const auto& l : j.at("structure")) {
    m.structure.layers.push_back(Layer{kernel_from_json(l.at("kernel")), l.at("level").get<std::string>()});
  }
  return m;
}

ClusterCurve cluster_curve(double weight, const Eigen::VectorXd& weighted_sum, const ModelSpec& model,
                           const GramMatrix& k_y, const Design& design, const std::vector<double>& grid) {
  const LatentPosterior post = posterior_from_stats(weight > kEmptyClusterMass ? weight : 0.0, weighted_sum,
                                                    model.cluster_kernel, k_y, design.times, grid);
  return {post.mean, post.sd()};
}

std::vector<ClusterCurve> cluster_curves(const ModelSpec& model, const GroupedDataset& data,
                                         const Eigen::MatrixXd& phi, const std::vector<double>& grid) {
  const SuffStats stats = SuffStats::compute(phi, data.values);
  const GramMatrix k_y = group_cov(model.structure, data.design);
  std::vector<ClusterCurve> out;
  for (Eigen::Index k = 0; k < phi.cols(); ++k) {
    out.push_back(cluster_curve(stats.phi_hat[k], stats.weighted_sums.col(k), model, k_y, data.design, grid));
  }
  return out;
}

void append_trace(ResultBundle& b, int phase, const std::vector<TraceRecord>& trace) {
  for (const auto& r : trace) b.trace.push_back({phase, r});
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

void ResultBundle::check_consistency() const {
  if (phi.rows() != data.num_groups()) throw InputError("bundle: allocation rows do not match the data");
  if (static_cast<Eigen::Index>(posteriors.size()) != phi.cols()) {
    throw InputError("bundle: " + std::to_string(posteriors.size()) + " posteriors for " +
                     std::to_string(phi.cols()) + " clusters");
  }
  if (labels != hard_labels(phi)) throw InputError("bundle: labels are not the argmax of the allocations");
  for (const auto& c : posteriors) {
    if (c.mean.size() != static_cast<Eigen::Index>(grid.size()) || c.sd.size() != c.mean.size()) {
      throw InputError("bundle: posterior length does not match the grid");
    }
  }
}

Eigen::MatrixXd initial_gamma(Eigen::Index n_groups, Eigen::Index k, std::uint64_t seed, double sd) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(n_groups, k);
  for (Eigen::Index n = 0; n < n_groups; ++n) {
    for (Eigen::Index j = 0; j < k; ++j) g(n, j) = sd * normal(rng);
  }
  return g;
}

std::vector<double> training_grid(const std::vector<double>& times, int points) {
  if (times.empty() || points < 1) throw InputError("training_grid: need times and points >= 1");
  const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    grid[static_cast<std::size_t>(i)] = points == 1 ? *lo : *lo + (*hi - *lo) * i / (points - 1);
  }
  return grid;
}

ResultBundle fit(const RunConfig& config, const GroupedDataset& data, const FitOptions& options) {
  config.validate();
  data.validate();
  ResultBundle b;
  b.config = config;
  b.data = data;
  ModelSpec model = options.model ? *options.model : config.resolve_model(data);
  model.validate(data.design);

  Eigen::MatrixXd gamma0 =
      options.gamma ? *options.gamma : initial_gamma(data.num_groups(), config.k_init, config.seed, config.gamma_init_sd);
  if (gamma0.rows() != data.num_groups()) throw InputError("fit: initial gamma has the wrong number of rows");
  Responsibilities resp(std::move(gamma0));

  OptimizerConfig phase_cfg = config.optimizer;
  phase_cfg.max_iters = config.schedule.vb_iters_per_phase;
  phase_cfg.cancel = options.cancel;
  auto cancelled = [&] { return options.cancel != nullptr && options.cancel->load(); };

  int round = 0;
  auto maintenance = [&](const CollapsedObjective& objective) {
    b.moves.push_back({round, prune_move(objective, resp, config.prune_threshold)});
    b.moves.push_back({round, reorder_move(objective, resp)});
  };

  for (int phase = 0; phase < config.schedule.phases && !b.cancelled; ++phase) {
    {
      const CollapsedObjective objective(data, model);
      const OptimizeResult r = optimize(objective, resp, phase_cfg);
      append_trace(b, phase, r.trace);
      resp = r.resp;
      b.cancelled = r.cancelled;
    }
    if (b.cancelled) break;
    if (!options.freeze_hypers && config.schedule.hyper_steps_per_phase > 0) {
      const HyperFitResult h = optimize_hypers(data, resp, model, config.schedule.hyper_steps_per_phase);
      model = h.model;
      for (const auto& s : h.trajectory) b.hyper_trace.push_back({phase, s});
    }
    const CollapsedObjective objective(data, model);
    for (int m = 0; m < config.move_rounds && !cancelled(); ++m, ++round) {
      for (const auto& p : split_round(objective, resp, phase_cfg)) b.moves.push_back({round, p});
      maintenance(objective);
    }
    b.cancelled = cancelled();
  }

  const CollapsedObjective objective(data, model);
  if (!b.cancelled) {
    OptimizerConfig final_cfg = config.optimizer;
    final_cfg.cancel = options.cancel;
    const OptimizeResult r = optimize(objective, resp, final_cfg);
    append_trace(b, config.schedule.phases, r.trace);
    resp = r.resp;
    b.converged = r.converged;
    b.cancelled = r.cancelled;
    maintenance(objective);
  }

  b.model = model;
  b.bound = objective.evaluate(resp);
  b.phi = resp.phi();
  b.labels = hard_labels(b.phi);
  b.grid = training_grid(data.design.times, config.posterior_grid_points);
  b.posteriors = cluster_curves(model, data, b.phi, b.grid);
  return b;
}

void write_bundle(const ResultBundle& b, const fs::path& dir) {
  b.check_consistency();
  fs::create_directories(dir);
  const auto& names = b.data.names;
  auto name_of = [&](Eigen::Index n) {
    return names.empty() ? "g" + std::to_string(n) : names[static_cast<std::size_t>(n)];
  };

  json manifest;
  manifest["format"] = "dpgp-bundle";
  manifest["version"] = 1;
  manifest["groups"] = b.phi.rows();
  manifest["clusters"] = b.phi.cols();
  manifest["occupied_clusters"] = count_distinct(b.labels);
  manifest["dim"] = b.data.dim();
  manifest["seed"] = b.config.seed;
  manifest["converged"] = b.converged;
  manifest["cancelled"] = b.cancelled;
  manifest["bound"] = {{"data_term", b.bound.data_term},
                       {"stick_term", b.bound.stick_term},
                       {"entropy_term", b.bound.entropy_term},
                       {"total", b.bound.total}};
  open_out(dir / "manifest.json") << manifest.dump(2) << '\n';
  open_out(dir / "hypers.json") << model_to_json(b.model).dump(2) << '\n';
  open_out(dir / "config.txt") << b.config.to_text();
  emit(dir / "data.csv", b.data);

  {
    auto out = open_out(dir / "allocations.csv");
    out << "group_id";
    for (Eigen::Index k = 0; k < b.phi.cols(); ++k) out << ",phi_" << k;
    out << '\n';
    for (Eigen::Index n = 0; n < b.phi.rows(); ++n) {
      out << name_of(n);
      for (Eigen::Index k = 0; k < b.phi.cols(); ++k) out << ',' << format_double(b.phi(n, k));
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "labels.csv");
    out << "group_id,cluster\n";
    for (Eigen::Index n = 0; n < b.phi.rows(); ++n) out << name_of(n) << ',' << b.labels[static_cast<std::size_t>(n)] << '\n';
  }
  {
    auto out = open_out(dir / "posteriors.csv");
    out << "cluster,t,mean,sd\n";
    for (std::size_t k = 0; k < b.posteriors.size(); ++k) {
      for (std::size_t i = 0; i < b.grid.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        out << k << ',' << format_double(b.grid[i]) << ',' << format_double(b.posteriors[k].mean[ii]) << ','
            << format_double(b.posteriors[k].sd[ii]) << '\n';
      }
    }
  }
  {
    auto out = open_out(dir / "trace.csv");
    out << "phase,iter,bound,step_kind,wall_time_s\n";
    for (const auto& r : b.trace) {
      out << r.phase << ',' << r.record.iter << ',' << format_double(r.record.bound) << ','
          << step_kind_name(r.record.step_kind) << ',' << format_double(r.record.wall_time) << '\n';
    }
  }
  {
    auto out = open_out(dir / "moves.csv");
    out << "round,kind,k,before_bound,after_bound,accepted\n";
    for (const auto& m : b.moves) {
      out << m.round << ',' << move_kind_name(m.move.kind) << ',' << m.move.cluster << ','
          << format_double(m.move.before_bound) << ',' << format_double(m.move.after_bound) << ','
          << (m.move.accepted ? "true" : "false") << '\n';
    }
  }
  {
    auto out = open_out(dir / "hyper_trace.csv");
    out << "phase,step,param,value,bound\n";
    for (const auto& h : b.hyper_trace) {
      out << h.phase << ',' << h.step.step << ',' << h.step.param << ',' << format_double(h.step.value) << ','
          << format_double(h.step.bound) << '\n';
    }
  }
}

ResultBundle read_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("bundle directory not found: " + dir.string());
  ResultBundle b;
  b.config = RunConfig::parse(slurp(dir / "config.txt"), (dir / "config.txt").string());
  try {
    const json manifest = json::parse(slurp(dir / "manifest.json"));
    b.converged = manifest.at("converged").get<bool>();
    b.cancelled = manifest.at("cancelled").get<bool>();
    const auto& bound = manifest.at("bound");
    b.bound = {bound.at("data_term").get<double>(), bound.at("stick_term").get<double>(),
               bound.at("entropy_term").get<double>(), bound.at("total").get<double>()};
    b.model = model_from_json(json::parse(slurp(dir / "hypers.json")));
  } catch (const json::exception& e) {
    throw InputError("bundle " + dir.string() + ": " + e.what());
  }
  b.data = ingest(dir / "data.csv");

  const auto alloc_path = dir / "allocations.csv";
  const auto alloc = read_rows(alloc_path, 0);
  if (static_cast<Eigen::Index>(alloc.size()) != b.data.num_groups() || alloc.empty() || alloc[0].size() < 2) {
    throw InputError(alloc_path.string() + ": expected one row per group");
  }
  const auto k = static_cast<Eigen::Index>(alloc[0].size() - 1);
  b.phi.resize(b.data.num_groups(), k);
  for (std::size_t n = 0; n < alloc.size(); ++n) {
    if (static_cast<Eigen::Index>(alloc[n].size()) != k + 1 || alloc[n][0] != b.data.names[n]) {
      throw InputError(alloc_path.string() + ": row " + std::to_string(n + 1) + " does not match data.csv");
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      b.phi(static_cast<Eigen::Index>(n), j) = to_real(alloc[n][static_cast<std::size_t>(j + 1)], alloc_path.string());
    }
  }
  for (const auto& row : read_rows(dir / "labels.csv", 2)) b.labels.push_back(static_cast<int>(to_real(row[1], "labels.csv")));

  const auto post = read_rows(dir / "posteriors.csv", 4);
  b.posteriors.resize(static_cast<std::size_t>(k));
  std::vector<std::vector<double>> means(static_cast<std::size_t>(k)), sds(static_cast<std::size_t>(k));
  for (const auto& row : post) {
    const auto c = static_cast<std::size_t>(to_real(row[0], "posteriors.csv"));
    if (c >= means.size()) throw InputError("posteriors.csv: cluster index out of range");
    if (c == 0) b.grid.push_back(to_real(row[1], "posteriors.csv"));
    means[c].push_back(to_real(row[2], "posteriors.csv"));
    sds[c].push_back(to_real(row[3], "posteriors.csv"));
  }
  for (std::size_t c = 0; c < means.size(); ++c) {
    b.posteriors[c].mean = Eigen::Map<Eigen::VectorXd>(means[c].data(), static_cast<Eigen::Index>(means[c].size()));
    b.posteriors[c].sd = Eigen::Map<Eigen::VectorXd>(sds[c].data(), static_cast<Eigen::Index>(sds[c].size()));
  }
  for (const auto& row : read_rows(dir / "trace.csv", 5)) {
    TraceRecord r;
    r.iter = static_cast<int>(to_real(row[1], "trace.csv"));
    r.bound = to_real(row[2], "trace.csv");
    r.step_kind = row[3] == step_kind_name(StepKind::Conjugate) ? StepKind::Conjugate
                  : row[3] == step_kind_name(StepKind::Fallback) ? StepKind::Fallback
                                                                 : StepKind::UnitNatural;
    r.wall_time = to_real(row[4], "trace.csv");
    b.trace.push_back({static_cast<int>(to_real(row[0], "trace.csv")), r});
  }
  b.check_consistency();
  return b;
}

CompareResult compare(const RunConfig& config, const GroupedDataset& data, int restarts,
                      std::vector<OptimizerMode> modes, const std::atomic<bool>* cancel) {
  config.validate();
  data.validate();
  if (restarts < 1) throw InputError("compare: restarts must be >= 1");
  if (modes.empty()) throw InputError("compare: no optimizer modes");
  CompareResult result{config.resolve_model(data), {}};
  const CollapsedObjective objective(data, result.model);
  for (int r = 0; r < restarts; ++r) {
    const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(r);
    const Responsibilities start(initial_gamma(data.num_groups(), config.k_init, seed, config.gamma_init_sd));
    for (const OptimizerMode mode : modes) {
      OptimizerConfig oc = config.optimizer;
      oc.mode = mode;
      oc.cancel = cancel;
      const auto t0 = std::chrono::steady_clock::now();
      OptimizeResult o = optimize(objective, start, oc);
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.rows.push_back({r, seed, mode, o.iterations(), wall, o.bound.total, o.converged, std::move(o.trace)});
      if (o.cancelled) return result;
    }
  }
  return result;
}

void write_compare(const CompareResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "compare.csv");
    out << "restart,seed,mode,iterations,wall_time_s,final_bound,converged\n";
    for (const auto& r : result.rows) {
      out << r.restart << ',' << r.seed << ',' << mode_name(r.mode) << ',' << r.iterations << ','
          << format_double(r.wall_time) << ',' << format_double(r.final_bound) << ','
          << (r.converged ? "true" : "false") << '\n';
    }
  }
  {
    auto out = open_out(dir / "compare_traces.csv");
    out << "restart,mode,iter,bound,step_kind,wall_time_s\n";
    for (const auto& r : result.rows) {
      for (const auto& t : r.trace) {
        out << r.restart << ',' << mode_name(r.mode) << ',' << t.iter << ',' << format_double(t.bound) << ','
            << step_kind_name(t.step_kind) << ',' << format_double(t.wall_time) << '\n';
      }
    }
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : result.rows) best = std::max(best, r.final_bound);
  json summary;
  summary["best_bound"] = best;
  summary["hypers"] = model_to_json(result.model);
  std::map<std::string, std::vector<const CompareRow*>> by_mode;
  for (const auto& r : result.rows) by_mode[std::string(mode_name(r.mode))].push_back(&r);
  for (const auto& [mode, rows] : by_mode) {
    std::vector<double> iters, walls;
    int within = 0;
    for (const auto* r : rows) {
      iters.push_back(r->iterations);
      walls.push_back(r->wall_time);
      if (r->final_bound >= best - 10.0) ++within;
    }
    summary["modes"][mode] = {{"runs", rows.size()},
                              {"median_iterations", median(iters)},
                              {"median_wall_time_s", median(walls)},
                              {"within_10_nats_of_best", within}};
  }
  open_out(dir / "summary.json") << summary.dump(2) << '\n';
}

int iterations_to_reach(const std::vector<TraceRecord>& trace, double target) {
  for (const auto& r : trace) {
    if (r.bound >= target) return r.iter;
  }
  return -1;
}

std::string_view predict_mode_name(PredictMode mode) {
  switch (mode) {
    case PredictMode::ClusterMean: return "cluster-mean";
    case PredictMode::ExistingGroup: return "existing-group";
    case PredictMode::NewGroup: return "new-group";
  }
  return "?";
}

PredictMode predict_mode_from_name(std::string_view name) {
  if (name == "cluster-mean") return PredictMode::ClusterMean;
  if (name == "existing-group") return PredictMode::ExistingGroup;
  if (name == "new-group") return PredictMode::NewGroup;
  throw InputError("unknown predict mode '" + std::string(name) + "' (cluster-mean, existing-group, new-group)");
}

std::vector<double> parse_grid(std::string_view text) {
  const std::string s(text);
  const auto parts = [&] {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const auto c = s.find(':', start);
      out.push_back(s.substr(start, c == std::string::npos ? std::string::npos : c - start));
      if (c == std::string::npos) break;
      start = c + 1;
    }
    return out;
  }();
  if (parts.size() != 3) throw InputError("grid must be start:stop:num, got '" + s + "'");
  const double start = to_real(parts[0], "grid start");
  const double stop = to_real(parts[1], "grid stop");
  int num = 0;
  auto [p, ec] = std::from_chars(parts[2].data(), parts[2].data() + parts[2].size(), num);
  if (ec != std::errc() || p != parts[2].data() + parts[2].size() || num < 1) {
    throw InputError("grid num must be a positive integer, got '" + parts[2] + "'");
  }
  if (!std::isfinite(start) || !std::isfinite(stop) || stop < start) throw InputError("grid needs start <= stop");
  std::vector<double> grid(static_cast<std::size_t>(num));
  for (int i = 0; i < num; ++i) grid[static_cast<std::size_t>(i)] = num == 1 ? start : start + (stop - start) * i / (num - 1);
  return grid;
}

std::vector<PredictionRow> predict(const ResultBundle& b, const std::vector<double>& grid, PredictMode mode,
                                   const std::optional<std::string>& id) {
  if (grid.empty()) throw InputError("predict: empty grid");
  const auto& times = b.data.design.times;
  const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
  const double margin = b.config.predict_margin * (*hi - *lo);
  for (double t : grid) {
    if (t < *lo - margin || t > *hi + margin) {
      throw InputError("predict: grid point " + format_double(t) + " outside [" + format_double(*lo - margin) + ", " +
                       format_double(*hi + margin) + "]");
    }
  }

  std::vector<PredictionRow> rows;
  auto emit_curve = [&](const std::string& name, const LatentPosterior& post) {
    const Eigen::VectorXd sd = post.sd();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      rows.push_back({name, grid[i], post.mean[ii], post.mean[ii] - 2.0 * sd[ii], post.mean[ii] + 2.0 * sd[ii], sd[ii]});
    }
  };

  const auto k_count = b.phi.cols();
  if (mode == PredictMode::ExistingGroup) {
    const auto& names = b.data.names;
    bool found = !id.has_value();
    for (Eigen::Index n = 0; n < b.data.num_groups(); ++n) {
      const std::string name = names.empty() ? "g" + std::to_string(n) : names[static_cast<std::size_t>(n)];
      if (id && *id != name) continue;
      found = true;
      const int label = b.labels[static_cast<std::size_t>(n)];
      std::vector<Eigen::Index> members;
      Eigen::Index target = 0;
      for (Eigen::Index m = 0; m < b.data.num_groups(); ++m) {
        if (b.labels[static_cast<std::size_t>(m)] != label) continue;
        if (m == n) target = static_cast<Eigen::Index>(members.size());
        members.push_back(m);
      }
      Eigen::MatrixXd ys(static_cast<Eigen::Index>(members.size()), b.data.dim());
      for (std::size_t j = 0; j < members.size(); ++j) ys.row(static_cast<Eigen::Index>(j)) = b.data.values.row(members[j]);
      emit_curve(name, predict_group(ys, target, b.model.cluster_kernel, b.model.structure, b.data.design, grid));
    }
    if (!found) throw InputError("predict: unknown group '" + *id + "'");
    return rows;
  }

  Eigen::Index only = -1;
  if (id) {
    const double v = to_real(*id, "cluster id");
    if (v != std::floor(v) || v < 0 || v >= static_cast<double>(k_count)) {
      throw InputError("predict: unknown cluster '" + *id + "' (bundle has " + std::to_string(k_count) + ")");
    }
    only = static_cast<Eigen::Index>(v);
  }
  const SuffStats stats = SuffStats::compute(b.phi, b.data.values);
  const GramMatrix k_y = group_cov(b.model.structure, b.data.design);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    if (only >= 0 && k != only) continue;
    const double w = stats.phi_hat[k] > kEmptyClusterMass ? stats.phi_hat[k] : 0.0;
    const Eigen::VectorXd s = stats.weighted_sums.col(k);
    const LatentPosterior post =
        mode == PredictMode::ClusterMean
            ? posterior_from_stats(w, s, b.model.cluster_kernel, k_y, b.data.design.times, grid)
            : predict_new_group(w, s, b.model.cluster_kernel, b.model.structure, b.data.design, grid);
    emit_curve(std::to_string(k), post);
  }
  return rows;
}

void write_predictions(std::ostream& out, const std::vector<PredictionRow>& rows) {
  out << "id,t,mean,lower,upper,sd\n";
  for (const auto& r : rows) {
    out << r.id << ',' << format_double(r.t) << ',' << format_double(r.mean) << ',' << format_double(r.lower) << ','
        << format_double(r.upper) << ',' << format_double(r.sd) << '\n';
  }
}

}  // namespace dpgp

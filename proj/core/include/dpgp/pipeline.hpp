#pragma once

// End-to-end experiments: fit, compare and predict, plus the on-disk result
// bundle.
//
// Bundle layout (one directory):
//   manifest.json     sizes, flags, bound breakdown, seed
//   hypers.json       fitted kernels and alpha
//   config.txt        the run configuration, canonical form
//   data.csv          the dataset as fitted
//   allocations.csv   group_id, phi_0 .. phi_{K-1}
//   labels.csv        group_id, cluster (argmax of phi)
//   posteriors.csv    cluster, t, mean, sd
//   trace.csv         phase, iter, bound, step_kind, wall_time_s
//   moves.csv         round, kind, k, before_bound, after_bound, accepted
//   hyper_trace.csv   phase, step, param, value, bound

#include "dpgp/bound.hpp"
#include "dpgp/config.hpp"
#include "dpgp/moves.hpp"
#include "dpgp/optimizer.hpp"

#include <atomic>
#include <iosfwd>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dpgp {

struct FitTraceRecord {
  int phase = 0;  // schedule.phases for the final run
  TraceRecord record;
};

struct MoveLogRecord {
  int round = 0;
  MoveProposal move;
};

struct HyperLogRecord {
  int phase = 0;
  HyperStepRecord step;
};

struct ClusterCurve {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

struct ResultBundle {
  RunConfig config;
  ModelSpec model;
  GroupedDataset data;
  Eigen::MatrixXd phi;  // N x K
  std::vector<int> labels;
  std::vector<double> grid;
  std::vector<ClusterCurve> posteriors;  // one per column of phi
  BoundBreakdown bound;
  std::vector<FitTraceRecord> trace;
  std::vector<MoveLogRecord> moves;
  std::vector<HyperLogRecord> hyper_trace;
  bool converged = false;
  bool cancelled = false;

  // labels == argmax(phi), one posterior per column, grid sizes agree.
  void check_consistency() const;
};

// N x K matrix of iid Normal(0, sd^2) draws from mt19937_64(seed).
Eigen::MatrixXd initial_gamma(Eigen::Index n_groups, Eigen::Index k, std::uint64_t seed, double sd);

// Evenly spaced grid over [min(times), max(times)].
std::vector<double> training_grid(const std::vector<double>& times, int points);

struct FitOptions {
  const std::atomic<bool>* cancel = nullptr;
  // Skip init_hypers and start from this model.
  std::optional<ModelSpec> model;
  // Start from these gamma instead of initial_gamma(seed).
  std::optional<Eigen::MatrixXd> gamma;
  // Keep hyperparameters fixed (no optimize_hypers steps).
  bool freeze_hypers = false;
};

// Alternates, for each phase: VB optimization, hyperparameter steps, split
// rounds, prune and reorder. Ends with one VB run at the configured
// optimizer settings, whose convergence sets `converged`.
ResultBundle fit(const RunConfig& config, const GroupedDataset& data, const FitOptions& options = {});

void write_bundle(const ResultBundle& bundle, const std::filesystem::path& dir);
ResultBundle read_bundle(const std::filesystem::path& dir);

struct CompareRow {
  int restart = 0;
  std::uint64_t seed = 0;
  OptimizerMode mode = OptimizerMode::Steepest;
  int iterations = 0;
  double wall_time = 0.0;
  double final_bound = 0.0;
  bool converged = false;
  std::vector<TraceRecord> trace;
};

struct CompareResult {
  ModelSpec model;
  std::vector<CompareRow> rows;  // steepest then conjugate, per restart
};

// Both modes from the same initial gamma for each restart (seed + restart).
// Hyperparameters are initialized once and held fixed. `modes` defaults to
// {Steepest, Conjugate}.
CompareResult compare(const RunConfig& config, const GroupedDataset& data, int restarts,
                      std::vector<OptimizerMode> modes = {OptimizerMode::Steepest, OptimizerMode::Conjugate},
                      const std::atomic<bool>* cancel = nullptr);
void write_compare(const CompareResult& result, const std::filesystem::path& dir);

// Iterations needed to reach `target`, or -1 when the trace never does.
int iterations_to_reach(const std::vector<TraceRecord>& trace, double target);

enum class PredictMode { ClusterMean, ExistingGroup, NewGroup };
std::string_view predict_mode_name(PredictMode mode);
PredictMode predict_mode_from_name(std::string_view name);

// "start:stop:num"
std::vector<double> parse_grid(std::string_view text);

struct PredictionRow {
  std::string id;  // cluster index or group name
  double t = 0.0;
  double mean = 0.0;
  double lower = 0.0;  // mean - 2 sd
  double upper = 0.0;
  double sd = 0.0;
};

// ClusterMean and NewGroup are per cluster, ExistingGroup per group. `id`
// restricts the output to one cluster index or group name.
std::vector<PredictionRow> predict(const ResultBundle& bundle, const std::vector<double>& grid, PredictMode mode,
                                   const std::optional<std::string>& id = std::nullopt);
void write_predictions(std::ostream& out, const std::vector<PredictionRow>& rows);

}  // namespace dpgp

#include "dpgp/moves.hpp"

#include "dpgp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dpgp {

std::string_view move_kind_name(MoveKind kind) {
  switch (kind) {
    case MoveKind::Split:
      return "split";
    case MoveKind::Prune:
      return "prune";
    case MoveKind::Reorder:
      return "reorder";
  }
  return "unknown";
}

Responsibilities split_columns(const Responsibilities& resp, Eigen::Index k, double delta) {
  const auto n = resp.num_groups();
  const auto kk = resp.num_clusters();
  if (k < 0 || k >= kk) throw InputError("split: cluster index out of range");
  Eigen::MatrixXd gamma(n, kk + 1);
  gamma.leftCols(kk) = resp.gamma();
  const double up = std::log(0.5 + delta);
  const double down = std::log(0.5 - delta);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double g = resp.gamma()(i, k);
    const bool even = (i % 2) == 0;
    gamma(i, k) = g + (even ? up : down);
    gamma(i, kk) = g + (even ? down : up);
  }
  return Responsibilities(std::move(gamma));
}

MoveProposal split(const CollapsedObjective& objective, Responsibilities& resp, Eigen::Index k,
                   const OptimizerConfig& config) {
  MoveProposal p;
  p.kind = MoveKind::Split;
  p.cluster = k;
  p.before_bound = objective.evaluate(resp).total;
  const OptimizeResult opt = optimize(objective, split_columns(resp, k), config);
  p.after_bound = opt.bound.total;
  p.accepted = std::isfinite(p.after_bound) && p.after_bound > p.before_bound + kAcceptMargin;
  if (p.accepted) resp = opt.resp;
  return p;
}

Responsibilities prune_empty(const Responsibilities& resp, double threshold) {
  if (!(threshold >= 0.0)) throw InputError("prune threshold must be >= 0");
  const Eigen::VectorXd phi_hat = resp.phi().colwise().sum().transpose();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < phi_hat.size(); ++k) {
    if (phi_hat[k] >= threshold) keep.push_back(k);
  }
  if (keep.empty()) throw InputError("prune_empty would remove every cluster");
  if (static_cast<Eigen::Index>(keep.size()) == resp.num_clusters()) return resp;
  Eigen::MatrixXd gamma(resp.num_groups(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) gamma.col(static_cast<Eigen::Index>(j)) = resp.gamma().col(keep[j]);
  return Responsibilities(std::move(gamma));
}

Responsibilities reorder(const Responsibilities& resp) {
  const Eigen::VectorXd phi_hat = resp.phi().colwise().sum().transpose();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(phi_hat.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return phi_hat[a] > phi_hat[b]; });
  if (std::is_sorted(order.begin(), order.end())) return resp;
  Eigen::MatrixXd gamma(resp.num_groups(), resp.num_clusters());
  for (std::size_t j = 0; j < order.size(); ++j) gamma.col(static_cast<Eigen::Index>(j)) = resp.gamma().col(order[j]);
  return Responsibilities(std::move(gamma));
}

MoveProposal prune_move(const CollapsedObjective& objective, Responsibilities& resp, double threshold) {
  MoveProposal p;
  p.kind = MoveKind::Prune;
  p.before_bound = objective.evaluate(resp).total;
  Responsibilities next = prune_empty(resp, threshold);
  if (next.num_clusters() == resp.num_clusters()) {
    p.after_bound = p.before_bound;
    return p;
  }
  p.after_bound = objective.evaluate(next).total;
  const Eigen::VectorXd phi_hat = resp.phi().colwise().sum().transpose();
  const bool exactly_empty = ((phi_hat.array() < threshold).select(phi_hat, 0.0).array() == 0.0).all();
  p.accepted = exactly_empty || p.after_bound > p.before_bound + kAcceptMargin;
  if (p.accepted) resp = std::move(next);
  return p;
}

MoveProposal reorder_move(const CollapsedObjective& objective, Responsibilities& resp) {
  MoveProposal p;
  p.kind = MoveKind::Reorder;
  p.before_bound = objective.evaluate(resp).total;
  Responsibilities next = reorder(resp);
  if (next.gamma() == resp.gamma()) {
    p.after_bound = p.before_bound;
    return p;
  }
  p.after_bound = objective.evaluate(next).total;
  p.accepted = p.after_bound > p.before_bound + kAcceptMargin;
  if (p.accepted) resp = std::move(next);
  return p;
}

std::vector<MoveProposal> split_round(const CollapsedObjective& objective, Responsibilities& resp,
                                      const OptimizerConfig& config) {
  const Eigen::VectorXd phi_hat = resp.phi().colwise().sum().transpose();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(phi_hat.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return phi_hat[a] > phi_hat[b]; });
  std::vector<MoveProposal> log;
  for (Eigen::Index k : order) {
    if (phi_hat[k] < kMinSplitMass) break;
    if (config.cancel != nullptr && config.cancel->load()) break;
    log.push_back(split(objective, resp, k, config));
    if (log.back().accepted) break;
  }
  return log;
}

}  // namespace dpgp

#include "dpgp/optimizer.hpp"

#include "dpgp/errors.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <chrono>
#include <cmath>
#include <string>

namespace dpgp {

std::string_view mode_name(OptimizerMode mode) {
  return mode == OptimizerMode::Steepest ? "steepest" : "conjugate";
}

OptimizerMode mode_from_name(std::string_view name) {
  if (name == "steepest" || name == "vbem") return OptimizerMode::Steepest;
  if (name == "conjugate" || name == "riemann") return OptimizerMode::Conjugate;
  throw InputError("unknown optimizer mode '" + std::string(name) + "'");
}

std::string_view step_kind_name(StepKind kind) {
  switch (kind) {
    case StepKind::UnitNatural:
      return "unit_natural";
    case StepKind::Conjugate:
      return "conjugate";
    case StepKind::Fallback:
      return "fallback";
  }
  return "unknown";
}

void OptimizerConfig::validate() const {
  if (!(tol > 0.0)) throw InputError("optimizer.tol must be > 0");
  if (max_iters < 1) throw InputError("optimizer.max_iters must be >= 1");
}

Eigen::MatrixXd natural_gradient(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& grad_phi) {
  // Exactly-empty entries (gamma = -inf) have an infinite entropy gradient and
  // no Fisher mass; they take a zero step and stay empty.
  const auto live = grad_phi.array().isFinite();
  const Eigen::MatrixXd g = live.select(grad_phi, 0.0);
  const Eigen::VectorXd centre = (phi.array() * g.array()).rowwise().sum();
  Eigen::MatrixXd nat = g.colwise() - centre;
  return live.select(nat, 0.0);
}

Eigen::MatrixXd fisher_matrix(const Eigen::VectorXd& phi_row) {
  Eigen::MatrixXd g = -phi_row * phi_row.transpose();
  g.diagonal() += phi_row;
  return g;
}

Eigen::MatrixXd euclid_gamma_grad(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& grad_phi) {
  return phi.cwiseProduct(natural_gradient(phi, grad_phi));
}

double hs_beta(const Eigen::MatrixXd& nat_new, const Eigen::MatrixXd& g_new, const Eigen::MatrixXd& g_old,
               const Eigen::MatrixXd& d_old, double denominator_floor) {
  if (g_old.rows() != g_new.rows() || g_old.cols() != g_new.cols()) return 0.0;
  const Eigen::MatrixXd dg = g_new - g_old;
  const double den = (d_old.array() * dg.array()).sum();
  if (!(std::abs(den) >= denominator_floor)) return 0.0;
  const double beta = (nat_new.array() * dg.array()).sum() / den;
  if (!(beta > 0.0) || !std::isfinite(beta)) return 0.0;
  return beta;
}

Eigen::MatrixXd hs_direction(const Eigen::MatrixXd& nat_new, const Eigen::MatrixXd& g_new,
                             const Eigen::MatrixXd* g_old, const Eigen::MatrixXd* d_old,
                             double denominator_floor) {
  if (g_old == nullptr || d_old == nullptr) return nat_new;
  const double beta = hs_beta(nat_new, g_new, *g_old, *d_old, denominator_floor);
  if (beta == 0.0) return nat_new;
  return nat_new + beta * *d_old;
}

VariationalState::VariationalState(const CollapsedObjective& objective, Responsibilities resp)
    : resp_(std::move(resp)), eval_(objective.evaluate_with_gradient(resp_)) {}

Eigen::MatrixXd VariationalState::natural_gradient() const { return dpgp::natural_gradient(resp_.phi(), eval_.grad_phi); }

Eigen::MatrixXd VariationalState::euclid_gradient() const { return euclid_gamma_grad(resp_.phi(), eval_.grad_phi); }

void VariationalState::reset_conjugacy() {
  g_old_.reset();
  d_old_.reset();
}

StepKind step_and_accept(const CollapsedObjective& objective, VariationalState& state,
                         const Eigen::MatrixXd& direction) {
  const Eigen::MatrixXd nat = state.natural_gradient();
  const Eigen::MatrixXd g = state.euclid_gradient();
  const bool is_natural = direction == nat;

  if (!is_natural && direction.allFinite()) {
    Responsibilities trial(state.resp_.gamma() + direction);
    auto eval = objective.evaluate_with_gradient(trial);
    if (std::isfinite(eval.bound.total) && eval.bound.total >= state.eval_.bound.total) {
      state.g_old_ = g;
      state.d_old_ = direction;
      state.resp_ = std::move(trial);
      state.eval_ = std::move(eval);
      return StepKind::Conjugate;
    }
  }

  // Unit step along the natural gradient: one VBEM round.
  Responsibilities next(state.resp_.gamma() + nat);
  auto eval = objective.evaluate_with_gradient(next);
  if (!std::isfinite(eval.bound.total)) throw NumericalError("bound became non-finite after a natural-gradient step");
  state.g_old_ = g;
  state.d_old_ = nat;
  state.resp_ = std::move(next);
  state.eval_ = std::move(eval);
  return is_natural ? StepKind::UnitNatural : StepKind::Fallback;
}

OptimizeResult optimize(const CollapsedObjective& objective, const Responsibilities& start,
                        const OptimizerConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  VariationalState state(objective, start);
  OptimizeResult result{state.resp(), state.bound(), state.bound().total, {}, false, false};

  for (int iter = 1; iter <= config.max_iters; ++iter) {
    if (config.cancel != nullptr && config.cancel->load()) {
      result.cancelled = true;
      break;
    }
    const double before = state.bound().total;
    const Eigen::MatrixXd nat = state.natural_gradient();
    Eigen::MatrixXd direction = nat;
    if (config.mode == OptimizerMode::Conjugate && !config.force_beta_zero && state.previous_gradient()) {
      const Eigen::MatrixXd g = state.euclid_gradient();
      direction = hs_direction(nat, g, &*state.previous_gradient(), &*state.previous_direction(),
                               config.hs_denominator_floor);
    }
    const StepKind kind = step_and_accept(objective, state, direction);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.trace.push_back({iter, state.bound().total, kind, elapsed});
    if (std::abs(state.bound().total - before) < config.tol) {
      result.converged = true;
      break;
    }
  }
  result.resp = state.resp();
  result.bound = state.bound();
  return result;
}

Eigen::MatrixXd meanfield_vbem_round(const GroupedDataset& data, const Eigen::MatrixXd& phi, const KernelSpec& k_f,
                                     const StructureSpec& structure, double alpha) {
  using boost::math::digamma;
  const DataTerm q_f = data_term(data, phi, k_f, structure);
  const Eigen::MatrixXd k_y = group_cov(structure, data.design).values;
  const Cholesky chol(k_y, "K_y");
  const auto d = static_cast<double>(data.dim());
  const double log_norm = -0.5 * d * std::log(2.0 * 3.14159265358979323846) - 0.5 * chol.log_det();

  const auto n_groups = data.num_groups();
  const auto n_clusters = phi.cols();
  const Eigen::VectorXd phi_hat = phi.colwise().sum().transpose();
  const Eigen::VectorXd phi_tilde = tail_sums(phi_hat);

  // E[ln pi_k] under q(v_k) = Beta(1 + phi_hat_k, alpha + phi_tilde_k)
  Eigen::VectorXd e_log_pi(n_clusters);
  double e_log_rest = 0.0;
  for (Eigen::Index k = 0; k < n_clusters; ++k) {
    const double a = 1.0 + phi_hat[k];
    const double b = alpha + phi_tilde[k];
    e_log_pi[k] = digamma(a) - digamma(a + b) + e_log_rest;
    e_log_rest += digamma(b) - digamma(a + b);
  }

  Eigen::MatrixXd log_weights(n_groups, n_clusters);
  for (Eigen::Index k = 0; k < n_clusters; ++k) {
    const auto& post = q_f.posteriors[static_cast<std::size_t>(k)];
    const double trace_term = chol.solve(post.cov).trace();
    for (Eigen::Index n = 0; n < n_groups; ++n) {
      const Eigen::VectorXd r = data.values.row(n).transpose() - post.mean;
      const double expected = log_norm - 0.5 * r.dot(chol.solve(r)) - 0.5 * trace_term;
      log_weights(n, k) = e_log_pi[k] + expected;
    }
  }
  return softmax_rows(log_weights);
}

}  // namespace dpgp

#pragma once

// Natural-gradient optimization of the collapsed bound over softmax
// responsibilities.
//
// In the softmax parameterization the natural gradient needs no matrix
// inverse: g~_nk = dL/dphi_nk - sum_j phi_nj dL/dphi_nj. A unit step along it
// is exactly one mean-field VBEM round, so `Steepest` mode reproduces VBEM and
// `Conjugate` mode adds Hestenes-Stiefel directions with a VBEM fallback.

#include "dpgp/bound.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <optional>
#include <string_view>
#include <vector>

namespace dpgp {

enum class OptimizerMode { Steepest, Conjugate };
enum class StepKind { UnitNatural, Conjugate, Fallback };

std::string_view mode_name(OptimizerMode mode);
OptimizerMode mode_from_name(std::string_view name);
std::string_view step_kind_name(StepKind kind);

struct OptimizerConfig {
  OptimizerMode mode = OptimizerMode::Conjugate;
  int max_iters = 1000;
  double tol = 1e-6;  // nats, change of the bound over one iteration
  // Restart policy: conjugacy resets when beta < 0 or the HS denominator is
  // smaller than this. force_beta_zero makes conjugate mode identical to steepest.
  double hs_denominator_floor = 1e-12;
  bool force_beta_zero = false;
  const std::atomic<bool>* cancel = nullptr;

  void validate() const;
};

struct TraceRecord {
  int iter = 0;
  double bound = 0.0;
  StepKind step_kind = StepKind::UnitNatural;
  double wall_time = 0.0;  // seconds since optimize() started
};

Eigen::MatrixXd natural_gradient(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& grad_phi);
// diag(phi) - phi phi^T
Eigen::MatrixXd fisher_matrix(const Eigen::VectorXd& phi_row);
// dL/dgamma through the softmax Jacobian; every row sums to zero.
Eigen::MatrixXd euclid_gamma_grad(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& grad_phi);

// beta = <nat_new, g_new - g_old> / <d_old, g_new - g_old>, clamped to 0 when
// negative or when |denominator| < floor.
double hs_beta(const Eigen::MatrixXd& nat_new, const Eigen::MatrixXd& g_new, const Eigen::MatrixXd& g_old,
               const Eigen::MatrixXd& d_old, double denominator_floor = 1e-12);
Eigen::MatrixXd hs_direction(const Eigen::MatrixXd& nat_new, const Eigen::MatrixXd& g_new,
                             const Eigen::MatrixXd* g_old, const Eigen::MatrixXd* d_old,
                             double denominator_floor = 1e-12);

// Current responsibilities together with their bound, gradient and the
// conjugacy memory of the previous step.
class VariationalState {
 public:
  VariationalState(const CollapsedObjective& objective, Responsibilities resp);

  const Responsibilities& resp() const { return resp_; }
  const BoundBreakdown& bound() const { return eval_.bound; }
  const Eigen::MatrixXd& grad_phi() const { return eval_.grad_phi; }
  Eigen::MatrixXd natural_gradient() const;
  Eigen::MatrixXd euclid_gradient() const;

  void reset_conjugacy();
  const std::optional<Eigen::MatrixXd>& previous_gradient() const { return g_old_; }
  const std::optional<Eigen::MatrixXd>& previous_direction() const { return d_old_; }

 private:
  friend StepKind step_and_accept(const CollapsedObjective&, VariationalState&, const Eigen::MatrixXd&);

  Responsibilities resp_;
  CollapsedObjective::Evaluation eval_;
  std::optional<Eigen::MatrixXd> g_old_;
  std::optional<Eigen::MatrixXd> d_old_;
};

// Tries gamma + direction. If the bound does not decrease the step is kept,
// otherwise gamma + natural_gradient is taken instead and conjugacy resets.
// Returns UnitNatural when `direction` is the natural gradient itself.
StepKind step_and_accept(const CollapsedObjective& objective, VariationalState& state,
                         const Eigen::MatrixXd& direction);

struct OptimizeResult {
  Responsibilities resp;
  BoundBreakdown bound;
  double initial_bound = 0.0;
  std::vector<TraceRecord> trace;
  bool converged = false;
  bool cancelled = false;
  int iterations() const { return static_cast<int>(trace.size()); }
};

OptimizeResult optimize(const CollapsedObjective& objective, const Responsibilities& start,
                        const OptimizerConfig& config);

// Explicit mean-field round: q(f_k) and q(v_k) from phi, then
// q(z_n) proportional to exp(E[ln pi_k] + E[ln N(y_n | f_k, K_y)]).
Eigen::MatrixXd meanfield_vbem_round(const GroupedDataset& data, const Eigen::MatrixXd& phi, const KernelSpec& k_f,
                                     const StructureSpec& structure, double alpha);

}  // namespace dpgp

#pragma once

// Parametric covariance functions over a scalar input (time).
//
// A KernelSpec is an immutable value. Hyperparameters are strictly positive
// and are optimized in log-space, so every gradient produced here is taken
// with respect to log(theta).

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dpgp {

enum class KernelKind { SquaredExponential, WhiteNoise, Periodic, Sum };

std::string_view kind_name(KernelKind kind);
KernelKind kind_from_name(std::string_view name);

struct KernelParam {
  std::string name;
  double value = 0.0;
  bool fixed = false;  // fixed parameters are excluded from gradients
};

class KernelSpec {
 public:
  // unit squared exponential
  KernelSpec() : params_{{"variance", 1.0}, {"lengthscale", 1.0}} {}
  static KernelSpec squared_exponential(double variance, double lengthscale);
  static KernelSpec white_noise(double noise);
  // exp-sine-squared with a fixed period
  static KernelSpec periodic(double variance, double lengthscale, double period);
  static KernelSpec sum(std::vector<KernelSpec> children);

  KernelKind kind() const { return kind_; }
  const std::vector<KernelParam>& params() const { return params_; }
  const std::vector<KernelSpec>& children() const { return children_; }

  // Throws InputError for unknown names.
  double param(std::string_view name) const;
  KernelSpec with_param(std::string_view name, double value) const;

  // Free parameters, flattened depth-first. Sum children are prefixed "i.".
  std::vector<std::string> free_param_names() const;
  std::size_t num_free_params() const;
  Eigen::VectorXd log_params() const;
  KernelSpec with_log_params(const Eigen::VectorXd& log_values) const;

  bool has_white_noise() const;
  // Sum of the stationary variances k(t,t) (white noise included).
  double diagonal() const;
  std::string describe() const;

  friend bool operator==(const KernelSpec& a, const KernelSpec& b);

 private:
  void validate() const;
  void collect_log(std::vector<double>& out) const;
  void assign_log(const Eigen::VectorXd& v, Eigen::Index& pos);

  KernelKind kind_ = KernelKind::SquaredExponential;
  std::vector<KernelParam> params_;
  std::vector<KernelSpec> children_;
};

// k(t, t2). `same_sample` decides white-noise identity: two samples at the
// same clock time are still independent noise draws.
double eval(const KernelSpec& spec, double t, double t2, bool same_sample);

struct GramMatrix {
  Eigen::MatrixXd values;
  double jitter = 0.0;
};

GramMatrix gram(const KernelSpec& spec, const std::vector<double>& times, double jitter = 0.0);

// Cross-covariance between two disjoint sample sets; white noise contributes 0.
Eigen::MatrixXd cross_gram(const KernelSpec& spec, const std::vector<double>& rows,
                           const std::vector<double>& cols);

// dK/d(log theta_j) for every free parameter, in free_param_names() order.
std::vector<std::pair<std::string, Eigen::MatrixXd>> gram_grads(const KernelSpec& spec,
                                                                const std::vector<double>& times);

// Cholesky factor with jitter escalation. Starts at `jitter`; on failure tries
// 1e-8 * mean(diag), multiplying by 10 until 1e-2 * mean(diag).
class Cholesky {
 public:
  Cholesky(const Eigen::MatrixXd& matrix, std::string_view label, double jitter = 0.0);

  Eigen::Index size() const { return llt_.rows(); }
  double jitter() const { return jitter_; }
  double log_det() const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const { return llt_.solve(b); }
  // L^{-1} b
  Eigen::MatrixXd half_solve(const Eigen::MatrixXd& b) const;
  // tr(A^{-1} B) without forming A^{-1}
  double trace_solve(const Eigen::MatrixXd& b) const;
  Eigen::MatrixXd matrix_l() const { return llt_.matrixL(); }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

}  // namespace dpgp

#pragma once

// The collapsed (KL-corrected) lower bound on the marginal likelihood of a
// truncated stick-breaking mixture of hierarchical GPs.
//
// Only the assignment distribution q(Z) is parameterized, through row-wise
// softmax responsibilities phi = softmax(gamma). Cluster functions and stick
// lengths are integrated out analytically, giving
//
//   L = data_term(phi) + stick_term(phi_hat) + entropy(phi).

#include "dpgp/hgp.hpp"
#include "dpgp/kernels.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace dpgp {

// Clusters whose effective count is at or below this contribute nothing to
// the data term and keep the prior as their posterior.
inline constexpr double kEmptyClusterMass = 1e-10;

struct ModelSpec {
  KernelSpec cluster_kernel;
  StructureSpec structure;
  double alpha = 1.0;

  // "f.<param>" for the cluster kernel, then "layer<i>.<param>".
  std::vector<std::string> hyper_names() const;
  Eigen::VectorXd log_hypers() const;
  ModelSpec with_log_hypers(const Eigen::VectorXd& log_values) const;
  void validate(const Design& design) const;
};

class Responsibilities {
 public:
  explicit Responsibilities(Eigen::MatrixXd gamma);
  // gamma = log(phi); exact zeros become -inf and are only valid for evaluation.
  static Responsibilities from_phi(const Eigen::MatrixXd& phi);

  const Eigen::MatrixXd& gamma() const { return gamma_; }
  const Eigen::MatrixXd& phi() const { return phi_; }
  const Eigen::MatrixXd& log_phi() const { return log_phi_; }
  Eigen::Index num_groups() const { return gamma_.rows(); }
  Eigen::Index num_clusters() const { return gamma_.cols(); }

 private:
  Eigen::MatrixXd gamma_;
  Eigen::MatrixXd phi_;
  Eigen::MatrixXd log_phi_;
};

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& gamma);
Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& gamma);

struct SuffStats {
  Eigen::VectorXd phi_hat;        // sum_n phi_nk
  Eigen::VectorXd phi_tilde;      // sum_{i>k} phi_hat_i
  Eigen::MatrixXd weighted_sums;  // D x K, column k = sum_n phi_nk y_n

  static SuffStats compute(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& values);
};

// phi_tilde_k = sum_{i>k} phi_hat_i
Eigen::VectorXd tail_sums(const Eigen::VectorXd& phi_hat);

struct BoundBreakdown {
  double data_term = 0.0;
  double stick_term = 0.0;
  double entropy_term = 0.0;
  double total = 0.0;
};

struct ClusterPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// sum_k ln[ Gamma(phi_hat_k + 1) Gamma(phi_tilde_k + alpha) alpha / Gamma(phi_hat_k + phi_tilde_k + alpha + 1) ]
double stick_term(const Eigen::VectorXd& phi_hat, double alpha);
// d stick_term / d phi_hat
Eigen::VectorXd stick_term_grad(const Eigen::VectorXd& phi_hat, double alpha);

// -sum phi ln phi, with 0 ln 0 = 0
double entropy(const Responsibilities& resp);

struct DataTerm {
  double value = 0.0;
  std::vector<ClusterPosterior> posteriors;
};

// Precomputes everything that depends only on the data and hyperparameters
// (one factorization of K_y shared by all groups and clusters).
class CollapsedObjective {
 public:
  CollapsedObjective(const GroupedDataset& data, ModelSpec model);

  const GroupedDataset& data() const { return *data_; }
  const ModelSpec& model() const { return model_; }

  BoundBreakdown evaluate(const Responsibilities& resp) const;

  struct Evaluation {
    BoundBreakdown bound;
    Eigen::MatrixXd grad_phi;  // total derivative dL/dphi, N x K
  };
  Evaluation evaluate_with_gradient(const Responsibilities& resp) const;

  DataTerm data_term(const Eigen::MatrixXd& phi) const;
  // dL/d(log theta), in model().hyper_names() order.
  Eigen::VectorXd hyper_gradient(const Responsibilities& resp) const;

  // E_{q(f_k)}[ln N(y_n | f_k, K_y)] for every n, k: the data part of dL/dphi.
  Eigen::MatrixXd expected_loglik(const Eigen::MatrixXd& phi) const;

 private:
  struct ClusterTerms;
  ClusterTerms cluster_terms(const Eigen::MatrixXd& phi, Eigen::Index k, bool want_grad) const;

  const GroupedDataset* data_;
  ModelSpec model_;
  Eigen::MatrixXd k_f_;
  Eigen::MatrixXd k_y_;
  std::optional<Cholesky> k_y_chol_;
  Eigen::MatrixXd whitened_;      // D x N, column n = K_y^{-1} y_n
  Eigen::VectorXd quad_;          // y_n^T K_y^{-1} y_n
  double log_det_k_y_ = 0.0;
  double trace_prior_ = 0.0;      // tr(K_y^{-1} K_f)
};

DataTerm data_term(const GroupedDataset& data, const Eigen::MatrixXd& phi, const KernelSpec& k_f,
                   const StructureSpec& structure);
BoundBreakdown bound(const GroupedDataset& data, const Responsibilities& resp, const ModelSpec& model);
Eigen::MatrixXd grad_phi(const GroupedDataset& data, const Responsibilities& resp, const ModelSpec& model);
Eigen::VectorXd grad_hypers(const GroupedDataset& data, const Responsibilities& resp, const ModelSpec& model);

// log sum over every hard assignment of N groups to K clusters of
// p(Y | Z) p(Z), by direct enumeration. Requires K^N <= 1e6.
double exact_log_marginal_small(const GroupedDataset& data, Eigen::Index num_clusters, const ModelSpec& model);

// log p(Y, Z) for one hard assignment (labels in [0, K)).
double exact_log_joint(const GroupedDataset& data, const std::vector<int>& labels, Eigen::Index num_clusters,
                       const ModelSpec& model);

double logsumexp(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace dpgp

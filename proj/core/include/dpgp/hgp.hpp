#pragma once

// Hierarchical GP machinery.
//
// Every group of data is observed on one shared Design. A group's values are
// the cluster-level function f ~ GP(0, k_f) plus the sum of its structure
// layers. A layer contributes covariance between two points only when the
// points carry the same id on the layer's level; white-noise layers are
// further restricted to identical sample indices.

#include "dpgp/kernels.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace dpgp {

inline constexpr const char* kGroupLevel = "group";
inline constexpr std::size_t kMaxStructureDepth = 3;

struct Level {
  std::string name;
  std::vector<int> ids;
  std::vector<std::string> id_names;  // optional display name per id

  friend bool operator==(const Level&, const Level&) = default;
};

struct Design {
  std::vector<double> times;
  std::vector<Level> levels;  // "group" is implicit unless listed

  Eigen::Index size() const { return static_cast<Eigen::Index>(times.size()); }
  // Ids for a level; the implicit "group" level maps every point to 0.
  std::vector<int> ids(const std::string& level) const;
  bool has_level(const std::string& level) const;
  void validate() const;

  friend bool operator==(const Design&, const Design&) = default;
};

// The design of n groups concatenated, with the "group" level set to the
// group index and every other level made distinct across groups.
Design stack_groups(const Design& design, std::size_t n_groups);

struct Layer {
  KernelSpec kernel;
  std::string level = kGroupLevel;
};

struct StructureSpec {
  std::vector<Layer> layers;

  bool has_white_noise() const;
  std::size_t num_free_params() const;
  std::vector<std::string> free_param_names() const;
  Eigen::VectorXd log_params() const;
  StructureSpec with_log_params(const Eigen::VectorXd& log_values) const;
  // Throws InputError on missing noise, unknown levels or excess depth.
  void validate(const Design& design) const;
};

struct GroupedDataset {
  Design design;
  Eigen::MatrixXd values;  // N x D, one row per group
  std::vector<std::string> names;

  Eigen::Index num_groups() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
  void validate() const;
};

GramMatrix compound_gram(const KernelSpec& k_f, const StructureSpec& structure, const Design& design);

// K_y: the within-group covariance (compound_gram without k_f).
GramMatrix group_cov(const StructureSpec& structure, const Design& design);

// dK_y/d(log theta) for every free structure parameter, named "layer<i>.<param>".
std::vector<std::pair<std::string, Eigen::MatrixXd>> group_cov_grads(const StructureSpec& structure,
                                                                     const Design& design);

// log N(y | 0, K)
double log_marginal(const Eigen::VectorXd& y, const GramMatrix& k);

struct LatentPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::VectorXd sd() const { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

// Posterior of f on `grid` given `weight` observations of f at `times` whose
// weighted sum is `weighted_sum`, each with covariance K_y. weight <= 0 gives
// the prior.
LatentPosterior posterior_from_stats(double weight, const Eigen::VectorXd& weighted_sum, const KernelSpec& k_f,
                                     const GramMatrix& k_y, const std::vector<double>& times,
                                     const std::vector<double>& grid);

// Same, from the rows of `ys` (each row one observation vector).
LatentPosterior posterior_latent(const Eigen::MatrixXd& ys, const KernelSpec& k_f, const GramMatrix& k_y,
                                 const std::vector<double>& times, const std::vector<double>& grid);

// The group-level function (f plus the group-level smooth layers) of
// members.row(target), conditioned on every member of its cluster.
LatentPosterior predict_group(const Eigen::MatrixXd& members, Eigen::Index target, const KernelSpec& k_f,
                              const StructureSpec& structure, const Design& design,
                              const std::vector<double>& grid);

// The function of an unseen group joining a cluster with these members.
LatentPosterior predict_new_group(const Eigen::MatrixXd& members, const KernelSpec& k_f,
                                  const StructureSpec& structure, const Design& design,
                                  const std::vector<double>& grid);
// Soft-membership form: `weight` and `weighted_sum` as in posterior_from_stats.
LatentPosterior predict_new_group(double weight, const Eigen::VectorXd& weighted_sum, const KernelSpec& k_f,
                                  const StructureSpec& structure, const Design& design,
                                  const std::vector<double>& grid);

}  // namespace dpgp

#include "dpgp/hgp.hpp"

#include "dpgp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dpgp {

namespace {

// Structure kernel masked by level membership.
Eigen::MatrixXd masked_gram(const KernelSpec& kernel, const std::vector<double>& times,
                            const std::vector<int>& ids) {
  GramMatrix g = gram(kernel, times);
  const auto d = g.values.rows();
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (ids[i] != ids[j]) g.values(i, j) = 0.0;
    }
  }
  return std::move(g.values);
}

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Smooth (noise-free) covariance of the group-level layers between two point sets.
Eigen::MatrixXd group_smooth_cross(const StructureSpec& structure, const std::vector<double>& rows,
                                   const std::vector<double>& cols) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()),
                                              static_cast<Eigen::Index>(cols.size()));
  for (const auto& layer : structure.layers) {
    if (layer.level == kGroupLevel) out += cross_gram(layer.kernel, rows, cols);
  }
  return out;
}

void require_smooth_cluster_kernel(const KernelSpec& k_f) {
  if (k_f.has_white_noise()) {
    throw InputError("cluster kernel must not contain white noise; put noise in the structure");
  }
}

}  // namespace

std::vector<int> Design::ids(const std::string& level) const {
  for (const auto& l : levels) {
    if (l.name == level) return l.ids;
  }
  if (level == kGroupLevel) return std::vector<int>(times.size(), 0);
  throw InputError("design has no level '" + level + "'");
}

bool Design::has_level(const std::string& level) const {
  if (level == kGroupLevel) return true;
  return std::any_of(levels.begin(), levels.end(), [&](const Level& l) { return l.name == level; });
}

void Design::validate() const {
  if (times.empty()) throw InputError("design has no points");
  for (double t : times) {
    if (!std::isfinite(t)) throw InputError("design contains a non-finite time");
  }
  for (const auto& l : levels) {
    if (l.ids.size() != times.size()) {
      throw InputError("design level '" + l.name + "' has " + std::to_string(l.ids.size()) + " ids for " +
                       std::to_string(times.size()) + " points");
    }
  }
}

Design stack_groups(const Design& design, std::size_t n_groups) {
  Design out;
  const std::size_t d = design.times.size();
  for (std::size_t g = 0; g < n_groups; ++g) out.times.insert(out.times.end(), design.times.begin(), design.times.end());
  Level group{kGroupLevel, {}, {}};
  for (std::size_t g = 0; g < n_groups; ++g) group.ids.insert(group.ids.end(), d, static_cast<int>(g));
  out.levels.push_back(std::move(group));
  for (const auto& l : design.levels) {
    if (l.name == kGroupLevel) continue;
    const int span = l.ids.empty() ? 1 : *std::max_element(l.ids.begin(), l.ids.end()) + 1;
    Level stacked{l.name, {}, {}};
    for (std::size_t g = 0; g < n_groups; ++g) {
      for (int id : l.ids) stacked.ids.push_back(static_cast<int>(g) * span + id);
    }
    out.levels.push_back(std::move(stacked));
  }
  return out;
}

bool StructureSpec::has_white_noise() const {
  return std::any_of(layers.begin(), layers.end(), [](const Layer& l) { return l.kernel.has_white_noise(); });
}

std::size_t StructureSpec::num_free_params() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.kernel.num_free_params();
  return n;
}

std::vector<std::string> StructureSpec::free_param_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (auto& n : layers[i].kernel.free_param_names()) names.push_back("layer" + std::to_string(i) + "." + n);
  }
  return names;
}

Eigen::VectorXd StructureSpec::log_params() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(num_free_params()));
  Eigen::Index pos = 0;
  for (const auto& l : layers) {
    const Eigen::VectorXd v = l.kernel.log_params();
    out.segment(pos, v.size()) = v;
    pos += v.size();
  }
  return out;
}

StructureSpec StructureSpec::with_log_params(const Eigen::VectorXd& log_values) const {
  if (static_cast<std::size_t>(log_values.size()) != num_free_params()) {
    throw InputError("structure log-parameter vector has wrong length");
  }
  StructureSpec out = *this;
  Eigen::Index pos = 0;
  for (auto& l : out.layers) {
    const auto n = static_cast<Eigen::Index>(l.kernel.num_free_params());
    l.kernel = l.kernel.with_log_params(log_values.segment(pos, n));
    pos += n;
  }
  return out;
}

void StructureSpec::validate(const Design& design) const {
  if (layers.empty()) throw InputError("structure needs at least one layer");
  if (!has_white_noise()) {
    throw InputError("structure has no white_noise layer; the within-group covariance K_y would be singular");
  }
  std::size_t smooth = 0;
  for (const auto& l : layers) {
    if (!design.has_level(l.level)) throw InputError("structure layer refers to unknown level '" + l.level + "'");
    if (l.kernel.kind() != KernelKind::WhiteNoise) ++smooth;
  }
  if (smooth > kMaxStructureDepth) {
    throw InputError("structure is nested deeper than " + std::to_string(kMaxStructureDepth) + " levels");
  }
}

void GroupedDataset::validate() const {
  design.validate();
  if (values.rows() == 0) throw InputError("dataset has no groups");
  if (values.cols() != design.size()) throw InputError("dataset width does not match its design");
  if (!values.allFinite()) throw InputError("dataset contains non-finite values");
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != values.rows()) {
    throw InputError("dataset has " + std::to_string(names.size()) + " names for " +
                     std::to_string(values.rows()) + " groups");
  }
}

GramMatrix compound_gram(const KernelSpec& k_f, const StructureSpec& structure, const Design& design) {
  GramMatrix m = gram(k_f, design.times);
  for (const auto& layer : structure.layers) m.values += masked_gram(layer.kernel, design.times, design.ids(layer.level));
  return m;
}

GramMatrix group_cov(const StructureSpec& structure, const Design& design) {
  structure.validate(design);
  GramMatrix m;
  m.values = Eigen::MatrixXd::Zero(design.size(), design.size());
  for (const auto& layer : structure.layers) m.values += masked_gram(layer.kernel, design.times, design.ids(layer.level));
  return m;
}

std::vector<std::pair<std::string, Eigen::MatrixXd>> group_cov_grads(const StructureSpec& structure,
                                                                     const Design& design) {
  std::vector<std::pair<std::string, Eigen::MatrixXd>> out;
  for (std::size_t i = 0; i < structure.layers.size(); ++i) {
    const auto& layer = structure.layers[i];
    const std::vector<int> ids = design.ids(layer.level);
    for (auto& [name, m] : gram_grads(layer.kernel, design.times)) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          if (ids[r] != ids[c]) m(r, c) = 0.0;
        }
      }
      out.emplace_back("layer" + std::to_string(i) + "." + name, std::move(m));
    }
  }
  return out;
}

double log_marginal(const Eigen::VectorXd& y, const GramMatrix& k) {
  if (y.size() != k.values.rows()) throw InputError("log_marginal: dimension mismatch");
  const Cholesky chol(k.values, "log_marginal covariance", 0.0);
  const Eigen::VectorXd w = chol.half_solve(y);
  return -0.5 * w.squaredNorm() - 0.5 * chol.log_det() -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

LatentPosterior posterior_from_stats(double weight, const Eigen::VectorXd& weighted_sum, const KernelSpec& k_f,
                                     const GramMatrix& k_y, const std::vector<double>& times,
                                     const std::vector<double>& grid) {
  require_smooth_cluster_kernel(k_f);
  LatentPosterior post;
  post.cov = cross_gram(k_f, grid, grid);
  post.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  if (!(weight > 0.0)) return post;
  // (K_f + K_y / w)^{-1} = w (K_y + w K_f)^{-1}; the right-hand form stays
  // well conditioned as w -> 0.
  const Eigen::MatrixXd k_f_x = gram(k_f, times).values;
  const Cholesky chol(k_y.values + weight * k_f_x, "K_y + w K_f", 0.0);
  const Eigen::MatrixXd k_gx = cross_gram(k_f, grid, times);
  post.mean = k_gx * chol.solve(weighted_sum);
  const Eigen::MatrixXd half = chol.half_solve(Eigen::MatrixXd(k_gx.transpose()));
  post.cov.noalias() -= weight * half.transpose() * half;
  return post;
}

LatentPosterior posterior_latent(const Eigen::MatrixXd& ys, const KernelSpec& k_f, const GramMatrix& k_y,
                                 const std::vector<double>& times, const std::vector<double>& grid) {
  if (ys.rows() > 0 && ys.cols() != static_cast<Eigen::Index>(times.size())) {
    throw InputError("posterior_latent: observation width does not match times");
  }
  const Eigen::VectorXd sum =
      ys.rows() > 0 ? Eigen::VectorXd(ys.colwise().sum().transpose()) : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(times.size()));
  return posterior_from_stats(static_cast<double>(ys.rows()), sum, k_f, k_y, times, grid);
}

LatentPosterior predict_group(const Eigen::MatrixXd& members, Eigen::Index target, const KernelSpec& k_f,
                              const StructureSpec& structure, const Design& design,
                              const std::vector<double>& grid) {
  if (target < 0 || target >= members.rows()) throw InputError("predict_group: target index out of range");
  const GramMatrix k_y = group_cov(structure, design);
  const auto g = static_cast<Eigen::Index>(grid.size());
  const auto d = design.size();

  // f given every other member, jointly on grid and design points.
  const std::vector<double> joint = concat(grid, design.times);
  const Eigen::VectorXd others = members.colwise().sum().transpose() - members.row(target).transpose();
  const LatentPosterior f_post =
      posterior_from_stats(static_cast<double>(members.rows() - 1), others, k_f, k_y, design.times, joint);

  const Eigen::VectorXd mu_g = f_post.mean.head(g);
  const Eigen::VectorXd mu_x = f_post.mean.tail(d);
  const Eigen::MatrixXd cov_gy = f_post.cov.topRightCorner(g, d) + group_smooth_cross(structure, grid, design.times);
  const Cholesky chol(f_post.cov.bottomRightCorner(d, d) + k_y.values, "predict_group observation covariance");

  LatentPosterior out;
  out.mean = mu_g + cov_gy * chol.solve(Eigen::VectorXd(members.row(target).transpose() - mu_x));
  const Eigen::MatrixXd half = chol.half_solve(Eigen::MatrixXd(cov_gy.transpose()));
  out.cov = f_post.cov.topLeftCorner(g, g) + group_smooth_cross(structure, grid, grid) - half.transpose() * half;
  return out;
}

LatentPosterior predict_new_group(const Eigen::MatrixXd& members, const KernelSpec& k_f,
                                  const StructureSpec& structure, const Design& design,
                                  const std::vector<double>& grid) {
  LatentPosterior out = posterior_latent(members, k_f, group_cov(structure, design), design.times, grid);
  out.cov += group_smooth_cross(structure, grid, grid);
  return out;
}

LatentPosterior predict_new_group(double weight, const Eigen::VectorXd& weighted_sum, const KernelSpec& k_f,
                                  const StructureSpec& structure, const Design& design,
                                  const std::vector<double>& grid) {
  LatentPosterior out =
      posterior_from_stats(weight, weighted_sum, k_f, group_cov(structure, design), design.times, grid);
  out.cov += group_smooth_cross(structure, grid, grid);
  return out;
}

}  // namespace dpgp

#include "dpgp/bound.hpp"

#include "dpgp/errors.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

namespace dpgp {

namespace {

// Eigen's vectorized exp maps -inf to a denormal instead of 0.
const auto exact_exp = [](double x) { return std::exp(x); };

constexpr double kLog2Pi = 1.8378770664093454836;

double digamma(double x) { return boost::math::digamma(x); }

}  // namespace

std::vector<std::string> ModelSpec::hyper_names() const {
  std::vector<std::string> names;
  for (auto& n : cluster_kernel.free_param_names()) names.push_back("f." + n);
  for (auto& n : structure.free_param_names()) names.push_back(n);
  return names;
}

Eigen::VectorXd ModelSpec::log_hypers() const {
  const Eigen::VectorXd f = cluster_kernel.log_params();
  const Eigen::VectorXd s = structure.log_params();
  Eigen::VectorXd out(f.size() + s.size());
  out << f, s;
  return out;
}

ModelSpec ModelSpec::with_log_hypers(const Eigen::VectorXd& log_values) const {
  const auto nf = static_cast<Eigen::Index>(cluster_kernel.num_free_params());
  const auto ns = static_cast<Eigen::Index>(structure.num_free_params());
  if (log_values.size() != nf + ns) throw InputError("hyperparameter vector has wrong length");
  ModelSpec out = *this;
  out.cluster_kernel = cluster_kernel.with_log_params(log_values.head(nf));
  out.structure = structure.with_log_params(log_values.tail(ns));
  return out;
}

void ModelSpec::validate(const Design& design) const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("concentration alpha must be > 0");
  if (cluster_kernel.has_white_noise()) {
    throw InputError("cluster kernel must not contain white noise; put noise in the structure");
  }
  structure.validate(design);
}

double logsumexp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).unaryExpr(exact_exp).sum());
}

Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& gamma) {
  Eigen::MatrixXd out(gamma.rows(), gamma.cols());
  for (Eigen::Index n = 0; n < gamma.rows(); ++n) {
    const double m = gamma.row(n).maxCoeff();
    if (!std::isfinite(m)) throw InputError("responsibility row " + std::to_string(n) + " has no finite entry");
    const double lse = m + std::log((gamma.row(n).array() - m).unaryExpr(exact_exp).sum());
    out.row(n) = gamma.row(n).array() - lse;
  }
  return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& gamma) { return log_softmax_rows(gamma).unaryExpr(exact_exp); }

Responsibilities::Responsibilities(Eigen::MatrixXd gamma) : gamma_(std::move(gamma)) {
  if (gamma_.cols() < 1) throw InputError("responsibilities need at least one cluster");
  log_phi_ = log_softmax_rows(gamma_);
  phi_ = log_phi_.unaryExpr(exact_exp);
}

Responsibilities Responsibilities::from_phi(const Eigen::MatrixXd& phi) {
  return Responsibilities(phi.unaryExpr([](double x) { return std::log(x); }));
}

Eigen::VectorXd tail_sums(const Eigen::VectorXd& phi_hat) {
  const auto k = phi_hat.size();
  Eigen::VectorXd tilde = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = k - 2; i >= 0; --i) tilde[i] = tilde[i + 1] + phi_hat[i + 1];
  return tilde;
}

SuffStats SuffStats::compute(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& values) {
  SuffStats s;
  s.phi_hat = phi.colwise().sum().transpose();
  s.phi_tilde = tail_sums(s.phi_hat);
  s.weighted_sums = values.transpose() * phi;
  return s;
}

double stick_term(const Eigen::VectorXd& phi_hat, double alpha) {
  const Eigen::VectorXd tilde = tail_sums(phi_hat);
  const double log_alpha = std::log(alpha);
  double total = 0.0;
  for (Eigen::Index k = 0; k < phi_hat.size(); ++k) {
    total += std::lgamma(phi_hat[k] + 1.0) + std::lgamma(tilde[k] + alpha) + log_alpha -
             std::lgamma(phi_hat[k] + tilde[k] + alpha + 1.0);
  }
  return total;
}

Eigen::VectorXd stick_term_grad(const Eigen::VectorXd& phi_hat, double alpha) {
  const Eigen::VectorXd tilde = tail_sums(phi_hat);
  const auto k = phi_hat.size();
  Eigen::VectorXd grad(k);
  double carried = 0.0;  // sum over earlier sticks of their d/d phi_tilde
  for (Eigen::Index j = 0; j < k; ++j) {
    const double total = digamma(phi_hat[j] + tilde[j] + alpha + 1.0);
    grad[j] = digamma(phi_hat[j] + 1.0) - total + carried;
    carried += digamma(tilde[j] + alpha) - total;
  }
  return grad;
}

double entropy(const Responsibilities& resp) {
  double h = 0.0;
  const auto& phi = resp.phi();
  const auto& log_phi = resp.log_phi();
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    if (phi.data()[i] > 0.0) h -= phi.data()[i] * log_phi.data()[i];
  }
  return h;
}

struct CollapsedObjective::ClusterTerms {
  double mass = 0.0;
  double value = 0.0;
  bool active = false;
  Eigen::VectorXd sum;   // s_k
  Eigen::VectorXd a;     // (K_y + w K_f)^{-1} s_k
  Eigen::VectorXd mean;  // K_f a
  std::optional<Cholesky> chol;
  Eigen::VectorXd grad;  // dL_data/dphi_{.k}
};

CollapsedObjective::CollapsedObjective(const GroupedDataset& data, ModelSpec model)
    : data_(&data), model_(std::move(model)) {
  data.validate();
  model_.validate(data.design);
  k_f_ = gram(model_.cluster_kernel, data.design.times).values;
  k_y_ = group_cov(model_.structure, data.design).values;
  k_y_chol_.emplace(k_y_, "within-group covariance K_y for " + model_.structure.layers.front().kernel.describe());
  whitened_ = k_y_chol_->solve(Eigen::MatrixXd(data.values.transpose()));
  quad_ = (data.values.transpose().array() * whitened_.array()).colwise().sum().transpose();
  log_det_k_y_ = k_y_chol_->log_det();
  trace_prior_ = k_y_chol_->trace_solve(k_f_);
  if (!std::isfinite(log_det_k_y_) || !quad_.allFinite()) throw NumericalError("non-finite data whitening");
}

CollapsedObjective::ClusterTerms CollapsedObjective::cluster_terms(const Eigen::MatrixXd& phi, Eigen::Index k,
                                                                   bool want_grad) const {
  const auto d = static_cast<double>(data_->dim());
  const double c = 0.5 * d * kLog2Pi + 0.5 * log_det_k_y_;
  ClusterTerms t;
  t.mass = phi.col(k).sum();
  t.sum = data_->values.transpose() * phi.col(k);
  if (t.mass <= kEmptyClusterMass) {
    t.mean = Eigen::VectorXd::Zero(data_->dim());
    if (want_grad) t.grad = (-c - 0.5 * trace_prior_) - 0.5 * quad_.array();
    return t;
  }
  t.active = true;
  const double w = t.mass;
  t.chol.emplace(k_y_ + w * k_f_, "K_y + phi_hat K_f");
  t.a = t.chol->solve(t.sum);
  t.mean = k_f_ * t.a;
  const Eigen::VectorXd p_sum = whitened_ * phi.col(k);
  t.value = -0.5 * w * d * kLog2Pi - 0.5 * (w - 1.0) * log_det_k_y_ - 0.5 * t.chol->log_det() -
            0.5 * phi.col(k).dot(quad_) + (t.sum.dot(p_sum) - t.sum.dot(t.a)) / (2.0 * w);
  if (want_grad) {
    const double m_p_m = t.mean.dot(k_y_chol_->solve(t.mean));
    const double tr = t.chol->trace_solve(k_f_);
    t.grad = whitened_.transpose() * t.mean;
    t.grad.array() += -c - 0.5 * m_p_m - 0.5 * tr;
    t.grad -= 0.5 * quad_;
  }
  return t;
}

DataTerm CollapsedObjective::data_term(const Eigen::MatrixXd& phi) const {
  DataTerm out;
  for (Eigen::Index k = 0; k < phi.cols(); ++k) {
    ClusterTerms t = cluster_terms(phi, k, false);
    out.value += t.value;
    ClusterPosterior post;
    post.mean = t.mean;
    if (t.active) {
      const Eigen::MatrixXd half = t.chol->half_solve(k_f_);
      post.cov = k_f_ - t.mass * half.transpose() * half;
    } else {
      post.cov = k_f_;
    }
    out.posteriors.push_back(std::move(post));
  }
  return out;
}

Eigen::MatrixXd CollapsedObjective::expected_loglik(const Eigen::MatrixXd& phi) const {
  Eigen::MatrixXd out(phi.rows(), phi.cols());
  for (Eigen::Index k = 0; k < phi.cols(); ++k) out.col(k) = cluster_terms(phi, k, true).grad;
  return out;
}

BoundBreakdown CollapsedObjective::evaluate(const Responsibilities& resp) const {
  const auto& phi = resp.phi();
  if (phi.rows() != data_->num_groups()) throw InputError("responsibilities do not match the dataset");
  BoundBreakdown b;
  for (Eigen::Index k = 0; k < phi.cols(); ++k) b.data_term += cluster_terms(phi, k, false).value;
  b.stick_term = stick_term(phi.colwise().sum().transpose(), model_.alpha);
  b.entropy_term = entropy(resp);
  b.total = b.data_term + b.stick_term + b.entropy_term;
  return b;
}

CollapsedObjective::Evaluation CollapsedObjective::evaluate_with_gradient(const Responsibilities& resp) const {
  const auto& phi = resp.phi();
  if (phi.rows() != data_->num_groups()) throw InputError("responsibilities do not match the dataset");
  Evaluation e;
  e.grad_phi.resize(phi.rows(), phi.cols());
  for (Eigen::Index k = 0; k < phi.cols(); ++k) {
    ClusterTerms t = cluster_terms(phi, k, true);
    e.bound.data_term += t.value;
    e.grad_phi.col(k) = t.grad;
  }
  const Eigen::VectorXd phi_hat = phi.colwise().sum().transpose();
  e.bound.stick_term = stick_term(phi_hat, model_.alpha);
  e.bound.entropy_term = entropy(resp);
  e.bound.total = e.bound.data_term + e.bound.stick_term + e.bound.entropy_term;
  e.grad_phi.rowwise() += stick_term_grad(phi_hat, model_.alpha).transpose();
  e.grad_phi.array() -= resp.log_phi().array() + 1.0;
  return e;
}

Eigen::VectorXd CollapsedObjective::hyper_gradient(const Responsibilities& resp) const {
  const auto& phi = resp.phi();
  const auto& design = data_->design;
  const auto f_grads = gram_grads(model_.cluster_kernel, design.times);
  const auto y_grads = group_cov_grads(model_.structure, design);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f_grads.size() + y_grads.size()));

  std::vector<ClusterTerms> terms;
  for (Eigen::Index k = 0; k < phi.cols(); ++k) terms.push_back(cluster_terms(phi, k, false));

  for (std::size_t j = 0; j < f_grads.size(); ++j) {
    const Eigen::MatrixXd& dk = f_grads[j].second;
    double g = 0.0;
    for (const auto& t : terms) {
      if (!t.active) continue;
      g += -0.5 * t.mass * t.chol->trace_solve(dk) + 0.5 * t.a.dot(dk * t.a);
    }
    grad[static_cast<Eigen::Index>(j)] = g;
  }

  for (std::size_t j = 0; j < y_grads.size(); ++j) {
    const Eigen::MatrixXd& dk = y_grads[j].second;
    const double tr_p = k_y_chol_->trace_solve(dk);
    // w_n^T dK w_n for every group
    const Eigen::VectorXd scatter = (whitened_.array() * (dk * whitened_).array()).colwise().sum().transpose();
    double g = 0.0;
    for (Eigen::Index k = 0; k < phi.cols(); ++k) {
      const auto& t = terms[static_cast<std::size_t>(k)];
      if (!t.active) continue;
      const Eigen::VectorXd p_sum = whitened_ * phi.col(k);
      g += -0.5 * (t.mass - 1.0) * tr_p - 0.5 * t.chol->trace_solve(dk) + 0.5 * phi.col(k).dot(scatter) +
           (t.a.dot(dk * t.a) - p_sum.dot(dk * p_sum)) / (2.0 * t.mass);
    }
    grad[static_cast<Eigen::Index>(f_grads.size() + j)] = g;
  }
  return grad;
}

DataTerm data_term(const GroupedDataset& data, const Eigen::MatrixXd& phi, const KernelSpec& k_f,
                   const StructureSpec& structure) {
  return CollapsedObjective(data, ModelSpec{k_f, structure, 1.0}).data_term(phi);
}

BoundBreakdown bound(const GroupedDataset& data, const Responsibilities& resp, const ModelSpec& model) {
  return CollapsedObjective(data, model).evaluate(resp);
}

Eigen::MatrixXd grad_phi(const GroupedDataset& data, const Responsibilities& resp, const ModelSpec& model) {
  return CollapsedObjective(data, model).evaluate_with_gradient(resp).grad_phi;
}

Eigen::VectorXd grad_hypers(const GroupedDataset& data, const Responsibilities& resp, const ModelSpec& model) {
  return CollapsedObjective(data, model).hyper_gradient(resp);
}

namespace {

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

// log p(Z) for integer counts under the truncated stick-breaking prior:
// prod_k B(N_k + 1, N_{>k} + alpha) / B(1, alpha)
double log_prior_counts(const std::vector<int>& counts, double alpha) {
  double total = 0.0;
  int after = 0;
  for (auto it = counts.rbegin(); it != counts.rend(); ++it) {
    total += log_beta(*it + 1.0, after + alpha) - log_beta(1.0, alpha);
    after += *it;
  }
  return total;
}

// Exact evidence of a set of groups sharing one cluster function, by
// building the full compound covariance of the concatenated groups.
class SubsetEvidence {
 public:
  SubsetEvidence(const GroupedDataset& data, const ModelSpec& model) : data_(data), model_(model) {}

  double operator()(std::uint64_t mask) {
    if (mask == 0) return 0.0;
    if (auto it = cache_.find(mask); it != cache_.end()) return it->second;
    std::vector<Eigen::Index> members;
    for (Eigen::Index n = 0; n < data_.num_groups(); ++n) {
      if (mask & (std::uint64_t{1} << n)) members.push_back(n);
    }
    const auto d = data_.dim();
    Eigen::VectorXd y(static_cast<Eigen::Index>(members.size()) * d);
    for (std::size_t i = 0; i < members.size(); ++i) {
      y.segment(static_cast<Eigen::Index>(i) * d, d) = data_.values.row(members[i]).transpose();
    }
    const Design stacked = stack_groups(data_.design, members.size());
    const double v = log_marginal(y, compound_gram(model_.cluster_kernel, model_.structure, stacked));
    cache_.emplace(mask, v);
    return v;
  }

 private:
  const GroupedDataset& data_;
  const ModelSpec& model_;
  std::unordered_map<std::uint64_t, double> cache_;
};

}  // namespace

double exact_log_joint(const GroupedDataset& data, const std::vector<int>& labels, Eigen::Index num_clusters,
                       const ModelSpec& model) {
  if (static_cast<Eigen::Index>(labels.size()) != data.num_groups()) throw InputError("label count mismatch");
  if (data.num_groups() > 63) throw InputError("exact_log_joint supports at most 63 groups");
  SubsetEvidence evidence(data, model);
  std::vector<std::uint64_t> masks(static_cast<std::size_t>(num_clusters), 0);
  std::vector<int> counts(static_cast<std::size_t>(num_clusters), 0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const int k = labels[n];
    if (k < 0 || k >= num_clusters) throw InputError("label out of range");
    masks[static_cast<std::size_t>(k)] |= std::uint64_t{1} << n;
    ++counts[static_cast<std::size_t>(k)];
  }
  double total = log_prior_counts(counts, model.alpha);
  for (auto m : masks) total += evidence(m);
  return total;
}

double exact_log_marginal_small(const GroupedDataset& data, Eigen::Index num_clusters, const ModelSpec& model) {
  const auto n = data.num_groups();
  if (num_clusters < 1) throw InputError("need at least one cluster");
  // subsets are 64-bit masks
  if (n > 63) throw InputError("exact_log_marginal_small: at most 63 groups");
  if (static_cast<double>(n) * std::log(static_cast<double>(num_clusters)) > std::log(1e6) + 1e-9) {
    throw InputError("exact_log_marginal_small: K^N exceeds 1e6");
  }
  model.validate(data.design);
  SubsetEvidence evidence(data, model);
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  std::vector<double> terms;
  const auto k = static_cast<std::size_t>(num_clusters);
  while (true) {
    std::vector<std::uint64_t> masks(k, 0);
    std::vector<int> counts(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      masks[static_cast<std::size_t>(labels[i])] |= std::uint64_t{1} << i;
      ++counts[static_cast<std::size_t>(labels[i])];
    }
    double v = log_prior_counts(counts, model.alpha);
    for (auto m : masks) v += evidence(m);
    terms.push_back(v);
    // odometer increment
    std::size_t pos = 0;
    while (pos < labels.size() && ++labels[pos] == static_cast<int>(k)) labels[pos++] = 0;
    if (pos == labels.size()) break;
  }
  return logsumexp(Eigen::Map<Eigen::VectorXd>(terms.data(), static_cast<Eigen::Index>(terms.size())));
}

}  // namespace dpgp

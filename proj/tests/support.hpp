#pragma once

// Shared helpers for the test binaries: random small instances and
// deliberately naive reference computations.

#include "dpgp/bound.hpp"
#include "dpgp/hgp.hpp"
#include "dpgp/kernels.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace dpgp::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline std::vector<double> random_times(std::mt19937_64& rng, int d) {
  std::vector<double> t(static_cast<std::size_t>(d));
  for (auto& x : t) x = uniform(rng, 0.0, 1.0);
  return t;
}

inline Eigen::MatrixXd random_normal(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline KernelSpec random_se(std::mt19937_64& rng) {
  return KernelSpec::squared_exponential(uniform(rng, 0.3, 2.0), uniform(rng, 0.2, 1.0));
}

// k_f: SE; structure: SE at group level plus white noise.
inline ModelSpec random_model(std::mt19937_64& rng, double alpha = -1.0) {
  ModelSpec m;
  m.cluster_kernel = random_se(rng);
  m.structure.layers = {Layer{KernelSpec::squared_exponential(uniform(rng, 0.05, 0.5), uniform(rng, 0.2, 1.0))},
                        Layer{KernelSpec::white_noise(uniform(rng, 0.05, 0.4))}};
  m.alpha = alpha > 0.0 ? alpha : uniform(rng, 0.5, 2.0);
  return m;
}

inline GroupedDataset random_dataset(std::mt19937_64& rng, int n, int d) {
  GroupedDataset data;
  data.design.times = random_times(rng, d);
  data.values = random_normal(rng, n, d);
  for (int i = 0; i < n; ++i) data.names.push_back("s" + std::to_string(i));
  return data;
}

inline Responsibilities random_resp(std::mt19937_64& rng, Eigen::Index n, Eigen::Index k, double sd = 1.0) {
  return Responsibilities(random_normal(rng, n, k, sd));
}

// log N(y | 0, K) through an explicit inverse and LU determinant.
inline double naive_log_normal(const Eigen::VectorXd& y, const Eigen::MatrixXd& k) {
  const double d = static_cast<double>(y.size());
  const Eigen::MatrixXd inv = k.inverse();
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(k.determinant()) - 0.5 * y.dot(inv * y);
}

// Dense double-loop version of the compound covariance rule.
inline Eigen::MatrixXd brute_force_compound(const KernelSpec* k_f, const StructureSpec& s, const Design& design) {
  const auto d = design.size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double ti = design.times[static_cast<std::size_t>(i)];
      const double tj = design.times[static_cast<std::size_t>(j)];
      if (k_f) m(i, j) += eval(*k_f, ti, tj, i == j);
      for (const auto& layer : s.layers) {
        const auto ids = design.ids(layer.level);
        if (ids[static_cast<std::size_t>(i)] == ids[static_cast<std::size_t>(j)]) {
          m(i, j) += eval(layer.kernel, ti, tj, i == j);
        }
      }
    }
  }
  return m;
}

// Central difference of a scalar function along each coordinate of x.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

// max |a - b| / max(1, |b|) elementwise
inline double max_rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return ((a - b).array().abs() / b.array().abs().max(1.0)).maxCoeff();
}

// ---- oracles for the collapsed bound ----

inline Eigen::MatrixXd dense_kf(const ModelSpec& m, const Design& d) {
  Eigen::MatrixXd k(d.size(), d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    for (Eigen::Index j = 0; j < d.size(); ++j) {
      k(i, j) = eval(m.cluster_kernel, d.times[static_cast<std::size_t>(i)], d.times[static_cast<std::size_t>(j)], i == j);
    }
  }
  return k;
}

inline Eigen::MatrixXd dense_ky(const ModelSpec& m, const Design& d) { return brute_force_compound(nullptr, m.structure, d); }

// Stick-breaking prior of integer counts: prod_k E[v^{n_k} (1-v)^{n_>k}], v ~ Beta(1, alpha).
inline double log_prior_counts(const std::vector<int>& counts, double alpha) {
  double v = 0.0, tail = 0.0;
  for (int c : counts) tail += c;
  for (int c : counts) {
    tail -= c;
    v += std::lgamma(c + 1.0) + std::lgamma(tail + alpha) + std::log(alpha) - std::lgamma(c + tail + alpha + 1.0);
  }
  return v;
}

// ln E_{v ~ Beta(1, alpha)}[v^a (1-v)^b] by tanh-sinh quadrature, which
// copes with the fractional-power cusps at both ends.
inline double log_beta_moment_quadrature(double a, double b, double alpha) {
  boost::math::quadrature::tanh_sinh<double> rule;
  // the second argument is the signed distance to the nearer endpoint
  const auto f = [&](double v, double complement) {
    const double one_minus_v = complement > 0.0 ? complement : 1.0 - v;
    return alpha * std::pow(one_minus_v, alpha - 1.0 + b) * std::pow(v, a);
  };
  return std::log(rule.integrate(f, 0.0, 1.0, 1e-14));
}

// log p(Y, Z) with each cluster's members stacked into one dense Gaussian.
inline double oracle_log_joint(const GroupedDataset& data, const std::vector<int>& labels, int k, const ModelSpec& m) {
  const Eigen::MatrixXd kf = dense_kf(m, data.design), ky = dense_ky(m, data.design);
  const auto d = data.dim();
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  double v = log_prior_counts(counts, m.alpha);
  for (int c = 0; c < k; ++c) {
    std::vector<Eigen::Index> members;
    for (std::size_t n = 0; n < labels.size(); ++n) {
      if (labels[n] == c) members.push_back(static_cast<Eigen::Index>(n));
    }
    const auto size = static_cast<Eigen::Index>(members.size());
    if (size == 0) continue;
    Eigen::MatrixXd cov(size * d, size * d);
    Eigen::VectorXd y(size * d);
    for (Eigen::Index a = 0; a < size; ++a) {
      y.segment(a * d, d) = data.values.row(members[static_cast<std::size_t>(a)]).transpose();
      for (Eigen::Index b = 0; b < size; ++b) cov.block(a * d, b * d, d, d) = kf + (a == b ? ky : Eigen::MatrixXd::Zero(d, d));
    }
    v += naive_log_normal(y, cov);
  }
  return v;
}

// log sum over every assignment of oracle_log_joint.
inline double oracle_log_marginal(const GroupedDataset& data, int k, const ModelSpec& m) {
  const auto n = static_cast<std::size_t>(data.num_groups());
  std::vector<int> labels(n, 0);
  std::vector<double> terms;
  while (true) {
    terms.push_back(oracle_log_joint(data, labels, k, m));
    std::size_t pos = 0;
    while (pos < n && ++labels[pos] == k) labels[pos++] = 0;
    if (pos == n) break;
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

// sum_k ln int exp{sum_n phi_nk ln N(y_n | f, K_y)} N(f | 0, K_f) df, completing the square with
// explicit inverses: the integral is |I + K_f A|^{-1/2} exp(b^T (K_f^{-1} + A)^{-1} b / 2) times the
// f-independent part, with A = w K_y^{-1} and b = K_y^{-1} s.
inline double oracle_data_term(const GroupedDataset& data, const Eigen::MatrixXd& phi, const ModelSpec& m) {
  const Eigen::MatrixXd kf = dense_kf(m, data.design), ky = dense_ky(m, data.design);
  const Eigen::MatrixXd p = ky.inverse();
  const auto d = static_cast<double>(data.dim());
  const double log_det_ky = std::log(ky.determinant());
  double total = 0.0;
  for (Eigen::Index k = 0; k < phi.cols(); ++k) {
    const double w = phi.col(k).sum();
    const Eigen::VectorXd s = data.values.transpose() * phi.col(k);
    double quad = 0.0;
    for (Eigen::Index n = 0; n < phi.rows(); ++n) quad += phi(n, k) * data.values.row(n) * p * data.values.row(n).transpose();
    // (K_f^-1 + A)^-1 = K_f (I + A K_f)^-1 keeps K_f uninverted
    const double base = -0.5 * w * (d * std::log(2.0 * std::numbers::pi) + log_det_ky) - 0.5 * quad;
    const Eigen::MatrixXd a = w * p;
    const Eigen::VectorXd b = p * s;
    const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(kf.rows(), kf.cols());
    total += base - 0.5 * std::log((ident + kf * a).determinant()) + 0.5 * b.dot(kf * (ident + a * kf).inverse() * b);
  }
  return total;
}

struct MonteCarloEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

// The same integral by sampling f from its prior: log-mean-exp over `samples`
// draws, standard error by the delta method.
inline MonteCarloEstimate mc_data_term(const GroupedDataset& data, const Eigen::MatrixXd& phi, const ModelSpec& m,
                                       int samples, std::uint64_t seed) {
  const Eigen::MatrixXd kf = dense_kf(m, data.design), ky = dense_ky(m, data.design);
  const Eigen::MatrixXd lf = Eigen::LLT<Eigen::MatrixXd>(kf).matrixL();
  const Eigen::MatrixXd ky_inv = ky.inverse();
  const auto d = data.dim();
  const double norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(ky.determinant());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  MonteCarloEstimate out;
  double var = 0.0;
  std::vector<double> logw(static_cast<std::size_t>(samples));
  for (Eigen::Index k = 0; k < phi.cols(); ++k) {
    for (auto& lw : logw) {
      Eigen::VectorXd e(d);
      for (Eigen::Index i = 0; i < d; ++i) e[i] = z(rng);
      const Eigen::VectorXd f = lf * e;
      double v = 0.0;
      for (Eigen::Index n = 0; n < phi.rows(); ++n) {
        const Eigen::VectorXd r = data.values.row(n).transpose() - f;
        v += phi(n, k) * (norm - 0.5 * r.dot(ky_inv * r));
      }
      lw = v;
    }
    const double mx = *std::max_element(logw.begin(), logw.end());
    double s1 = 0.0, s2 = 0.0;
    for (double lw : logw) {
      const double w = std::exp(lw - mx);
      s1 += w;
      s2 += w * w;
    }
    const double mean = s1 / samples;
    const double second = s2 / samples;
    out.value += mx + std::log(mean);
    var += (second - mean * mean) / (samples * mean * mean);
  }
  out.standard_error = std::sqrt(var);
  return out;
}

// Bound as a function of an unconstrained phi (rows need not sum to one), for
// finite differences of dL/dphi.
inline double bound_of_free_phi(const GroupedDataset& data, const Eigen::MatrixXd& phi, const ModelSpec& m) {
  const Eigen::VectorXd phi_hat = phi.colwise().sum().transpose();
  double ent = 0.0;
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    const double p = phi.data()[i];
    if (p > 0.0) ent -= p * std::log(p);
  }
  return oracle_data_term(data, phi, m) + stick_term(phi_hat, m.alpha) + ent;
}

}  // namespace dpgp::testing

#include "dpgp/kernels.hpp"

#include "dpgp/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace dpgp {

namespace {

double sq_dist(double a, double b) { return (a - b) * (a - b); }

double periodic_arg(double t, double t2, double period) {
  const double s = std::sin(std::numbers::pi * (t - t2) / period);
  return s * s;
}

}  // namespace

std::string_view kind_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::SquaredExponential:
      return "squared_exponential";
    case KernelKind::WhiteNoise:
      return "white_noise";
    case KernelKind::Periodic:
      return "periodic";
    case KernelKind::Sum:
      return "sum";
  }
  return "unknown";
}

KernelKind kind_from_name(std::string_view name) {
  if (name == "squared_exponential" || name == "se" || name == "rbf") return KernelKind::SquaredExponential;
  if (name == "white_noise" || name == "white") return KernelKind::WhiteNoise;
  if (name == "periodic") return KernelKind::Periodic;
  if (name == "sum") return KernelKind::Sum;
  throw InputError("unknown kernel kind '" + std::string(name) + "'");
}

KernelSpec KernelSpec::squared_exponential(double variance, double lengthscale) {
  KernelSpec k;
  k.kind_ = KernelKind::SquaredExponential;
  k.params_ = {{"variance", variance}, {"lengthscale", lengthscale}};
  k.validate();
  return k;
}

KernelSpec KernelSpec::white_noise(double noise) {
  KernelSpec k;
  k.kind_ = KernelKind::WhiteNoise;
  k.params_ = {{"noise", noise}};
  k.validate();
  return k;
}

KernelSpec KernelSpec::periodic(double variance, double lengthscale, double period) {
  KernelSpec k;
  k.kind_ = KernelKind::Periodic;
  k.params_ = {{"variance", variance}, {"lengthscale", lengthscale}, {"period", period, true}};
  k.validate();
  return k;
}

KernelSpec KernelSpec::sum(std::vector<KernelSpec> children) {
  KernelSpec k;
  k.kind_ = KernelKind::Sum;
  k.params_.clear();
  k.children_ = std::move(children);
  k.validate();
  return k;
}

void KernelSpec::validate() const {
  for (const auto& p : params_) {
    if (!(p.value > 0.0) || !std::isfinite(p.value)) {
      std::ostringstream os;
      os << "kernel " << kind_name(kind_) << ": parameter " << p.name << " must be finite and > 0 (got "
         << p.value << ")";
      throw InputError(os.str());
    }
  }
  if (kind_ == KernelKind::Sum && children_.size() < 2) {
    throw InputError("sum kernel needs at least two children");
  }
}

double KernelSpec::param(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw InputError("kernel " + std::string(kind_name(kind_)) + " has no parameter '" + std::string(name) + "'");
}

KernelSpec KernelSpec::with_param(std::string_view name, double value) const {
  KernelSpec out = *this;
  for (auto& p : out.params_) {
    if (p.name == name) {
      p.value = value;
      out.validate();
      return out;
    }
  }
  throw InputError("kernel " + std::string(kind_name(kind_)) + " has no parameter '" + std::string(name) + "'");
}

std::vector<std::string> KernelSpec::free_param_names() const {
  std::vector<std::string> names;
  if (kind_ == KernelKind::Sum) {
    for (std::size_t i = 0; i < children_.size(); ++i) {
      for (auto& n : children_[i].free_param_names()) names.push_back(std::to_string(i) + "." + n);
    }
    return names;
  }
  for (const auto& p : params_) {
    if (!p.fixed) names.push_back(p.name);
  }
  return names;
}

std::size_t KernelSpec::num_free_params() const {
  if (kind_ == KernelKind::Sum) {
    std::size_t n = 0;
    for (const auto& c : children_) n += c.num_free_params();
    return n;
  }
  std::size_t n = 0;
  for (const auto& p : params_) n += p.fixed ? 0 : 1;
  return n;
}

void KernelSpec::collect_log(std::vector<double>& out) const {
  for (const auto& c : children_) c.collect_log(out);
  for (const auto& p : params_) {
    if (!p.fixed) out.push_back(std::log(p.value));
  }
}

Eigen::VectorXd KernelSpec::log_params() const {
  std::vector<double> v;
  collect_log(v);
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void KernelSpec::assign_log(const Eigen::VectorXd& v, Eigen::Index& pos) {
  for (auto& c : children_) c.assign_log(v, pos);
  for (auto& p : params_) {
    if (!p.fixed) p.value = std::exp(v[pos++]);
  }
}

KernelSpec KernelSpec::with_log_params(const Eigen::VectorXd& log_values) const {
  if (static_cast<std::size_t>(log_values.size()) != num_free_params()) {
    throw InputError("log-parameter vector has wrong length for " + describe());
  }
  KernelSpec out = *this;
  Eigen::Index pos = 0;
  out.assign_log(log_values, pos);
  out.validate();
  return out;
}

bool KernelSpec::has_white_noise() const {
  if (kind_ == KernelKind::WhiteNoise) return true;
  for (const auto& c : children_) {
    if (c.has_white_noise()) return true;
  }
  return false;
}

double KernelSpec::diagonal() const {
  switch (kind_) {
    case KernelKind::SquaredExponential:
    case KernelKind::Periodic:
      return params_[0].value;
    case KernelKind::WhiteNoise:
      return params_[0].value;
    case KernelKind::Sum: {
      double d = 0.0;
      for (const auto& c : children_) d += c.diagonal();
      return d;
    }
  }
  return 0.0;
}

std::string KernelSpec::describe() const {
  std::ostringstream os;
  os << kind_name(kind_) << "(";
  if (kind_ == KernelKind::Sum) {
    for (std::size_t i = 0; i < children_.size(); ++i) os << (i ? " + " : "") << children_[i].describe();
  } else {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      os << (i ? ", " : "") << params_[i].name << "=" << params_[i].value;
    }
  }
  os << ")";
  return os.str();
}

bool operator==(const KernelSpec& a, const KernelSpec& b) {
  if (a.kind_ != b.kind_ || a.params_.size() != b.params_.size() || a.children_ != b.children_) return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i) {
    if (a.params_[i].name != b.params_[i].name || a.params_[i].value != b.params_[i].value ||
        a.params_[i].fixed != b.params_[i].fixed) {
      return false;
    }
  }
  return true;
}

double eval(const KernelSpec& spec, double t, double t2, bool same_sample) {
  const auto& p = spec.params();
  switch (spec.kind()) {
    case KernelKind::SquaredExponential: {
      const double ell = p[1].value;
      return p[0].value * std::exp(-0.5 * sq_dist(t, t2) / (ell * ell));
    }
    case KernelKind::WhiteNoise:
      return same_sample ? p[0].value : 0.0;
    case KernelKind::Periodic: {
      const double ell = p[1].value;
      return p[0].value * std::exp(-2.0 * periodic_arg(t, t2, p[2].value) / (ell * ell));
    }
    case KernelKind::Sum: {
      double total = 0.0;
      for (const auto& c : spec.children()) total += eval(c, t, t2, same_sample);
      return total;
    }
  }
  return 0.0;
}

GramMatrix gram(const KernelSpec& spec, const std::vector<double>& times, double jitter) {
  const auto d = static_cast<Eigen::Index>(times.size());
  if (d == 0) throw InputError("gram: empty input set");
  GramMatrix g;
  g.jitter = jitter;
  g.values.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    g.values(i, i) = eval(spec, times[i], times[i], true) + jitter;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = eval(spec, times[i], times[j], false);
      g.values(i, j) = v;
      g.values(j, i) = v;
    }
  }
  return g;
}

Eigen::MatrixXd cross_gram(const KernelSpec& spec, const std::vector<double>& rows,
                           const std::vector<double>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = eval(spec, rows[i], cols[j], false);
  }
  return out;
}

std::vector<std::pair<std::string, Eigen::MatrixXd>> gram_grads(const KernelSpec& spec,
                                                                const std::vector<double>& times) {
  const auto d = static_cast<Eigen::Index>(times.size());
  std::vector<std::pair<std::string, Eigen::MatrixXd>> out;
  const auto& p = spec.params();
  switch (spec.kind()) {
    case KernelKind::SquaredExponential: {
      const double ell2 = p[1].value * p[1].value;
      Eigen::MatrixXd k = gram(spec, times).values;
      Eigen::MatrixXd dl(d, d);
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) dl(i, j) = k(i, j) * sq_dist(times[i], times[j]) / ell2;
      }
      out.emplace_back("variance", std::move(k));
      out.emplace_back("lengthscale", std::move(dl));
      break;
    }
    case KernelKind::WhiteNoise:
      out.emplace_back("noise", p[0].value * Eigen::MatrixXd::Identity(d, d));
      break;
    case KernelKind::Periodic: {
      const double ell2 = p[1].value * p[1].value;
      Eigen::MatrixXd k = gram(spec, times).values;
      Eigen::MatrixXd dl(d, d);
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
          dl(i, j) = k(i, j) * 4.0 * periodic_arg(times[i], times[j], p[2].value) / ell2;
        }
      }
      out.emplace_back("variance", std::move(k));
      out.emplace_back("lengthscale", std::move(dl));
      break;
    }
    case KernelKind::Sum:
      for (std::size_t c = 0; c < spec.children().size(); ++c) {
        for (auto& [name, m] : gram_grads(spec.children()[c], times)) {
          out.emplace_back(std::to_string(c) + "." + name, std::move(m));
        }
      }
      break;
  }
  return out;
}

Cholesky::Cholesky(const Eigen::MatrixXd& matrix, std::string_view label, double jitter) {
  if (!matrix.allFinite()) throw NumericalError("non-finite covariance: " + std::string(label));
  const auto n = matrix.rows();
  const double mean_diag = matrix.diagonal().mean();
  double j = jitter;
  double next = 1e-8 * mean_diag;
  while (true) {
    Eigen::MatrixXd a = matrix;
    if (j > 0.0) a.diagonal().array() += j;
    llt_.compute(a);
    if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().minCoeff() > 0.0) {
      jitter_ = j;
      return;
    }
    if (!(mean_diag > 0.0) || next > 1e-2 * mean_diag * (1.0 + 1e-12)) break;
    j = std::max(j, next);
    next *= 10.0;
  }
  std::ostringstream os;
  os << "covariance is not positive definite after jitter (n=" << n << "): " << label;
  throw NumericalError(os.str());
}

double Cholesky::log_det() const { return 2.0 * llt_.matrixLLT().diagonal().array().log().sum(); }

Eigen::MatrixXd Cholesky::half_solve(const Eigen::MatrixXd& b) const { return llt_.matrixL().solve(b); }

double Cholesky::trace_solve(const Eigen::MatrixXd& b) const { return llt_.solve(b).trace(); }

}  // namespace dpgp

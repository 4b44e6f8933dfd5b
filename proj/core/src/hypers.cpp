#include "dpgp/hypers.hpp"

#include "dpgp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dpgp {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct Trial {
  bool ok = false;
  double bound = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;
};

Trial evaluate(const GroupedDataset& data, const Responsibilities& resp, const ModelSpec& model) {
  Trial t;
  try {
    const CollapsedObjective objective(data, model);
    t.bound = objective.evaluate(resp).total;
    t.grad = objective.hyper_gradient(resp);
    t.ok = std::isfinite(t.bound) && t.grad.allFinite();
  } catch (const NumericalError&) {
    t.ok = false;
  } catch (const InputError&) {
    t.ok = false;
  }
  return t;
}

}  // namespace

void HyperSchedule::validate() const {
  if (vb_iters_per_phase < 1 || hyper_steps_per_phase < 0 || phases < 1) {
    throw InputError("schedule: vb_iters_per_phase and phases must be >= 1, hyper_steps_per_phase >= 0");
  }
}

ModelSpec init_hypers(const GroupedDataset& data, const ModelSpec& templ) {
  data.validate();
  const auto& times = data.design.times;
  const auto [tmin, tmax] = std::minmax_element(times.begin(), times.end());
  const double span = *tmax - *tmin;
  const double mean = data.values.mean();
  const double var = (data.values.array() - mean).square().sum() / static_cast<double>(data.values.size());
  if (!(var > 0.0)) throw InputError("data has zero variance; cannot initialize hyperparameters");
  const double lengthscale = span > 0.0 ? 0.5 * span : 1.0;

  const auto names = templ.hyper_names();
  int cluster_slots = 0;
  int structure_slots = 0;
  int noise_slots = 0;
  for (const auto& n : names) {
    if (ends_with(n, "variance")) (n.rfind("f.", 0) == 0 ? cluster_slots : structure_slots)++;
    if (ends_with(n, "noise")) ++noise_slots;
  }

  Eigen::VectorXd log_values(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& n = names[i];
    double v = 1.0;
    if (ends_with(n, "lengthscale")) {
      v = lengthscale;
    } else if (ends_with(n, "noise")) {
      v = kNoiseVarianceShare * var / noise_slots;
    } else if (ends_with(n, "variance")) {
      v = n.rfind("f.", 0) == 0 ? kClusterVarianceShare * var / cluster_slots
                                : kStructureVarianceShare * var / structure_slots;
    }
    log_values[static_cast<Eigen::Index>(i)] = std::log(v);
  }
  return templ.with_log_hypers(log_values);
}

HyperFitResult optimize_hypers(const GroupedDataset& data, const Responsibilities& resp, const ModelSpec& model,
                               int steps) {
  HyperFitResult out;
  out.model = model;
  Trial current = evaluate(data, resp, model);
  if (!current.ok) throw NumericalError("hyperparameter optimization started from a non-finite bound");
  out.initial_bound = current.bound;
  out.final_bound = current.bound;
  if (steps <= 0) return out;

  const auto names = model.hyper_names();
  Eigen::VectorXd x = model.log_hypers();
  const auto p = x.size();
  auto reset_metric = [&](const Eigen::VectorXd& g) {
    const double gmax = g.cwiseAbs().maxCoeff();
    return Eigen::MatrixXd(Eigen::MatrixXd::Identity(p, p) * (gmax > 0.0 ? kHyperInitialStep / gmax : 0.0));
  };
  Eigen::MatrixXd h = reset_metric(current.grad);

  for (int step = 1; step <= steps; ++step) {
    if (current.grad.cwiseAbs().maxCoeff() < 1e-10) break;
    Eigen::VectorXd d = h * current.grad;
    if (!(d.dot(current.grad) > 0.0)) {
      h = reset_metric(current.grad);
      d = h * current.grad;
    }
    bool accepted = false;
    double t = 1.0;
    Eigen::VectorXd x_new;
    Trial next;
    for (int halving = 0; halving <= kHyperMaxHalvings; ++halving, t *= 0.5) {
      x_new = (x + t * d).cwiseMax(-kLogParamLimit).cwiseMin(kLogParamLimit);
      if (x_new == x) break;
      next = evaluate(data, resp, model.with_log_hypers(x_new));
      if (next.ok && next.bound > current.bound) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    // BFGS update of the inverse metric for the ascent problem.
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = current.grad - next.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(p, p);
      h = (id - rho * s * y.transpose()) * h * (id - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    x = x_new;
    current = std::move(next);
    ++out.accepted_steps;
    for (Eigen::Index i = 0; i < p; ++i) {
      out.trajectory.push_back({step, names[static_cast<std::size_t>(i)], std::exp(x[i]), current.bound});
    }
  }
  out.model = model.with_log_hypers(x);
  out.final_bound = current.bound;
  return out;
}

}  // namespace dpgp

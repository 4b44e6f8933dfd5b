#include "dpgp/errors.hpp"
#include "dpgp/hypers.hpp"
#include "dpgp/synth.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dpgp;
namespace dt = dpgp::testing;

namespace {

// Values with population variance exactly 1 on times spanning [0, 1].
GroupedDataset unit_variance_data() {
  GroupedDataset data;
  data.design.times = {0.0, 0.25, 0.75, 1.0};
  data.values = Eigen::MatrixXd(2, 4);
  data.values << 1, -1, 1, -1, -1, 1, -1, 1;
  data.names = {"a", "b"};
  return data;
}

ModelSpec template_with(std::vector<Layer> layers) {
  ModelSpec m;
  m.structure.layers = std::move(layers);
  return m;
}

// Plain gradient ascent with backtracking on the dense log-likelihood of one
// series, for k_f = SE and white noise.
Eigen::VectorXd fit_single_gp(const std::vector<double>& t, const Eigen::VectorXd& y, Eigen::VectorXd x) {
  const auto objective = [&](const Eigen::VectorXd& lp) {
    const auto k = KernelSpec::sum({KernelSpec::squared_exponential(std::exp(lp[0]), std::exp(lp[1])),
                                    KernelSpec::white_noise(std::exp(lp[2]))});
    return dt::naive_log_normal(y, dt::brute_force_compound(&k, StructureSpec{}, Design{t, {}}));
  };
  double step = 0.1, fx = objective(x);
  for (int it = 0; it < 20000; ++it) {
    const Eigen::VectorXd g = dt::central_difference(objective, x, 1e-6);
    if (g.norm() < 1e-7) break;
    while (step > 1e-12) {
      const Eigen::VectorXd trial = x + step * g;
      const double ft = objective(trial);
      if (ft > fx) {
        x = trial;
        fx = ft;
        step *= 1.5;
        break;
      }
      step *= 0.5;
    }
  }
  return x;
}

}  // namespace

TEST(InitHypers, SharesOfUnitVariance) {
  const GroupedDataset data = unit_variance_data();
  const ModelSpec m = init_hypers(data, template_with({Layer{KernelSpec::squared_exponential(3, 3)},
                                                      Layer{KernelSpec::white_noise(3)}}));
  EXPECT_NEAR(m.cluster_kernel.param("lengthscale"), 0.5, 1e-15);
  EXPECT_NEAR(m.cluster_kernel.param("variance"), 0.6, 1e-15);
  EXPECT_NEAR(m.structure.layers[0].kernel.param("variance"), 0.3, 1e-15);
  EXPECT_NEAR(m.structure.layers[0].kernel.param("lengthscale"), 0.5, 1e-15);
  EXPECT_NEAR(m.structure.layers[1].kernel.param("noise"), 0.1, 1e-15);
}

TEST(InitHypers, TwoLevelsSplitEqually) {
  GroupedDataset data = unit_variance_data();
  data.design.levels.push_back(Level{"replicate", {0, 0, 1, 1}, {}});
  const ModelSpec m = init_hypers(data, template_with({Layer{KernelSpec::squared_exponential(3, 3)},
                                                      Layer{KernelSpec::squared_exponential(3, 3), "replicate"},
                                                      Layer{KernelSpec::white_noise(3)}}));
  EXPECT_NEAR(m.structure.layers[0].kernel.param("variance"), 0.15, 1e-15);
  EXPECT_NEAR(m.structure.layers[1].kernel.param("variance"), 0.15, 1e-15);
  EXPECT_EQ(m.structure.layers[1].level, "replicate");
}

TEST(InitHypers, ScalesWithDataVarianceAndKeepsPeriod) {
  GroupedDataset data = unit_variance_data();
  data.values *= 3.0;
  ModelSpec templ = template_with({Layer{KernelSpec::white_noise(1)}});
  templ.cluster_kernel = KernelSpec::periodic(1.0, 1.0, 0.4);
  const ModelSpec m = init_hypers(data, templ);
  EXPECT_NEAR(m.cluster_kernel.param("variance"), 0.6 * 9.0, 1e-13);
  EXPECT_EQ(m.cluster_kernel.param("period"), 0.4);
  EXPECT_NEAR(m.structure.layers[0].kernel.param("noise"), 0.9, 1e-13);
}

TEST(InitHypers, ConstantDataRejected) {
  GroupedDataset data = unit_variance_data();
  data.values.setConstant(2.0);
  EXPECT_THROW(init_hypers(data, template_with({Layer{KernelSpec::white_noise(1)}})), InputError);
}

TEST(OptimizeHypers, ZeroStepsIsIdentity) {
  std::mt19937_64 rng(101);
  const GroupedDataset data = dt::random_dataset(rng, 5, 4);
  const ModelSpec m = dt::random_model(rng);
  const HyperFitResult r = optimize_hypers(data, dt::random_resp(rng, 5, 2), m, 0);
  EXPECT_EQ(r.model.log_hypers(), m.log_hypers());
  EXPECT_EQ(r.initial_bound, r.final_bound);
  EXPECT_TRUE(r.trajectory.empty());
}

TEST(OptimizeHypers, BoundNeverDecreasesAndParamsStayPositive) {
  std::mt19937_64 rng(102);
  for (int rep = 0; rep < 10; ++rep) {
    const GroupedDataset data = dt::random_dataset(rng, 6, 5);
    const ModelSpec m = dt::random_model(rng);
    const Responsibilities r = dt::random_resp(rng, 6, 3);
    const HyperFitResult fit = optimize_hypers(data, r, m, 10);
    EXPECT_GE(fit.final_bound, fit.initial_bound);
    EXPECT_NEAR(fit.final_bound, bound(data, r, fit.model).total, 1e-9);
    double prev = fit.initial_bound;
    int last_step = 0;
    for (const auto& s : fit.trajectory) {
      if (s.step != last_step) {
        EXPECT_GE(s.bound, prev);
        prev = s.bound;
        last_step = s.step;
      }
      EXPECT_GT(s.value, 0.0);
    }
    EXPECT_TRUE((fit.model.log_hypers().array().exp() > 0.0).all());
  }
}

TEST(OptimizeHypers, SingleGroupMatchesDirectGpFit) {
  std::mt19937_64 rng(103);
  GroupedDataset data;
  for (int i = 0; i < 15; ++i) data.design.times.push_back(i / 14.0);
  data.values = Eigen::MatrixXd(1, 15);
  for (int i = 0; i < 15; ++i) {
    data.values(0, i) = std::sin(5.0 * data.design.times[static_cast<std::size_t>(i)]) + dt::uniform(rng, -0.2, 0.2);
  }
  data.names = {"only"};
  ModelSpec m = template_with({Layer{KernelSpec::white_noise(0.1)}});
  m.cluster_kernel = KernelSpec::squared_exponential(0.5, 0.5);
  const HyperFitResult fit = optimize_hypers(data, Responsibilities(Eigen::MatrixXd::Zero(1, 1)), m, 500);
  const Eigen::VectorXd want = fit_single_gp(data.design.times, data.values.row(0).transpose(), m.log_hypers());
  EXPECT_LT((fit.model.log_hypers() - want).cwiseAbs().maxCoeff(), 1e-3)
      << fit.model.log_hypers().transpose() << " vs " << want.transpose();
}

TEST(HyperScheduleTest, Validation) {
  EXPECT_NO_THROW(HyperSchedule{}.validate());
  EXPECT_THROW((HyperSchedule{.vb_iters_per_phase = 0}.validate()), InputError);
  EXPECT_THROW((HyperSchedule{.phases = 0}.validate()), InputError);
  EXPECT_NO_THROW((HyperSchedule{.hyper_steps_per_phase = 0}.validate()));
}

#pragma once

// Kernel hyperparameters: rule-of-thumb initialization and point estimation
// by ascent on the collapsed bound with the responsibilities held fixed.

#include "dpgp/bound.hpp"

#include <string>
#include <vector>

namespace dpgp {

struct HyperSchedule {
  int vb_iters_per_phase = 1000;
  int hyper_steps_per_phase = 25;
  int phases = 3;

  void validate() const;
};

// Shares of the empirical data variance given to each part of the model.
inline constexpr double kClusterVarianceShare = 0.60;
inline constexpr double kStructureVarianceShare = 0.30;
inline constexpr double kNoiseVarianceShare = 0.10;

// Keeps the kernel kinds (and fixed parameters such as periods) of
// `templ` and resets every free parameter: lengthscales to half the time
// span, cluster variance 60% of the data variance, smooth structure layers
// 30% split equally, white noise 10%. Throws InputError on constant data.
ModelSpec init_hypers(const GroupedDataset& data, const ModelSpec& templ);

struct HyperStepRecord {
  int step = 0;
  std::string param;
  double value = 0.0;
  double bound = 0.0;
};

struct HyperFitResult {
  ModelSpec model;
  double initial_bound = 0.0;
  double final_bound = 0.0;
  int accepted_steps = 0;
  std::vector<HyperStepRecord> trajectory;
};

inline constexpr double kHyperInitialStep = 0.1;
inline constexpr int kHyperMaxHalvings = 20;
inline constexpr double kLogParamLimit = 20.0;

// Quasi-Newton ascent in log-parameter space. Every accepted step increases
// the bound; a step that cannot be made to increase it after 20 halvings
// ends the call early.
HyperFitResult optimize_hypers(const GroupedDataset& data, const Responsibilities& resp, const ModelSpec& model,
                               int steps);

}  // namespace dpgp

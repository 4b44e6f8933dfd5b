#pragma once

// Run configuration: flat `key=value` text with dotted section prefixes.
//
//   alpha=1
//   k_init=10
//   seed=0
//   kernel.f.kind=squared_exponential
//   kernel.f.lengthscale=0.5          # optional; omitted values are initialized from data
//   structure.0.kind=squared_exponential
//   structure.0.level=group
//   structure.1.kind=white_noise
//   optimizer.mode=conjugate
//
// Unknown keys are rejected.

#include "dpgp/bound.hpp"
#include "dpgp/hypers.hpp"
#include "dpgp/optimizer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace dpgp {

struct RunConfig {
  KernelSpec cluster_kernel = KernelSpec::squared_exponential(1.0, 1.0);
  StructureSpec structure = default_structure();
  double alpha = 1.0;
  int k_init = 10;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
  HyperSchedule schedule;
  int move_rounds = 5;  // split rounds per phase; 0 disables moves
  double prune_threshold = 1e-6;
  double gamma_init_sd = 0.1;  // initial gamma ~ N(0, sd^2)
  double predict_margin = 0.5;  // allowed extrapolation, as a fraction of the time span
  int posterior_grid_points = 50;
  // Hyperparameters given explicitly, by ModelSpec::hyper_names() name.
  std::map<std::string, double> explicit_hypers;

  static StructureSpec default_structure();
  static RunConfig parse(std::string_view text, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  ModelSpec model_template() const;
  // init_hypers on the template, then explicit values on top.
  ModelSpec resolve_model(const GroupedDataset& data) const;
  // Canonical key=value text; parse(to_text()) reproduces the config.
  std::string to_text() const;
  void validate() const;
};

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace dpgp

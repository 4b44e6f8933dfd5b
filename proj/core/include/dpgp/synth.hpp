#pragma once

// Synthetic benchmark data (clusters of noisy, individually offset sine
// curves) and clustering-quality metrics.

#include "dpgp/hgp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace dpgp {

struct SyntheticSpec {
  std::uint64_t seed = 0;
  int n_clusters = 10;
  int n_times = 12;
  int min_per_cluster = 20;
  int max_per_cluster = 30;
  double offset_scale = 0.3;
  double noise_sd = 0.05;
  // cluster frequencies are 2 pi (1 + U(-freq_jitter, freq_jitter))
  double freq_jitter = 0.25;
  // offset frequencies are 2 pi U(offset_freq_min, offset_freq_max)
  double offset_freq_min = 0.75;
  double offset_freq_max = 1.25;

  void validate() const;
};

struct SyntheticData {
  GroupedDataset data;
  std::vector<int> labels;
};

// Times ~ U(0,1), shared and sorted. Cluster k has mean sin(w_k t + p_k);
// every group adds its own offset_scale * sin(w t + p) and iid noise.
SyntheticData generate(const SyntheticSpec& spec);

// Pair-counting adjusted Rand index.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Row-wise argmax, ties to the lowest index.
std::vector<int> hard_labels(const Eigen::MatrixXd& phi);

int count_distinct(const std::vector<int>& labels);

}  // namespace dpgp

#include "dpgp/synth.hpp"

#include "dpgp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <set>

namespace dpgp {

void SyntheticSpec::validate() const {
  if (n_clusters < 1 || n_times < 1 || min_per_cluster < 1 || max_per_cluster < min_per_cluster) {
    throw InputError("synthetic spec: counts must be positive and min_per_cluster <= max_per_cluster");
  }
  if (!(noise_sd > 0.0) || offset_scale < 0.0 || !(offset_freq_min >= 0.0) || offset_freq_max < offset_freq_min) {
    throw InputError("synthetic spec: noise_sd must be > 0, offset_scale >= 0, 0 <= offset_freq_min <= offset_freq_max");
  }
}

SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.noise_sd);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  auto frequency = [&] { return two_pi * (1.0 + spec.freq_jitter * (2.0 * unit(rng) - 1.0)); };

  SyntheticData out;
  auto& design = out.data.design;
  design.times.resize(static_cast<std::size_t>(spec.n_times));
  for (auto& t : design.times) t = unit(rng);
  std::sort(design.times.begin(), design.times.end());

  std::vector<Eigen::VectorXd> rows;
  std::uniform_int_distribution<int> count(spec.min_per_cluster, spec.max_per_cluster);
  for (int k = 0; k < spec.n_clusters; ++k) {
    const double omega = frequency();
    const double phase = two_pi * unit(rng);
    const int members = count(rng);
    for (int m = 0; m < members; ++m) {
      const double off_omega = two_pi * (spec.offset_freq_min + (spec.offset_freq_max - spec.offset_freq_min) * unit(rng));
      const double off_phase = two_pi * unit(rng);
      Eigen::VectorXd y(spec.n_times);
      for (int i = 0; i < spec.n_times; ++i) {
        const double t = design.times[static_cast<std::size_t>(i)];
        y[i] = std::sin(omega * t + phase) + spec.offset_scale * std::sin(off_omega * t + off_phase) + noise(rng);
      }
      rows.push_back(std::move(y));
      out.labels.push_back(k);
    }
  }
  out.data.values.resize(static_cast<Eigen::Index>(rows.size()), spec.n_times);
  for (std::size_t n = 0; n < rows.size(); ++n) {
    out.data.values.row(static_cast<Eigen::Index>(n)) = rows[n].transpose();
    char name[32];
    std::snprintf(name, sizeof(name), "g%04zu", n);
    out.data.names.emplace_back(name);
  }
  return out;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw InputError("adjusted_rand_index: label vectors differ in length");
  const auto n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto pairs = [](double x) { return 0.5 * x * (x - 1.0); };
  double index = 0.0;
  for (const auto& [_, c] : table) index += pairs(c);
  double sum_a = 0.0;
  for (const auto& [_, c] : rows) sum_a += pairs(c);
  double sum_b = 0.0;
  for (const auto& [_, c] : cols) sum_b += pairs(c);
  const double total = pairs(n);
  const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial
  return (index - expected) / (max_index - expected);
}

std::vector<int> hard_labels(const Eigen::MatrixXd& phi) {
  std::vector<int> labels(static_cast<std::size_t>(phi.rows()));
  for (Eigen::Index n = 0; n < phi.rows(); ++n) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < phi.cols(); ++k) {
      if (phi(n, k) > phi(n, best)) best = k;
    }
    labels[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return labels;
}

int count_distinct(const std::vector<int>& labels) {
  return static_cast<int>(std::set<int>(labels.begin(), labels.end()).size());
}

}  // namespace dpgp

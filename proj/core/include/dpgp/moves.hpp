#pragma once

// Discrete restructuring of the responsibility matrix: split a cluster in
// two, drop empty clusters, and order clusters by size.

#include "dpgp/bound.hpp"
#include "dpgp/optimizer.hpp"

#include <string_view>
#include <vector>

namespace dpgp {

enum class MoveKind { Split, Prune, Reorder };
std::string_view move_kind_name(MoveKind kind);

inline constexpr double kSplitPerturbation = 1e-3;
inline constexpr double kPruneThreshold = 1e-6;
inline constexpr double kAcceptMargin = 1e-12;
// Clusters holding less than this many groups are not split.
inline constexpr double kMinSplitMass = 2.0;

struct MoveProposal {
  MoveKind kind = MoveKind::Split;
  Eigen::Index cluster = -1;  // -1 for moves not tied to one cluster
  double before_bound = 0.0;
  double after_bound = 0.0;
  bool accepted = false;
};

// Column k's mass halved into a new last column. Rows alternate a +-delta
// tilt so optimization can separate the halves; column sums of the pair and
// row sums are preserved exactly.
Responsibilities split_columns(const Responsibilities& resp, Eigen::Index k, double delta = kSplitPerturbation);

// Proposes a split of k, optimizes to convergence, and replaces `resp` only
// when the bound increased by more than kAcceptMargin.
MoveProposal split(const CollapsedObjective& objective, Responsibilities& resp, Eigen::Index k,
                   const OptimizerConfig& config);

// Removes columns with phi_hat below `threshold`. Throws InputError when
// every column would go.
Responsibilities prune_empty(const Responsibilities& resp, double threshold = kPruneThreshold);

// Columns sorted by descending phi_hat (stable).
Responsibilities reorder(const Responsibilities& resp);

// Gated forms of prune_empty and reorder: `resp` changes only when the bound
// rises by more than kAcceptMargin, or when every pruned column is exactly empty.
MoveProposal prune_move(const CollapsedObjective& objective, Responsibilities& resp,
                        double threshold = kPruneThreshold);
MoveProposal reorder_move(const CollapsedObjective& objective, Responsibilities& resp);

// Tries splits in descending phi_hat order (clusters below kMinSplitMass skipped) and stops after the first
// acceptance. Every proposal is returned, accepted or not.
std::vector<MoveProposal> split_round(const CollapsedObjective& objective, Responsibilities& resp,
                                      const OptimizerConfig& config);

}  // namespace dpgp

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace chain {

struct APConfig {
  double damping = 0.9;          // lambda in [0.5, 1)
  int max_iter = 200;
  int convergence_iter = 15;     // stable exemplar-set iterations to declare convergence
  // Self-similarity (preference). NaN selects the median of the off-diagonal
  // similarities, which lets the cluster count emerge from the data.
  double preference = std::numeric_limits<double>::quiet_NaN();
  double noise_scale = 1e-12;    // symmetric tie-breaking noise, relative to max |S|
  std::uint64_t noise_seed = 0x414650;  // "APP"

  void validate() const;
};

struct APResult {
  std::vector<int> exemplars;  // sorted point indices
  std::vector<int> labels;     // labels[i] is an exemplar index; exemplars label themselves
  bool converged = false;
  int iterations = 0;

  int num_clusters() const { return static_cast<int>(exemplars.size()); }
};

// S[i][j] = -||p_i - p_j||^2 for i != j; S[i][i] = preference (median of the
// off-diagonal entries when the config leaves it NaN).
Eigen::MatrixXd build_similarity(const Eigen::MatrixXd& points, const APConfig& cfg = {});

// Frey & Dueck responsibility/availability message passing on a dense
// similarity matrix. Falls back to a single cluster (exemplar = argmax of the
// diagonal) when no exemplar emerges.
APResult affinity_propagation(const Eigen::MatrixXd& similarity, const APConfig& cfg = {});

// Pools a video's frame representations (rows), builds similarities, and runs
// AP. The exemplar rows double as the scene prototypes.
APResult cluster_video_frames(const Eigen::MatrixXd& frames, const APConfig& cfg = {});

// Net-similarity objective of a clustering: sum of each non-exemplar's
// similarity to its exemplar plus the exemplars' preferences. AP maximizes
// this; the exhaustive test oracle searches it directly.
double ap_objective(const Eigen::MatrixXd& similarity, const APResult& result);

}  // namespace chain

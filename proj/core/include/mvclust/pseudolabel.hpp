#pragma once

#include <cstdint>
#include <vector>

#include "mvclust/common.hpp"
#include "mvclust/config.hpp"

namespace mvclust {

struct KMeansResult {
  Matrix centroids;                       // k x D
  std::vector<int> assignments;           // length N
  std::vector<double> objective_history;  // sum of squared distances, per iteration
  int iterations = 0;
};

/// Lloyd's algorithm from k-means++ seeding. Stops at max_iter or when the
/// centroid shift drops below tol. Empty clusters are re-seeded to the point
/// farthest from its current centroid. Deterministic per seed; the recorded
/// objective is non-increasing across iterations.
KMeansResult kmeans(const Matrix& features, int k, std::uint64_t seed,
                    int max_iter = 100, double tol = 1e-8);

/// Per-view nearest-centroid labels. `centroids` is k x (sum of view
/// widths) with per-view column blocks in view order; ties break toward the
/// lowest centroid index.
std::vector<std::vector<int>> assign_pseudo_labels(const std::vector<Matrix>& t_views,
                                                   const Matrix& centroids);

struct ContingencyMatrix {
  Eigen::MatrixXi counts;  // rows: first label argument, cols: second
  int k() const { return static_cast<int>(counts.rows()); }
};

ContingencyMatrix contingency(const std::vector<int>& row_labels,
                              const std::vector<int>& col_labels, int k);

/// Permutation A maximizing total agreement sum_i counts(i, A[i])
/// (equivalently minimizing the max-minus-count cost), solved exactly; ties
/// break toward the lexicographically smallest permutation.
std::vector<int> hungarian_align(const ContingencyMatrix& cont);

/// Temperature-softened centroid-distance targets, columns reordered by each
/// view's alignment permutation so rows live in the student's label space.
std::vector<Matrix> dark_knowledge(const std::vector<Matrix>& t_views,
                                   const Matrix& centroids,
                                   const std::vector<std::vector<int>>& permutations,
                                   DarkMode mode, double temp);

/// Everything the fine-tuning stage refreshes at once.
struct ClusterState {
  Matrix centroids;
  std::vector<int> shared_assignments;
  std::vector<std::vector<int>> pseudo_labels;
  std::vector<std::vector<int>> permutations;
  std::vector<Matrix> dark_targets;
};

/// When normalize_features is set, every teacher row is rescaled to unit L2
/// norm before clustering, pseudo-label assignment, and dark-knowledge
/// distances. The teacher is trained on cosine similarity, so its features
/// carry meaning in direction, not norm; Euclidean K-means on the raw
/// features can prefer norm-based splits over the semantic partition.
ClusterState build_cluster_state(const std::vector<Matrix>& t_views,
                                 const std::vector<std::vector<int>>& student_labels,
                                 int k, std::uint64_t seed, DarkMode mode, double temp,
                                 int kmeans_max_iter, double kmeans_tol,
                                 bool normalize_features = true);

}  // namespace mvclust

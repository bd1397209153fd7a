#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvclust/common.hpp"

namespace mvclust {

/// One feature matrix: N samples x D_v features for a single view.
struct ViewMatrix {
  Matrix data;
  int view_index = 0;
};

/// V aligned views over the same N samples, with optional ground-truth
/// labels in [0,k).
struct MultiViewDataset {
  std::vector<ViewMatrix> views;
  std::optional<std::vector<int>> labels;
  int num_clusters = 0;
  std::string name;

  int num_views() const { return static_cast<int>(views.size()); }
  Eigen::Index num_samples() const {
    return views.empty() ? 0 : views.front().data.rows();
  }
  std::vector<int> view_dims() const;

  /// Throws on any violated structural invariant (finite entries, equal row
  /// counts, V >= 2, k >= 2, labels in range).
  void validate() const;
};

/// Desk-scale synthetic surrogate: k Gaussian clusters in a shared latent
/// space, projected into each view by a view-specific linear map plus noise.
struct SyntheticSpec {
  int n_per_cluster = 200;
  int k = 3;
  std::vector<int> view_dims = {10, 12};
  double cluster_separation = 6.0;  // min centroid distance, in within-cluster stddevs
  double noise_scale = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BatchPlan {
  int batch_size = 128;
  std::uint64_t shuffle_seed = 0;
  bool drop_last = false;
};

/// Reads the on-disk layout (meta.json + view_{i}.csv [+ labels.csv]).
/// Row order is preserved exactly as stored.
MultiViewDataset load_dataset(const std::filesystem::path& root);

/// Writes a dataset in the same layout load_dataset reads. Floats are
/// printed with round-trip precision, so load(save(d)) is bit-exact.
void save_dataset(const MultiViewDataset& dataset, const std::filesystem::path& root);

/// Rescales each feature column independently to [0,1]; constant columns map
/// to 0. Labels and metadata are untouched.
MultiViewDataset normalize_minmax(const MultiViewDataset& dataset);

MultiViewDataset synth_generate(const SyntheticSpec& spec);

/// Deterministic shuffled batch index lists for one epoch. The permutation
/// is a pure function of (shuffle_seed, epoch). Every batch holds at least
/// two indices: a trailing singleton is merged into the previous batch when
/// drop_last is off, and dropped when it is on.
std::vector<std::vector<int>> batch_iter(const MultiViewDataset& dataset,
                                         const BatchPlan& plan, int epoch);
std::vector<std::vector<int>> batch_iter(int num_samples, const BatchPlan& plan,
                                         int epoch);

}  // namespace mvclust

#include "mvclust/pseudolabel.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "mvclust/rng.hpp"

namespace mvclust {

namespace {

double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

int nearest_centroid(const Matrix& points, Eigen::Index i, const Matrix& centroids) {
  int best = 0;
  double best_d = sq_dist(points, i, centroids, 0);
  for (Eigen::Index m = 1; m < centroids.rows(); ++m) {
    const double d = sq_dist(points, i, centroids, m);
    if (d < best_d) {  // strict: ties keep the lowest index
      best_d = d;
      best = static_cast<int>(m);
    }
  }
  return best;
}

/// Exact minimum-cost assignment via the Hungarian algorithm with potentials
/// (O(k^3)). Returns the column matched to each row.
std::vector<int> hungarian_min_cost(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0);  // match[col 1..n] = row, 1-based
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<int> way(n + 1, 0);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
  }
  return row_to_col;
}

double assignment_cost(const std::vector<std::vector<double>>& cost,
                       const std::vector<int>& perm) {
  double total = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) total += cost[i][static_cast<std::size_t>(perm[i])];
  return total;
}

}  // namespace

KMeansResult kmeans(const Matrix& features, int k, std::uint64_t seed, int max_iter,
                    double tol) {
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (k < 2) throw ConfigError("kmeans: k must be >= 2");
  if (n < k) throw ShapeError("kmeans: fewer points than clusters");
  if (!all_finite(features)) throw NumericError("kmeans: non-finite feature");

  Rng rng(derive_seed(seed, "kmeans"));

  // k-means++ seeding.
  Matrix centroids(k, d);
  std::vector<double> min_d2(static_cast<std::size_t>(n),
                             std::numeric_limits<double>::infinity());
  {
    const auto first = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    centroids.row(0) = features.row(first);
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        min_d2[static_cast<std::size_t>(i)] = std::min(
            min_d2[static_cast<std::size_t>(i)], sq_dist(features, i, centroids, c - 1));
        total += min_d2[static_cast<std::size_t>(i)];
      }
      Eigen::Index chosen = n - 1;
      if (total > 0.0) {
        const double r = rng.uniform() * total;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          acc += min_d2[static_cast<std::size_t>(i)];
          if (acc >= r) {
            chosen = i;
            break;
          }
        }
      } else {
        chosen = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
      }
      centroids.row(c) = features.row(chosen);
    }
  }

  KMeansResult result;
  result.assignments.assign(static_cast<std::size_t>(n), 0);

  for (int iter = 0; iter < max_iter; ++iter) {
    // Assignment step.
    double objective = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = nearest_centroid(features, i, centroids);
      result.assignments[static_cast<std::size_t>(i)] = c;
      objective += sq_dist(features, i, centroids, c);
    }

    // Re-seed empty clusters to the point farthest from its centroid.
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (const int c : result.assignments) ++counts[static_cast<std::size_t>(c)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int ci = result.assignments[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(ci)] <= 1) continue;  // keep clusters nonempty
        const double dist = sq_dist(features, i, centroids, ci);
        if (dist > far_d) {
          far_d = dist;
          far = i;
        }
      }
      centroids.row(c) = features.row(far);
      const int old = result.assignments[static_cast<std::size_t>(far)];
      --counts[static_cast<std::size_t>(old)];
      ++counts[static_cast<std::size_t>(c)];
      result.assignments[static_cast<std::size_t>(far)] = c;
      objective = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        objective += sq_dist(features, i, centroids,
                             result.assignments[static_cast<std::size_t>(i)]);
      }
    }
    result.objective_history.push_back(objective);
    result.iterations = iter + 1;

    // Update step.
    Matrix next = Matrix::Zero(k, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(result.assignments[static_cast<std::size_t>(i)]) += features.row(i);
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
      shift = std::max(shift, (next.row(c) - centroids.row(c)).norm());
    }
    centroids = next;
    if (shift < tol) break;
  }

  // Final assignment against the converged centroids.
  double objective = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = nearest_centroid(features, i, centroids);
    result.assignments[static_cast<std::size_t>(i)] = c;
    objective += sq_dist(features, i, centroids, c);
  }
  result.objective_history.push_back(objective);
  result.centroids = std::move(centroids);
  return result;
}

std::vector<std::vector<int>> assign_pseudo_labels(const std::vector<Matrix>& t_views,
                                                   const Matrix& centroids) {
  Eigen::Index total_width = 0;
  for (const Matrix& t : t_views) total_width += t.cols();
  if (total_width != centroids.cols()) {
    throw ShapeError("assign_pseudo_labels: centroid width " +
                     std::to_string(centroids.cols()) + " != concatenated view width " +
                     std::to_string(total_width));
  }
  std::vector<std::vector<int>> labels;
  labels.reserve(t_views.size());
  Eigen::Index offset = 0;
  for (const Matrix& t : t_views) {
    const Matrix block = centroids.middleCols(offset, t.cols());
    offset += t.cols();
    std::vector<int> view_labels(static_cast<std::size_t>(t.rows()));
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      view_labels[static_cast<std::size_t>(i)] = nearest_centroid(t, i, block);
    }
    labels.push_back(std::move(view_labels));
  }
  return labels;
}

ContingencyMatrix contingency(const std::vector<int>& row_labels,
                              const std::vector<int>& col_labels, int k) {
  if (row_labels.size() != col_labels.size()) {
    throw ShapeError("contingency: label vectors differ in length");
  }
  ContingencyMatrix cont;
  cont.counts = Eigen::MatrixXi::Zero(k, k);
  for (std::size_t i = 0; i < row_labels.size(); ++i) {
    const int r = row_labels[i];
    const int c = col_labels[i];
    if (r < 0 || r >= k || c < 0 || c >= k) {
      throw RangeError("contingency: label outside [0," + std::to_string(k) + ")");
    }
    ++cont.counts(r, c);
  }
  return cont;
}

std::vector<int> hungarian_align(const ContingencyMatrix& cont) {
  const int k = cont.k();
  if (cont.counts.cols() != k) throw ShapeError("hungarian_align: matrix not square");

  // Cost per the maximum-matching formulation: max count minus count. All
  // values are small integers, so double comparisons below are exact.
  const double max_count = static_cast<double>(cont.counts.maxCoeff());
  std::vector<std::vector<double>> cost(static_cast<std::size_t>(k),
                                        std::vector<double>(static_cast<std::size_t>(k)));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          max_count - static_cast<double>(cont.counts(i, j));

  const double best = assignment_cost(cost, hungarian_min_cost(cost));

  // Fix rows one by one to the smallest column that still attains the
  // optimum; yields the lexicographically smallest optimal permutation.
  const double big = (max_count + 1.0) * (static_cast<double>(k) + 1.0);
  std::vector<std::vector<double>> fixed = cost;
  std::vector<int> perm(static_cast<std::size_t>(k), -1);
  std::vector<char> col_used(static_cast<std::size_t>(k), 0);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      if (col_used[static_cast<std::size_t>(j)]) continue;
      auto trial = fixed;
      for (int jj = 0; jj < k; ++jj) {
        if (jj != j) trial[static_cast<std::size_t>(i)][static_cast<std::size_t>(jj)] = big;
      }
      if (assignment_cost(trial, hungarian_min_cost(trial)) == best) {
        perm[static_cast<std::size_t>(i)] = j;
        col_used[static_cast<std::size_t>(j)] = 1;
        fixed = std::move(trial);
        break;
      }
    }
    if (perm[static_cast<std::size_t>(i)] < 0) {
      throw Error("hungarian_align: internal inconsistency");  // unreachable
    }
  }
  return perm;
}

std::vector<Matrix> dark_knowledge(const std::vector<Matrix>& t_views,
                                   const Matrix& centroids,
                                   const std::vector<std::vector<int>>& permutations,
                                   DarkMode mode, double temp) {
  if (!(temp > 0)) throw ConfigError("dark_knowledge: temp must be > 0");
  if (permutations.size() != t_views.size()) {
    throw ShapeError("dark_knowledge: one permutation per view required");
  }
  const int k = static_cast<int>(centroids.rows());
  std::vector<Matrix> targets;
  targets.reserve(t_views.size());
  Eigen::Index offset = 0;
  for (std::size_t v = 0; v < t_views.size(); ++v) {
    const Matrix& t = t_views[v];
    const Matrix block = centroids.middleCols(offset, t.cols());
    offset += t.cols();
    const std::vector<int>& perm = permutations[v];
    if (static_cast<int>(perm.size()) != k) {
      throw ShapeError("dark_knowledge: permutation size mismatch");
    }

    Matrix target(t.rows(), k);
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      Eigen::RowVectorXd logits(k);
      for (int m = 0; m < k; ++m) {
        logits(m) = -sq_dist(t, i, block, m) / temp;
      }
      if (mode == DarkMode::soft) {
        const double mx = logits.maxCoeff();
        Eigen::RowVectorXd soft = (logits.array() - mx).exp();
        soft /= soft.sum();
        for (int j = 0; j < k; ++j) target(i, j) = soft(perm[static_cast<std::size_t>(j)]);
      } else {
        int nearest = 0;
        for (int m = 1; m < k; ++m) {
          if (logits(m) > logits(nearest)) nearest = m;
        }
        for (int j = 0; j < k; ++j) {
          target(i, j) = perm[static_cast<std::size_t>(j)] == nearest ? 1.0 : 0.0;
        }
      }
    }
    targets.push_back(std::move(target));
  }
  return targets;
}

ClusterState build_cluster_state(const std::vector<Matrix>& t_views,
                                 const std::vector<std::vector<int>>& student_labels,
                                 int k, std::uint64_t seed, DarkMode mode, double temp,
                                 int kmeans_max_iter, double kmeans_tol,
                                 bool normalize_features) {
  if (t_views.empty()) throw ShapeError("build_cluster_state: no views");

  std::vector<Matrix> features;
  features.reserve(t_views.size());
  for (const Matrix& t : t_views) {
    if (!normalize_features) {
      features.push_back(t);
      continue;
    }
    Matrix unit = t;
    for (Eigen::Index i = 0; i < unit.rows(); ++i) {
      unit.row(i) /= std::max(unit.row(i).norm(), 1e-12);
    }
    features.push_back(std::move(unit));
  }

  Eigen::Index total_width = 0;
  for (const Matrix& t : features) total_width += t.cols();
  Matrix concat(features.front().rows(), total_width);
  Eigen::Index offset = 0;
  for (const Matrix& t : features) {
    concat.middleCols(offset, t.cols()) = t;
    offset += t.cols();
  }

  ClusterState state;
  KMeansResult km = kmeans(concat, k, seed, kmeans_max_iter, kmeans_tol);
  state.centroids = std::move(km.centroids);
  state.shared_assignments = std::move(km.assignments);
  state.pseudo_labels = assign_pseudo_labels(features, state.centroids);

  state.permutations.reserve(features.size());
  for (std::size_t v = 0; v < features.size(); ++v) {
    const ContingencyMatrix cont = contingency(student_labels[v], state.pseudo_labels[v], k);
    state.permutations.push_back(hungarian_align(cont));
  }
  state.dark_targets =
      dark_knowledge(features, state.centroids, state.permutations, mode, temp);
  return state;
}

}  // namespace mvclust

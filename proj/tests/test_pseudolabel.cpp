#include <doctest.h>

#include <random>
#include <set>

#include "mvclust/pseudolabel.hpp"
#include "oracles.hpp"

using namespace mvclust;

namespace {

std::vector<std::vector<double>> cost_from_contingency(const ContingencyMatrix& cont) {
  const int k = cont.k();
  const double mx = cont.counts.maxCoeff();
  std::vector<std::vector<double>> cost(static_cast<std::size_t>(k),
                                        std::vector<double>(static_cast<std::size_t>(k)));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = mx - cont.counts(i, j);
  return cost;
}

}  // namespace

TEST_CASE("kmeans: recovers the two obvious clusters") {
  Matrix pts(4, 2);
  pts << 0, 0, 0, 1, 10, 10, 10, 11;
  const KMeansResult r = kmeans(pts, 2, 7);
  // Up to cluster-index order the centroids are (0,0.5) and (10,10.5).
  const int c0 = r.assignments[0];
  const int c1 = r.assignments[2];
  CHECK(c0 != c1);
  CHECK(r.assignments[1] == c0);
  CHECK(r.assignments[3] == c1);
  CHECK(r.centroids(c0, 0) == doctest::Approx(0.0));
  CHECK(r.centroids(c0, 1) == doctest::Approx(0.5));
  CHECK(r.centroids(c1, 0) == doctest::Approx(10.0));
  CHECK(r.centroids(c1, 1) == doctest::Approx(10.5));
}

TEST_CASE("kmeans: k equal to N fits every point exactly") {
  Matrix pts(4, 3);
  pts << 1, 0, 0, 0, 1, 0, 0, 0, 1, 2, 2, 2;
  const KMeansResult r = kmeans(pts, 4, 3);
  CHECK(r.objective_history.back() == doctest::Approx(0.0));
  std::set<int> distinct(r.assignments.begin(), r.assignments.end());
  CHECK(distinct.size() == 4);
}

TEST_CASE("kmeans: rejects k < 2 and N < k") {
  const Matrix pts = Matrix::Random(3, 2);
  CHECK_THROWS_AS(kmeans(pts, 1, 0), ConfigError);
  CHECK_THROWS_AS(kmeans(pts, 4, 0), ShapeError);
}

TEST_CASE("kmeans: deterministic per seed") {
  std::srand(5);
  const Matrix pts = Matrix::Random(60, 4);
  const KMeansResult a = kmeans(pts, 3, 11);
  const KMeansResult b = kmeans(pts, 3, 11);
  CHECK(a.assignments == b.assignments);
  CHECK(a.centroids == b.centroids);
}

TEST_CASE("kmeans: objective is non-increasing on random instances") {
  std::mt19937_64 gen(31);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 20 + static_cast<int>(gen() % 40);
    const int d = 2 + static_cast<int>(gen() % 4);
    const int k = 2 + static_cast<int>(gen() % 4);
    Matrix pts(n, d);
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      for (Eigen::Index j = 0; j < pts.cols(); ++j) pts(i, j) = dist(gen);
    const KMeansResult r = kmeans(pts, k, gen());
    for (std::size_t i = 1; i < r.objective_history.size(); ++i) {
      CHECK(r.objective_history[i] <= r.objective_history[i - 1] + 1e-9);
    }
  }
}

TEST_CASE("pseudo labels: nearest per-view centroid block with low-index ties") {
  Matrix centroids(2, 4);  // two views of width 2 each
  centroids << 0, 0, 5, 5, 2, 2, 5, 5;  // view-1 blocks are identical -> ties
  Matrix t0(3, 2), t1(3, 2);
  t0 << 0, 0, 2, 2, 1, 1;  // last row is equidistant
  t1 << 5, 5, 5, 5, 5, 5;
  const auto labels = assign_pseudo_labels({t0, t1}, centroids);
  CHECK(labels[0] == std::vector<int>{0, 1, 0});  // tie -> lowest index
  CHECK(labels[1] == std::vector<int>{0, 0, 0});
  CHECK_THROWS_AS(assign_pseudo_labels({t0}, centroids), ShapeError);
}

TEST_CASE("pseudo labels: brute-force nearest neighbor agreement") {
  std::mt19937_64 gen(33);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix t(20, 4);
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = dist(gen);
  Matrix centroids(3, 4);
  for (Eigen::Index i = 0; i < centroids.rows(); ++i)
    for (Eigen::Index j = 0; j < centroids.cols(); ++j) centroids(i, j) = dist(gen);
  const auto labels = assign_pseudo_labels({t}, centroids);
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    int best = 0;
    double best_d = (t.row(i) - centroids.row(0)).squaredNorm();
    for (int m = 1; m < 3; ++m) {
      const double d = (t.row(i) - centroids.row(m)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = m;
      }
    }
    CHECK(labels[0][static_cast<std::size_t>(i)] == best);
  }
}

TEST_CASE("contingency: counts and errors") {
  const ContingencyMatrix diag = contingency({0, 1, 1, 2}, {0, 1, 1, 2}, 3);
  CHECK(diag.counts(0, 0) == 1);
  CHECK(diag.counts(1, 1) == 2);
  CHECK(diag.counts(2, 2) == 1);
  CHECK(diag.counts.sum() == 4);

  const ContingencyMatrix swapped = contingency({0, 0, 1, 1}, {1, 1, 0, 0}, 2);
  CHECK(swapped.counts(0, 1) == 2);
  CHECK(swapped.counts(1, 0) == 2);
  CHECK(swapped.counts(0, 0) == 0);

  CHECK_THROWS_AS(contingency({0, 3}, {0, 1}, 2), RangeError);
  CHECK_THROWS_AS(contingency({0, 1}, {0}, 2), ShapeError);
}

TEST_CASE("hungarian: identity and swap cases") {
  CHECK(hungarian_align(contingency({0, 1, 2}, {0, 1, 2}, 3)) == std::vector<int>{0, 1, 2});
  CHECK(hungarian_align(contingency({0, 0, 1, 1}, {1, 1, 0, 0}, 2)) == std::vector<int>{1, 0});
}

TEST_CASE("hungarian: matches exhaustive search on 200 random instances") {
  std::mt19937_64 gen(34);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(gen() % 5);  // k in 2..6
    ContingencyMatrix cont;
    cont.counts = Eigen::MatrixXi(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) cont.counts(i, j) = static_cast<int>(gen() % 50);
    const auto fast = hungarian_align(cont);
    const auto brute = oracles::brute_force_assignment(cost_from_contingency(cont));
    CHECK(fast == brute);
  }
}

TEST_CASE("dark knowledge: onehot rows and soft limits") {
  Matrix centroids(3, 2);
  centroids << 0, 0, 10, 0, 0, 10;
  Matrix t(2, 2);
  t << 9.5, 0, 0, 0.5;  // nearest: centroid 1, centroid 0
  const std::vector<int> identity{0, 1, 2};

  const auto onehot = dark_knowledge({t}, centroids, {identity}, DarkMode::onehot, 1.0);
  CHECK(onehot[0].row(0) == Eigen::RowVector3d(0, 1, 0));
  CHECK(onehot[0].row(1) == Eigen::RowVector3d(1, 0, 0));

  // Equidistant sample -> uniform soft row.
  Matrix mid(1, 2);
  mid << 10.0 / 3.0, 10.0 / 3.0;
  Matrix eq_centroids(2, 2);
  eq_centroids << 0, 0, 10.0 / 1.5, 10.0 / 1.5;
  // distances to both centroids are equal by construction
  const auto soft = dark_knowledge({mid}, eq_centroids, {std::vector<int>{0, 1}},
                                   DarkMode::soft, 2.0);
  CHECK(soft[0](0, 0) == doctest::Approx(0.5));
  CHECK(soft[0](0, 1) == doctest::Approx(0.5));

  // temp -> 0+ approaches the aligned one-hot.
  const auto sharp = dark_knowledge({t}, centroids, {identity}, DarkMode::soft, 1e-3);
  CHECK(sharp[0](0, 1) == doctest::Approx(1.0));
  CHECK(sharp[0](1, 0) == doctest::Approx(1.0));

  CHECK_THROWS_AS(dark_knowledge({t}, centroids, {identity}, DarkMode::soft, 0.0),
                  ConfigError);
}

TEST_CASE("dark knowledge: rows are distributions; permutation round-trips") {
  std::mt19937_64 gen(35);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix t(12, 3);
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = dist(gen);
  Matrix centroids(4, 3);
  for (Eigen::Index i = 0; i < centroids.rows(); ++i)
    for (Eigen::Index j = 0; j < centroids.cols(); ++j) centroids(i, j) = dist(gen);

  const std::vector<int> perm{2, 0, 3, 1};
  std::vector<int> inverse(4);
  for (int i = 0; i < 4; ++i) inverse[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;

  const auto shuffled = dark_knowledge({t}, centroids, {perm}, DarkMode::soft, 1.0);
  for (Eigen::Index i = 0; i < shuffled[0].rows(); ++i) {
    CHECK(shuffled[0].row(i).sum() == doctest::Approx(1.0));
    CHECK(shuffled[0].row(i).minCoeff() >= 0.0);
  }

  // Applying the inverse permutation to the columns restores the unpermuted
  // targets.
  const auto plain = dark_knowledge({t}, centroids, {std::vector<int>{0, 1, 2, 3}},
                                    DarkMode::soft, 1.0);
  Matrix restored(shuffled[0].rows(), 4);
  for (int j = 0; j < 4; ++j) restored.col(j) = shuffled[0].col(inverse[static_cast<std::size_t>(j)]);
  CHECK((restored - plain[0]).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("alignment invariance: relabeling pseudo-labels composes away") {
  // Construct well-separated teacher features so k-means is unambiguous.
  std::mt19937_64 gen(36);
  std::normal_distribution<double> noise(0.0, 0.1);
  const int n_per = 12, k = 3;
  Matrix t0(n_per * k, 2), t1(n_per * k, 2);
  std::vector<int> student_hard(static_cast<std::size_t>(n_per * k));
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < n_per; ++i) {
      const int row = c * n_per + i;
      t0(row, 0) = 10.0 * c + noise(gen);
      t0(row, 1) = noise(gen);
      t1(row, 0) = noise(gen);
      t1(row, 1) = 10.0 * c + noise(gen);
      student_hard[static_cast<std::size_t>(row)] = (c + 1) % k;  // deliberately misaligned
    }
  }
  const std::vector<std::vector<int>> student_labels{student_hard, student_hard};

  // Feature clusters here are separated by norm, so the refresh runs on the
  // raw features (normalization is exercised by the trainer-level tests).
  const ClusterState base = build_cluster_state({t0, t1}, student_labels, k, 5,
                                                DarkMode::soft, 1.0, 100, 1e-8, false);
  // A different k-means seed permutes the discovered cluster indices, but the
  // aligned targets must be unchanged.
  const ClusterState reseeded = build_cluster_state({t0, t1}, student_labels, k, 12345,
                                                    DarkMode::soft, 1.0, 100, 1e-8, false);
  for (int v = 0; v < 2; ++v) {
    CHECK((base.dark_targets[static_cast<std::size_t>(v)] -
           reseeded.dark_targets[static_cast<std::size_t>(v)])
              .cwiseAbs()
              .maxCoeff() < 1e-9);
  }
}

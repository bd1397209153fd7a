#include <doctest.h>

#include <random>

#include "mvclust/metrics.hpp"
#include "oracles.hpp"

using namespace mvclust;

namespace {

std::vector<int> random_labels(int n, int k, std::mt19937_64& gen) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<int>(gen() % static_cast<std::uint64_t>(k));
  return v;
}

std::vector<int> relabel(const std::vector<int>& labels, const std::vector<int>& perm) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    out[i] = perm[static_cast<std::size_t>(labels[i])];
  return out;
}

}  // namespace

TEST_CASE("metrics: accuracy examples") {
  const std::vector<int> truth{0, 0, 1, 1};
  CHECK(clustering_accuracy(truth, truth, 2) == doctest::Approx(1.0));
  CHECK(clustering_accuracy({1, 1, 0, 0}, truth, 2) == doctest::Approx(1.0));
  CHECK(clustering_accuracy({0, 1, 0, 1}, truth, 2) == doctest::Approx(0.5));
  CHECK_THROWS_AS(clustering_accuracy({0, 1}, {0}, 2), ShapeError);
}

TEST_CASE("metrics: purity examples") {
  const std::vector<int> truth{0, 0, 1, 1};
  CHECK(purity(truth, truth, 2) == doctest::Approx(1.0));
  CHECK(purity({0, 1, 0, 1}, truth, 2) == doctest::Approx(0.5));
  CHECK(purity({0, 0, 0, 0}, truth, 2) == doctest::Approx(0.5));  // majority vote
}

TEST_CASE("metrics: nmi examples") {
  const std::vector<int> truth{0, 0, 1, 1};
  CHECK(nmi(truth, truth, 2) == doctest::Approx(1.0));
  CHECK(nmi({0, 1, 0, 1}, truth, 2) == doctest::Approx(0.0));
  CHECK(nmi({1, 1, 0, 0}, truth, 2) == doctest::Approx(1.0));  // relabeling invariance
  CHECK(nmi({0, 0, 0, 0}, {0, 0, 0, 0}, 2) == doctest::Approx(1.0));  // both constant
}

TEST_CASE("metrics: accuracy equals exhaustive search on 200 random pairs") {
  std::mt19937_64 gen(41);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(gen() % 5);
    const int n = 10 + static_cast<int>(gen() % 40);
    const auto pred = random_labels(n, k, gen);
    const auto truth = random_labels(n, k, gen);
    CHECK(clustering_accuracy(pred, truth, k) ==
          doctest::Approx(oracles::brute_force_accuracy(pred, truth, k)).epsilon(1e-12));
  }
}

TEST_CASE("metrics: purity dominates accuracy on 200 random pairs") {
  std::mt19937_64 gen(42);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(gen() % 5);
    const int n = 8 + static_cast<int>(gen() % 64);
    const auto pred = random_labels(n, k, gen);
    const auto truth = random_labels(n, k, gen);
    CHECK(purity(pred, truth, k) >= clustering_accuracy(pred, truth, k) - 1e-12);
  }
}

TEST_CASE("metrics: all three are permutation invariant and bounded") {
  std::mt19937_64 gen(43);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(gen() % 4);
    const int n = 12 + static_cast<int>(gen() % 30);
    const auto pred = random_labels(n, k, gen);
    const auto truth = random_labels(n, k, gen);
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    const auto pred2 = relabel(pred, perm);

    const double acc = clustering_accuracy(pred, truth, k);
    const double pur = purity(pred, truth, k);
    const double mi = nmi(pred, truth, k);
    CHECK(clustering_accuracy(pred2, truth, k) == doctest::Approx(acc).epsilon(1e-12));
    CHECK(purity(pred2, truth, k) == doctest::Approx(pur).epsilon(1e-12));
    CHECK(nmi(pred2, truth, k) == doctest::Approx(mi).epsilon(1e-9));
    for (const double m : {acc, pur, mi}) {
      CHECK(m >= 0.0);
      CHECK(m <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("metrics: report serialization") {
  const std::vector<int> truth{0, 0, 1, 1};
  const MetricsReport report = evaluate_clustering({1, 1, 0, 0}, truth, 2);
  CHECK(report.acc == doctest::Approx(1.0));
  CHECK(report.pur == doctest::Approx(1.0));
  CHECK(report.n == 4);
  const std::string json = metrics_to_json(report);
  CHECK(json.find("\"acc\":1.0") != std::string::npos);
  CHECK(json.find("\"n\":4") != std::string::npos);
}

#include "mvclust/metrics.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace mvclust {

namespace {

void check_lengths(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) throw ShapeError("metrics: label length mismatch");
  if (pred.empty()) throw ShapeError("metrics: empty label vectors");
}

double entropy_of_counts(const std::vector<double>& counts, double n) {
  double h = 0.0;
  for (const double c : counts) {
    if (c > 0) {
      const double p = c / n;
      h -= p * std::log(p);
    }
  }
  return h;
}

}  // namespace

double clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                           int k) {
  check_lengths(pred, truth);
  const ContingencyMatrix cont = contingency(pred, truth, k);
  const std::vector<int> perm = hungarian_align(cont);
  long matched = 0;
  for (int i = 0; i < k; ++i) matched += cont.counts(i, perm[static_cast<std::size_t>(i)]);
  return static_cast<double>(matched) / static_cast<double>(pred.size());
}

double purity(const std::vector<int>& pred, const std::vector<int>& truth, int k) {
  check_lengths(pred, truth);
  const ContingencyMatrix cont = contingency(pred, truth, k);
  long majority_sum = 0;
  for (int i = 0; i < k; ++i) majority_sum += cont.counts.row(i).maxCoeff();
  return static_cast<double>(majority_sum) / static_cast<double>(pred.size());
}

double nmi(const std::vector<int>& pred, const std::vector<int>& truth, int k) {
  check_lengths(pred, truth);
  const ContingencyMatrix cont = contingency(pred, truth, k);
  const double n = static_cast<double>(pred.size());

  std::vector<double> row_counts(static_cast<std::size_t>(k), 0.0);
  std::vector<double> col_counts(static_cast<std::size_t>(k), 0.0);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      row_counts[static_cast<std::size_t>(i)] += cont.counts(i, j);
      col_counts[static_cast<std::size_t>(j)] += cont.counts(i, j);
    }
  }

  double mi = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double c = cont.counts(i, j);
      if (c > 0) {
        mi += (c / n) * std::log((c * n) / (row_counts[static_cast<std::size_t>(i)] *
                                            col_counts[static_cast<std::size_t>(j)]));
      }
    }
  }

  const double h_pred = entropy_of_counts(row_counts, n);
  const double h_truth = entropy_of_counts(col_counts, n);
  if (h_pred + h_truth == 0.0) return 1.0;  // both partitions constant
  if (mi <= 0.0) return 0.0;
  return mi / (0.5 * (h_pred + h_truth));
}

MetricsReport evaluate_clustering(const std::vector<int>& pred,
                                  const std::vector<int>& truth, int k) {
  MetricsReport report;
  report.acc = clustering_accuracy(pred, truth, k);
  report.pur = purity(pred, truth, k);
  report.nmi = nmi(pred, truth, k);
  report.contingency = contingency(pred, truth, k);
  report.n = static_cast<int>(pred.size());
  return report;
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["acc"] = report.acc;
  j["nmi"] = report.nmi;
  j["pur"] = report.pur;
  j["n"] = report.n;
  return j.dump();
}

}  // namespace mvclust

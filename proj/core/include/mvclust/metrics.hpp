#pragma once

#include <string>
#include <vector>

#include "mvclust/pseudolabel.hpp"

namespace mvclust {

struct MetricsReport {
  double acc = 0.0;
  double nmi = 0.0;
  double pur = 0.0;
  ContingencyMatrix contingency;  // rows: predicted, cols: ground truth
  int n = 0;
};

/// Best one-to-one matching accuracy (Hungarian over the contingency table).
double clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                           int k);

/// Per-predicted-cluster majority vote; clusters may share a majority class.
double purity(const std::vector<int>& pred, const std::vector<int>& truth, int k);

/// Mutual information normalized by the arithmetic mean of the two
/// partition entropies. 1 when both partitions are constant (and thus
/// trivially agree), 0 when the mutual information vanishes.
double nmi(const std::vector<int>& pred, const std::vector<int>& truth, int k);

MetricsReport evaluate_clustering(const std::vector<int>& pred,
                                  const std::vector<int>& truth, int k);

/// {"acc":..., "nmi":..., "pur":..., "n":...}
std::string metrics_to_json(const MetricsReport& report);

}  // namespace mvclust

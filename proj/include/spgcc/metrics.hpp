#pragma once

#include <string>
#include <vector>

#include "spgcc/hsi.hpp"

namespace spgcc {

/// Co-occurrence counts over labeled pixels (truth id 0 excluded).
struct ContingencyTable {
  int pred_classes = 0;
  int true_classes = 0;
  std::vector<int64_t> counts;  // pred_classes x true_classes, row-major
  int64_t total = 0;

  int64_t at(int p, int t) const {
    return counts[static_cast<size_t>(p) * true_classes + t];
  }
};

ContingencyTable contingency(const LabelRaster& pred, const LabelRaster& truth);

/// Mass-maximizing assignment of predicted to true classes on the
/// zero-padded square table; augmenting-path algorithm, O(K^3). Entry i is
/// the true class matched to predicted class i.
std::vector<int> hungarian_match(const ContingencyTable& table);

struct MetricReport {
  double oa = 0, aa = 0, kappa = 0, nmi = 0, ari = 0;
  double f1 = 0, precision = 0, recall = 0, purity = 0;
};

/// The nine percentage metrics; OA/AA/Kappa/Purity after Hungarian mapping,
/// NMI/ARI/pairwise P/R/F1 mapping-invariant.
MetricReport compute_metrics(const LabelRaster& pred, const LabelRaster& truth);

/// One "name<TAB>value" line per metric, two decimals.
void save_metric_report(const MetricReport& report, const std::string& path);

}  // namespace spgcc

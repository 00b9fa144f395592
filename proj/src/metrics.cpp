#include "spgcc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace spgcc {

namespace {

double comb2(int64_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }

}  // namespace

ContingencyTable contingency(const LabelRaster& pred, const LabelRaster& truth) {
  if (pred.height != truth.height || pred.width != truth.width)
    throw IoError(IoCode::DimensionMismatch, "contingency: raster sizes differ");
  uint32_t kp = 0, kt = 0;
  for (size_t i = 0; i < truth.ids.size(); ++i) {
    if (truth.ids[i] == 0) continue;
    if (pred.ids[i] == 0)
      throw IoError(IoCode::BadValue, "contingency: predicted id 0 on a labeled pixel");
    kp = std::max(kp, pred.ids[i]);
    kt = std::max(kt, truth.ids[i]);
  }
  if (kt == 0) throw IoError(IoCode::BadValue, "contingency: no labeled pixels");

  ContingencyTable table;
  table.pred_classes = static_cast<int>(kp);
  table.true_classes = static_cast<int>(kt);
  table.counts.assign(static_cast<size_t>(kp) * kt, 0);
  for (size_t i = 0; i < truth.ids.size(); ++i) {
    if (truth.ids[i] == 0) continue;
    ++table.counts[static_cast<size_t>(pred.ids[i] - 1) * kt + (truth.ids[i] - 1)];
    ++table.total;
  }
  return table;
}

std::vector<int> hungarian_match(const ContingencyTable& table) {
  if (table.total == 0 || table.pred_classes == 0 || table.true_classes == 0)
    throw IoError(IoCode::BadValue, "hungarian_match: empty table");
  const int n = std::max(table.pred_classes, table.true_classes);
  // cost = -counts on the padded square matrix, minimized
  auto cost = [&](int i, int j) -> double {
    if (i < table.pred_classes && j < table.true_classes)
      return -static_cast<double>(table.at(i, j));
    return 0.0;
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<size_t>(n) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur =
            cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> match(static_cast<size_t>(n), -1);
  for (int j = 1; j <= n; ++j) match[static_cast<size_t>(p[static_cast<size_t>(j)]) - 1] = j - 1;
  return match;
}

MetricReport compute_metrics(const LabelRaster& pred, const LabelRaster& truth) {
  const ContingencyTable table = contingency(pred, truth);
  const std::vector<int> match = hungarian_match(table);
  const int kp = table.pred_classes, kt = table.true_classes;
  const double n = static_cast<double>(table.total);

  std::vector<int64_t> row(static_cast<size_t>(kp), 0), col(static_cast<size_t>(kt), 0);
  for (int i = 0; i < kp; ++i)
    for (int j = 0; j < kt; ++j) {
      row[static_cast<size_t>(i)] += table.at(i, j);
      col[static_cast<size_t>(j)] += table.at(i, j);
    }

  MetricReport rep;

  // mapped accuracy metrics
  int64_t correct = 0;
  double pe = 0.0;
  for (int i = 0; i < kp; ++i) {
    const int t = match[static_cast<size_t>(i)];
    if (t >= kt) continue;
    correct += table.at(i, t);
    pe += static_cast<double>(row[static_cast<size_t>(i)]) *
          static_cast<double>(col[static_cast<size_t>(t)]) / (n * n);
  }
  const double po = static_cast<double>(correct) / n;
  rep.oa = 100.0 * po;
  rep.kappa = 1.0 - pe <= 1e-15 ? (po >= 1.0 - 1e-15 ? 100.0 : 0.0)
                                : 100.0 * (po - pe) / (1.0 - pe);

  double aa = 0.0;
  int present = 0;
  for (int t = 0; t < kt; ++t) {
    if (col[static_cast<size_t>(t)] == 0) continue;
    ++present;
    int64_t hit = 0;
    for (int i = 0; i < kp; ++i)
      if (match[static_cast<size_t>(i)] == t) hit = table.at(i, t);
    aa += static_cast<double>(hit) / static_cast<double>(col[static_cast<size_t>(t)]);
  }
  rep.aa = 100.0 * aa / static_cast<double>(present);

  double purity = 0.0;
  for (int i = 0; i < kp; ++i) {
    int64_t best = 0;
    for (int j = 0; j < kt; ++j) best = std::max(best, table.at(i, j));
    purity += static_cast<double>(best);
  }
  rep.purity = 100.0 * purity / n;

  // NMI, arithmetic-mean normalization
  double hu = 0.0, hv = 0.0, mi = 0.0;
  for (int i = 0; i < kp; ++i)
    if (row[static_cast<size_t>(i)] > 0) {
      const double p = static_cast<double>(row[static_cast<size_t>(i)]) / n;
      hu -= p * std::log(p);
    }
  for (int j = 0; j < kt; ++j)
    if (col[static_cast<size_t>(j)] > 0) {
      const double p = static_cast<double>(col[static_cast<size_t>(j)]) / n;
      hv -= p * std::log(p);
    }
  for (int i = 0; i < kp; ++i)
    for (int j = 0; j < kt; ++j) {
      const int64_t c = table.at(i, j);
      if (c == 0) continue;
      const double pij = static_cast<double>(c) / n;
      mi += pij * std::log(pij * n * n /
                           (static_cast<double>(row[static_cast<size_t>(i)]) *
                            static_cast<double>(col[static_cast<size_t>(j)])));
    }
  rep.nmi = hu + hv <= 1e-15 ? 100.0 : 100.0 * 2.0 * mi / (hu + hv);

  // pair counting
  double tp = 0.0, pp = 0.0, ap = 0.0;
  for (int i = 0; i < kp; ++i)
    for (int j = 0; j < kt; ++j) tp += comb2(table.at(i, j));
  for (int i = 0; i < kp; ++i) pp += comb2(row[static_cast<size_t>(i)]);
  for (int j = 0; j < kt; ++j) ap += comb2(col[static_cast<size_t>(j)]);
  const double all_pairs = comb2(table.total);
  const double expected = all_pairs <= 0.0 ? 0.0 : pp * ap / all_pairs;
  const double ari_den = 0.5 * (pp + ap) - expected;
  rep.ari = std::fabs(ari_den) <= 1e-15 ? 100.0 : 100.0 * (tp - expected) / ari_den;

  rep.precision = pp <= 0.0 ? 100.0 : 100.0 * tp / pp;
  rep.recall = ap <= 0.0 ? 100.0 : 100.0 * tp / ap;
  rep.f1 = rep.precision + rep.recall <= 0.0
               ? 0.0
               : 2.0 * rep.precision * rep.recall / (rep.precision + rep.recall);
  return rep;
}

void save_metric_report(const MetricReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(IoCode::MissingFile, "cannot create " + path);
  char line[64];
  const std::pair<const char*, double> rows[] = {
      {"OA", report.oa},   {"AA", report.aa},         {"Kappa", report.kappa},
      {"NMI", report.nmi}, {"ARI", report.ari},       {"F1", report.f1},
      {"Precision", report.precision}, {"Recall", report.recall}, {"Purity", report.purity},
  };
  for (const auto& [name, value] : rows) {
    std::snprintf(line, sizeof line, "%s\t%.2f\n", name, value);
    out << line;
  }
}

}  // namespace spgcc

#include "spgcc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace spgcc {

SparseMatrix build_adjacency(const Segmentation& seg, bool eight_connectivity) {
  const int h = seg.height, w = seg.width, m = seg.count;
  std::set<std::pair<int, int>> edges;
  const int dy8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
  const int dx8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  const int dy4[4] = {-1, 1, 0, 0};
  const int dx4[4] = {0, 0, -1, 1};
  const int* dy = eight_connectivity ? dy8 : dy4;
  const int* dx = eight_connectivity ? dx8 : dx4;
  const int nn = eight_connectivity ? 8 : 4;

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int a = seg.labels[static_cast<size_t>(y) * w + x];
      for (int k = 0; k < nn; ++k) {
        const int ny = y + dy[k], nx = x + dx[k];
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const int b = seg.labels[static_cast<size_t>(ny) * w + nx];
        if (a != b) edges.insert({std::min(a, b), std::max(a, b)});
      }
    }

  std::vector<std::vector<int>> neighbors(static_cast<size_t>(m));
  for (const auto& [a, b] : edges) {
    neighbors[static_cast<size_t>(a)].push_back(b);
    neighbors[static_cast<size_t>(b)].push_back(a);
  }
  SparseMatrix adj;
  adj.size = m;
  adj.row_ptr.assign(static_cast<size_t>(m) + 1, 0);
  for (int i = 0; i < m; ++i) {
    auto& ns = neighbors[static_cast<size_t>(i)];
    std::sort(ns.begin(), ns.end());
    adj.row_ptr[static_cast<size_t>(i) + 1] =
        adj.row_ptr[static_cast<size_t>(i)] + static_cast<int64_t>(ns.size());
    for (int j : ns) {
      adj.col_idx.push_back(j);
      adj.values.push_back(1.0);
    }
  }
  return adj;
}

SparseMatrix normalize_adjacency(const SparseMatrix& a) {
  const int m = a.size;
  // degrees of A + I
  std::vector<double> inv_sqrt_deg(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    double deg = 1.0;  // self-loop
    for (int64_t k = a.row_ptr[static_cast<size_t>(i)]; k < a.row_ptr[static_cast<size_t>(i) + 1]; ++k)
      deg += a.values[static_cast<size_t>(k)];
    inv_sqrt_deg[static_cast<size_t>(i)] = 1.0 / std::sqrt(deg);
  }
  SparseMatrix p;
  p.size = m;
  p.row_ptr.assign(static_cast<size_t>(m) + 1, 0);
  for (int i = 0; i < m; ++i) {
    // merge the self-loop into the sorted neighbor list
    bool self_emitted = false;
    for (int64_t k = a.row_ptr[static_cast<size_t>(i)]; k < a.row_ptr[static_cast<size_t>(i) + 1]; ++k) {
      const int j = a.col_idx[static_cast<size_t>(k)];
      if (!self_emitted && j > i) {
        p.col_idx.push_back(i);
        p.values.push_back(inv_sqrt_deg[static_cast<size_t>(i)] * inv_sqrt_deg[static_cast<size_t>(i)]);
        self_emitted = true;
      }
      p.col_idx.push_back(j);
      p.values.push_back(a.values[static_cast<size_t>(k)] * inv_sqrt_deg[static_cast<size_t>(i)] *
                         inv_sqrt_deg[static_cast<size_t>(j)]);
    }
    if (!self_emitted) {
      p.col_idx.push_back(i);
      p.values.push_back(inv_sqrt_deg[static_cast<size_t>(i)] * inv_sqrt_deg[static_cast<size_t>(i)]);
    }
    p.row_ptr[static_cast<size_t>(i) + 1] = static_cast<int64_t>(p.col_idx.size());
  }
  return p;
}

Tensor superpixel_features(const MapMatrix& map, const FeatureMatrix& pixel_features) {
  if (map.cols != pixel_features.count)
    throw DimensionError("superpixel_features: map covers " + std::to_string(map.cols) +
                         " pixels but features have " + std::to_string(pixel_features.count) +
                         " rows");
  const int d = pixel_features.dim;
  Tensor out = Tensor::zeros({map.rows, d});
  for (int i = 0; i < map.rows; ++i) {
    double* op = &out.data()[static_cast<size_t>(i) * d];
    for (int64_t k = map.row_ptr[static_cast<size_t>(i)]; k < map.row_ptr[static_cast<size_t>(i) + 1]; ++k) {
      const double* fp = pixel_features.row(map.col_idx[static_cast<size_t>(k)]);
      for (int j = 0; j < d; ++j) op[j] += fp[j];
    }
    const double norm = map.norm_value(i);
    for (int j = 0; j < d; ++j) op[j] *= norm;
  }
  return out;
}

Tensor spmm(const SparseMatrix& p, const Tensor& h) {
  if (h.rank() != 2 || h.dim(0) != p.size)
    throw DimensionError("spmm: dense operand " + shape_str(h.shape()) +
                         " does not match sparse size " + std::to_string(p.size));
  const int m = p.size, d = h.dim(1);
  std::vector<double> y(static_cast<size_t>(m) * d, 0.0);
  for (int i = 0; i < m; ++i) {
    double* yp = &y[static_cast<size_t>(i) * d];
    for (int64_t k = p.row_ptr[static_cast<size_t>(i)]; k < p.row_ptr[static_cast<size_t>(i) + 1]; ++k) {
      const double v = p.values[static_cast<size_t>(k)];
      const double* hp = &h.data()[static_cast<size_t>(p.col_idx[static_cast<size_t>(k)]) * d];
      for (int j = 0; j < d; ++j) yp[j] += v * hp[j];
    }
  }
  Tensor result = Tensor::from_data({m, d}, std::move(y));
  if (!h.requires_grad() && !h.impl()->backward_fn) return result;
  result.set_requires_grad(true);
  result.impl()->parents.push_back(h.impl());
  // deterministic row-major scatter implements P^T * grad
  result.impl()->backward_fn = [p, hin = h.impl(), m, d](TensorImpl& self) {
    hin->ensure_grad();
    for (int i = 0; i < m; ++i) {
      const double* gp = &self.grad[static_cast<size_t>(i) * d];
      for (int64_t k = p.row_ptr[static_cast<size_t>(i)]; k < p.row_ptr[static_cast<size_t>(i) + 1]; ++k) {
        const double v = p.values[static_cast<size_t>(k)];
        double* hg = &hin->grad[static_cast<size_t>(p.col_idx[static_cast<size_t>(k)]) * d];
        for (int j = 0; j < d; ++j) hg[j] += v * gp[j];
      }
    }
  };
  return result;
}

void save_edge_list(const SparseMatrix& adjacency, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(IoCode::MissingFile, "cannot create " + path);
  for (int i = 0; i < adjacency.size; ++i)
    for (int64_t k = adjacency.row_ptr[static_cast<size_t>(i)];
         k < adjacency.row_ptr[static_cast<size_t>(i) + 1]; ++k) {
      const int j = adjacency.col_idx[static_cast<size_t>(k)];
      if (i < j) out << i << ' ' << j << '\n';
    }
}

}  // namespace spgcc

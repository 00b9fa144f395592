#pragma once

#include <string>
#include <vector>

#include "spgcc/segmentation.hpp"
#include "spgcc/tensor.hpp"

namespace spgcc {

/// Square sparse matrix in CSR with sorted column indices per row.
struct SparseMatrix {
  int size = 0;
  std::vector<int64_t> row_ptr;
  std::vector<int> col_idx;
  std::vector<double> values;

  int64_t nnz() const { return static_cast<int64_t>(col_idx.size()); }
};

/// Binary spatial adjacency: superpixels touching in the raster (8-neighbor
/// by default) are connected; zero diagonal.
SparseMatrix build_adjacency(const Segmentation& seg, bool eight_connectivity = true);

/// Self-looped symmetric normalization D^-1/2 (A + I) D^-1/2.
SparseMatrix normalize_adjacency(const SparseMatrix& adjacency);

/// Mean pre-trained feature per superpixel (row-normalized map times X^p).
Tensor superpixel_features(const MapMatrix& map, const FeatureMatrix& pixel_features);

/// Sparse-dense product P * H with a backward rule through H (P constant).
Tensor spmm(const SparseMatrix& p, const Tensor& h);

/// Plain-text "m n" edge list, m < n, sorted.
void save_edge_list(const SparseMatrix& adjacency, const std::string& path);

}  // namespace spgcc

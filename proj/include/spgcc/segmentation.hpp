#pragma once

#include <memory>
#include <string>
#include <vector>

#include "spgcc/hsi.hpp"

namespace spgcc {

/// Partition of the image plane into superpixels with ids 0..count-1.
struct Segmentation {
  int height = 0;
  int width = 0;
  int count = 0;
  std::vector<int> labels;                // H*W
  std::vector<std::vector<int>> members;  // pixel indices per superpixel

  int at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
};

/// M x N pixel-to-superpixel map, CSR over rows (superpixels). Binary T and
/// its row-normalized form share the structure; norm_value(i) = 1/|members_i|.
struct MapMatrix {
  int rows = 0;   // M
  int64_t cols = 0;  // N
  std::vector<int64_t> row_ptr;
  std::vector<int> col_idx;

  double norm_value(int row) const {
    return 1.0 / static_cast<double>(row_ptr[static_cast<size_t>(row) + 1] -
                                     row_ptr[static_cast<size_t>(row)]);
  }
};

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual Segmentation segment(const HsiCube& cube, int target_count,
                               double compactness) const = 0;
};

/// Localized k-means in joint (spectral, spatial) space with grid-seeded
/// centers, gradient-perturbed seeds, 10 iterations, and connectivity
/// enforcement that merges orphaned fragments into adjacent superpixels.
class SlicSegmenter : public Segmenter {
 public:
  explicit SlicSegmenter(int iterations = 10) : iterations_(iterations) {}
  Segmentation segment(const HsiCube& cube, int target_count,
                       double compactness) const override;

 private:
  int iterations_;
};

/// Regular rectangular blocks; test backend.
class GridSegmenter : public Segmenter {
 public:
  Segmentation segment(const HsiCube& cube, int target_count,
                       double compactness) const override;
};

std::unique_ptr<Segmenter> make_segmenter(const std::string& backend);

MapMatrix map_matrix(const Segmentation& seg);

/// Fraction (percent) of labeled pixels that carry the dominant class of
/// their superpixel, over superpixels with at least one labeled pixel.
double sp_segmentation_accuracy(const Segmentation& seg, const LabelRaster& labels);

/// Superpixel raster in the HSIL container, ids shifted by +1.
void save_segmentation(const Segmentation& seg, const std::string& path);
Segmentation load_segmentation(const std::string& path);

}  // namespace spgcc

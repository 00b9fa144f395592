#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spgcc {

enum class IoCode {
  BadMagic,
  Truncated,
  DimensionMismatch,
  BadParameter,
  BadValue,
  MissingFile,
};

class IoError : public std::runtime_error {
 public:
  IoError(IoCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  IoCode code() const { return code_; }

 private:
  IoCode code_;
};

/// H x W raster of C-band reflectance spectra, pixel-major storage:
/// values[(y*W + x)*C + band].
struct HsiCube {
  int height = 0;
  int width = 0;
  int bands = 0;
  std::vector<double> values;

  int64_t pixels() const { return static_cast<int64_t>(height) * width; }
  double& at(int y, int x, int b) {
    return values[(static_cast<size_t>(y) * width + x) * bands + b];
  }
  double at(int y, int x, int b) const {
    return values[(static_cast<size_t>(y) * width + x) * bands + b];
  }
};

/// Class ids per pixel; 0 means unlabeled, classes run 1..K.
struct LabelRaster {
  int height = 0;
  int width = 0;
  std::vector<uint32_t> ids;

  uint32_t at(int y, int x) const { return ids[static_cast<size_t>(y) * width + x]; }
};

/// N x d pixel feature matrix, row-major.
struct FeatureMatrix {
  int64_t count = 0;
  int dim = 0;
  std::vector<double> values;

  const double* row(int64_t i) const { return &values[static_cast<size_t>(i) * dim]; }
};

/// One w x w x h cube per pixel, stored [band][y][x] per cube to match the
/// [1, h, w, w] tensor layout the encoder consumes.
struct PixelCubeBatch {
  int64_t count = 0;
  int window = 0;
  int bands = 0;
  std::vector<float> values;

  int64_t cube_size() const { return static_cast<int64_t>(bands) * window * window; }
  const float* cube(int64_t i) const { return &values[static_cast<size_t>(i) * cube_size()]; }
};

// File formats: HSIF (cube), HSIL (labels), SPGF (features); little-endian,
// u32 dimensions, float32 payloads.
void save_hsi(const HsiCube& cube, const std::string& path);
HsiCube load_hsi(const std::string& path);
void save_labels(const LabelRaster& labels, const std::string& path);
LabelRaster load_labels(const std::string& path);
void save_features(const FeatureMatrix& features, const std::string& path);
FeatureMatrix load_features(const std::string& path);

void validate_labels(const LabelRaster& labels, uint32_t num_classes);

struct PcaResult {
  HsiCube reduced;
  std::vector<double> eigenvalues;  // descending, all C of them
  std::vector<double> components;   // C x h, column j = j-th principal axis
  std::vector<double> band_means;
};

/// Projects every spectrum onto the top-h principal axes. Axes come from a
/// cyclic Jacobi eigendecomposition of the band covariance; each axis is
/// sign-fixed so its largest-magnitude entry is positive.
PcaResult pca_fit(const HsiCube& cube, int target_bands);
HsiCube pca_reduce(const HsiCube& cube, int target_bands);

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Returns
/// eigenvalues (descending) and matching eigenvectors as columns of `vectors`
/// (row-major n x n).
void jacobi_eigh(std::vector<double> matrix, int n, std::vector<double>& eigenvalues,
                 std::vector<double>& vectors, double tol = 1e-12, int max_sweeps = 100);

/// Mirror-reflected index into [0, size).
int mirror_index(int i, int size);

/// One window-sized cube per pixel, mirror padding at the borders.
PixelCubeBatch extract_pixel_cubes(const HsiCube& cube, int window);

}  // namespace spgcc

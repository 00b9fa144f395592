#include "spgcc/hsi.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace spgcc {

namespace {

void write_bytes(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_u32(std::ofstream& out, uint32_t v) { write_bytes(out, &v, 4); }

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoCode::MissingFile, "cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<size_t>(len));
  in.read(buf.data(), len);
  if (!in) throw IoError(IoCode::Truncated, "short read on " + path);
  return buf;
}

struct Reader {
  const std::vector<char>& buf;
  size_t pos = 0;
  const std::string& path;

  void expect_magic(const char* magic) {
    if (buf.size() < pos + 4 || std::memcmp(buf.data() + pos, magic, 4) != 0)
      throw IoError(IoCode::BadMagic, path + ": bad magic, expected " + magic);
    pos += 4;
  }
  uint32_t u32() {
    if (buf.size() < pos + 4) throw IoError(IoCode::Truncated, path + ": truncated header");
    uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  void payload_f32(std::vector<double>& out, uint64_t count) {
    if (buf.size() != pos + count * 4)
      throw IoError(IoCode::Truncated, path + ": truncated payload (declared " +
                                           std::to_string(count) + " values)");
    out.resize(count);
    for (uint64_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, buf.data() + pos + i * 4, 4);
      out[i] = static_cast<double>(f);
    }
    pos += count * 4;
  }
  void payload_u32(std::vector<uint32_t>& out, uint64_t count) {
    if (buf.size() != pos + count * 4)
      throw IoError(IoCode::Truncated, path + ": truncated payload (declared " +
                                           std::to_string(count) + " values)");
    out.resize(count);
    std::memcpy(out.data(), buf.data() + pos, count * 4);
    pos += count * 4;
  }
};

void check_dims(bool ok, const std::string& what) {
  if (!ok) throw IoError(IoCode::DimensionMismatch, what);
}

}  // namespace

void save_hsi(const HsiCube& cube, const std::string& path) {
  check_dims(cube.height >= 1 && cube.width >= 1 && cube.bands >= 1 &&
                 static_cast<int64_t>(cube.values.size()) ==
                     cube.pixels() * cube.bands,
             "save_hsi: inconsistent cube dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoCode::MissingFile, "cannot create " + path);
  write_bytes(out, "HSIF", 4);
  write_u32(out, static_cast<uint32_t>(cube.height));
  write_u32(out, static_cast<uint32_t>(cube.width));
  write_u32(out, static_cast<uint32_t>(cube.bands));
  for (double v : cube.values) {
    const float f = static_cast<float>(v);
    write_bytes(out, &f, 4);
  }
}

HsiCube load_hsi(const std::string& path) {
  const auto buf = read_file(path);
  Reader r{buf, 0, path};
  r.expect_magic("HSIF");
  HsiCube cube;
  cube.height = static_cast<int>(r.u32());
  cube.width = static_cast<int>(r.u32());
  cube.bands = static_cast<int>(r.u32());
  check_dims(cube.height >= 1 && cube.width >= 1 && cube.bands >= 1,
             path + ": zero dimension in header");
  r.payload_f32(cube.values, static_cast<uint64_t>(cube.pixels()) * cube.bands);
  for (double v : cube.values)
    if (!std::isfinite(v)) throw IoError(IoCode::BadValue, path + ": non-finite value");
  return cube;
}

void save_labels(const LabelRaster& labels, const std::string& path) {
  check_dims(labels.height >= 1 && labels.width >= 1 &&
                 labels.ids.size() == static_cast<size_t>(labels.height) * labels.width,
             "save_labels: inconsistent raster dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoCode::MissingFile, "cannot create " + path);
  write_bytes(out, "HSIL", 4);
  write_u32(out, static_cast<uint32_t>(labels.height));
  write_u32(out, static_cast<uint32_t>(labels.width));
  write_bytes(out, labels.ids.data(), labels.ids.size() * 4);
}

LabelRaster load_labels(const std::string& path) {
  const auto buf = read_file(path);
  Reader r{buf, 0, path};
  r.expect_magic("HSIL");
  LabelRaster labels;
  labels.height = static_cast<int>(r.u32());
  labels.width = static_cast<int>(r.u32());
  check_dims(labels.height >= 1 && labels.width >= 1, path + ": zero dimension in header");
  r.payload_u32(labels.ids, static_cast<uint64_t>(labels.height) * labels.width);
  return labels;
}

void validate_labels(const LabelRaster& labels, uint32_t num_classes) {
  for (uint32_t id : labels.ids)
    if (id > num_classes)
      throw IoError(IoCode::BadValue, "label id " + std::to_string(id) +
                                          " exceeds declared class count " +
                                          std::to_string(num_classes));
}

void save_features(const FeatureMatrix& features, const std::string& path) {
  check_dims(features.count >= 1 && features.dim >= 1 &&
                 static_cast<int64_t>(features.values.size()) == features.count * features.dim,
             "save_features: inconsistent matrix dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoCode::MissingFile, "cannot create " + path);
  write_bytes(out, "SPGF", 4);
  write_u32(out, static_cast<uint32_t>(features.count));
  write_u32(out, static_cast<uint32_t>(features.dim));
  for (double v : features.values) {
    const float f = static_cast<float>(v);
    write_bytes(out, &f, 4);
  }
}

FeatureMatrix load_features(const std::string& path) {
  const auto buf = read_file(path);
  Reader r{buf, 0, path};
  r.expect_magic("SPGF");
  FeatureMatrix features;
  features.count = static_cast<int64_t>(r.u32());
  features.dim = static_cast<int>(r.u32());
  check_dims(features.count >= 1 && features.dim >= 1, path + ": zero dimension in header");
  r.payload_f32(features.values, static_cast<uint64_t>(features.count) * features.dim);
  return features;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

void jacobi_eigh(std::vector<double> a, int n, std::vector<double>& eigenvalues,
                 std::vector<double>& vectors, double tol, int max_sweeps) {
  vectors.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) vectors[static_cast<size_t>(i) * n + i] = 1.0;
  auto off = [&]() {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) s += a[static_cast<size_t>(i) * n + j] * a[static_cast<size_t>(i) * n + j];
    return std::sqrt(s);
  };
  for (int sweep = 0; sweep < max_sweeps && off() > tol; ++sweep) {
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[static_cast<size_t>(p) * n + q];
        if (apq == 0.0) continue;
        const double app = a[static_cast<size_t>(p) * n + p];
        const double aqq = a[static_cast<size_t>(q) * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[static_cast<size_t>(k) * n + p];
          const double akq = a[static_cast<size_t>(k) * n + q];
          a[static_cast<size_t>(k) * n + p] = c * akp - s * akq;
          a[static_cast<size_t>(k) * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[static_cast<size_t>(p) * n + k];
          const double aqk = a[static_cast<size_t>(q) * n + k];
          a[static_cast<size_t>(p) * n + k] = c * apk - s * aqk;
          a[static_cast<size_t>(q) * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = vectors[static_cast<size_t>(k) * n + p];
          const double vkq = vectors[static_cast<size_t>(k) * n + q];
          vectors[static_cast<size_t>(k) * n + p] = c * vkp - s * vkq;
          vectors[static_cast<size_t>(k) * n + q] = s * vkp + c * vkq;
        }
      }
  }
  eigenvalues.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) eigenvalues[static_cast<size_t>(i)] = a[static_cast<size_t>(i) * n + i];
  // sort descending, carrying eigenvector columns along
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return eigenvalues[static_cast<size_t>(i)] > eigenvalues[static_cast<size_t>(j)];
  });
  std::vector<double> ev_sorted(static_cast<size_t>(n));
  std::vector<double> vec_sorted(static_cast<size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    ev_sorted[static_cast<size_t>(j)] = eigenvalues[static_cast<size_t>(order[static_cast<size_t>(j)])];
    for (int i = 0; i < n; ++i)
      vec_sorted[static_cast<size_t>(i) * n + j] =
          vectors[static_cast<size_t>(i) * n + order[static_cast<size_t>(j)]];
  }
  eigenvalues = std::move(ev_sorted);
  vectors = std::move(vec_sorted);
}

PcaResult pca_fit(const HsiCube& cube, int target_bands) {
  const int c = cube.bands;
  if (target_bands < 1 || target_bands > c)
    throw IoError(IoCode::BadParameter,
                  "pca: target bands " + std::to_string(target_bands) + " outside [1," +
                      std::to_string(c) + "]");
  const int64_t n = cube.pixels();

  PcaResult res;
  res.band_means.assign(static_cast<size_t>(c), 0.0);
  for (int64_t p = 0; p < n; ++p)
    for (int b = 0; b < c; ++b)
      res.band_means[static_cast<size_t>(b)] += cube.values[static_cast<size_t>(p) * c + b];
  for (double& m : res.band_means) m /= static_cast<double>(n);

  std::vector<double> cov(static_cast<size_t>(c) * c, 0.0);
  std::vector<double> centered(static_cast<size_t>(c));
  for (int64_t p = 0; p < n; ++p) {
    for (int b = 0; b < c; ++b)
      centered[static_cast<size_t>(b)] =
          cube.values[static_cast<size_t>(p) * c + b] - res.band_means[static_cast<size_t>(b)];
    for (int i = 0; i < c; ++i)
      for (int j = i; j < c; ++j)
        cov[static_cast<size_t>(i) * c + j] +=
            centered[static_cast<size_t>(i)] * centered[static_cast<size_t>(j)];
  }
  for (int i = 0; i < c; ++i)
    for (int j = i; j < c; ++j) {
      cov[static_cast<size_t>(i) * c + j] /= static_cast<double>(n);
      cov[static_cast<size_t>(j) * c + i] = cov[static_cast<size_t>(i) * c + j];
    }

  std::vector<double> vectors;
  jacobi_eigh(cov, c, res.eigenvalues, vectors);

  // Sign convention: largest-magnitude entry of each axis is positive.
  res.components.assign(static_cast<size_t>(c) * target_bands, 0.0);
  for (int j = 0; j < target_bands; ++j) {
    int arg = 0;
    double best = 0.0;
    for (int i = 0; i < c; ++i) {
      const double m = std::fabs(vectors[static_cast<size_t>(i) * c + j]);
      if (m > best) {
        best = m;
        arg = i;
      }
    }
    const double sign = vectors[static_cast<size_t>(arg) * c + j] >= 0.0 ? 1.0 : -1.0;
    for (int i = 0; i < c; ++i)
      res.components[static_cast<size_t>(i) * target_bands + j] =
          sign * vectors[static_cast<size_t>(i) * c + j];
  }

  res.reduced.height = cube.height;
  res.reduced.width = cube.width;
  res.reduced.bands = target_bands;
  res.reduced.values.assign(static_cast<size_t>(n) * target_bands, 0.0);
  for (int64_t p = 0; p < n; ++p) {
    for (int b = 0; b < c; ++b)
      centered[static_cast<size_t>(b)] =
          cube.values[static_cast<size_t>(p) * c + b] - res.band_means[static_cast<size_t>(b)];
    for (int j = 0; j < target_bands; ++j) {
      double acc = 0.0;
      for (int i = 0; i < c; ++i)
        acc += centered[static_cast<size_t>(i)] * res.components[static_cast<size_t>(i) * target_bands + j];
      res.reduced.values[static_cast<size_t>(p) * target_bands + j] = acc;
    }
  }
  return res;
}

HsiCube pca_reduce(const HsiCube& cube, int target_bands) {
  return pca_fit(cube, target_bands).reduced;
}

// ---------------------------------------------------------------------------
// pixel cubes
// ---------------------------------------------------------------------------

int mirror_index(int i, int size) {
  if (size == 1) return 0;
  const int period = 2 * (size - 1);
  int m = i % period;
  if (m < 0) m += period;
  return m < size ? m : period - m;
}

PixelCubeBatch extract_pixel_cubes(const HsiCube& cube, int window) {
  if (window < 1 || window % 2 == 0)
    throw IoError(IoCode::BadParameter,
                  "extract_pixel_cubes: window must be odd, got " + std::to_string(window));
  const int h = cube.height, w = cube.width, c = cube.bands;
  const int half = window / 2;

  PixelCubeBatch batch;
  batch.count = cube.pixels();
  batch.window = window;
  batch.bands = c;
  batch.values.resize(static_cast<size_t>(batch.count) * batch.cube_size());

  size_t out = 0;
  for (int cy = 0; cy < h; ++cy)
    for (int cx = 0; cx < w; ++cx)
      for (int b = 0; b < c; ++b)
        for (int dy = -half; dy <= half; ++dy) {
          const int sy = mirror_index(cy + dy, h);
          for (int dx = -half; dx <= half; ++dx) {
            const int sx = mirror_index(cx + dx, w);
            batch.values[out++] = static_cast<float>(cube.at(sy, sx, b));
          }
        }
  return batch;
}

}  // namespace spgcc

#include "spgcc/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace spgcc {

namespace {

void check_target(int target, int64_t pixels) {
  if (target < 1 || target > pixels)
    throw IoError(IoCode::BadParameter,
                  "segment: superpixel count " + std::to_string(target) + " outside [1," +
                      std::to_string(pixels) + "]");
}

void finalize_members(Segmentation& seg) {
  // compact relabeling in order of first appearance, then member lists
  std::vector<int> remap(static_cast<size_t>(seg.count), -1);
  int next = 0;
  for (int& l : seg.labels) {
    if (remap[static_cast<size_t>(l)] < 0) remap[static_cast<size_t>(l)] = next++;
    l = remap[static_cast<size_t>(l)];
  }
  seg.count = next;
  seg.members.assign(static_cast<size_t>(next), {});
  for (size_t p = 0; p < seg.labels.size(); ++p)
    seg.members[static_cast<size_t>(seg.labels[p])].push_back(static_cast<int>(p));
}

// 4-connected components; merges every non-largest component of each label
// into the adjacent kept superpixel sharing the most boundary.
void enforce_connectivity(Segmentation& seg) {
  const int h = seg.height, w = seg.width;
  const int64_t n = static_cast<int64_t>(h) * w;
  std::vector<int> comp(static_cast<size_t>(n), -1);
  std::vector<int> comp_label;
  std::vector<int64_t> comp_size;
  std::vector<int64_t> stack;

  for (int64_t start = 0; start < n; ++start) {
    if (comp[static_cast<size_t>(start)] >= 0) continue;
    const int cid = static_cast<int>(comp_label.size());
    const int label = seg.labels[static_cast<size_t>(start)];
    comp_label.push_back(label);
    comp_size.push_back(0);
    stack.assign(1, start);
    comp[static_cast<size_t>(start)] = cid;
    while (!stack.empty()) {
      const int64_t p = stack.back();
      stack.pop_back();
      ++comp_size[static_cast<size_t>(cid)];
      const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
      const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const int ny = y + dy[k], nx = x + dx[k];
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const int64_t q = static_cast<int64_t>(ny) * w + nx;
        if (comp[static_cast<size_t>(q)] < 0 && seg.labels[static_cast<size_t>(q)] == label) {
          comp[static_cast<size_t>(q)] = cid;
          stack.push_back(q);
        }
      }
    }
  }

  // largest component keeps its label
  const int ncomp = static_cast<int>(comp_label.size());
  std::vector<int> keeper(static_cast<size_t>(seg.count), -1);
  for (int c = 0; c < ncomp; ++c) {
    const int label = comp_label[static_cast<size_t>(c)];
    if (keeper[static_cast<size_t>(label)] < 0 ||
        comp_size[static_cast<size_t>(c)] >
            comp_size[static_cast<size_t>(keeper[static_cast<size_t>(label)])])
      keeper[static_cast<size_t>(label)] = c;
  }
  std::vector<char> assigned(static_cast<size_t>(ncomp), 0);
  for (int l = 0; l < seg.count; ++l)
    if (keeper[static_cast<size_t>(l)] >= 0)
      assigned[static_cast<size_t>(keeper[static_cast<size_t>(l)])] = 1;

  // orphan components absorb the dominant adjacent assigned label; passes
  // repeat until everything is attached
  std::vector<int> final_label(static_cast<size_t>(ncomp), -1);
  for (int c = 0; c < ncomp; ++c)
    if (assigned[static_cast<size_t>(c)]) final_label[static_cast<size_t>(c)] = comp_label[static_cast<size_t>(c)];

  bool progress = true;
  while (progress) {
    progress = false;
    for (int c = 0; c < ncomp; ++c) {
      if (final_label[static_cast<size_t>(c)] >= 0) continue;
      std::vector<std::pair<int, int64_t>> counts;  // label -> boundary count
      for (int64_t p = 0; p < n; ++p) {
        if (comp[static_cast<size_t>(p)] != c) continue;
        const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = y + dy[k], nx = x + dx[k];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const int qc = comp[static_cast<size_t>(static_cast<int64_t>(ny) * w + nx)];
          const int ql = final_label[static_cast<size_t>(qc)];
          if (qc == c || ql < 0) continue;
          bool found = false;
          for (auto& e : counts)
            if (e.first == ql) {
              ++e.second;
              found = true;
            }
          if (!found) counts.push_back({ql, 1});
        }
      }
      if (counts.empty()) continue;
      std::sort(counts.begin(), counts.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
      });
      final_label[static_cast<size_t>(c)] = counts.front().first;
      progress = true;
    }
  }

  for (int64_t p = 0; p < n; ++p)
    seg.labels[static_cast<size_t>(p)] = final_label[static_cast<size_t>(comp[static_cast<size_t>(p)])];
  finalize_members(seg);
}

}  // namespace

Segmentation SlicSegmenter::segment(const HsiCube& cube, int target_count,
                                    double compactness) const {
  const int h = cube.height, w = cube.width, c = cube.bands;
  const int64_t n = static_cast<int64_t>(h) * w;
  check_target(target_count, n);

  Segmentation seg;
  seg.height = h;
  seg.width = w;

  if (target_count == static_cast<int>(n)) {
    seg.count = static_cast<int>(n);
    seg.labels.resize(static_cast<size_t>(n));
    std::iota(seg.labels.begin(), seg.labels.end(), 0);
    finalize_members(seg);
    return seg;
  }

  // grid seeds, ~target_count of them
  int ny = std::max(1, static_cast<int>(std::lround(
                           std::sqrt(static_cast<double>(target_count) * h / w))));
  ny = std::min(ny, h);
  int nx = std::max(1, static_cast<int>(std::lround(static_cast<double>(target_count) / ny)));
  nx = std::min(nx, w);
  const double step = std::sqrt(static_cast<double>(n) / (static_cast<double>(ny) * nx));

  struct Center {
    double y, x;
    std::vector<double> spectrum;
  };
  std::vector<Center> centers;
  centers.reserve(static_cast<size_t>(ny) * nx);

  // image gradient (summed squared band differences of the 4-neighborhood)
  auto gradient = [&](int y, int x) {
    double g = 0.0;
    const int xp = std::min(x + 1, w - 1), xm = std::max(x - 1, 0);
    const int yp = std::min(y + 1, h - 1), ym = std::max(y - 1, 0);
    for (int b = 0; b < c; ++b) {
      const double gx = cube.at(y, xp, b) - cube.at(y, xm, b);
      const double gy = cube.at(yp, x, b) - cube.at(ym, x, b);
      g += gx * gx + gy * gy;
    }
    return g;
  };

  const bool perturb = step >= 2.0;
  for (int gy = 0; gy < ny; ++gy)
    for (int gx = 0; gx < nx; ++gx) {
      int sy = static_cast<int>((gy + 0.5) * h / ny);
      int sx = static_cast<int>((gx + 0.5) * w / nx);
      if (perturb) {
        double best = gradient(sy, sx);
        int by = sy, bx = sx;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = sy + dy, xx = sx + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            const double g = gradient(yy, xx);
            if (g < best) {
              best = g;
              by = yy;
              bx = xx;
            }
          }
        sy = by;
        sx = bx;
      }
      Center ct;
      ct.y = sy;
      ct.x = sx;
      ct.spectrum.resize(static_cast<size_t>(c));
      for (int b = 0; b < c; ++b) ct.spectrum[static_cast<size_t>(b)] = cube.at(sy, sx, b);
      centers.push_back(std::move(ct));
    }

  const int m = static_cast<int>(centers.size());
  seg.count = m;
  seg.labels.assign(static_cast<size_t>(n), 0);
  std::vector<double> best_dist(static_cast<size_t>(n));
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * step)));

  for (int iter = 0; iter < iterations_; ++iter) {
    std::fill(best_dist.begin(), best_dist.end(), std::numeric_limits<double>::infinity());
    for (int ci = 0; ci < m; ++ci) {
      const Center& ct = centers[static_cast<size_t>(ci)];
      const int y0 = std::max(0, static_cast<int>(ct.y) - radius);
      const int y1 = std::min(h - 1, static_cast<int>(ct.y) + radius);
      const int x0 = std::max(0, static_cast<int>(ct.x) - radius);
      const int x1 = std::min(w - 1, static_cast<int>(ct.x) + radius);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          double ds = 0.0;
          for (int b = 0; b < c; ++b) {
            const double d = cube.at(y, x, b) - ct.spectrum[static_cast<size_t>(b)];
            ds += d * d;
          }
          const double dy = y - ct.y, dx = x - ct.x;
          const double dist =
              std::sqrt(ds) + compactness * std::sqrt(dy * dy + dx * dx) / step;
          const size_t p = static_cast<size_t>(y) * w + x;
          // lowest id wins ties
          if (dist < best_dist[p]) {
            best_dist[p] = dist;
            seg.labels[p] = ci;
          }
        }
    }
    // centers move to the mean of their members
    std::vector<double> sum_y(static_cast<size_t>(m), 0.0), sum_x(static_cast<size_t>(m), 0.0);
    std::vector<int64_t> cnt(static_cast<size_t>(m), 0);
    std::vector<std::vector<double>> sum_spec(static_cast<size_t>(m),
                                              std::vector<double>(static_cast<size_t>(c), 0.0));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int l = seg.labels[static_cast<size_t>(y) * w + x];
        sum_y[static_cast<size_t>(l)] += y;
        sum_x[static_cast<size_t>(l)] += x;
        ++cnt[static_cast<size_t>(l)];
        for (int b = 0; b < c; ++b)
          sum_spec[static_cast<size_t>(l)][static_cast<size_t>(b)] += cube.at(y, x, b);
      }
    for (int ci = 0; ci < m; ++ci) {
      if (cnt[static_cast<size_t>(ci)] == 0) continue;
      const double inv = 1.0 / static_cast<double>(cnt[static_cast<size_t>(ci)]);
      centers[static_cast<size_t>(ci)].y = sum_y[static_cast<size_t>(ci)] * inv;
      centers[static_cast<size_t>(ci)].x = sum_x[static_cast<size_t>(ci)] * inv;
      for (int b = 0; b < c; ++b)
        centers[static_cast<size_t>(ci)].spectrum[static_cast<size_t>(b)] =
            sum_spec[static_cast<size_t>(ci)][static_cast<size_t>(b)] * inv;
    }
  }

  enforce_connectivity(seg);
  return seg;
}

Segmentation GridSegmenter::segment(const HsiCube& cube, int target_count,
                                    double /*compactness*/) const {
  const int h = cube.height, w = cube.width;
  const int64_t n = static_cast<int64_t>(h) * w;
  check_target(target_count, n);
  int ny = std::max(1, static_cast<int>(std::lround(
                           std::sqrt(static_cast<double>(target_count) * h / w))));
  ny = std::min(ny, h);
  int nx = std::max(1, static_cast<int>(std::lround(static_cast<double>(target_count) / ny)));
  nx = std::min(nx, w);

  Segmentation seg;
  seg.height = h;
  seg.width = w;
  seg.count = ny * nx;
  seg.labels.resize(static_cast<size_t>(n));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int by = std::min(ny - 1, y * ny / h);
      const int bx = std::min(nx - 1, x * nx / w);
      seg.labels[static_cast<size_t>(y) * w + x] = by * nx + bx;
    }
  finalize_members(seg);
  return seg;
}

std::unique_ptr<Segmenter> make_segmenter(const std::string& backend) {
  if (backend == "slic") return std::make_unique<SlicSegmenter>();
  if (backend == "grid") return std::make_unique<GridSegmenter>();
  throw IoError(IoCode::BadParameter, "unknown segmentation backend: " + backend);
}

MapMatrix map_matrix(const Segmentation& seg) {
  MapMatrix t;
  t.rows = seg.count;
  t.cols = static_cast<int64_t>(seg.height) * seg.width;
  t.row_ptr.assign(static_cast<size_t>(seg.count) + 1, 0);
  for (int i = 0; i < seg.count; ++i)
    t.row_ptr[static_cast<size_t>(i) + 1] =
        t.row_ptr[static_cast<size_t>(i)] +
        static_cast<int64_t>(seg.members[static_cast<size_t>(i)].size());
  t.col_idx.reserve(static_cast<size_t>(t.cols));
  for (int i = 0; i < seg.count; ++i)
    for (int p : seg.members[static_cast<size_t>(i)]) t.col_idx.push_back(p);
  return t;
}

double sp_segmentation_accuracy(const Segmentation& seg, const LabelRaster& labels) {
  if (labels.height != seg.height || labels.width != seg.width)
    throw IoError(IoCode::DimensionMismatch,
                  "sp_segmentation_accuracy: label raster does not match segmentation");
  int64_t dominant_total = 0, labeled_total = 0;
  for (const auto& members : seg.members) {
    std::vector<std::pair<uint32_t, int64_t>> counts;
    int64_t labeled = 0;
    for (int p : members) {
      const uint32_t id = labels.ids[static_cast<size_t>(p)];
      if (id == 0) continue;
      ++labeled;
      bool found = false;
      for (auto& e : counts)
        if (e.first == id) {
          ++e.second;
          found = true;
        }
      if (!found) counts.push_back({id, 1});
    }
    if (labeled == 0) continue;  // unlabeled superpixels excluded from both sums
    int64_t dominant = 0;
    for (const auto& e : counts) dominant = std::max(dominant, e.second);
    dominant_total += dominant;
    labeled_total += labeled;
  }
  if (labeled_total == 0)
    throw IoError(IoCode::BadValue, "sp_segmentation_accuracy: no labeled pixels");
  return 100.0 * static_cast<double>(dominant_total) / static_cast<double>(labeled_total);
}

void save_segmentation(const Segmentation& seg, const std::string& path) {
  LabelRaster raster;
  raster.height = seg.height;
  raster.width = seg.width;
  raster.ids.reserve(seg.labels.size());
  for (int l : seg.labels) raster.ids.push_back(static_cast<uint32_t>(l) + 1);
  save_labels(raster, path);
}

Segmentation load_segmentation(const std::string& path) {
  LabelRaster raster = load_labels(path);
  Segmentation seg;
  seg.height = raster.height;
  seg.width = raster.width;
  seg.labels.reserve(raster.ids.size());
  int max_id = -1;
  for (uint32_t id : raster.ids) {
    if (id == 0) throw IoError(IoCode::BadValue, path + ": superpixel raster has id 0");
    seg.labels.push_back(static_cast<int>(id) - 1);
    max_id = std::max(max_id, static_cast<int>(id) - 1);
  }
  seg.count = max_id + 1;
  seg.members.assign(static_cast<size_t>(seg.count), {});
  for (size_t p = 0; p < seg.labels.size(); ++p)
    seg.members[static_cast<size_t>(seg.labels[p])].push_back(static_cast<int>(p));
  for (const auto& m : seg.members)
    if (m.empty()) throw IoError(IoCode::BadValue, path + ": empty superpixel id");
  return seg;
}

}  // namespace spgcc

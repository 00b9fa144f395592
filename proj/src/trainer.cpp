#include "spgcc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "spgcc/checkpoint.hpp"

namespace spgcc {

namespace {

Tensor kaiming_uniform(Shape shape, int64_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(static_cast<size_t>(shape_size(shape)));
  for (double& v : values) v = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

double sq_dist(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int j = 0; j < dim; ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

}  // namespace

GcnNet::GcnNet(int input_dim, int hidden_dim, int output_dim, int layers, uint64_t seed)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), output_dim_(output_dim), layers_(layers) {
  if (layers < 2) throw IoError(IoCode::BadParameter, "GcnNet: need at least 2 layers");
  std::mt19937_64 rng(seed);
  int in = input_dim;
  for (int l = 0; l < layers - 1; ++l) {
    shared_.push_back(kaiming_uniform({in, hidden_dim}, in, rng));
    in = hidden_dim;
  }
  branch1_ = kaiming_uniform({hidden_dim, output_dim}, hidden_dim, rng);
  branch2_ = kaiming_uniform({hidden_dim, output_dim}, hidden_dim, rng);
}

EmbeddingViews GcnNet::forward(const SparseMatrix& p, const Tensor& x_sp, const Tensor& x_p) {
  if (x_sp.rank() != 2 || x_sp.dim(1) != input_dim_ || x_p.rank() != 2 ||
      x_p.dim(1) != input_dim_ || x_sp.dim(0) != p.size || x_p.dim(0) != p.size)
    throw DimensionError("GcnNet::forward: inputs must be M x " + std::to_string(input_dim_) +
                         " with M = " + std::to_string(p.size));
  auto branch_out = [&](Tensor h) {
    for (const Tensor& w : shared_) h = relu(matmul(spmm(p, h), w));
    Tensor h1 = l2_normalize_rows(matmul(spmm(p, h), branch1_));
    Tensor h2 = l2_normalize_rows(matmul(spmm(p, h), branch2_));
    return std::make_pair(h1, h2);
  };
  EmbeddingViews views;
  auto [sp1, sp2] = branch_out(x_sp);
  auto [p1, p2] = branch_out(x_p);
  views.z_sp1 = sp1;
  views.z_sp2 = sp2;
  views.z_p1 = p1;
  views.z_p2 = p2;
  views.z_sp = concat_cols(sp1, sp2);
  return views;
}

std::vector<Tensor> GcnNet::parameters() {
  std::vector<Tensor> params = shared_;
  params.push_back(branch1_);
  params.push_back(branch2_);
  return params;
}

void GcnNet::save(const std::string& path) {
  std::vector<Tensor> out;
  out.push_back(Tensor::from_data({4}, {static_cast<double>(input_dim_),
                                        static_cast<double>(hidden_dim_),
                                        static_cast<double>(output_dim_),
                                        static_cast<double>(layers_)}));
  for (Tensor& t : parameters()) out.push_back(t);
  save_spgw(out, path);
}

GcnNet GcnNet::load(const std::string& path) {
  std::vector<Tensor> in = load_spgw(path);
  if (in.empty() || in.front().size() != 4)
    throw IoError(IoCode::DimensionMismatch, path + ": missing architecture header");
  const auto& meta = in.front().data();
  GcnNet net(static_cast<int>(meta[0]), static_cast<int>(meta[1]), static_cast<int>(meta[2]),
             static_cast<int>(meta[3]), 0);
  std::vector<Tensor> params = net.parameters();
  if (in.size() != 1 + params.size())
    throw IoError(IoCode::DimensionMismatch, path + ": wrong tensor count");
  for (size_t k = 0; k < params.size(); ++k) {
    if (in[k + 1].shape() != params[k].shape())
      throw IoError(IoCode::DimensionMismatch, path + ": weight shape mismatch");
    params[k].data() = in[k + 1].data();
  }
  return net;
}

KmeansResult kmeans(const std::vector<double>& points, int64_t count, int dim, int k,
                    uint64_t seed) {
  if (k < 1 || count < k)
    throw IoError(IoCode::BadParameter, "kmeans: need at least k=" + std::to_string(k) +
                                            " points, got " + std::to_string(count));
  if (points.size() != static_cast<size_t>(count) * dim)
    throw IoError(IoCode::DimensionMismatch, "kmeans: point buffer size mismatch");
  std::mt19937_64 rng(seed);

  KmeansResult res;
  res.k = k;
  res.dim = dim;
  res.centers.assign(static_cast<size_t>(k) * dim, 0.0);
  auto point = [&](int64_t i) { return &points[static_cast<size_t>(i) * dim]; };
  auto center = [&](int c) { return &res.centers[static_cast<size_t>(c) * dim]; };

  // k-means++ seeding
  std::uniform_int_distribution<int64_t> first(0, count - 1);
  std::copy_n(point(first(rng)), dim, center(0));
  std::vector<double> best(static_cast<size_t>(count), std::numeric_limits<double>::max());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int64_t i = 0; i < count; ++i) {
      best[static_cast<size_t>(i)] =
          std::min(best[static_cast<size_t>(i)], sq_dist(point(i), center(c - 1), dim));
      total += best[static_cast<size_t>(i)];
    }
    int64_t chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> pick(0.0, total);
      const double r = pick(rng);
      double acc = 0.0;
      chosen = count - 1;
      for (int64_t i = 0; i < count; ++i) {
        acc += best[static_cast<size_t>(i)];
        if (acc >= r) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = first(rng);  // all points coincide with a center
    }
    std::copy_n(point(chosen), dim, center(c));
  }

  res.assignments.assign(static_cast<size_t>(count), -1);
  std::vector<double> dist(static_cast<size_t>(count));
  for (int round = 0; round < 300; ++round) {
    bool changed = false;
    double objective = 0.0;
    for (int64_t i = 0; i < count; ++i) {
      int arg = 0;
      double d = sq_dist(point(i), center(0), dim);
      for (int c = 1; c < k; ++c) {
        const double dc = sq_dist(point(i), center(c), dim);
        if (dc < d) {
          d = dc;
          arg = c;
        }
      }
      if (res.assignments[static_cast<size_t>(i)] != arg) {
        res.assignments[static_cast<size_t>(i)] = arg;
        changed = true;
      }
      dist[static_cast<size_t>(i)] = d;
      objective += d;
    }
    res.objective = objective;
    res.objective_trace.push_back(objective);
    if (!changed) break;

    std::vector<int64_t> sizes(static_cast<size_t>(k), 0);
    std::fill(res.centers.begin(), res.centers.end(), 0.0);
    for (int64_t i = 0; i < count; ++i) {
      const int c = res.assignments[static_cast<size_t>(i)];
      ++sizes[static_cast<size_t>(c)];
      for (int j = 0; j < dim; ++j) center(c)[j] += point(i)[j];
    }
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<size_t>(c)] > 0) {
        for (int j = 0; j < dim; ++j)
          center(c)[j] /= static_cast<double>(sizes[static_cast<size_t>(c)]);
      } else {
        // reseed to the globally farthest point
        int64_t far = 0;
        for (int64_t i = 1; i < count; ++i)
          if (dist[static_cast<size_t>(i)] > dist[static_cast<size_t>(far)]) far = i;
        std::copy_n(point(far), dim, center(c));
        dist[static_cast<size_t>(far)] = 0.0;
      }
    }
  }
  return res;
}

ConfidenceSelection confidence_select(const std::vector<double>& points, int64_t count, int dim,
                                      const std::vector<int>& assignments,
                                      const std::vector<double>& centers, int k, double lambda) {
  if (lambda <= 0.0 || lambda > 1.0)
    throw IoError(IoCode::BadParameter,
                  "confidence_select: lambda must lie in (0, 1], got " + std::to_string(lambda));
  ConfidenceSelection sel;
  sel.distances.resize(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i)
    sel.distances[static_cast<size_t>(i)] =
        sq_dist(&points[static_cast<size_t>(i) * dim],
                &centers[static_cast<size_t>(assignments[static_cast<size_t>(i)]) * dim], dim);

  std::vector<int> order(static_cast<size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return sel.distances[static_cast<size_t>(a)] < sel.distances[static_cast<size_t>(b)];
  });
  sel.selected = static_cast<int>(std::llround(lambda * static_cast<double>(count)));
  sel.groups.assign(static_cast<size_t>(k), {});
  for (int r = 0; r < sel.selected; ++r) {
    const int i = order[static_cast<size_t>(r)];
    sel.groups[static_cast<size_t>(assignments[static_cast<size_t>(i)])].push_back(i);
  }
  return sel;
}

Centers recompute_centers(const Tensor& z1, const Tensor& z2,
                          const std::vector<std::vector<int>>& groups) {
  const int d = z1.dim(1);
  Centers out;
  std::vector<std::vector<int>> valid;
  for (size_t k = 0; k < groups.size(); ++k) {
    if (groups[k].empty()) {
      ++out.dropped;
      continue;
    }
    // a zero mean in either view cannot be normalized; drop the class
    bool degenerate = false;
    for (const Tensor* z : {&z1, &z2}) {
      std::vector<double> mean(static_cast<size_t>(d), 0.0);
      for (int i : groups[k])
        for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += z->data()[static_cast<size_t>(i) * d + j];
      double norm = 0.0;
      for (double v : mean) norm += v * v;
      if (std::sqrt(norm) / static_cast<double>(groups[k].size()) <= 1e-12) degenerate = true;
    }
    if (degenerate) {
      ++out.dropped;
      continue;
    }
    valid.push_back(groups[k]);
    out.classes.push_back(static_cast<int>(k));
  }
  if (!valid.empty()) {
    out.c1 = l2_normalize_rows(gather_mean_rows(z1, valid));
    out.c2 = l2_normalize_rows(gather_mean_rows(z2, valid));
  }
  return out;
}

Tensor sample_pixels(const Segmentation& seg, const FeatureMatrix& x_p, std::mt19937_64& rng) {
  if (x_p.count != seg.height * static_cast<int64_t>(seg.width))
    throw DimensionError("sample_pixels: feature rows " + std::to_string(x_p.count) +
                         " != pixel count");
  const int d = x_p.dim;
  std::vector<double> values(static_cast<size_t>(seg.count) * d);
  for (int i = 0; i < seg.count; ++i) {
    const auto& members = seg.members[static_cast<size_t>(i)];
    std::uniform_int_distribution<size_t> pick(0, members.size() - 1);
    const double* src = x_p.row(members[pick(rng)]);
    std::copy_n(src, d, &values[static_cast<size_t>(i) * d]);
  }
  return Tensor::from_data({seg.count, d}, std::move(values));
}

Tensor sla_loss(const EmbeddingViews& views) {
  const int m = views.z_sp1.dim(0);
  Tensor acc = frobenius_sq_diff(views.z_sp1, views.z_sp2);
  acc = add(acc, frobenius_sq_diff(views.z_p1, views.z_p2));
  acc = add(acc, frobenius_sq_diff(views.z_sp1, views.z_p1));
  acc = add(acc, frobenius_sq_diff(views.z_sp2, views.z_p2));
  acc = add(acc, frobenius_sq_diff(views.z_sp1, views.z_p2));
  acc = add(acc, frobenius_sq_diff(views.z_sp2, views.z_p1));
  return scale(acc, 1.0 / (6.0 * static_cast<double>(m)));
}

Tensor clc_loss(const Tensor& c1, const Tensor& c2, double tau) {
  if (tau <= 0.0) throw IoError(IoCode::BadParameter, "clc_loss: tau must be positive");
  if (c1.rank() != 2 || c1.shape() != c2.shape() || c1.dim(0) < 2)
    throw IoError(IoCode::BadParameter, "clc_loss: need at least 2 matching center rows");
  auto directed = [tau](const Tensor& a, const Tensor& b) {
    Tensor denom = rowwise_logsumexp(scale(matmul(a, transpose(a)), 1.0 / tau));
    Tensor num = take_diag(scale(matmul(a, transpose(b)), 1.0 / tau));
    return mean_all(sub(denom, num));
  };
  return scale(add(directed(c1, c2), directed(c2, c1)), 0.5);
}

Tensor total_loss(const Tensor& sla, const Tensor& clc, double alpha) {
  return add(sla, scale(clc, alpha));
}

TrainResult train_spgcc(GcnNet& net, const SparseMatrix& p, const Tensor& x_sp,
                        const FeatureMatrix& x_p, const Segmentation& seg,
                        const TrainConfig& config) {
  if (config.classes < 2)
    throw IoError(IoCode::BadParameter, "train: need at least 2 classes");
  if (config.kmeans_interval < 1)
    throw IoError(IoCode::BadParameter, "train: kmeans_interval must be at least 1");
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  adam_cfg.weight_decay = config.weight_decay;
  Adam opt(net.parameters(), adam_cfg);
  std::mt19937_64 rng(config.seed);

  TrainResult result;
  std::vector<std::vector<int>> groups;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Tensor x_ps = sample_pixels(seg, x_p, rng);
    EmbeddingViews views = net.forward(p, x_sp, x_ps);
    if (epoch % config.kmeans_interval == 0) {
      KmeansResult km =
          kmeans(views.z_sp.data(), seg.count, views.z_sp.dim(1), config.classes, rng());
      groups = confidence_select(views.z_sp.data(), seg.count, views.z_sp.dim(1), km.assignments,
                                 km.centers, config.classes, config.select_ratio)
                   .groups;
    }
    Centers centers = recompute_centers(views.z_sp1, views.z_sp2, groups);
    Tensor sla = sla_loss(views);
    Tensor loss = sla;
    double clc_value = 0.0;
    if (static_cast<int>(centers.classes.size()) >= 2) {
      Tensor clc = clc_loss(centers.c1, centers.c2, config.tau);
      clc_value = clc.value();
      loss = total_loss(sla, clc, config.alpha);
    } else {
      ++result.clc_skipped_epochs;
    }
    opt.zero_grad();
    backward(loss);
    opt.step();
    result.log.push_back({epoch + 1, sla.value(), clc_value, loss.value()});
  }

  Tensor x_ps = sample_pixels(seg, x_p, rng);
  EmbeddingViews views = net.forward(p, x_sp, x_ps);
  KmeansResult km =
      kmeans(views.z_sp.data(), seg.count, views.z_sp.dim(1), config.classes, rng());
  result.superpixel_labels = km.assignments;
  result.pixel_labels.resize(seg.labels.size());
  for (size_t i = 0; i < seg.labels.size(); ++i)
    result.pixel_labels[i] = km.assignments[static_cast<size_t>(seg.labels[i])];
  return result;
}

void save_training_log(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(IoCode::MissingFile, "cannot create " + path);
  out.precision(10);
  for (const EpochLog& e : log)
    out << e.epoch << '\t' << e.sla << '\t' << e.clc << '\t' << e.total << '\n';
}

}  // namespace spgcc

#include "spgcc/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "spgcc/graph.hpp"
#include "spgcc/metrics.hpp"
#include "spgcc/segmentation.hpp"
#include "spgcc/trainer.hpp"
#include "spgcc/vae.hpp"

namespace spgcc {

namespace {

namespace fs = std::filesystem;

void require_artifact(const std::string& path, const std::string& producer) {
  if (!fs::exists(path))
    throw IoError(IoCode::MissingFile, "missing " + path + "; run " + producer + " first");
}

void ensure_parent_dir(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

HsiCube reduced_cube(const PipelineConfig& config) {
  require_artifact(config.hsi_path, "synth");
  HsiCube cube = load_hsi(config.hsi_path);
  if (config.pca_bands > cube.bands)
    throw IoError(IoCode::BadParameter, "pca.bands exceeds the cube's band count");
  return pca_reduce(cube, config.pca_bands);
}

}  // namespace

std::string artifact_path(const PipelineConfig& config, const std::string& name) {
  return (fs::path(config.output_dir) / name).string();
}

StageOutput run_synth(const PipelineConfig& config) {
  config.validate();
  if (config.hsi_path.empty() || config.labels_path.empty())
    throw IoError(IoCode::BadParameter, "config: data.hsi and data.labels must be set");
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // distinct random unit spectra, pairwise |cos| < 0.9
  const int k = config.synth_classes, bands = config.synth_bands;
  std::vector<std::vector<double>> spectra;
  for (int attempts = 0; static_cast<int>(spectra.size()) < k; ++attempts) {
    if (attempts > 1000 * k)
      throw IoError(IoCode::BadParameter, "synth: could not draw separated class spectra");
    std::vector<double> s(static_cast<size_t>(bands));
    double norm = 0.0;
    for (double& v : s) {
      v = gauss(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : s) v /= norm;
    bool ok = true;
    for (const auto& other : spectra) {
      double dot = 0.0;
      for (int b = 0; b < bands; ++b) dot += s[static_cast<size_t>(b)] * other[static_cast<size_t>(b)];
      if (std::fabs(dot) >= 0.9) ok = false;
    }
    if (ok) spectra.push_back(std::move(s));
  }

  // blocky class regions on a near-square grid
  const int h = config.synth_height, w = config.synth_width;
  const int ny = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(k)))));
  const int nx = (k + ny - 1) / ny;
  HsiCube cube{h, w, bands, std::vector<double>(static_cast<size_t>(h) * w * bands)};
  LabelRaster labels{h, w, std::vector<uint32_t>(static_cast<size_t>(h) * w)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int by = std::min(ny - 1, y * ny / h);
      const int bx = std::min(nx - 1, x * nx / w);
      const int c = std::min(k - 1, by * nx + bx);
      labels.ids[static_cast<size_t>(y) * w + x] = static_cast<uint32_t>(c) + 1;
      for (int b = 0; b < bands; ++b)
        cube.at(y, x, b) =
            spectra[static_cast<size_t>(c)][static_cast<size_t>(b)] + config.synth_noise * gauss(rng);
    }

  ensure_parent_dir(config.hsi_path);
  ensure_parent_dir(config.labels_path);
  save_hsi(cube, config.hsi_path);
  save_labels(labels, config.labels_path);
  return {{"hsi", config.hsi_path}, {"labels", config.labels_path}};
}

StageOutput run_pretrain(const PipelineConfig& config) {
  config.validate();
  HsiCube cube = reduced_cube(config);
  PixelCubeBatch cubes = extract_pixel_cubes(cube, config.window);
  VaeNet net(plan_vae(config.pca_bands, config.window), config.seed);
  PretrainConfig pc;
  pc.epochs = config.vae_epochs;
  pc.batch = config.vae_batch;
  pc.lr = config.vae_lr;
  pc.weight_decay = config.vae_weight_decay;
  pc.seed = config.seed;
  PretrainResult res = pretrain(net, cubes, pc);
  const std::string out = artifact_path(config, "vae.spgw");
  ensure_parent_dir(out);
  net.save(out);
  StageOutput done = {{"vae", out}};
  if (!res.epoch_loss.empty()) done.push_back({"final_loss", format_value(res.epoch_loss.back())});
  return done;
}

StageOutput run_segment(const PipelineConfig& config) {
  config.validate();
  HsiCube cube = reduced_cube(config);
  Segmentation seg =
      make_segmenter(config.seg_backend)->segment(cube, config.superpixels, config.compactness);
  const std::string out = artifact_path(config, "segmentation.hsil");
  ensure_parent_dir(out);
  save_segmentation(seg, out);
  StageOutput done = {{"segmentation", out}, {"superpixels", std::to_string(seg.count)}};
  if (!config.labels_path.empty() && fs::exists(config.labels_path)) {
    const LabelRaster truth = load_labels(config.labels_path);
    done.push_back({"homogeneity", format_value(sp_segmentation_accuracy(seg, truth))});
  }
  return done;
}

StageOutput run_features(const PipelineConfig& config) {
  config.validate();
  const std::string vae_path = artifact_path(config, "vae.spgw");
  require_artifact(vae_path, "pretrain");
  VaeNet net = VaeNet::load(vae_path);
  if (net.plan().bands != config.pca_bands || net.plan().window != config.window)
    throw IoError(IoCode::DimensionMismatch,
                  vae_path + " was trained for a different pca.bands/pixel.window");
  HsiCube cube = reduced_cube(config);
  PixelCubeBatch cubes = extract_pixel_cubes(cube, config.window);
  FeatureMatrix features = export_features(net, cubes);
  const std::string out = artifact_path(config, "features.spgf");
  save_features(features, out);
  return {{"features", out}, {"dim", std::to_string(features.dim)}};
}

StageOutput run_cluster(const PipelineConfig& config) {
  config.validate();
  const std::string features_path = artifact_path(config, "features.spgf");
  const std::string seg_path = artifact_path(config, "segmentation.hsil");
  require_artifact(features_path, "features");
  require_artifact(seg_path, "segment");
  FeatureMatrix features = load_features(features_path);
  Segmentation seg = load_segmentation(seg_path);
  if (features.count != seg.height * static_cast<int64_t>(seg.width))
    throw IoError(IoCode::DimensionMismatch, "features and segmentation cover different rasters");

  MapMatrix map = map_matrix(seg);
  Tensor x_sp = superpixel_features(map, features);
  SparseMatrix adjacency = build_adjacency(seg);
  save_edge_list(adjacency, artifact_path(config, "edges.txt"));
  SparseMatrix p = normalize_adjacency(adjacency);

  GcnNet net(features.dim, config.gcn_hidden, config.gcn_out, config.gcn_layers, config.seed);
  TrainConfig tc;
  tc.classes = config.classes;
  tc.epochs = config.train_epochs;
  tc.kmeans_interval = config.kmeans_interval;
  tc.hidden_dim = config.gcn_hidden;
  tc.output_dim = config.gcn_out;
  tc.layers = config.gcn_layers;
  tc.lr = config.train_lr;
  tc.alpha = config.alpha;
  tc.select_ratio = config.select_ratio;
  tc.tau = config.tau;
  tc.seed = config.seed;
  TrainResult res = train_spgcc(net, p, x_sp, features, seg, tc);

  LabelRaster pred{seg.height, seg.width, {}};
  pred.ids.resize(res.pixel_labels.size());
  for (size_t i = 0; i < res.pixel_labels.size(); ++i)
    pred.ids[i] = static_cast<uint32_t>(res.pixel_labels[i]) + 1;
  const std::string labels_out = artifact_path(config, "labels_pred.hsil");
  save_labels(pred, labels_out);
  const std::string ckpt_out = artifact_path(config, "gcn.spgw");
  net.save(ckpt_out);
  save_training_log(res.log, artifact_path(config, "train_log.tsv"));
  return {{"labels", labels_out},
          {"checkpoint", ckpt_out},
          {"epochs", std::to_string(res.log.size())},
          {"clc_skipped", std::to_string(res.clc_skipped_epochs)}};
}

StageOutput run_evaluate(const PipelineConfig& config) {
  config.validate();
  const std::string pred_path = artifact_path(config, "labels_pred.hsil");
  require_artifact(pred_path, "cluster");
  require_artifact(config.labels_path, "synth");
  const LabelRaster pred = load_labels(pred_path);
  const LabelRaster truth = load_labels(config.labels_path);
  MetricReport report = compute_metrics(pred, truth);
  const std::string out = artifact_path(config, "metrics.tsv");
  save_metric_report(report, out);
  return {{"metrics", out},
          {"oa", format_value(report.oa)},
          {"kappa", format_value(report.kappa)},
          {"nmi", format_value(report.nmi)}};
}

void write_ppm_map(const LabelRaster& labels, int classes, const std::string& path) {
  if (classes < 1) throw IoError(IoCode::BadParameter, "render-map: classes must be positive");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(IoCode::MissingFile, "cannot create " + path);
  out << "P6\n" << labels.width << ' ' << labels.height << "\n255\n";
  for (uint32_t id : labels.ids) {
    unsigned char rgb[3] = {0, 0, 0};
    if (id != 0) {
      if (id > static_cast<uint32_t>(classes))
        throw IoError(IoCode::BadValue,
                      "render-map: label id " + std::to_string(id) + " exceeds K");
      const double hue = 360.0 * static_cast<double>(id - 1) / static_cast<double>(classes);
      const double s = 0.75, v = 0.95;
      const double c = v * s;
      const double x = c * (1.0 - std::fabs(std::fmod(hue / 60.0, 2.0) - 1.0));
      const double m = v - c;
      double rp = 0, gp = 0, bp = 0;
      if (hue < 60) {
        rp = c; gp = x;
      } else if (hue < 120) {
        rp = x; gp = c;
      } else if (hue < 180) {
        gp = c; bp = x;
      } else if (hue < 240) {
        gp = x; bp = c;
      } else if (hue < 300) {
        rp = x; bp = c;
      } else {
        rp = c; bp = x;
      }
      rgb[0] = static_cast<unsigned char>(std::lround(255.0 * (rp + m)));
      rgb[1] = static_cast<unsigned char>(std::lround(255.0 * (gp + m)));
      rgb[2] = static_cast<unsigned char>(std::lround(255.0 * (bp + m)));
    }
    out.write(reinterpret_cast<const char*>(rgb), 3);
  }
}

StageOutput run_render_map(const PipelineConfig& config, const std::string& labels_path,
                           int classes, const std::string& out_path) {
  config.validate();
  require_artifact(labels_path, "cluster");
  const LabelRaster labels = load_labels(labels_path);
  ensure_parent_dir(out_path);
  write_ppm_map(labels, classes, out_path);
  return {{"map", out_path}};
}

StageOutput run_all(const PipelineConfig& config) {
  StageOutput done;
  for (const StageOutput& stage :
       {run_pretrain(config), run_segment(config), run_features(config), run_cluster(config),
        run_evaluate(config),
        run_render_map(config, artifact_path(config, "labels_pred.hsil"), config.classes,
                       artifact_path(config, "map.ppm"))})
    done.insert(done.end(), stage.begin(), stage.end());
  return done;
}

}  // namespace spgcc

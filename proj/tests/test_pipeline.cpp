#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "spgcc/config.hpp"
#include "spgcc/hsi.hpp"
#include "spgcc/pipeline.hpp"

using namespace spgcc;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("spgcc_pipe_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

PipelineConfig synth_config(const std::string& dir) {
  PipelineConfig c;
  c.output_dir = dir;
  c.hsi_path = dir + "/synth.hsif";
  c.labels_path = dir + "/synth.hsil";
  c.synth_height = 20;
  c.synth_width = 18;
  c.synth_bands = 6;
  c.synth_classes = 3;
  c.synth_noise = 0.02;
  return c;
}

}  // namespace

TEST_CASE("synth writes matching cube and labels") {
  const std::string dir = temp_dir("synth");
  PipelineConfig c = synth_config(dir);
  StageOutput done = run_synth(c);
  REQUIRE(done.size() == 2);
  CHECK(done[0].first == "hsi");
  CHECK(done[1].first == "labels");

  HsiCube cube = load_hsi(c.hsi_path);
  LabelRaster labels = load_labels(c.labels_path);
  CHECK(cube.height == 20);
  CHECK(cube.width == 18);
  CHECK(cube.bands == 6);
  CHECK(labels.height == 20);
  CHECK(labels.width == 18);
  // every pixel labeled with an id in 1..K
  uint32_t lo = 1000, hi = 0;
  for (uint32_t id : labels.ids) {
    lo = std::min(lo, id);
    hi = std::max(hi, id);
  }
  CHECK(lo == 1);
  CHECK(hi == 3);
}

TEST_CASE("synth is byte-identical across runs with the same seed") {
  const std::string a = temp_dir("synth_a"), b = temp_dir("synth_b");
  PipelineConfig ca = synth_config(a), cb = synth_config(b);
  run_synth(ca);
  run_synth(cb);
  CHECK(read_bytes(ca.hsi_path) == read_bytes(cb.hsi_path));
  CHECK(read_bytes(ca.labels_path) == read_bytes(cb.labels_path));

  PipelineConfig cc = synth_config(temp_dir("synth_c"));
  cc.seed = 99;
  run_synth(cc);
  CHECK(read_bytes(ca.hsi_path) != read_bytes(cc.hsi_path));
}

TEST_CASE("synth with zero noise repeats the class spectrum exactly") {
  PipelineConfig c = synth_config(temp_dir("synth_clean"));
  c.synth_noise = 0.0;
  run_synth(c);
  HsiCube cube = load_hsi(c.hsi_path);
  LabelRaster labels = load_labels(c.labels_path);

  // collect one reference pixel per class and compare all others to it
  std::vector<std::vector<double>> ref(4);
  for (int y = 0; y < cube.height; ++y)
    for (int x = 0; x < cube.width; ++x) {
      const uint32_t id = labels.ids[static_cast<size_t>(y) * cube.width + x];
      std::vector<double> px(static_cast<size_t>(cube.bands));
      double norm = 0.0;
      for (int b = 0; b < cube.bands; ++b) {
        px[static_cast<size_t>(b)] = cube.at(y, x, b);
        norm += px[static_cast<size_t>(b)] * px[static_cast<size_t>(b)];
      }
      CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));  // f32 container
      if (ref[id].empty())
        ref[id] = px;
      else
        for (int b = 0; b < cube.bands; ++b)
          CHECK(px[static_cast<size_t>(b)] == ref[id][static_cast<size_t>(b)]);
    }

  // pairwise separation |cos| < 0.9
  for (uint32_t i = 1; i <= 3; ++i)
    for (uint32_t j = i + 1; j <= 3; ++j) {
      double dot = 0.0;
      for (int b = 0; b < cube.bands; ++b)
        dot += ref[i][static_cast<size_t>(b)] * ref[j][static_cast<size_t>(b)];
      CHECK(std::fabs(dot) < 0.9);
    }
}

TEST_CASE("ppm map has correct header, palette, and byte length") {
  const std::string dir = temp_dir("ppm");
  LabelRaster labels{2, 3, {1, 2, 3, 4, 0, 1}};
  const std::string path = dir + "/map.ppm";
  write_ppm_map(labels, 4, path);
  const std::string bytes = read_bytes(path);
  const std::string header = "P6\n3 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 6 * 3);
  CHECK(bytes.substr(0, header.size()) == header);
  auto px = [&](int i) {
    const size_t o = header.size() + static_cast<size_t>(i) * 3;
    return std::vector<int>{static_cast<unsigned char>(bytes[o]),
                            static_cast<unsigned char>(bytes[o + 1]),
                            static_cast<unsigned char>(bytes[o + 2])};
  };
  CHECK(px(0) == std::vector<int>{242, 61, 61});   // class 1, hue 0
  CHECK(px(1) == std::vector<int>{151, 242, 61});  // class 2, hue 90
  CHECK(px(2) == std::vector<int>{61, 242, 242});  // class 3, hue 180
  CHECK(px(3) == std::vector<int>{151, 61, 242});  // class 4, hue 270
  CHECK(px(4) == std::vector<int>{0, 0, 0});       // unlabeled
  CHECK(px(5) == px(0));
}

TEST_CASE("ppm map rejects ids above K and renders all-zero rasters black") {
  const std::string dir = temp_dir("ppm_err");
  LabelRaster bad{1, 2, {1, 5}};
  CHECK_THROWS_AS(write_ppm_map(bad, 4, dir + "/bad.ppm"), IoError);
  CHECK_THROWS_AS(write_ppm_map(bad, 0, dir + "/bad.ppm"), IoError);

  LabelRaster zeros{2, 2, {0, 0, 0, 0}};
  const std::string path = dir + "/zeros.ppm";
  write_ppm_map(zeros, 3, path);
  const std::string bytes = read_bytes(path);
  const std::string header = "P6\n2 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 12);
  for (size_t i = header.size(); i < bytes.size(); ++i) CHECK(bytes[i] == 0);
}

TEST_CASE("stages report the producing command when artifacts are missing") {
  const std::string dir = temp_dir("deps");
  PipelineConfig c = synth_config(dir);

  auto message_of = [](auto&& fn) {
    try {
      fn();
    } catch (const IoError& e) {
      return std::string(e.what());
    }
    return std::string();
  };

  CHECK(message_of([&] { run_pretrain(c); }).find("run synth first") != std::string::npos);
  CHECK(message_of([&] { run_features(c); }).find("run pretrain first") != std::string::npos);
  std::string m = message_of([&] { run_cluster(c); });
  CHECK(m.find("run features first") != std::string::npos);
  CHECK(message_of([&] { run_evaluate(c); }).find("run cluster first") != std::string::npos);
  CHECK(message_of([&] {
          run_render_map(c, artifact_path(c, "labels_pred.hsil"), 3, dir + "/map.ppm");
        }).find("run cluster first") != std::string::npos);

  // cluster with features but no segmentation names the segment stage
  run_synth(c);
  FeatureMatrix f{static_cast<int64_t>(c.synth_height) * c.synth_width, 4, {}};
  f.values.assign(static_cast<size_t>(f.count) * f.dim, 0.5);
  save_features(f, artifact_path(c, "features.spgf"));
  CHECK(message_of([&] { run_cluster(c); }).find("run segment first") != std::string::npos);
}

TEST_CASE("config file parsing handles sections, comments, and overrides") {
  const std::string dir = temp_dir("cfg");
  const std::string path = dir + "/a.toml";
  {
    std::ofstream out(path);
    out << "# top comment\n"
        << "output_dir = \"" << dir << "/out\"\n"
        << "seed = 42\n\n"
        << "[pca]\n"
        << "bands = 5  # trailing comment\n"
        << "[train]\n"
        << "lambda = 0.8\n"
        << "lr = 1e-4\n"
        << "[segmentation]\n"
        << "backend = \"grid\"\n";
  }
  PipelineConfig c = load_config(path);
  CHECK(c.output_dir == dir + "/out");
  CHECK(c.seed == 42);
  CHECK(c.pca_bands == 5);
  CHECK(c.select_ratio == doctest::Approx(0.8));
  CHECK(c.train_lr == doctest::Approx(1e-4));
  CHECK(c.seg_backend == "grid");
  CHECK(c.window == 13);  // untouched default

  apply_overrides(c, {"pca.bands=7", "segmentation.backend=slic"});
  CHECK(c.pca_bands == 7);
  CHECK(c.seg_backend == "slic");
}

TEST_CASE("config rejects unknown keys, bad values, and malformed lines") {
  PipelineConfig c;
  CHECK_THROWS_AS(c.set("pca.band", "5"), IoError);
  CHECK_THROWS_AS(c.set("pca.bands", "five"), IoError);
  CHECK_THROWS_AS(c.set("pca.bands", "5x"), IoError);
  CHECK_THROWS_AS(c.set("train.alpha", "much"), IoError);
  CHECK_THROWS_AS(apply_overrides(c, {"no_equals_sign"}), IoError);
  CHECK_THROWS_AS(load_config("/nonexistent/path.toml"), IoError);

  const std::string dir = temp_dir("cfg_bad");
  {
    std::ofstream out(dir + "/bad1.toml");
    out << "[pca\nbands = 5\n";
  }
  CHECK_THROWS_AS(load_config(dir + "/bad1.toml"), IoError);
  {
    std::ofstream out(dir + "/bad2.toml");
    out << "just a line\n";
  }
  CHECK_THROWS_AS(load_config(dir + "/bad2.toml"), IoError);
}

TEST_CASE("validate rejects out-of-range values") {
  auto broken = [](auto&& tweak) {
    PipelineConfig c;
    tweak(c);
    CHECK_THROWS_AS(c.validate(), IoError);
  };
  PipelineConfig ok;
  CHECK_NOTHROW(ok.validate());
  broken([](PipelineConfig& c) { c.synth_height = 0; });
  broken([](PipelineConfig& c) { c.synth_bands = 2; });
  broken([](PipelineConfig& c) { c.synth_classes = 1; });
  broken([](PipelineConfig& c) { c.synth_noise = -0.1; });
  broken([](PipelineConfig& c) { c.pca_bands = 2; });
  broken([](PipelineConfig& c) { c.window = 12; });
  broken([](PipelineConfig& c) { c.window = 11; });
  broken([](PipelineConfig& c) { c.superpixels = 0; });
  broken([](PipelineConfig& c) { c.seg_backend = "ers"; });
  broken([](PipelineConfig& c) { c.vae_batch = 1; });
  broken([](PipelineConfig& c) { c.vae_lr = 0.0; });
  broken([](PipelineConfig& c) { c.gcn_layers = 1; });
  broken([](PipelineConfig& c) { c.train_lr = -1.0; });
  broken([](PipelineConfig& c) { c.select_ratio = 0.0; });
  broken([](PipelineConfig& c) { c.select_ratio = 1.5; });
  broken([](PipelineConfig& c) { c.tau = 0.0; });
  broken([](PipelineConfig& c) { c.train_epochs = 0; });
  broken([](PipelineConfig& c) { c.kmeans_interval = 0; });
  broken([](PipelineConfig& c) { c.classes = 1; });
  broken([](PipelineConfig& c) { c.output_dir = ""; });
}

TEST_CASE("tiny end-to-end run produces all artifacts and sane metrics") {
  const std::string dir = temp_dir("e2e");
  PipelineConfig c = synth_config(dir);
  c.synth_height = 26;
  c.synth_width = 26;
  c.synth_bands = 5;
  c.synth_classes = 2;
  c.synth_noise = 0.02;
  c.pca_bands = 4;
  c.window = 13;
  c.superpixels = 9;
  c.vae_epochs = 1;
  c.vae_batch = 64;
  c.gcn_hidden = 32;
  c.gcn_out = 16;
  c.classes = 2;
  c.train_epochs = 20;

  run_synth(c);
  StageOutput done = run_all(c);
  for (const std::string name : {"segmentation.hsil", "features.spgf", "edges.txt",
                                 "labels_pred.hsil", "gcn.spgw", "train_log.tsv", "metrics.tsv",
                                 "map.ppm", "vae.spgw"})
    CHECK(fs::exists(artifact_path(c, name)));

  double oa = -1.0;
  for (const auto& [name, value] : done)
    if (name == "oa") oa = std::stod(value);
  CHECK(oa >= 50.0);
  CHECK(oa <= 100.0);

  // metrics.tsv carries all nine rows
  std::ifstream in(artifact_path(c, "metrics.tsv"));
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 9);
}

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "spgcc/config.hpp"
#include "spgcc/pipeline.hpp"

namespace {

const std::vector<std::string> kConfigKeys = {
    "data.hsi",       "data.labels",
    "synth.height",   "synth.width",
    "synth.bands",    "synth.classes",
    "synth.noise",    "pca.bands",
    "pixel.window",   "segmentation.superpixels",
    "segmentation.compactness", "segmentation.backend",
    "vae.epochs",     "vae.batch",
    "vae.lr",         "vae.weight_decay",
    "gcn.hidden",     "gcn.out",
    "gcn.layers",     "train.lr",
    "train.alpha",    "train.lambda",
    "train.tau",      "train.epochs",
    "train.kmeans_interval", "cluster.classes",
    "seed",           "output_dir",
};

void print_done(const spgcc::StageOutput& done) {
  for (const auto& [name, value] : done) std::cout << "DONE " << name << "=" << value << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"superpixel graph contrastive clustering for hyperspectral images"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "TOML configuration file");
  std::vector<std::string> key_values(kConfigKeys.size());
  std::vector<CLI::Option*> key_options(kConfigKeys.size());
  for (size_t i = 0; i < kConfigKeys.size(); ++i)
    key_options[i] = app.add_option("--" + kConfigKeys[i], key_values[i],
                                    "override config key " + kConfigKeys[i]);
  // spelled-out aliases for the two global flags
  app.add_option("--output-dir", key_values[kConfigKeys.size() - 1], "output directory")
      ->excludes(key_options[kConfigKeys.size() - 1]);

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled cube");
  CLI::App* pretrain = app.add_subcommand("pretrain", "pre-train the pixel autoencoder");
  CLI::App* segment = app.add_subcommand("segment", "superpixel segmentation");
  CLI::App* features = app.add_subcommand("features", "export pre-trained pixel features");
  CLI::App* cluster = app.add_subcommand("cluster", "contrastive graph clustering");
  CLI::App* evaluate = app.add_subcommand("evaluate", "score predictions against labels");
  CLI::App* render = app.add_subcommand("render-map", "render a label raster to PPM");
  CLI::App* runall = app.add_subcommand("run-all", "run every stage in order");
  for (CLI::App* sub : {synth, pretrain, segment, features, cluster, evaluate, render, runall})
    sub->fallthrough();

  std::string render_labels, render_out;
  int render_k = 0;
  render->add_option("--labels", render_labels, "label raster to render");
  render->add_option("--k", render_k, "number of classes in the palette");
  render->add_option("--out", render_out, "output PPM path");

  CLI11_PARSE(app, argc, argv);

  try {
    spgcc::PipelineConfig config =
        config_path.empty() ? spgcc::PipelineConfig{} : spgcc::load_config(config_path);
    for (size_t i = 0; i < kConfigKeys.size(); ++i)
      if (key_options[i]->count() > 0) config.set(kConfigKeys[i], key_values[i]);
    if (app.count("--output-dir") > 0) config.set("output_dir", key_values[kConfigKeys.size() - 1]);

    spgcc::StageOutput done;
    if (synth->parsed()) done = run_synth(config);
    if (pretrain->parsed()) done = run_pretrain(config);
    if (segment->parsed()) done = run_segment(config);
    if (features->parsed()) done = run_features(config);
    if (cluster->parsed()) done = run_cluster(config);
    if (evaluate->parsed()) done = run_evaluate(config);
    if (render->parsed()) {
      if (render_labels.empty()) render_labels = artifact_path(config, "labels_pred.hsil");
      if (render_out.empty()) render_out = artifact_path(config, "map.ppm");
      done = run_render_map(config, render_labels, render_k > 0 ? render_k : config.classes,
                            render_out);
    }
    if (runall->parsed()) done = run_all(config);
    print_done(done);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

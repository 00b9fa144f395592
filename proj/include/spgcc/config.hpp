#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spgcc/hsi.hpp"

namespace spgcc {

/// Full pipeline configuration; keys are "section.name" as they appear in
/// the TOML file, every one overridable by a --section.name=value flag.
struct PipelineConfig {
  std::string hsi_path = "out/synth.hsif";     // data.hsi
  std::string labels_path = "out/synth.hsil";  // data.labels

  int synth_height = 48;       // synth.height
  int synth_width = 48;        // synth.width
  int synth_bands = 8;         // synth.bands
  int synth_classes = 4;       // synth.classes
  double synth_noise = 0.05;   // synth.noise

  int pca_bands = 8;  // pca.bands

  int window = 13;  // pixel.window

  int superpixels = 64;           // segmentation.superpixels
  double compactness = 1.0;       // segmentation.compactness
  std::string seg_backend = "slic";  // segmentation.backend

  int vae_epochs = 2;             // vae.epochs
  int vae_batch = 64;             // vae.batch
  double vae_lr = 1e-3;           // vae.lr
  double vae_weight_decay = 5e-4;  // vae.weight_decay

  int gcn_hidden = 1024;  // gcn.hidden
  int gcn_out = 512;      // gcn.out
  int gcn_layers = 2;     // gcn.layers

  double train_lr = 1e-3;        // train.lr
  double alpha = 0.1;            // train.alpha
  double select_ratio = 0.55;    // train.lambda
  double tau = 0.5;              // train.tau
  int train_epochs = 100;        // train.epochs
  int kmeans_interval = 5;       // train.kmeans_interval

  int classes = 4;  // cluster.classes

  uint64_t seed = 7;             // seed
  std::string output_dir = "out";  // output_dir

  /// Rejects any value outside its consuming module's documented range.
  void validate() const;

  /// Applies one "section.key=value" (or "seed=..."/"output_dir=...") pair.
  void set(const std::string& key, const std::string& value);
};

PipelineConfig load_config(const std::string& path);

/// Parses "key=value" override strings on top of the file contents.
void apply_overrides(PipelineConfig& config, const std::vector<std::string>& overrides);

}  // namespace spgcc

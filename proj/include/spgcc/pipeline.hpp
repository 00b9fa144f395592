#pragma once

#include <string>
#include <utility>
#include <vector>

#include "spgcc/config.hpp"
#include "spgcc/hsi.hpp"

namespace spgcc {

/// Machine-readable stage summary; the CLI prints one "DONE name=value"
/// line per entry.
using StageOutput = std::vector<std::pair<std::string, std::string>>;

std::string artifact_path(const PipelineConfig& config, const std::string& name);

StageOutput run_synth(const PipelineConfig& config);
StageOutput run_pretrain(const PipelineConfig& config);
StageOutput run_segment(const PipelineConfig& config);
StageOutput run_features(const PipelineConfig& config);
StageOutput run_cluster(const PipelineConfig& config);
StageOutput run_evaluate(const PipelineConfig& config);
StageOutput run_render_map(const PipelineConfig& config, const std::string& labels_path,
                           int classes, const std::string& out_path);
StageOutput run_all(const PipelineConfig& config);

/// Binary P6 image; class k in 1..K maps to HSV hue 360(k-1)/K with
/// S = 0.75, V = 0.95; id 0 is black.
void write_ppm_map(const LabelRaster& labels, int classes, const std::string& path);

}  // namespace spgcc

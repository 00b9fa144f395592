#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spgcc/config.hpp"
#include "spgcc/hsi.hpp"
#include "spgcc/metrics.hpp"
#include "spgcc/pipeline.hpp"
#include "spgcc/segmentation.hpp"
#include "spgcc/trainer.hpp"

namespace py = pybind11;
using namespace spgcc;

namespace {

std::map<std::string, std::string> to_dict(const StageOutput& done) {
  std::map<std::string, std::string> out;
  for (const auto& [name, value] : done) out[name] = value;
  return out;
}

LabelRaster raster_from(const std::vector<uint32_t>& ids, int height, int width) {
  if (static_cast<int64_t>(ids.size()) != static_cast<int64_t>(height) * width)
    throw IoError(IoCode::DimensionMismatch, "ids length must equal height*width");
  return LabelRaster{height, width, ids};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "superpixel graph contrastive clustering core";

  py::register_exception<IoError>(m, "IoError");

  py::class_<PipelineConfig>(m, "Config")
      .def(py::init<>())
      .def("set", &PipelineConfig::set, py::arg("key"), py::arg("value"))
      .def("validate", &PipelineConfig::validate)
      .def_readwrite("hsi_path", &PipelineConfig::hsi_path)
      .def_readwrite("labels_path", &PipelineConfig::labels_path)
      .def_readwrite("output_dir", &PipelineConfig::output_dir)
      .def_readwrite("seed", &PipelineConfig::seed)
      .def_readwrite("classes", &PipelineConfig::classes);

  m.def("load_config", &load_config, py::arg("path"));
  m.def("artifact_path", &artifact_path, py::arg("config"), py::arg("name"));

  m.def("synth", [](const PipelineConfig& c) { return to_dict(run_synth(c)); });
  m.def("pretrain", [](const PipelineConfig& c) { return to_dict(run_pretrain(c)); });
  m.def("segment", [](const PipelineConfig& c) { return to_dict(run_segment(c)); });
  m.def("features", [](const PipelineConfig& c) { return to_dict(run_features(c)); });
  m.def("cluster", [](const PipelineConfig& c) { return to_dict(run_cluster(c)); });
  m.def("evaluate", [](const PipelineConfig& c) { return to_dict(run_evaluate(c)); });
  m.def("run_all", [](const PipelineConfig& c) { return to_dict(run_all(c)); });
  m.def(
      "render_map",
      [](const PipelineConfig& c, const std::string& labels, int k, const std::string& out) {
        return to_dict(run_render_map(c, labels, k, out));
      },
      py::arg("config"), py::arg("labels"), py::arg("k"), py::arg("out"));

  m.def(
      "kmeans",
      [](const std::vector<double>& points, int64_t count, int dim, int k, uint64_t seed) {
        KmeansResult r = kmeans(points, count, dim, k, seed);
        return py::make_tuple(r.assignments, r.centers, r.objective);
      },
      py::arg("points"), py::arg("count"), py::arg("dim"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "metrics",
      [](const std::vector<uint32_t>& pred, const std::vector<uint32_t>& truth, int height,
         int width) {
        MetricReport r =
            compute_metrics(raster_from(pred, height, width), raster_from(truth, height, width));
        return std::map<std::string, double>{
            {"OA", r.oa},   {"AA", r.aa},        {"Kappa", r.kappa},
            {"NMI", r.nmi}, {"ARI", r.ari},      {"F1", r.f1},
            {"Precision", r.precision}, {"Recall", r.recall}, {"Purity", r.purity}};
      },
      py::arg("pred"), py::arg("truth"), py::arg("height"), py::arg("width"));

  m.def(
      "hungarian",
      [](const std::vector<uint32_t>& pred, const std::vector<uint32_t>& truth, int height,
         int width) {
        return hungarian_match(
            contingency(raster_from(pred, height, width), raster_from(truth, height, width)));
      },
      py::arg("pred"), py::arg("truth"), py::arg("height"), py::arg("width"));

  m.def(
      "slic_labels",
      [](const std::string& hsi_path, int superpixels, double compactness) {
        HsiCube cube = load_hsi(hsi_path);
        Segmentation seg = SlicSegmenter().segment(cube, superpixels, compactness);
        return py::make_tuple(seg.labels, seg.count, seg.height, seg.width);
      },
      py::arg("hsi_path"), py::arg("superpixels"), py::arg("compactness") = 1.0);

  m.def(
      "pca_reduce_file",
      [](const std::string& src, const std::string& dst, int bands) {
        save_hsi(pca_reduce(load_hsi(src), bands), dst);
      },
      py::arg("src"), py::arg("dst"), py::arg("bands"));

  m.def("load_labels_file", [](const std::string& path) {
    LabelRaster r = load_labels(path);
    return py::make_tuple(r.ids, r.height, r.width);
  });
}

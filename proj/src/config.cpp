#include "spgcc/config.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

namespace spgcc {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string parse_string(const std::string& raw, const std::string&) {
  // quoted in the file, optionally bare when given as a flag override
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
    return raw.substr(1, raw.size() - 2);
  return raw;
}

int parse_int(const std::string& raw, const std::string& key) {
  try {
    size_t used = 0;
    const long long v = std::stoll(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw IoError(IoCode::BadParameter, "config: " + key + " expects an integer, got " + raw);
  }
}

uint64_t parse_u64(const std::string& raw, const std::string& key) {
  try {
    size_t used = 0;
    const uint64_t v = std::stoull(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw IoError(IoCode::BadParameter,
                  "config: " + key + " expects an unsigned integer, got " + raw);
  }
}

double parse_double(const std::string& raw, const std::string& key) {
  try {
    size_t used = 0;
    const double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw IoError(IoCode::BadParameter, "config: " + key + " expects a number, got " + raw);
  }
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (key == "data.hsi")
    hsi_path = parse_string(value, key);
  else if (key == "data.labels")
    labels_path = parse_string(value, key);
  else if (key == "synth.height")
    synth_height = parse_int(value, key);
  else if (key == "synth.width")
    synth_width = parse_int(value, key);
  else if (key == "synth.bands")
    synth_bands = parse_int(value, key);
  else if (key == "synth.classes")
    synth_classes = parse_int(value, key);
  else if (key == "synth.noise")
    synth_noise = parse_double(value, key);
  else if (key == "pca.bands")
    pca_bands = parse_int(value, key);
  else if (key == "pixel.window")
    window = parse_int(value, key);
  else if (key == "segmentation.superpixels")
    superpixels = parse_int(value, key);
  else if (key == "segmentation.compactness")
    compactness = parse_double(value, key);
  else if (key == "segmentation.backend")
    seg_backend = parse_string(value, key);
  else if (key == "vae.epochs")
    vae_epochs = parse_int(value, key);
  else if (key == "vae.batch")
    vae_batch = parse_int(value, key);
  else if (key == "vae.lr")
    vae_lr = parse_double(value, key);
  else if (key == "vae.weight_decay")
    vae_weight_decay = parse_double(value, key);
  else if (key == "gcn.hidden")
    gcn_hidden = parse_int(value, key);
  else if (key == "gcn.out")
    gcn_out = parse_int(value, key);
  else if (key == "gcn.layers")
    gcn_layers = parse_int(value, key);
  else if (key == "train.lr")
    train_lr = parse_double(value, key);
  else if (key == "train.alpha")
    alpha = parse_double(value, key);
  else if (key == "train.lambda")
    select_ratio = parse_double(value, key);
  else if (key == "train.tau")
    tau = parse_double(value, key);
  else if (key == "train.epochs")
    train_epochs = parse_int(value, key);
  else if (key == "train.kmeans_interval")
    kmeans_interval = parse_int(value, key);
  else if (key == "cluster.classes")
    classes = parse_int(value, key);
  else if (key == "seed")
    seed = parse_u64(value, key);
  else if (key == "output_dir")
    output_dir = parse_string(value, key);
  else
    throw IoError(IoCode::BadParameter, "config: unknown key " + key);
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw IoError(IoCode::BadParameter, "config: " + what);
  };
  if (synth_height < 1 || synth_width < 1) fail("synth.height/width must be positive");
  if (synth_bands < 3) fail("synth.bands must be at least 3");
  if (synth_classes < 2) fail("synth.classes must be at least 2");
  if (synth_noise < 0.0) fail("synth.noise must be nonnegative");
  if (pca_bands < 3) fail("pca.bands must be at least 3");
  if (window < 13 || window % 2 == 0) fail("pixel.window must be odd and at least 13");
  if (superpixels < 1) fail("segmentation.superpixels must be positive");
  if (compactness < 0.0) fail("segmentation.compactness must be nonnegative");
  if (seg_backend != "slic" && seg_backend != "grid")
    fail("segmentation.backend must be \"slic\" or \"grid\"");
  if (vae_epochs < 0) fail("vae.epochs must be nonnegative");
  if (vae_batch < 2) fail("vae.batch must be at least 2");
  if (vae_lr <= 0.0) fail("vae.lr must be positive");
  if (vae_weight_decay < 0.0) fail("vae.weight_decay must be nonnegative");
  if (gcn_hidden < 1 || gcn_out < 1) fail("gcn.hidden and gcn.out must be positive");
  if (gcn_layers < 2) fail("gcn.layers must be at least 2");
  if (train_lr <= 0.0) fail("train.lr must be positive");
  if (alpha < 0.0) fail("train.alpha must be nonnegative");
  if (select_ratio <= 0.0 || select_ratio > 1.0) fail("train.lambda must lie in (0, 1]");
  if (tau <= 0.0) fail("train.tau must be positive");
  if (train_epochs < 1) fail("train.epochs must be positive");
  if (kmeans_interval < 1) fail("train.kmeans_interval must be at least 1");
  if (classes < 2) fail("cluster.classes must be at least 2");
  if (output_dir.empty()) fail("output_dir must not be empty");
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoCode::MissingFile, "cannot open config " + path);
  PipelineConfig config;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw IoError(IoCode::BadParameter,
                      path + ":" + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(IoCode::BadParameter,
                    path + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    config.set(section.empty() ? key : section + "." + key, value);
  }
  return config;
}

void apply_overrides(PipelineConfig& config, const std::vector<std::string>& overrides) {
  for (const std::string& item : overrides) {
    const size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw IoError(IoCode::BadParameter, "override must be key=value, got " + item);
    config.set(trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
  }
}

}  // namespace spgcc

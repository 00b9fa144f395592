#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spgcc/graph.hpp"
#include "spgcc/hsi.hpp"
#include "spgcc/segmentation.hpp"
#include "spgcc/tensor.hpp"

namespace spgcc {

/// Four unit-row embedding views plus their concatenation (Eq. 12).
struct EmbeddingViews {
  Tensor z_sp1, z_sp2;  // M x out, superpixel branch outputs
  Tensor z_p1, z_p2;    // M x out, sampled-pixel branch outputs
  Tensor z_sp;          // M x 2*out, [z_sp1 | z_sp2]
};

/// Dual-branch GCN: layers 1..L-1 shared, layer L split into two branches
/// with unshared weights and no ReLU, rows L2-normalized.
class GcnNet {
 public:
  GcnNet(int input_dim, int hidden_dim, int output_dim, int layers, uint64_t seed);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  int layers() const { return layers_; }

  EmbeddingViews forward(const SparseMatrix& p, const Tensor& x_sp, const Tensor& x_p);
  std::vector<Tensor> parameters();

  void save(const std::string& path);
  static GcnNet load(const std::string& path);

 private:
  int input_dim_, hidden_dim_, output_dim_, layers_;
  std::vector<Tensor> shared_;  // L-1 weights
  Tensor branch1_, branch2_;
};

struct KmeansResult {
  std::vector<int> assignments;  // point -> cluster
  std::vector<double> centers;   // k x dim row-major
  int k = 0;
  int dim = 0;
  double objective = 0.0;               // final within-cluster sum of squares
  std::vector<double> objective_trace;  // after every assignment step
};

/// K-means++ seeding followed by Lloyd iterations (fixpoint or 300 rounds);
/// empty clusters are reseeded to the globally farthest point.
KmeansResult kmeans(const std::vector<double>& points, int64_t count, int dim, int k,
                    uint64_t seed);

struct ConfidenceSelection {
  std::vector<double> distances;         // d_i per Eq. 13
  std::vector<std::vector<int>> groups;  // h_k, one per class
  int selected = 0;                      // round(lambda * M)
};

ConfidenceSelection confidence_select(const std::vector<double>& points, int64_t count, int dim,
                                      const std::vector<int>& assignments,
                                      const std::vector<double>& centers, int k, double lambda);

struct Centers {
  Tensor c1, c2;             // valid-class rows only, unit norm
  std::vector<int> classes;  // class id per row
  int dropped = 0;           // classes excluded (empty h_k or zero mean)
};

/// Eq. 14 followed by row normalization; degenerate classes are dropped.
Centers recompute_centers(const Tensor& z1, const Tensor& z2,
                          const std::vector<std::vector<int>>& groups);

/// Uniformly draws one member pixel's feature row per superpixel.
Tensor sample_pixels(const Segmentation& seg, const FeatureMatrix& x_p, std::mt19937_64& rng);

/// Eqs. 15-18: mean of the six Frobenius alignment terms, divided by M.
Tensor sla_loss(const EmbeddingViews& views);
/// Eq. 19, symmetric form, log-sum-exp stabilized.
Tensor clc_loss(const Tensor& c1, const Tensor& c2, double tau);
/// Eq. 20.
Tensor total_loss(const Tensor& sla, const Tensor& clc, double alpha);

struct TrainConfig {
  int classes = 0;
  int epochs = 100;
  int kmeans_interval = 5;
  int hidden_dim = 1024;
  int output_dim = 512;
  int layers = 2;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  double alpha = 0.1;
  double select_ratio = 0.55;  // lambda
  double tau = 0.5;
  uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double sla = 0.0, clc = 0.0, total = 0.0;
};

struct TrainResult {
  std::vector<int> superpixel_labels;
  std::vector<int> pixel_labels;
  std::vector<EpochLog> log;
  int clc_skipped_epochs = 0;
};

TrainResult train_spgcc(GcnNet& net, const SparseMatrix& p, const Tensor& x_sp,
                        const FeatureMatrix& x_p, const Segmentation& seg,
                        const TrainConfig& config);

/// One line per epoch: "epoch<TAB>loss_sla<TAB>loss_clc<TAB>total".
void save_training_log(const std::vector<EpochLog>& log, const std::string& path);

}  // namespace spgcc

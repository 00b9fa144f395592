#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spgcc/hsi.hpp"
#include "spgcc/tensor.hpp"

namespace spgcc {

/// Shape propagation of the hybrid 3-D/2-D autoencoder for a given band
/// count and window size. Depth kernels shrink to the largest odd value
/// fitting the remaining depth when the band count is small.
struct VaePlan {
  int bands = 0;
  int window = 0;
  int depth_kernel[3] = {0, 0, 0};
  int depth[3] = {0, 0, 0};   // band axis after each 3-D stage
  int side[4] = {0, 0, 0, 0};  // spatial side after each conv stage
  int conv2d_in = 0;           // 32 * depth[2], channels fed to the 2-D stage
  int pooled_dim = 1024;       // 64 * 4 * 4
  int latent_dim = 128;
  // per-stage output shapes with -1 in the batch slot, encoder then decoder
  std::vector<Shape> encoder_shapes;
  std::vector<Shape> decoder_shapes;
};

VaePlan plan_vae(int bands, int window);

struct EncodeResult {
  Tensor pooled;  // B x 1024, the flattened pooling output
  Tensor mu;      // B x 128
  Tensor logvar;  // B x 128, clamped to [-10, 10]
};

class VaeNet {
 public:
  VaeNet(const VaePlan& plan, uint64_t seed);

  const VaePlan& plan() const { return plan_; }

  EncodeResult encode(const Tensor& batch, bool training);
  Tensor decode(const Tensor& q, bool training);

  /// Eq. 5: q = mu + eps * sigma with eps ~ N(0,1); gradients flow through
  /// mu and logvar only.
  Tensor reparameterize(const Tensor& mu, const Tensor& logvar, std::mt19937_64& rng);

  std::vector<Tensor> parameters();

  void save(const std::string& path);
  static VaeNet load(const std::string& path);

 private:
  explicit VaeNet(const VaePlan& plan);
  std::vector<Tensor> state_tensors();

  VaePlan plan_;
  // encoder
  Tensor ek1_, eb1_, ek2_, eb2_, ek3_, eb3_, ek4_, eb4_;
  Tensor eg1_, ee1_, eg2_, ee2_, eg3_, ee3_, eg4_, ee4_;
  BatchNormState es1_, es2_, es3_, es4_;
  Tensor fw1_, fb1_, mw_, mb_, vw_, vb_;
  // decoder
  Tensor dw1_, db1_, dw2_, db2_;
  Tensor dk1_, dc1_, dk2_, dc2_, dk3_, dc3_, dk4_, dc4_;
  Tensor dg1_, de1_, dg2_, de2_, dg3_, de3_, dg4_, de4_;
  BatchNormState ds1_, ds2_, ds3_, ds4_;
};

/// Eq. 6 averaged over the batch.
Tensor distribution_loss(const Tensor& mu, const Tensor& logvar);
/// Eq. 7 averaged over the batch.
Tensor reconstruction_loss(const Tensor& p, const Tensor& p_bar);

struct PretrainConfig {
  int epochs = 100;
  int batch = 128;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  uint64_t seed = 0;
};

struct PretrainResult {
  std::vector<double> epoch_loss;  // mean total loss per epoch
};

/// Copies cubes[indices] into a [B,1,bands,window,window] input tensor.
Tensor cubes_to_tensor(const PixelCubeBatch& cubes, const std::vector<int64_t>& indices);

PretrainResult pretrain(VaeNet& net, const PixelCubeBatch& cubes, const PretrainConfig& config);

/// N x 1024 pooling outputs in eval mode (batchnorm running stats).
FeatureMatrix export_features(VaeNet& net, const PixelCubeBatch& cubes, int batch = 256);

}  // namespace spgcc

#include "spgcc/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spgcc/checkpoint.hpp"

namespace spgcc {

namespace {

int largest_odd_at_most(int x) { return x % 2 == 1 ? x : x - 1; }

Tensor kaiming_uniform(Shape shape, int64_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(static_cast<size_t>(shape_size(shape)));
  for (double& v : values) v = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

Tensor param_zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor param_ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

}  // namespace

VaePlan plan_vae(int bands, int window) {
  if (window < 13 || window % 2 == 0)
    throw IoError(IoCode::BadParameter,
                  "plan_vae: window must be odd and at least 13, got " + std::to_string(window));
  VaePlan p;
  p.bands = bands;
  p.window = window;
  const int defaults[3] = {7, 5, 3};
  int remaining = bands;
  for (int i = 0; i < 3; ++i) {
    const int k = largest_odd_at_most(std::min(defaults[i], remaining));
    if (k < 1)
      throw IoError(IoCode::BadParameter,
                    "plan_vae: band count " + std::to_string(bands) + " too small");
    p.depth_kernel[i] = k;
    remaining = remaining - k + 1;
    p.depth[i] = remaining;
  }
  for (int i = 0; i < 4; ++i) p.side[i] = window - 2 * (i + 1);
  p.conv2d_in = 32 * p.depth[2];

  const int s4 = p.side[3];
  p.encoder_shapes = {
      {-1, 8, p.depth[0], p.side[0], p.side[0]},
      {-1, 16, p.depth[1], p.side[1], p.side[1]},
      {-1, 32, p.depth[2], p.side[2], p.side[2]},
      {-1, p.conv2d_in, p.side[2], p.side[2]},
      {-1, 64, s4, s4},
      {-1, 64, 4, 4},
      {-1, p.pooled_dim},
      {-1, 512},
      {-1, p.latent_dim},
  };
  p.decoder_shapes = {
      {-1, 256},
      {-1, 64 * s4 * s4},
      {-1, 64, s4, s4},
      {-1, p.conv2d_in, p.side[2], p.side[2]},
      {-1, 32, p.depth[2], p.side[2], p.side[2]},
      {-1, 16, p.depth[1], p.side[1], p.side[1]},
      {-1, 8, p.depth[0], p.side[0], p.side[0]},
      {-1, 1, bands, window, window},
  };
  return p;
}

VaeNet::VaeNet(const VaePlan& plan) : plan_(plan) {}

VaeNet::VaeNet(const VaePlan& plan, uint64_t seed) : plan_(plan) {
  std::mt19937_64 rng(seed);
  const int* dk = plan.depth_kernel;
  const int c2 = plan.conv2d_in;
  const int s4 = plan.side[3];

  ek1_ = kaiming_uniform({8, 1, dk[0], 3, 3}, 1 * dk[0] * 9, rng);
  eb1_ = param_zeros({8});
  ek2_ = kaiming_uniform({16, 8, dk[1], 3, 3}, 8 * dk[1] * 9, rng);
  eb2_ = param_zeros({16});
  ek3_ = kaiming_uniform({32, 16, dk[2], 3, 3}, 16 * dk[2] * 9, rng);
  eb3_ = param_zeros({32});
  ek4_ = kaiming_uniform({64, c2, 3, 3}, static_cast<int64_t>(c2) * 9, rng);
  eb4_ = param_zeros({64});
  eg1_ = param_ones({8});
  ee1_ = param_zeros({8});
  eg2_ = param_ones({16});
  ee2_ = param_zeros({16});
  eg3_ = param_ones({32});
  ee3_ = param_zeros({32});
  eg4_ = param_ones({64});
  ee4_ = param_zeros({64});
  es1_ = BatchNormState(8);
  es2_ = BatchNormState(16);
  es3_ = BatchNormState(32);
  es4_ = BatchNormState(64);

  fw1_ = kaiming_uniform({plan.pooled_dim, 512}, plan.pooled_dim, rng);
  fb1_ = param_zeros({512});
  mw_ = kaiming_uniform({512, plan.latent_dim}, 512, rng);
  mb_ = param_zeros({plan.latent_dim});
  vw_ = kaiming_uniform({512, plan.latent_dim}, 512, rng);
  vb_ = param_zeros({plan.latent_dim});

  dw1_ = kaiming_uniform({plan.latent_dim, 256}, plan.latent_dim, rng);
  db1_ = param_zeros({256});
  dw2_ = kaiming_uniform({256, 64 * s4 * s4}, 256, rng);
  db2_ = param_zeros({64 * s4 * s4});
  dk1_ = kaiming_uniform({64, c2, 3, 3}, 64 * 9, rng);
  dc1_ = param_zeros({c2});
  dk2_ = kaiming_uniform({32, 16, dk[2], 3, 3}, 32 * dk[2] * 9, rng);
  dc2_ = param_zeros({16});
  dk3_ = kaiming_uniform({16, 8, dk[1], 3, 3}, 16 * dk[1] * 9, rng);
  dc3_ = param_zeros({8});
  dk4_ = kaiming_uniform({8, 1, dk[0], 3, 3}, 8 * dk[0] * 9, rng);
  dc4_ = param_zeros({1});
  dg1_ = param_ones({c2});
  de1_ = param_zeros({c2});
  dg2_ = param_ones({16});
  de2_ = param_zeros({16});
  dg3_ = param_ones({8});
  de3_ = param_zeros({8});
  dg4_ = param_ones({1});
  de4_ = param_zeros({1});
  ds1_ = BatchNormState(c2);
  ds2_ = BatchNormState(16);
  ds3_ = BatchNormState(8);
  ds4_ = BatchNormState(1);
}

EncodeResult VaeNet::encode(const Tensor& batch, bool training) {
  if (batch.rank() != 5 || batch.dim(1) != 1 || batch.dim(2) != plan_.bands ||
      batch.dim(3) != plan_.window || batch.dim(4) != plan_.window)
    throw DimensionError("encode: input " + shape_str(batch.shape()) + " does not match [B,1," +
                         std::to_string(plan_.bands) + "," + std::to_string(plan_.window) + "," +
                         std::to_string(plan_.window) + "]");
  const int b = batch.dim(0);
  Tensor x = relu(batch_norm(conv3d(batch, ek1_, eb1_), eg1_, ee1_, es1_, training));
  x = relu(batch_norm(conv3d(x, ek2_, eb2_), eg2_, ee2_, es2_, training));
  x = relu(batch_norm(conv3d(x, ek3_, eb3_), eg3_, ee3_, es3_, training));
  x = reshape(x, {b, plan_.conv2d_in, plan_.side[2], plan_.side[2]});
  x = relu(batch_norm(conv2d(x, ek4_, eb4_), eg4_, ee4_, es4_, training));
  x = adaptive_avg_pool2d(x, 4, 4);
  Tensor pooled = reshape(x, {b, plan_.pooled_dim});
  Tensor h = relu(linear(pooled, fw1_, fb1_));
  Tensor mu = linear(h, mw_, mb_);
  Tensor logvar = clamp(linear(h, vw_, vb_), -10.0, 10.0);
  return {pooled, mu, logvar};
}

Tensor VaeNet::decode(const Tensor& q, bool training) {
  if (q.rank() != 2 || q.dim(1) != plan_.latent_dim)
    throw DimensionError("decode: latent " + shape_str(q.shape()) + " does not match [B," +
                         std::to_string(plan_.latent_dim) + "]");
  const int b = q.dim(0);
  const int s4 = plan_.side[3];
  Tensor x = relu(linear(q, dw1_, db1_));
  x = relu(linear(x, dw2_, db2_));
  x = reshape(x, {b, 64, s4, s4});
  x = relu(batch_norm(deconv2d(x, dk1_, dc1_), dg1_, de1_, ds1_, training));
  x = reshape(x, {b, 32, plan_.depth[2], plan_.side[2], plan_.side[2]});
  x = relu(batch_norm(deconv3d(x, dk2_, dc2_), dg2_, de2_, ds2_, training));
  x = relu(batch_norm(deconv3d(x, dk3_, dc3_), dg3_, de3_, ds3_, training));
  x = batch_norm(deconv3d(x, dk4_, dc4_), dg4_, de4_, ds4_, training);
  return x;
}

Tensor VaeNet::reparameterize(const Tensor& mu, const Tensor& logvar, std::mt19937_64& rng) {
  if (mu.shape() != logvar.shape())
    throw DimensionError("reparameterize: mu " + shape_str(mu.shape()) + " vs logvar " +
                         shape_str(logvar.shape()));
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> eps(static_cast<size_t>(mu.size()));
  for (double& e : eps) e = dist(rng);
  Tensor eps_t = Tensor::from_data(mu.shape(), std::move(eps));
  return add(mu, mul(eps_t, exp(scale(logvar, 0.5))));
}

std::vector<Tensor> VaeNet::parameters() {
  return {ek1_, eb1_, eg1_, ee1_, ek2_, eb2_, eg2_, ee2_, ek3_, eb3_, eg3_, ee3_,
          ek4_, eb4_, eg4_, ee4_, fw1_, fb1_, mw_,  mb_,  vw_,  vb_,  dw1_, db1_,
          dw2_, db2_, dk1_, dc1_, dg1_, de1_, dk2_, dc2_, dg2_, de2_, dk3_, dc3_,
          dg3_, de3_, dk4_, dc4_, dg4_, de4_};
}

std::vector<Tensor> VaeNet::state_tensors() {
  std::vector<Tensor> state = parameters();
  for (BatchNormState* s : {&es1_, &es2_, &es3_, &es4_, &ds1_, &ds2_, &ds3_, &ds4_}) {
    const int c = static_cast<int>(s->running_mean.size());
    state.push_back(Tensor::from_data({c}, std::vector<double>(s->running_mean)));
    state.push_back(Tensor::from_data({c}, std::vector<double>(s->running_var)));
    state.push_back(Tensor::from_data({1}, {static_cast<double>(s->num_batches)}));
  }
  return state;
}

void VaeNet::save(const std::string& path) {
  std::vector<Tensor> out;
  out.push_back(Tensor::from_data(
      {2}, {static_cast<double>(plan_.bands), static_cast<double>(plan_.window)}));
  for (Tensor& t : state_tensors()) out.push_back(t);
  save_spgw(out, path);
}

VaeNet VaeNet::load(const std::string& path) {
  std::vector<Tensor> in = load_spgw(path);
  if (in.empty() || in.front().size() != 2)
    throw IoError(IoCode::DimensionMismatch, path + ": missing architecture header");
  const int bands = static_cast<int>(in.front().data()[0]);
  const int window = static_cast<int>(in.front().data()[1]);
  VaeNet net(plan_vae(bands, window), 0);
  std::vector<Tensor> params = net.parameters();
  std::vector<BatchNormState*> bns = {&net.es1_, &net.es2_, &net.es3_, &net.es4_,
                                      &net.ds1_, &net.ds2_, &net.ds3_, &net.ds4_};
  if (in.size() != 1 + params.size() + bns.size() * 3)
    throw IoError(IoCode::DimensionMismatch, path + ": wrong tensor count");
  size_t k = 1;
  for (Tensor& p : params) {
    if (in[k].shape() != p.shape())
      throw IoError(IoCode::DimensionMismatch, path + ": parameter shape mismatch");
    p.data() = in[k].data();
    ++k;
  }
  for (BatchNormState* s : bns) {
    s->running_mean = in[k++].data();
    s->running_var = in[k++].data();
    s->num_batches = static_cast<int64_t>(in[k++].data()[0]);
  }
  return net;
}

Tensor distribution_loss(const Tensor& mu, const Tensor& logvar) {
  if (mu.shape() != logvar.shape())
    throw DimensionError("distribution_loss: mu " + shape_str(mu.shape()) + " vs logvar " +
                         shape_str(logvar.shape()));
  const int b = mu.dim(0);
  Tensor ones = Tensor::full(mu.shape(), 1.0);
  Tensor terms = sub(sub(add(mul(mu, mu), exp(logvar)), logvar), ones);
  return scale(sum(terms), 0.5 / static_cast<double>(b));
}

Tensor reconstruction_loss(const Tensor& p, const Tensor& p_bar) {
  if (p.shape() != p_bar.shape())
    throw DimensionError("reconstruction_loss: " + shape_str(p.shape()) + " vs " +
                         shape_str(p_bar.shape()));
  return scale(frobenius_sq_diff(p, p_bar), 0.5 / static_cast<double>(p.dim(0)));
}

Tensor cubes_to_tensor(const PixelCubeBatch& cubes, const std::vector<int64_t>& indices) {
  const int64_t cs = cubes.cube_size();
  std::vector<double> values(static_cast<size_t>(indices.size()) * cs);
  for (size_t i = 0; i < indices.size(); ++i) {
    const float* src = cubes.cube(indices[i]);
    double* dst = &values[i * static_cast<size_t>(cs)];
    for (int64_t j = 0; j < cs; ++j) dst[j] = static_cast<double>(src[j]);
  }
  return Tensor::from_data(
      {static_cast<int>(indices.size()), 1, cubes.bands, cubes.window, cubes.window},
      std::move(values));
}

PretrainResult pretrain(VaeNet& net, const PixelCubeBatch& cubes, const PretrainConfig& config) {
  if (config.batch < 2)
    throw IoError(IoCode::BadParameter, "pretrain: batch size must be at least 2");
  if (cubes.count < 2)
    throw IoError(IoCode::BadParameter, "pretrain: need at least 2 cubes");
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  adam_cfg.weight_decay = config.weight_decay;
  Adam opt(net.parameters(), adam_cfg);
  std::mt19937_64 rng(config.seed);

  PretrainResult result;
  std::vector<int64_t> order(static_cast<size_t>(cubes.count));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int64_t seen = 0;
    for (int64_t start = 0; start < cubes.count; start += config.batch) {
      const int64_t end = std::min(cubes.count, start + config.batch);
      if (end - start < 2) break;  // batchnorm needs 2+; drop the remainder
      std::vector<int64_t> idx(order.begin() + start, order.begin() + end);
      Tensor p = cubes_to_tensor(cubes, idx);
      EncodeResult enc = net.encode(p, true);
      Tensor q = net.reparameterize(enc.mu, enc.logvar, rng);
      Tensor p_bar = net.decode(q, true);
      Tensor loss = add(distribution_loss(enc.mu, enc.logvar), reconstruction_loss(p, p_bar));
      opt.zero_grad();
      backward(loss);
      opt.step();
      total += loss.value() * static_cast<double>(end - start);
      seen += end - start;
    }
    result.epoch_loss.push_back(total / static_cast<double>(seen));
  }
  return result;
}

FeatureMatrix export_features(VaeNet& net, const PixelCubeBatch& cubes, int batch) {
  FeatureMatrix out;
  out.count = cubes.count;
  out.dim = net.plan().pooled_dim;
  out.values.resize(static_cast<size_t>(cubes.count) * out.dim);
  for (int64_t start = 0; start < cubes.count; start += batch) {
    const int64_t end = std::min(cubes.count, start + batch);
    std::vector<int64_t> idx(static_cast<size_t>(end - start));
    std::iota(idx.begin(), idx.end(), start);
    EncodeResult enc = net.encode(cubes_to_tensor(cubes, idx), false);
    std::copy(enc.pooled.data().begin(), enc.pooled.data().end(),
              out.values.begin() + static_cast<size_t>(start) * out.dim);
  }
  return out;
}

}  // namespace spgcc

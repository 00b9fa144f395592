#include "spgcc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace spgcc {

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_positive_shape(const Shape& shape) {
  for (int d : shape) {
    if (d < 1) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
  }
}

void check_rank(const Tensor& t, int rank, const char* op, const char* name) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + name + " must have rank " +
                         std::to_string(rank) + ", got shape " + shape_str(t.shape()));
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts) {
    if (t->requires_grad() || t->impl()->backward_fn) return true;
  }
  return false;
}

Tensor make_result(Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(TensorImpl&)> backward_fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  if (any_requires_grad(inputs)) {
    impl->requires_grad = true;
    for (const Tensor* t : inputs) impl->parents.push_back(t->impl());
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(impl);
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_positive_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<size_t>(shape_size(shape)), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return wrap(impl);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
  check_positive_shape(shape);
  if (shape_size(shape) != static_cast<int64_t>(values.size())) {
    throw DimensionError("from_data: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return wrap(impl);
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

double Tensor::value() const {
  if (size() != 1) {
    throw DimensionError("value(): tensor of shape " + shape_str(shape()) + " is not scalar");
  }
  return data()[0];
}

Tape Tape::record(TensorImpl* root) {
  Tape tape;
  std::unordered_set<TensorImpl*> seen;
  // Iterative post-order DFS.
  struct Frame {
    TensorImpl* node;
    size_t next_child;
  };
  std::vector<Frame> stack;
  if (seen.insert(root).second) stack.push_back({root, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.node->parents.size()) {
      TensorImpl* child = f.node->parents[f.next_child++].get();
      if (seen.insert(child).second) stack.push_back({child, 0});
    } else {
      tape.nodes.push_back(f.node);
      stack.pop_back();
    }
  }
  return tape;
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw DimensionError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  Tape tape = Tape::record(loss.impl().get());
  for (TensorImpl* node : tape.nodes) node->grad.assign(node->data.size(), 0.0);
  loss.impl()->grad[0] = 1.0;
  for (auto it = tape.nodes.rbegin(); it != tape.nodes.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

// ---------------------------------------------------------------------------
// convolution family
// ---------------------------------------------------------------------------

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  check_rank(input, 5, "conv3d", "input");
  check_rank(kernel, 5, "conv3d", "kernel");
  check_rank(bias, 1, "conv3d", "bias");
  const int n = input.dim(0), ci = input.dim(1), d = input.dim(2), h = input.dim(3),
            w = input.dim(4);
  const int co = kernel.dim(0), kd = kernel.dim(2), kh = kernel.dim(3), kw = kernel.dim(4);
  if (kernel.dim(1) != ci)
    throw DimensionError("conv3d: kernel input channels " + std::to_string(kernel.dim(1)) +
                         " != input channels " + std::to_string(ci));
  if (bias.dim(0) != co) throw DimensionError("conv3d: bias size != output channels");
  if (kd > d) throw DimensionError("conv3d: kernel depth exceeds input depth");
  if (kh > h) throw DimensionError("conv3d: kernel height exceeds input height");
  if (kw > w) throw DimensionError("conv3d: kernel width exceeds input width");
  const int od = d - kd + 1, oh = h - kh + 1, ow = w - kw + 1;

  const auto& x = input.data();
  const auto& k = kernel.data();
  const auto& b = bias.data();
  std::vector<double> y(static_cast<size_t>(n) * co * od * oh * ow);

  auto xi = [=](int nn, int c, int z, int yy, int xx) {
    return (((static_cast<int64_t>(nn) * ci + c) * d + z) * h + yy) * w + xx;
  };
  auto ki = [=](int o, int c, int z, int yy, int xx) {
    return (((static_cast<int64_t>(o) * ci + c) * kd + z) * kh + yy) * kw + xx;
  };
  auto yi = [=](int nn, int o, int z, int yy, int xx) {
    return (((static_cast<int64_t>(nn) * co + o) * od + z) * oh + yy) * ow + xx;
  };

  for (int nn = 0; nn < n; ++nn)
    for (int o = 0; o < co; ++o)
      for (int z = 0; z < od; ++z)
        for (int r = 0; r < oh; ++r)
          for (int cc = 0; cc < ow; ++cc) {
            double acc = b[static_cast<size_t>(o)];
            for (int c = 0; c < ci; ++c)
              for (int dz = 0; dz < kd; ++dz)
                for (int dy = 0; dy < kh; ++dy) {
                  const double* xp = &x[static_cast<size_t>(xi(nn, c, z + dz, r + dy, cc))];
                  const double* kp = &k[static_cast<size_t>(ki(o, c, dz, dy, 0))];
                  for (int dx = 0; dx < kw; ++dx) acc += xp[dx] * kp[dx];
                }
            y[static_cast<size_t>(yi(nn, o, z, r, cc))] = acc;
          }

  return make_result(
      {n, co, od, oh, ow}, std::move(y), {&input, &kernel, &bias},
      [=, xin = input.impl(), kin = kernel.impl(), bin = bias.impl()](TensorImpl& self) {
        xin->ensure_grad();
        kin->ensure_grad();
        bin->ensure_grad();
        const auto& g = self.grad;
        const auto& x = xin->data;
        const auto& k = kin->data;
        for (int nn = 0; nn < n; ++nn)
          for (int o = 0; o < co; ++o)
            for (int z = 0; z < od; ++z)
              for (int r = 0; r < oh; ++r)
                for (int cc = 0; cc < ow; ++cc) {
                  const double gv = g[static_cast<size_t>(yi(nn, o, z, r, cc))];
                  if (gv == 0.0) continue;
                  bin->grad[static_cast<size_t>(o)] += gv;
                  for (int c = 0; c < ci; ++c)
                    for (int dz = 0; dz < kd; ++dz)
                      for (int dy = 0; dy < kh; ++dy)
                        for (int dx = 0; dx < kw; ++dx) {
                          xin->grad[static_cast<size_t>(xi(nn, c, z + dz, r + dy, cc + dx))] +=
                              gv * k[static_cast<size_t>(ki(o, c, dz, dy, dx))];
                          kin->grad[static_cast<size_t>(ki(o, c, dz, dy, dx))] +=
                              gv * x[static_cast<size_t>(xi(nn, c, z + dz, r + dy, cc + dx))];
                        }
                }
      });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  check_rank(input, 4, "conv2d", "input");
  check_rank(kernel, 4, "conv2d", "kernel");
  // Express 2-D convolution as 3-D with a singleton depth axis.
  const Tensor x5 = reshape(input, {input.dim(0), input.dim(1), 1, input.dim(2), input.dim(3)});
  const Tensor k5 =
      reshape(kernel, {kernel.dim(0), kernel.dim(1), 1, kernel.dim(2), kernel.dim(3)});
  Tensor y5 = conv3d(x5, k5, bias);
  return reshape(y5, {y5.dim(0), y5.dim(1), y5.dim(3), y5.dim(4)});
}

Tensor deconv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  check_rank(input, 5, "deconv3d", "input");
  check_rank(kernel, 5, "deconv3d", "kernel");
  check_rank(bias, 1, "deconv3d", "bias");
  const int n = input.dim(0), ci = input.dim(1), d = input.dim(2), h = input.dim(3),
            w = input.dim(4);
  const int co = kernel.dim(1), kd = kernel.dim(2), kh = kernel.dim(3), kw = kernel.dim(4);
  if (kernel.dim(0) != ci)
    throw DimensionError("deconv3d: kernel input channels " + std::to_string(kernel.dim(0)) +
                         " != input channels " + std::to_string(ci));
  if (bias.dim(0) != co) throw DimensionError("deconv3d: bias size != output channels");
  const int od = d + kd - 1, oh = h + kh - 1, ow = w + kw - 1;

  const auto& x = input.data();
  const auto& k = kernel.data();
  const auto& b = bias.data();
  std::vector<double> y(static_cast<size_t>(n) * co * od * oh * ow);

  auto xi = [=](int nn, int c, int z, int yy, int xx) {
    return (((static_cast<int64_t>(nn) * ci + c) * d + z) * h + yy) * w + xx;
  };
  auto ki = [=](int c, int o, int z, int yy, int xx) {
    return (((static_cast<int64_t>(c) * co + o) * kd + z) * kh + yy) * kw + xx;
  };
  auto yi = [=](int nn, int o, int z, int yy, int xx) {
    return (((static_cast<int64_t>(nn) * co + o) * od + z) * oh + yy) * ow + xx;
  };

  for (size_t i = 0; i < y.size(); ++i) {
    // bias per output channel
    const size_t per_n = static_cast<size_t>(co) * od * oh * ow;
    const size_t per_c = static_cast<size_t>(od) * oh * ow;
    y[i] = b[(i % per_n) / per_c];
  }
  for (int nn = 0; nn < n; ++nn)
    for (int c = 0; c < ci; ++c)
      for (int z = 0; z < d; ++z)
        for (int r = 0; r < h; ++r)
          for (int cc = 0; cc < w; ++cc) {
            const double xv = x[static_cast<size_t>(xi(nn, c, z, r, cc))];
            if (xv == 0.0) continue;
            for (int o = 0; o < co; ++o)
              for (int dz = 0; dz < kd; ++dz)
                for (int dy = 0; dy < kh; ++dy)
                  for (int dx = 0; dx < kw; ++dx)
                    y[static_cast<size_t>(yi(nn, o, z + dz, r + dy, cc + dx))] +=
                        xv * k[static_cast<size_t>(ki(c, o, dz, dy, dx))];
          }

  return make_result(
      {n, co, od, oh, ow}, std::move(y), {&input, &kernel, &bias},
      [=, xin = input.impl(), kin = kernel.impl(), bin = bias.impl()](TensorImpl& self) {
        xin->ensure_grad();
        kin->ensure_grad();
        bin->ensure_grad();
        const auto& g = self.grad;
        const auto& x = xin->data;
        const auto& k = kin->data;
        for (double& bg : bin->grad) (void)bg;
        // bias gradient: sum over each output channel
        for (int nn = 0; nn < n; ++nn)
          for (int o = 0; o < co; ++o)
            for (int z = 0; z < od; ++z)
              for (int r = 0; r < oh; ++r)
                for (int cc = 0; cc < ow; ++cc)
                  bin->grad[static_cast<size_t>(o)] +=
                      g[static_cast<size_t>(yi(nn, o, z, r, cc))];
        for (int nn = 0; nn < n; ++nn)
          for (int c = 0; c < ci; ++c)
            for (int z = 0; z < d; ++z)
              for (int r = 0; r < h; ++r)
                for (int cc = 0; cc < w; ++cc) {
                  const size_t xidx = static_cast<size_t>(xi(nn, c, z, r, cc));
                  double xg = 0.0;
                  for (int o = 0; o < co; ++o)
                    for (int dz = 0; dz < kd; ++dz)
                      for (int dy = 0; dy < kh; ++dy)
                        for (int dx = 0; dx < kw; ++dx) {
                          const double gv =
                              g[static_cast<size_t>(yi(nn, o, z + dz, r + dy, cc + dx))];
                          xg += gv * k[static_cast<size_t>(ki(c, o, dz, dy, dx))];
                          kin->grad[static_cast<size_t>(ki(c, o, dz, dy, dx))] +=
                              gv * x[xidx];
                        }
                  xin->grad[xidx] += xg;
                }
      });
}

Tensor deconv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  check_rank(input, 4, "deconv2d", "input");
  check_rank(kernel, 4, "deconv2d", "kernel");
  const Tensor x5 = reshape(input, {input.dim(0), input.dim(1), 1, input.dim(2), input.dim(3)});
  const Tensor k5 =
      reshape(kernel, {kernel.dim(0), kernel.dim(1), 1, kernel.dim(2), kernel.dim(3)});
  Tensor y5 = deconv3d(x5, k5, bias);
  return reshape(y5, {y5.dim(0), y5.dim(1), y5.dim(3), y5.dim(4)});
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, double eps, double momentum) {
  if (input.rank() < 2) throw DimensionError("batch_norm: input rank must be >= 2");
  const int n = input.dim(0);
  const int c = input.dim(1);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw DimensionError("batch_norm: gamma/beta must have shape [channels]");
  if (static_cast<int>(state.running_mean.size()) != c)
    throw DimensionError("batch_norm: running stats channel mismatch");
  int64_t spatial = 1;
  for (int a = 2; a < input.rank(); ++a) spatial *= input.dim(a);
  const int64_t m = static_cast<int64_t>(n) * spatial;
  if (training && n < 2)
    throw DimensionError("batch_norm: train mode requires batch size >= 2");

  const auto& x = input.data();
  std::vector<double> mean(static_cast<size_t>(c), 0.0), var(static_cast<size_t>(c), 0.0);
  if (training) {
    for (int nn = 0; nn < n; ++nn)
      for (int ch = 0; ch < c; ++ch) {
        const double* xp = &x[(static_cast<size_t>(nn) * c + ch) * spatial];
        double s = 0.0;
        for (int64_t i = 0; i < spatial; ++i) s += xp[i];
        mean[static_cast<size_t>(ch)] += s;
      }
    for (int ch = 0; ch < c; ++ch) mean[static_cast<size_t>(ch)] /= static_cast<double>(m);
    for (int nn = 0; nn < n; ++nn)
      for (int ch = 0; ch < c; ++ch) {
        const double* xp = &x[(static_cast<size_t>(nn) * c + ch) * spatial];
        double s = 0.0;
        for (int64_t i = 0; i < spatial; ++i) {
          const double dv = xp[i] - mean[static_cast<size_t>(ch)];
          s += dv * dv;
        }
        var[static_cast<size_t>(ch)] += s;
      }
    for (int ch = 0; ch < c; ++ch) var[static_cast<size_t>(ch)] /= static_cast<double>(m);
    for (int ch = 0; ch < c; ++ch) {
      const double unbiased = m > 1 ? var[static_cast<size_t>(ch)] * static_cast<double>(m) /
                                          static_cast<double>(m - 1)
                                    : var[static_cast<size_t>(ch)];
      state.running_mean[static_cast<size_t>(ch)] =
          (1.0 - momentum) * state.running_mean[static_cast<size_t>(ch)] +
          momentum * mean[static_cast<size_t>(ch)];
      state.running_var[static_cast<size_t>(ch)] =
          (1.0 - momentum) * state.running_var[static_cast<size_t>(ch)] + momentum * unbiased;
    }
    state.num_batches++;
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> inv_std(static_cast<size_t>(c));
  for (int ch = 0; ch < c; ++ch)
    inv_std[static_cast<size_t>(ch)] = 1.0 / std::sqrt(var[static_cast<size_t>(ch)] + eps);

  const auto& gm = gamma.data();
  const auto& bt = beta.data();
  std::vector<double> y(x.size());
  std::vector<double> xhat(x.size());
  for (int nn = 0; nn < n; ++nn)
    for (int ch = 0; ch < c; ++ch) {
      const size_t base = (static_cast<size_t>(nn) * c + ch) * spatial;
      for (int64_t i = 0; i < spatial; ++i) {
        const double xh = (x[base + i] - mean[static_cast<size_t>(ch)]) *
                          inv_std[static_cast<size_t>(ch)];
        xhat[base + i] = xh;
        y[base + i] = gm[static_cast<size_t>(ch)] * xh + bt[static_cast<size_t>(ch)];
      }
    }

  return make_result(
      input.shape(), std::move(y), {&input, &gamma, &beta},
      [=, xin = input.impl(), gin = gamma.impl(), bin = beta.impl(),
       xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorImpl& self) {
        xin->ensure_grad();
        gin->ensure_grad();
        bin->ensure_grad();
        const auto& g = self.grad;
        const auto& gm = gin->data;
        for (int ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (int nn = 0; nn < n; ++nn) {
            const size_t base = (static_cast<size_t>(nn) * c + ch) * spatial;
            for (int64_t i = 0; i < spatial; ++i) {
              sum_g += g[base + i];
              sum_gx += g[base + i] * xhat[base + i];
            }
          }
          gin->grad[static_cast<size_t>(ch)] += sum_gx;
          bin->grad[static_cast<size_t>(ch)] += sum_g;
          const double gscale = gm[static_cast<size_t>(ch)] * inv_std[static_cast<size_t>(ch)];
          if (training) {
            const double mg = sum_g / static_cast<double>(m);
            const double mgx = sum_gx / static_cast<double>(m);
            for (int nn = 0; nn < n; ++nn) {
              const size_t base = (static_cast<size_t>(nn) * c + ch) * spatial;
              for (int64_t i = 0; i < spatial; ++i)
                xin->grad[base + i] += gscale * (g[base + i] - mg - xhat[base + i] * mgx);
            }
          } else {
            for (int nn = 0; nn < n; ++nn) {
              const size_t base = (static_cast<size_t>(nn) * c + ch) * spatial;
              for (int64_t i = 0; i < spatial; ++i)
                xin->grad[base + i] += gscale * g[base + i];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// elementwise and structural ops
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
  std::vector<double> y(x.data().size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  return make_result(x.shape(), std::move(y), {&x}, [xin = x.impl()](TensorImpl& self) {
    xin->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (xin->data[i] > 0.0) xin->grad[i] += self.grad[i];
  });
}

Tensor adaptive_avg_pool2d(const Tensor& x, int out_h, int out_w) {
  check_rank(x, 4, "adaptive_avg_pool2d", "input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < out_h || w < out_w)
    throw DimensionError("adaptive_avg_pool2d: input " + shape_str(x.shape()) +
                         " smaller than pooling grid");
  // Near-equal partition of each spatial axis.
  auto cell = [](int i, int total, int parts) { return (i * total) / parts; };
  std::vector<double> y(static_cast<size_t>(n) * c * out_h * out_w);
  const auto& xd = x.data();
  for (int nn = 0; nn < n; ++nn)
    for (int ch = 0; ch < c; ++ch) {
      const size_t base = (static_cast<size_t>(nn) * c + ch) * h * w;
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          const int y0 = cell(oy, h, out_h), y1 = cell(oy + 1, h, out_h);
          const int x0 = cell(ox, w, out_w), x1 = cell(ox + 1, w, out_w);
          double acc = 0.0;
          for (int yy = y0; yy < y1; ++yy)
            for (int xx = x0; xx < x1; ++xx) acc += xd[base + static_cast<size_t>(yy) * w + xx];
          y[((static_cast<size_t>(nn) * c + ch) * out_h + oy) * out_w + ox] =
              acc / ((y1 - y0) * (x1 - x0));
        }
    }
  return make_result({n, c, out_h, out_w}, std::move(y), {&x},
                     [=, xin = x.impl()](TensorImpl& self) {
                       xin->ensure_grad();
                       for (int nn = 0; nn < n; ++nn)
                         for (int ch = 0; ch < c; ++ch) {
                           const size_t base = (static_cast<size_t>(nn) * c + ch) * h * w;
                           for (int oy = 0; oy < out_h; ++oy)
                             for (int ox = 0; ox < out_w; ++ox) {
                               const int y0 = cell(oy, h, out_h), y1 = cell(oy + 1, h, out_h);
                               const int x0 = cell(ox, w, out_w), x1 = cell(ox + 1, w, out_w);
                               const double gv =
                                   self.grad[((static_cast<size_t>(nn) * c + ch) * out_h + oy) *
                                                 out_w +
                                             ox] /
                                   ((y1 - y0) * (x1 - x0));
                               for (int yy = y0; yy < y1; ++yy)
                                 for (int xx = x0; xx < x1; ++xx)
                                   xin->grad[base + static_cast<size_t>(yy) * w + xx] += gv;
                             }
                         }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "matmul", "lhs");
  check_rank(b, 2, "matmul", "rhs");
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul: inner dimensions " + std::to_string(k) + " vs " +
                         std::to_string(b.dim(0)));
  std::vector<double> y(static_cast<size_t>(n) * m, 0.0);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (int i = 0; i < n; ++i)
    for (int kk = 0; kk < k; ++kk) {
      const double av = ad[static_cast<size_t>(i) * k + kk];
      if (av == 0.0) continue;
      const double* bp = &bd[static_cast<size_t>(kk) * m];
      double* yp = &y[static_cast<size_t>(i) * m];
      for (int j = 0; j < m; ++j) yp[j] += av * bp[j];
    }
  return make_result({n, m}, std::move(y), {&a, &b},
                     [=, ain = a.impl(), bin = b.impl()](TensorImpl& self) {
                       ain->ensure_grad();
                       bin->ensure_grad();
                       const auto& g = self.grad;
                       const auto& ad = ain->data;
                       const auto& bd = bin->data;
                       // dA = G B^T
                       for (int i = 0; i < n; ++i)
                         for (int j = 0; j < m; ++j) {
                           const double gv = g[static_cast<size_t>(i) * m + j];
                           if (gv == 0.0) continue;
                           for (int kk = 0; kk < k; ++kk)
                             ain->grad[static_cast<size_t>(i) * k + kk] +=
                                 gv * bd[static_cast<size_t>(kk) * m + j];
                         }
                       // dB = A^T G
                       for (int kk = 0; kk < k; ++kk)
                         for (int i = 0; i < n; ++i) {
                           const double av = ad[static_cast<size_t>(i) * k + kk];
                           if (av == 0.0) continue;
                           for (int j = 0; j < m; ++j)
                             bin->grad[static_cast<size_t>(kk) * m + j] +=
                                 av * g[static_cast<size_t>(i) * m + j];
                         }
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  check_rank(x, 2, "linear", "input");
  check_rank(weight, 2, "linear", "weight");
  check_rank(bias, 1, "linear", "bias");
  if (weight.dim(1) != bias.dim(0))
    throw DimensionError("linear: bias size != output features");
  Tensor y = matmul(x, weight);
  const int n = y.dim(0), m = y.dim(1);
  std::vector<double> out = y.data();
  const auto& bd = bias.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<size_t>(i) * m + j] += bd[static_cast<size_t>(j)];
  return make_result({n, m}, std::move(out), {&y, &bias},
                     [=, yin = y.impl(), bin = bias.impl()](TensorImpl& self) {
                       yin->ensure_grad();
                       bin->ensure_grad();
                       for (int i = 0; i < n; ++i)
                         for (int j = 0; j < m; ++j) {
                           const double gv = self.grad[static_cast<size_t>(i) * m + j];
                           yin->grad[static_cast<size_t>(i) * m + j] += gv;
                           bin->grad[static_cast<size_t>(j)] += gv;
                         }
                     });
}

Tensor transpose(const Tensor& x) {
  check_rank(x, 2, "transpose", "input");
  const int n = x.dim(0), m = x.dim(1);
  std::vector<double> y(static_cast<size_t>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      y[static_cast<size_t>(j) * n + i] = x.data()[static_cast<size_t>(i) * m + j];
  return make_result({m, n}, std::move(y), {&x}, [=, xin = x.impl()](TensorImpl& self) {
    xin->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        xin->grad[static_cast<size_t>(i) * m + j] += self.grad[static_cast<size_t>(j) * n + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_positive_shape(shape);
  if (shape_size(shape) != x.size())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  return make_result(std::move(shape), x.data(), {&x}, [xin = x.impl()](TensorImpl& self) {
    xin->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xin->grad[i] += self.grad[i];
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "concat_cols", "lhs");
  check_rank(b, 2, "concat_cols", "rhs");
  if (a.dim(0) != b.dim(0))
    throw DimensionError("concat_cols: row counts " + std::to_string(a.dim(0)) + " vs " +
                         std::to_string(b.dim(0)));
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  std::vector<double> y(static_cast<size_t>(n) * (ca + cb));
  for (int i = 0; i < n; ++i) {
    std::copy_n(&a.data()[static_cast<size_t>(i) * ca], ca,
                &y[static_cast<size_t>(i) * (ca + cb)]);
    std::copy_n(&b.data()[static_cast<size_t>(i) * cb], cb,
                &y[static_cast<size_t>(i) * (ca + cb) + ca]);
  }
  return make_result({n, ca + cb}, std::move(y), {&a, &b},
                     [=, ain = a.impl(), bin = b.impl()](TensorImpl& self) {
                       ain->ensure_grad();
                       bin->ensure_grad();
                       for (int i = 0; i < n; ++i) {
                         for (int j = 0; j < ca; ++j)
                           ain->grad[static_cast<size_t>(i) * ca + j] +=
                               self.grad[static_cast<size_t>(i) * (ca + cb) + j];
                         for (int j = 0; j < cb; ++j)
                           bin->grad[static_cast<size_t>(i) * cb + j] +=
                               self.grad[static_cast<size_t>(i) * (ca + cb) + ca + j];
                       }
                     });
}

Tensor l2_normalize_rows(const Tensor& x, int* zero_rows) {
  check_rank(x, 2, "l2_normalize_rows", "input");
  const int n = x.dim(0), d = x.dim(1);
  std::vector<double> y(x.data().size());
  std::vector<double> norms(static_cast<size_t>(n));
  int zeros = 0;
  for (int i = 0; i < n; ++i) {
    const double* xp = &x.data()[static_cast<size_t>(i) * d];
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += xp[j] * xp[j];
    const double norm = std::sqrt(s);
    norms[static_cast<size_t>(i)] = norm;
    if (norm < 1e-12) {
      // zero-norm rows pass through unchanged
      ++zeros;
      std::copy_n(xp, d, &y[static_cast<size_t>(i) * d]);
    } else {
      for (int j = 0; j < d; ++j) y[static_cast<size_t>(i) * d + j] = xp[j] / norm;
    }
  }
  if (zero_rows) *zero_rows = zeros;
  return make_result({n, d}, std::move(y), {&x},
                     [=, xin = x.impl(), norms = std::move(norms)](TensorImpl& self) {
                       xin->ensure_grad();
                       for (int i = 0; i < n; ++i) {
                         const double norm = norms[static_cast<size_t>(i)];
                         const double* gp = &self.grad[static_cast<size_t>(i) * d];
                         double* xg = &xin->grad[static_cast<size_t>(i) * d];
                         const double* xp = &xin->data[static_cast<size_t>(i) * d];
                         if (norm < 1e-12) {
                           for (int j = 0; j < d; ++j) xg[j] += gp[j];
                           continue;
                         }
                         double dot = 0.0;
                         for (int j = 0; j < d; ++j) dot += xp[j] * gp[j];
                         const double n3 = norm * norm * norm;
                         for (int j = 0; j < d; ++j)
                           xg[j] += gp[j] / norm - xp[j] * dot / n3;
                       }
                     });
}

Tensor frobenius_sq_diff(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "frobenius_sq_diff");
  double s = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) {
    const double dv = a.data()[i] - b.data()[i];
    s += dv * dv;
  }
  return make_result({1}, {s}, {&a, &b},
                     [ain = a.impl(), bin = b.impl()](TensorImpl& self) {
                       ain->ensure_grad();
                       bin->ensure_grad();
                       const double g = self.grad[0];
                       for (size_t i = 0; i < ain->data.size(); ++i) {
                         const double dv = 2.0 * (ain->data[i] - bin->data[i]) * g;
                         ain->grad[i] += dv;
                         bin->grad[i] -= dv;
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> y(a.data().size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(y), {&a, &b},
                     [ain = a.impl(), bin = b.impl()](TensorImpl& self) {
                       ain->ensure_grad();
                       bin->ensure_grad();
                       for (size_t i = 0; i < self.grad.size(); ++i) {
                         ain->grad[i] += self.grad[i];
                         bin->grad[i] += self.grad[i];
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> y(a.data().size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(y), {&a, &b},
                     [ain = a.impl(), bin = b.impl()](TensorImpl& self) {
                       ain->ensure_grad();
                       bin->ensure_grad();
                       for (size_t i = 0; i < self.grad.size(); ++i) {
                         ain->grad[i] += self.grad[i];
                         bin->grad[i] -= self.grad[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> y(a.data().size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(y), {&a, &b},
                     [ain = a.impl(), bin = b.impl()](TensorImpl& self) {
                       ain->ensure_grad();
                       bin->ensure_grad();
                       for (size_t i = 0; i < self.grad.size(); ++i) {
                         ain->grad[i] += self.grad[i] * bin->data[i];
                         bin->grad[i] += self.grad[i] * ain->data[i];
                       }
                     });
}

Tensor scale(const Tensor& x, double s) {
  std::vector<double> y(x.data().size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * s;
  return make_result(x.shape(), std::move(y), {&x}, [s, xin = x.impl()](TensorImpl& self) {
    xin->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xin->grad[i] += self.grad[i] * s;
  });
}

Tensor exp(const Tensor& x) {
  std::vector<double> y(x.data().size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = std::exp(x.data()[i]);
  return make_result(x.shape(), std::move(y), {&x}, [xin = x.impl()](TensorImpl& self) {
    xin->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xin->grad[i] += self.grad[i] * self.data[i];
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  std::vector<double> y(x.data().size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = std::min(hi, std::max(lo, x.data()[i]));
  return make_result(x.shape(), std::move(y), {&x}, [lo, hi, xin = x.impl()](TensorImpl& self) {
    xin->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (xin->data[i] > lo && xin->data[i] < hi) xin->grad[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({1}, {s}, {&x}, [xin = x.impl()](TensorImpl& self) {
    xin->ensure_grad();
    for (size_t i = 0; i < xin->grad.size(); ++i) xin->grad[i] += self.grad[0];
  });
}

Tensor mean_all(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor rowwise_logsumexp(const Tensor& x) {
  check_rank(x, 2, "rowwise_logsumexp", "input");
  const int n = x.dim(0), m = x.dim(1);
  std::vector<double> y(static_cast<size_t>(n));
  std::vector<double> softmax(x.data().size());
  for (int i = 0; i < n; ++i) {
    const double* xp = &x.data()[static_cast<size_t>(i) * m];
    double mx = xp[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, xp[j]);
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += std::exp(xp[j] - mx);
    y[static_cast<size_t>(i)] = mx + std::log(s);
    for (int j = 0; j < m; ++j)
      softmax[static_cast<size_t>(i) * m + j] = std::exp(xp[j] - mx) / s;
  }
  return make_result({n}, std::move(y), {&x},
                     [=, xin = x.impl(), softmax = std::move(softmax)](TensorImpl& self) {
                       xin->ensure_grad();
                       for (int i = 0; i < n; ++i)
                         for (int j = 0; j < m; ++j)
                           xin->grad[static_cast<size_t>(i) * m + j] +=
                               self.grad[static_cast<size_t>(i)] *
                               softmax[static_cast<size_t>(i) * m + j];
                     });
}

Tensor take_diag(const Tensor& x) {
  check_rank(x, 2, "take_diag", "input");
  if (x.dim(0) != x.dim(1)) throw DimensionError("take_diag: matrix must be square");
  const int n = x.dim(0);
  std::vector<double> y(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) y[static_cast<size_t>(i)] = x.data()[static_cast<size_t>(i) * n + i];
  return make_result({n}, std::move(y), {&x}, [=, xin = x.impl()](TensorImpl& self) {
    xin->ensure_grad();
    for (int i = 0; i < n; ++i)
      xin->grad[static_cast<size_t>(i) * n + i] += self.grad[static_cast<size_t>(i)];
  });
}

Tensor gather_mean_rows(const Tensor& x, const std::vector<std::vector<int>>& groups) {
  check_rank(x, 2, "gather_mean_rows", "input");
  const int n = x.dim(0), d = x.dim(1);
  const int g = static_cast<int>(groups.size());
  for (const auto& grp : groups) {
    if (grp.empty()) throw DimensionError("gather_mean_rows: empty group");
    for (int i : grp)
      if (i < 0 || i >= n) throw DimensionError("gather_mean_rows: row index out of range");
  }
  std::vector<double> y(static_cast<size_t>(g) * d, 0.0);
  for (int gi = 0; gi < g; ++gi) {
    for (int i : groups[static_cast<size_t>(gi)])
      for (int j = 0; j < d; ++j)
        y[static_cast<size_t>(gi) * d + j] += x.data()[static_cast<size_t>(i) * d + j];
    const double inv = 1.0 / static_cast<double>(groups[static_cast<size_t>(gi)].size());
    for (int j = 0; j < d; ++j) y[static_cast<size_t>(gi) * d + j] *= inv;
  }
  return make_result({g, d}, std::move(y), {&x},
                     [=, xin = x.impl()](TensorImpl& self) {
                       xin->ensure_grad();
                       for (int gi = 0; gi < g; ++gi) {
                         const double inv =
                             1.0 / static_cast<double>(groups[static_cast<size_t>(gi)].size());
                         for (int i : groups[static_cast<size_t>(gi)])
                           for (int j = 0; j < d; ++j)
                             xin->grad[static_cast<size_t>(i) * d + j] +=
                                 self.grad[static_cast<size_t>(gi) * d + j] * inv;
                       }
                     });
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  states_.reserve(params_.size());
  for (const Tensor& p : params_) {
    AdamState st;
    st.m.assign(p.data().size(), 0.0);
    st.v.assign(p.data().size(), 0.0);
    states_.push_back(std::move(st));
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Adam::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    if (p.impl()->grad.size() != p.data().size())
      throw std::runtime_error("adam: parameter has no gradient");
    AdamState& st = states_[pi];
    auto& data = p.data();
    const auto& grad = p.impl()->grad;
    for (size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i] + config_.weight_decay * data[i];
      st.m[i] = config_.beta1 * st.m[i] + (1.0 - config_.beta1) * g;
      st.v[i] = config_.beta2 * st.v[i] + (1.0 - config_.beta2) * g * g;
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      data[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace spgcc

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace spgcc {

using Shape = std::vector<int>;

class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Accumulates into parents' grads, reading this node's grad.
  std::function<void(TensorImpl&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

/// Dense 64-bit tensor participating in a dynamically recorded computation
/// graph. Copies are shallow; two copies share storage and gradients.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int axis) const { return impl_->shape.at(static_cast<size_t>(axis)); }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(impl_->data.size()); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  std::vector<double>& grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
  void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

  /// Value of a single-element tensor.
  double value() const;

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

  static Tensor wrap(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Topologically ordered record of the operations reachable from a root.
struct Tape {
  std::vector<TensorImpl*> nodes;  // inputs of nodes[i] precede it
  static Tape record(TensorImpl* root);
};

/// Reverse-mode sweep from a scalar loss; populates grad on every
/// reachable tensor that requires gradients.
void backward(const Tensor& loss);

// --- convolution family (valid, stride 1; deconv inverts the shapes) ---
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias);
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);
Tensor deconv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);
Tensor deconv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  int64_t num_batches = 0;

  explicit BatchNormState(int channels = 0)
      : running_mean(static_cast<size_t>(channels), 0.0),
        running_var(static_cast<size_t>(channels), 1.0) {}
};

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, double eps = 1e-5,
                  double momentum = 0.1);

Tensor relu(const Tensor& x);
Tensor adaptive_avg_pool2d(const Tensor& x, int out_h, int out_w);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor l2_normalize_rows(const Tensor& x, int* zero_rows = nullptr);
Tensor frobenius_sq_diff(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor exp(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor sum(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor rowwise_logsumexp(const Tensor& x);
Tensor take_diag(const Tensor& x);
Tensor gather_mean_rows(const Tensor& x, const std::vector<std::vector<int>>& groups);

// --- optimizer ---
struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void step();
  void zero_grad();
  int64_t step_count() const { return step_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamState> states_;
  AdamConfig config_;
  int64_t step_ = 0;
};

}  // namespace spgcc

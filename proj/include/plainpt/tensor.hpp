#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace plainpt {

class Rng;

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void()> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major array of doubles with reverse-mode differentiation. A
// Tensor is a cheap shared handle; copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Zero-length span when no gradient has been accumulated yet.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  // Same values, no history, no gradient requirement.
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_tensor(std::shared_ptr<detail::Node>);

  std::shared_ptr<detail::Node> node_;
};

Tensor make_tensor(std::shared_ptr<detail::Node> node);

// Disables tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// While alive, piecewise-linear ops (relu, max_reduce, chamfer) fold their
// discrete choices into a fingerprint on this thread. Two evaluations with
// equal fingerprints ran on the same smooth piece of the function.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  void record(std::uint64_t choice);

 private:
  std::uint64_t hash_ = 0;
  BranchTrace* previous_;
};

// Training mode enables dropout; evaluation mode makes every forward
// pass a deterministic function of parameters and inputs.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

// ---- primitives -----------------------------------------------------------

// x[..., n] @ w[n, m] -> [..., m]
Tensor matmul(const Tensor& x, const Tensor& w);
// a[p, d] @ b[q, d]^T -> [p, q]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[..., m] + bias[m]
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x);  // over the last axis
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor dropout(const Tensor& x, double rate, const ForwardContext& ctx);

struct MaxResult {
  Tensor values;
  std::vector<std::size_t> argmax;  // position along the reduced axis, lowest on ties
};
MaxResult max_reduce(const Tensor& x, std::size_t axis);

Tensor concat_last(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
// Selects entries of the first axis; indices may repeat.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// x[q * n + j, c] weighted by weights[q, j] and summed over j -> [q, c].
// Weights are treated as constants.
Tensor group_weighted_sum(const Tensor& x, std::span<const double> weights, std::size_t group);

// Mean over batch of the symmetric Chamfer-L2 distance between
// pred[b] (a x 3) and target[b] (c x 3).
Tensor chamfer_l2_batch(const Tensor& pred, const Tensor& target);

// Mean negative log-likelihood of softmax(logits[q, :]) at labels[q].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// Accumulates d loss / d t into every reachable tensor that requires grad,
// then releases the recorded graph.
void backward(const Tensor& loss);

}  // namespace plainpt

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "memt/rng.hpp"

namespace memt {

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Shape disagreement between operands.
struct dim_error : error {
  using error::error;
};
// Invalid configuration value (bad probability, bad variant, ...).
struct config_error : error {
  using error::error;
};
// Caller broke an operation's stated precondition.
struct contract_error : error {
  using error::error;
};
// Malformed on-disk input.
struct parse_error : error {
  using error::error;
};
// Token id outside its table.
struct index_error : error {
  using error::error;
};

struct TensorNode;

// Dense row-major f64 tensor. Copies are shallow: they share the data and
// grad buffers, which is what parameter handles rely on.
struct Tensor {
  std::vector<int64_t> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::shared_ptr<TensorNode> node;

  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, double value, bool requires_grad = false);
  static Tensor from_values(std::vector<int64_t> shape, std::vector<double> values,
                            bool requires_grad = false);

  int64_t numel() const;
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  double& at(int64_t i) { return (*data)[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return (*data)[static_cast<size_t>(i)]; }
  double& at(int64_t r, int64_t c) { return (*data)[static_cast<size_t>(r * shape[1] + c)]; }
  double at(int64_t r, int64_t c) const { return (*data)[static_cast<size_t>(r * shape[1] + c)]; }

  double scalar() const;

  void zero_grad();
  // Detached value copy (no graph, no grad).
  Tensor detach() const;

  std::string shape_str() const;
};

struct TensorNode {
  std::vector<Tensor> parents;
  // Receives the node's output tensor; accumulates into parents' grads.
  std::function<void(const Tensor&)> backward;
};

// Reverse-mode autodiff is recorded only while grads are enabled. Inference
// paths wrap themselves in NoGradGuard to skip graph construction.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// ---- forward ops (all record backward rules when grads are enabled) ----

Tensor add(const Tensor& a, const Tensor& b);
// a: [n,d], row: [d]; adds row to every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);

// Matrix product over the last two axes. Supports 2D x 2D, 3D x 3D with an
// equal batch count, and broadcast of a 2D operand against a 3D one.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// Inverted dropout: scales survivors by 1/(1-p) at train time, identity in eval.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

// Mean of -log softmax(logits)[target] over positions whose target != ignore_index.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index);

Tensor transpose(const Tensor& x);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1);
Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1);
Tensor concat_cols(const std::vector<Tensor>& parts);
// Gathers rows of table by id; grads scatter-add back into the table.
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor sum(const Tensor& a);

// Backpropagate from a scalar loss; grads accumulate until zeroed.
void backward(const Tensor& loss);

bool all_finite(const Tensor& t);

// Named trainable tensor. The name encodes module/layer/role and doubles as
// the checkpoint key.
struct Parameter {
  std::string name;
  Tensor tensor;
};

}  // namespace memt

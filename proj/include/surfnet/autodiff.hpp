#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "surfnet/la.hpp"

namespace surfnet {

/// A named trainable matrix (or a non-trainable buffer such as batch-norm
/// running statistics) and its accumulated gradient.
struct Param {
  DenseMatrix value;
  DenseMatrix grad;
  bool trainable = true;
};

/// Ordered parameter collection. Iteration order is the key order, which
/// makes optimizer updates and checkpoints deterministic. References stay
/// valid while the store lives.
class ParamStore {
 public:
  Param& add(const std::string& name, DenseMatrix value, bool trainable = true);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count(bool trainable_only = true) const;

  std::map<std::string, Param>& items() { return params_; }
  const std::map<std::string, Param>& items() const { return params_; }

 private:
  std::map<std::string, Param> params_;
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const DenseMatrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Append-only record of operations for reverse-mode differentiation. Nodes
/// are created in topological order, so backward is a single reverse sweep.
/// Sparse operators passed to operations are referenced, not copied, and
/// must outlive the call to backward.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const DenseMatrix& grad_out)>;

  Var constant(DenseMatrix value);
  /// Leaf bound to a parameter; backward adds into param.grad when the
  /// parameter is trainable.
  Var parameter(Param& param);
  /// Leaf that collects its own gradient (read back with grad()).
  Var input(DenseMatrix value);

  Var record(DenseMatrix value, std::vector<std::size_t> parents, Backward backward);

  const DenseMatrix& value(std::size_t id) const { return nodes_[id].value; }
  const DenseMatrix& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Adds g into the gradient of node id (no-op if it does not require one).
  void accumulate(std::size_t id, const DenseMatrix& g);

  /// Reverse sweep from a 1x1 loss. Throws NotScalar otherwise.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    DenseMatrix value;
    DenseMatrix grad;
    std::vector<std::size_t> parents;
    Backward backward;
    Param* param = nullptr;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;  // stable references while recording
};

namespace ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
/// a b
Var matmul(Var a, Var b);
/// a b^T
Var matmul_nt(Var a, Var b);
/// x W^T (+ bias as a 1 x out row), the 1x1 convolution.
Var linear(Var x, Var weight);
Var linear(Var x, Var weight, Var bias);
Var add_row(Var x, Var row);
/// Quaternion-lifted mixing: C (out/4 x in/4) acts on quaternion slots,
/// identically on each of the four lanes. x is n x in with lanes packed as
/// columns 4t..4t+3.
Var qmix(Var x, Var c);
/// op x for a fixed operator (grad: op^T g). op_t must be transpose(op).
Var spmv(const SparseOperator& op, const SparseOperator& op_t, Var x);
/// Per-segment row means (segments given by offsets, size = segments + 1).
Var segment_mean(Var x, std::span<const std::size_t> offsets);
/// Copies row s of h to every row of segment s.
Var broadcast_segments(Var h, std::span<const std::size_t> offsets);
Var elu(Var x);
Var exp(Var x);
Var concat_cols(Var a, Var b);
/// Rows idx[0], idx[1], ... of x (repeats allowed).
Var gather_rows(Var x, std::span<const std::size_t> idx);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
/// Sum or mean of all entries, as 1x1.
Var sum(Var x);
Var mean(Var x);

/// Mean over entries of the smooth-L1 (Huber) loss with threshold beta.
Var smooth_l1(Var pred, const DenseMatrix& target, double beta = 1.0);
/// Mean squared error over entries.
Var mse(Var pred, const DenseMatrix& target);
/// Mean over rows of -log softmax(logits)[row, target[row]].
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> target);
/// 0.5 * sum[(t - mu)^2 exp(-s) + s + log 2 pi] with a shared 1x1 log
/// variance s.
Var gaussian_nll(Var mu, Var log_var, const DenseMatrix& target);
/// KL(N(mu, exp(lv)) || N(0, 1)) summed over entries.
Var kl_standard_normal(Var mu, Var log_var);
/// mu + exp(lv / 2) * eps.
Var reparameterize(Var mu, Var log_var, const DenseMatrix& eps);

struct BatchNormState {
  Param* gamma = nullptr;
  Param* beta = nullptr;
  Param* running_mean = nullptr;
  Param* running_var = nullptr;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// Per-channel normalization over all rows. Training mode uses the batch
/// statistics and updates the running ones (running = m * running + (1 - m)
/// * batch, unbiased variance); evaluation uses the running statistics.
Var batch_norm(Tape& tape, Var x, const BatchNormState& state, bool training);

}  // namespace ad

double elu_value(double x);

}  // namespace surfnet

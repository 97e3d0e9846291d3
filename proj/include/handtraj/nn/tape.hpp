#pragma once

#include <functional>
#include <span>
#include <vector>

#include "handtraj/nn/matrix.hpp"
#include "handtraj/nn/params.hpp"

namespace handtraj::nn {

struct Var {
  int id = -1;
};

// Records a forward computation over 2-D matrices and replays it backwards.
// Parameter gradients are accumulated into the Grads passed to backward().
template <typename Real>
class Tape {
 public:
  using Mat = Matrix<Real>;

  explicit Tape(const ParamStore<Real>* params = nullptr) : params_(params) {}

  // Leaves.
  Var constant(Mat m);
  Var input(Mat m);  // differentiable input; read its gradient with grad()
  Var param(std::size_t index);

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }
  Real scalar(Var v) const { return value(v).data.at(0); }
  std::size_t rows(Var v) const { return value(v).rows; }
  std::size_t cols(Var v) const { return value(v).cols; }

  // Linear algebra.
  Var matmul(Var a, Var b);                  // a[m,k] b[k,n]
  Var linear(Var x, Var w, Var b);           // x w + b (b is 1 x n, broadcast)
  Var left_matmul_const(const Mat& p, Var v);  // p[m,k] v[k,n], p constant
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, Real s);
  Var add_row(Var x, Var b);

  // Pointwise.
  Var gelu(Var a);  // tanh approximation
  Var sigmoid(Var a);
  Var exp(Var a);

  Var layer_norm(Var x, Var gamma, Var beta, Real eps = Real(1e-5));

  // Fused multi-head causal self-attention over qkv = [q | k | v].
  Var causal_attention(Var qkv, std::size_t heads);

  // Row/column plumbing.
  Var gather_rows(Var table, std::span<const int> rows);
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, std::size_t c0, std::size_t c1);
  // x with rows[i] += src[i].
  Var scatter_add_rows(Var x, Var src, std::span<const int> rows);

  // Per-position affine patch embedding. `patches` is (T*M) x P with row
  // t*M + m holding patch m of frame t; w is (M*P) x D, b is M x D.
  Var patch_embed(const Mat& patches, std::size_t positions, Var w, Var b);

  // Reductions to 1 x 1.
  Var sum(Var a);
  // Sum over rows of -log softmax(logits)[target].
  Var cross_entropy(Var logits, std::span<const int> targets);
  // Sum of mask * (a - target)^2.
  Var masked_sq_error(Var a, const Mat& target, const Mat& mask);
  // Sum of KL(N(mu, exp(logsig)^2) || N(0, 1)).
  Var kl_standard_normal(Var mu, Var logsig);
  // Sum of mask * BCE(sigmoid(logits), target).
  Var bce_with_logits(Var logits, const Mat& target, const Mat& mask);

  // Reverse pass from the 1 x 1 `loss`; parameter gradients are added to
  // `grads` (which must match the parameter store).
  void backward(Var loss, Grads<Real>* grads);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* ref = nullptr;  // parameters are read in place
    Mat grad;
    std::function<void()> backward;
    int param = -1;
    bool needs_grad = false;
  };

  Var push(Mat value, bool needs_grad);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Mat& g(Var v);  // gradient buffer, allocated on first use

  const ParamStore<Real>* params_;
  std::vector<Node> nodes_;
};

}  // namespace handtraj::nn

#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

namespace gssm::ad {

using Matrix = Eigen::MatrixXd;

// Tape-based reverse-mode differentiation over dense matrices. Nodes are
// created in topological order, so the backward pass is a reverse walk over
// the tape. Graphs are built per evaluation and discarded.
//
// Token-sequence ops use a stacked layout: a batch of B samples with T tokens
// of width d lives in a [B*T x d] matrix, row b*T + t.
class Graph {
 public:
  struct Node {
    Matrix val;
    Matrix grad;
    bool needs_grad = false;
    bool grad_ready = false;
    std::function<void(Graph&, int)> backward;  // id of this node
  };

  int constant(Matrix v);
  /// Differentiable leaf (parameter or attribution input).
  int leaf(Matrix v);

  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int a, double c);
  int add_scalar(int a, double c);
  int matmul(int a, int b);
  /// a [n x c] plus row vector b [1 x c].
  int add_rowvec(int a, int b);

  int gelu(int a);
  int tanh_op(int a);
  int sigmoid(int a);
  int exp_op(int a);
  int log_op(int a);
  int erf_op(int a);
  int clamp(int a, double lo, double hi);

  int sum_all(int a);
  int mean_all(int a);
  int rowsum(int a);
  int colsum(int a);
  /// [n x 1] -> [n x k] replication.
  int bcast_cols(int a, int k);

  int slice_cols(int a, int start, int count);
  int concat_cols(const std::vector<int>& parts);
  /// Tokens (each [B x d]) -> stacked [B*T x d].
  int stack_tokens(const std::vector<int>& tokens);
  /// Stacked [B*T x d] -> [B x T*d], token rows concatenated per sample.
  int flatten_tokens(int a, int tokens);

  /// Per-sample scores: out row (b,t) x col u = <q_(b,t), k_(b,u)> * scale.
  int attn_scores(int q, int k, int tokens, double scale);
  int softmax_rows(int a);
  /// Per-sample mix: out_(b,t) = sum_u p_(b,t),u * v_(b,u).
  int attn_apply(int p, int v, int tokens);

  /// Row-wise layer norm with gamma/beta [1 x d].
  int layer_norm(int x, int gamma, int beta);

  struct BatchNormResult {
    int y = -1;
    Matrix batch_mean;  // [T x d]
    Matrix batch_var;
  };
  /// Normalizes each (token, channel) pair over the batch; gamma/beta [T x d].
  BatchNormResult batch_norm_train(int x, int gamma, int beta, int tokens);
  int batch_norm_eval(int x, int gamma, int beta, const Matrix& run_mean,
                      const Matrix& run_var, int tokens);

  /// Token-axis convolution, kernel 3, zero padded; w [3*c_in x c_out].
  int conv1d_tokens(int x, int w, int bias, int tokens);

  void backward(int root);

  const Matrix& value(int id) const { return nodes_[id].val; }
  const Matrix& grad(int id) const;
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  size_t size() const { return nodes_.size(); }
  void clear();

  void accumulate(int id, const Matrix& g);

 private:
  int push(Matrix val, bool needs_grad, std::function<void(Graph&, int)> backward);
  std::vector<Node> nodes_;
};

constexpr double kBnEps = 1e-5;
constexpr double kLnEps = 1e-5;

}  // namespace gssm::ad

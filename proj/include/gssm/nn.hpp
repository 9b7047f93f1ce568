#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "gssm/ad.hpp"
#include "gssm/rng.hpp"

namespace gssm::nn {

using ad::Matrix;

// y = x * w + b, w [in x out], b [1 x out].
struct Linear {
  Matrix w;
  Matrix b;
};

/// GELU between layers, linear output.
struct Mlp {
  std::vector<Linear> layers;
};

// Single LSTM cell; gate order (input, forget, cell, output).
// w_ih [in x 4H], w_hh [H x 4H], b [1 x 4H].
struct LstmCell {
  Matrix w_ih;
  Matrix w_hh;
  Matrix b;
  int hidden = 0;
};

struct LayerNormParams {
  Matrix gamma;  // [1 x d]
  Matrix beta;
};

// Pre-norm residual block: x + attn(ln1(x)), then x + ff(ln2(x)).
struct AttentionBlockParams {
  LayerNormParams ln1, ln2;
  Linear wq, wk, wv, wo;
  Linear ff1, ff2;
};

struct Conv1dParams {
  Matrix w;  // [3*c_in x c_out]
  Matrix b;  // [1 x c_out]
};

struct BatchNormParams {
  Matrix gamma;     // [T x d]
  Matrix beta;
  Matrix run_mean;  // buffers, not trained
  Matrix run_var;
};

struct ParamRef {
  std::string name;
  Matrix* value;
};

Linear make_linear(int in, int out, Rng& rng);
Mlp make_mlp(const std::vector<int>& dims, Rng& rng);
LstmCell make_lstm(int input, int hidden, Rng& rng);
LayerNormParams make_layer_norm(int d);
AttentionBlockParams make_attention_block(int d, int ff_hidden, Rng& rng);
Conv1dParams make_conv1d(int c_in, int c_out, Rng& rng);
BatchNormParams make_batch_norm(int tokens, int d);

void collect(Linear& l, const std::string& prefix, std::vector<ParamRef>& out);
void collect(Mlp& m, const std::string& prefix, std::vector<ParamRef>& out);
void collect(LstmCell& l, const std::string& prefix, std::vector<ParamRef>& out);
void collect(LayerNormParams& l, const std::string& prefix, std::vector<ParamRef>& out);
void collect(AttentionBlockParams& b, const std::string& prefix, std::vector<ParamRef>& out);
void collect(Conv1dParams& c, const std::string& prefix, std::vector<ParamRef>& out);
void collect(BatchNormParams& b, const std::string& prefix, std::vector<ParamRef>& out);

// Maps parameter matrices to graph nodes, one leaf (or constant) per matrix
// per graph, so gradients accumulate across every use site.
class ParamNodes {
 public:
  ParamNodes(ad::Graph& graph, bool trainable) : graph_(&graph), trainable_(trainable) {}

  int id(const Matrix& m);

 private:
  ad::Graph* graph_;
  bool trainable_;
  std::unordered_map<const Matrix*, int> ids_;
};

// When rng is non-null, hidden activations are dropped at `rate` with
// inverted scaling; masks come from the rng in call order.
struct DropoutPlan {
  Rng* rng = nullptr;
  double rate = 0.0;
};

int linear_fwd(ad::Graph& g, ParamNodes& p, const Linear& l, int x);
int mlp_fwd(ad::Graph& g, ParamNodes& p, const Mlp& m, int x);
int dropout_fwd(ad::Graph& g, int x, const DropoutPlan& plan);

/// Runs the cell over step inputs (each node [B x in]); returns hidden state
/// node after every step, in step order.
std::vector<int> lstm_fwd(ad::Graph& g, ParamNodes& p, const LstmCell& cell,
                          const std::vector<int>& step_inputs);

int attention_block_fwd(ad::Graph& g, ParamNodes& p, const AttentionBlockParams& blk,
                        int x, int tokens, int heads, const DropoutPlan& plan);

int conv1d_fwd(ad::Graph& g, ParamNodes& p, const Conv1dParams& c, int x, int tokens);

}  // namespace gssm::nn

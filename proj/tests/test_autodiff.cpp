#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "gssm/ad.hpp"
#include "gssm/nn.hpp"
#include "gssm/rng.hpp"

using namespace gssm;
using ad::Matrix;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal(0, scale);
  }
  return m;
}

// Central finite differences over every element of every parameter; eval must
// be a pure deterministic function of the parameter values.
void grad_check(std::vector<Matrix*> params,
                const std::function<double(std::vector<Matrix>*)>& eval,
                double tol = 1e-6, double h = 1e-6) {
  std::vector<Matrix> analytic;
  eval(&analytic);
  REQUIRE(analytic.size() == params.size());
  for (size_t p = 0; p < params.size(); ++p) {
    for (Eigen::Index c = 0; c < params[p]->cols(); ++c) {
      for (Eigen::Index r = 0; r < params[p]->rows(); ++r) {
        const double saved = (*params[p])(r, c);
        (*params[p])(r, c) = saved + h;
        const double up = eval(nullptr);
        (*params[p])(r, c) = saved - h;
        const double down = eval(nullptr);
        (*params[p])(r, c) = saved;
        const double fd = (up - down) / (2 * h);
        const double got = analytic[p](r, c);
        const double scale = std::max({1.0, std::fabs(fd), std::fabs(got)});
        CHECK(std::fabs(fd - got) / scale < tol);
      }
    }
  }
}

}  // namespace

TEST_CASE("elementwise and matmul ops backpropagate correctly") {
  Rng rng(1);
  Matrix a = random_matrix(3, 4, rng);
  Matrix b = random_matrix(4, 2, rng);
  Matrix bias = random_matrix(1, 2, rng);
  const Matrix w = random_matrix(3, 2, rng);

  grad_check({&a, &b, &bias}, [&](std::vector<Matrix>* grads) {
    ad::Graph g;
    const int na = g.leaf(a);
    const int nb = g.leaf(b);
    const int nbias = g.leaf(bias);
    int h = g.add_rowvec(g.matmul(na, nb), nbias);
    h = g.gelu(h);
    h = g.add(h, g.mul(h, g.constant(Matrix::Constant(3, 2, 0.3))));
    const int loss = g.sum_all(g.mul(h, g.constant(w)));
    if (grads != nullptr) {
      g.backward(loss);
      *grads = {g.grad(na), g.grad(nb), g.grad(nbias)};
    }
    return g.value(loss)(0, 0);
  });
}

TEST_CASE("unary math ops backpropagate correctly") {
  Rng rng(2);
  Matrix a = random_matrix(2, 5, rng, 0.5);
  a.array() += 2.0;  // keep log arguments positive
  const Matrix w = random_matrix(2, 5, rng);

  grad_check({&a}, [&](std::vector<Matrix>* grads) {
    ad::Graph g;
    const int na = g.leaf(a);
    const int mix =
        g.add(g.add(g.tanh_op(na), g.sigmoid(na)),
              g.add(g.log_op(na), g.add(g.exp_op(g.scale(na, -0.5)), g.erf_op(na))));
    const int loss = g.sum_all(g.mul(mix, g.constant(w)));
    if (grads != nullptr) {
      g.backward(loss);
      *grads = {g.grad(na)};
    }
    return g.value(loss)(0, 0);
  });
}

TEST_CASE("clamp gates gradients outside the interval") {
  Matrix a(1, 3);
  a << -2.0, 0.5, 3.0;
  ad::Graph g;
  const int na = g.leaf(a);
  const int loss = g.sum_all(g.clamp(na, -1.0, 1.0));
  g.backward(loss);
  CHECK(g.grad(na)(0, 0) == 0.0);
  CHECK(g.grad(na)(0, 1) == 1.0);
  CHECK(g.grad(na)(0, 2) == 0.0);
}

TEST_CASE("reductions, broadcast, slicing and token reshapes") {
  Rng rng(3);
  Matrix a = random_matrix(6, 4, rng);  // B=2, T=3 tokens
  const Matrix w = random_matrix(2, 12, rng);
  grad_check({&a}, [&](std::vector<Matrix>* grads) {
    ad::Graph g;
    const int na = g.leaf(a);
    const int flat = g.flatten_tokens(na, 3);                // [2 x 12]
    const int col = g.rowsum(g.slice_cols(flat, 2, 5));      // [2 x 1]
    const int wide = g.bcast_cols(col, 12);
    const int both = g.mul(g.concat_cols({g.slice_cols(flat, 0, 6), g.slice_cols(flat, 6, 6)}),
                           wide);
    const int loss = g.mean_all(g.mul(both, g.constant(w)));
    if (grads != nullptr) {
      g.backward(loss);
      *grads = {g.grad(na)};
    }
    return g.value(loss)(0, 0);
  });
}

TEST_CASE("softmax rows") {
  Rng rng(4);
  Matrix a = random_matrix(3, 5, rng);
  const Matrix w = random_matrix(3, 5, rng);
  grad_check({&a}, [&](std::vector<Matrix>* grads) {
    ad::Graph g;
    const int na = g.leaf(a);
    const int loss = g.sum_all(g.mul(g.softmax_rows(na), g.constant(w)));
    if (grads != nullptr) {
      g.backward(loss);
      *grads = {g.grad(na)};
    }
    return g.value(loss)(0, 0);
  });
}

TEST_CASE("attention scores and apply") {
  Rng rng(5);
  const int T = 3;
  Matrix q = random_matrix(2 * T, 4, rng);
  Matrix k = random_matrix(2 * T, 4, rng);
  Matrix v = random_matrix(2 * T, 4, rng);
  const Matrix w = random_matrix(2 * T, 4, rng);
  grad_check({&q, &k, &v}, [&](std::vector<Matrix>* grads) {
    ad::Graph g;
    const int nq = g.leaf(q);
    const int nk = g.leaf(k);
    const int nv = g.leaf(v);
    const int scores = g.attn_scores(nq, nk, T, 0.5);
    const int probs = g.softmax_rows(scores);
    const int out = g.attn_apply(probs, nv, T);
    const int loss = g.sum_all(g.mul(out, g.constant(w)));
    if (grads != nullptr) {
      g.backward(loss);
      *grads = {g.grad(nq), g.grad(nk), g.grad(nv)};
    }
    return g.value(loss)(0, 0);
  });
}

TEST_CASE("layer norm") {
  Rng rng(6);
  Matrix x = random_matrix(4, 6, rng);
  Matrix gamma = random_matrix(1, 6, rng);
  Matrix beta = random_matrix(1, 6, rng);
  const Matrix w = random_matrix(4, 6, rng);
  grad_check({&x, &gamma, &beta}, [&](std::vector<Matrix>* grads) {
    ad::Graph g;
    const int nx = g.leaf(x);
    const int ng = g.leaf(gamma);
    const int nb = g.leaf(beta);
    const int loss = g.sum_all(g.mul(g.layer_norm(nx, ng, nb), g.constant(w)));
    if (grads != nullptr) {
      g.backward(loss);
      *grads = {g.grad(nx), g.grad(ng), g.grad(nb)};
    }
    return g.value(loss)(0, 0);
  }, 1e-5);
}

TEST_CASE("batch norm, train and eval modes") {
  Rng rng(7);
  const int T = 3, B = 4, d = 2;
  Matrix x = random_matrix(B * T, d, rng);
  Matrix gamma = random_matrix(T, d, rng);
  Matrix beta = random_matrix(T, d, rng);
  const Matrix w = random_matrix(B * T, d, rng);
  const Matrix run_mean = random_matrix(T, d, rng, 0.3);
  const Matrix run_var = random_matrix(T, d, rng, 0.1).array().abs() + 0.5;

  grad_check({&x, &gamma, &beta}, [&](std::vector<Matrix>* grads) {
    ad::Graph g;
    const int nx = g.leaf(x);
    const int ng = g.leaf(gamma);
    const int nb = g.leaf(beta);
    const auto bn = g.batch_norm_train(nx, ng, nb, T);
    const int loss = g.sum_all(g.mul(bn.y, g.constant(w)));
    if (grads != nullptr) {
      g.backward(loss);
      *grads = {g.grad(nx), g.grad(ng), g.grad(nb)};
    }
    return g.value(loss)(0, 0);
  }, 1e-5);

  grad_check({&x, &gamma, &beta}, [&](std::vector<Matrix>* grads) {
    ad::Graph g;
    const int nx = g.leaf(x);
    const int ng = g.leaf(gamma);
    const int nb = g.leaf(beta);
    const int y = g.batch_norm_eval(nx, ng, nb, run_mean, run_var, T);
    const int loss = g.sum_all(g.mul(y, g.constant(w)));
    if (grads != nullptr) {
      g.backward(loss);
      *grads = {g.grad(nx), g.grad(ng), g.grad(nb)};
    }
    return g.value(loss)(0, 0);
  });
}

TEST_CASE("token convolution") {
  Rng rng(8);
  const int T = 4;
  Matrix x = random_matrix(2 * T, 3, rng);
  Matrix w = random_matrix(9, 2, rng);  // 3*c_in x c_out
  Matrix b = random_matrix(1, 2, rng);
  const Matrix mixer = random_matrix(2 * T, 2, rng);
  grad_check({&x, &w, &b}, [&](std::vector<Matrix>* grads) {
    ad::Graph g;
    const int nx = g.leaf(x);
    const int nw = g.leaf(w);
    const int nb = g.leaf(b);
    const int y = g.conv1d_tokens(nx, nw, nb, T);
    const int loss = g.sum_all(g.mul(y, g.constant(mixer)));
    if (grads != nullptr) {
      g.backward(loss);
      *grads = {g.grad(nx), g.grad(nw), g.grad(nb)};
    }
    return g.value(loss)(0, 0);
  });
}

TEST_CASE("stacked tokens route gradients back to each token") {
  Rng rng(9);
  Matrix t0 = random_matrix(2, 3, rng);
  Matrix t1 = random_matrix(2, 3, rng);
  const Matrix w = random_matrix(4, 3, rng);
  grad_check({&t0, &t1}, [&](std::vector<Matrix>* grads) {
    ad::Graph g;
    const int n0 = g.leaf(t0);
    const int n1 = g.leaf(t1);
    const int stacked = g.stack_tokens({n0, n1});
    const int loss = g.sum_all(g.mul(stacked, g.constant(w)));
    if (grads != nullptr) {
      g.backward(loss);
      *grads = {g.grad(n0), g.grad(n1)};
    }
    return g.value(loss)(0, 0);
  });
}

TEST_CASE("lstm cell over several steps") {
  Rng init_rng(10);
  nn::LstmCell cell = nn::make_lstm(3, 4, init_rng);
  Rng rng(11);
  const std::vector<Matrix> steps = {random_matrix(2, 3, rng), random_matrix(2, 3, rng),
                                     random_matrix(2, 3, rng)};
  const Matrix w = random_matrix(2, 4, rng);
  grad_check({&cell.w_ih, &cell.w_hh, &cell.b}, [&](std::vector<Matrix>* grads) {
    ad::Graph g;
    nn::ParamNodes pn(g, true);
    std::vector<int> inputs;
    for (const auto& s : steps) inputs.push_back(g.constant(s));
    const auto hiddens = nn::lstm_fwd(g, pn, cell, inputs);
    const int loss = g.sum_all(g.mul(hiddens.back(), g.constant(w)));
    if (grads != nullptr) {
      g.backward(loss);
      *grads = {g.grad(pn.id(cell.w_ih)), g.grad(pn.id(cell.w_hh)), g.grad(pn.id(cell.b))};
    }
    return g.value(loss)(0, 0);
  }, 1e-5);
}

TEST_CASE("full attention block over weights") {
  Rng init_rng(12);
  nn::AttentionBlockParams blk = nn::make_attention_block(4, 8, init_rng);
  Rng rng(13);
  const Matrix x = random_matrix(2 * 3, 4, rng);
  const Matrix w = random_matrix(2 * 3, 4, rng);
  auto refs_of = [&](std::vector<Matrix*>& out) {
    std::vector<nn::ParamRef> refs;
    nn::collect(blk, "blk", refs);
    for (auto& r : refs) out.push_back(r.value);
  };
  std::vector<Matrix*> params;
  refs_of(params);
  grad_check(params, [&](std::vector<Matrix>* grads) {
    ad::Graph g;
    nn::ParamNodes pn(g, true);
    const int nx = g.constant(x);
    const int y = nn::attention_block_fwd(g, pn, blk, nx, 3, 2, {});
    const int loss = g.sum_all(g.mul(y, g.constant(w)));
    if (grads != nullptr) {
      g.backward(loss);
      grads->clear();
      std::vector<nn::ParamRef> refs;
      nn::collect(blk, "blk", refs);
      for (auto& r : refs) grads->push_back(g.grad(pn.id(*r.value)));
    }
    return g.value(loss)(0, 0);
  }, 1e-5);
}

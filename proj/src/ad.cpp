#include "gssm/ad.hpp"

#include <cmath>

#include "gssm/errors.hpp"
#include "gssm/mathx.hpp"

namespace gssm::ad {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

int Graph::push(Matrix val, bool needs_grad, std::function<void(Graph&, int)> backward) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (!n.grad_ready) {
    n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
    n.grad_ready = true;
  }
  n.grad += g;
}

const Matrix& Graph::grad(int id) const {
  const Node& n = nodes_[id];
  if (!n.grad_ready) {
    static const Matrix empty;
    throw NumericError("ad::Graph: gradient not computed for node");
  }
  return n.grad;
}

void Graph::clear() { nodes_.clear(); }

int Graph::constant(Matrix v) { return push(std::move(v), false, nullptr); }

int Graph::leaf(Matrix v) { return push(std::move(v), true, nullptr); }

int Graph::add(int a, int b) {
  return push(nodes_[a].val + nodes_[b].val, nodes_[a].needs_grad || nodes_[b].needs_grad,
              [a, b](Graph& g, int self) {
                g.accumulate(a, g.nodes_[self].grad);
                g.accumulate(b, g.nodes_[self].grad);
              });
}

int Graph::sub(int a, int b) {
  return push(nodes_[a].val - nodes_[b].val, nodes_[a].needs_grad || nodes_[b].needs_grad,
              [a, b](Graph& g, int self) {
                g.accumulate(a, g.nodes_[self].grad);
                g.accumulate(b, -g.nodes_[self].grad);
              });
}

int Graph::mul(int a, int b) {
  return push(nodes_[a].val.cwiseProduct(nodes_[b].val),
              nodes_[a].needs_grad || nodes_[b].needs_grad, [a, b](Graph& g, int self) {
                g.accumulate(a, g.nodes_[self].grad.cwiseProduct(g.nodes_[b].val));
                g.accumulate(b, g.nodes_[self].grad.cwiseProduct(g.nodes_[a].val));
              });
}

int Graph::scale(int a, double c) {
  return push(nodes_[a].val * c, nodes_[a].needs_grad, [a, c](Graph& g, int self) {
    g.accumulate(a, g.nodes_[self].grad * c);
  });
}

int Graph::add_scalar(int a, double c) {
  return push(nodes_[a].val.array() + c, nodes_[a].needs_grad, [a](Graph& g, int self) {
    g.accumulate(a, g.nodes_[self].grad);
  });
}

int Graph::matmul(int a, int b) {
  return push(nodes_[a].val * nodes_[b].val, nodes_[a].needs_grad || nodes_[b].needs_grad,
              [a, b](Graph& g, int self) {
                const Matrix& dy = g.nodes_[self].grad;
                if (g.nodes_[a].needs_grad) g.accumulate(a, dy * g.nodes_[b].val.transpose());
                if (g.nodes_[b].needs_grad) g.accumulate(b, g.nodes_[a].val.transpose() * dy);
              });
}

int Graph::add_rowvec(int a, int b) {
  Matrix v = nodes_[a].val;
  v.rowwise() += nodes_[b].val.row(0);
  return push(std::move(v), nodes_[a].needs_grad || nodes_[b].needs_grad,
              [a, b](Graph& g, int self) {
                const Matrix& dy = g.nodes_[self].grad;
                g.accumulate(a, dy);
                if (g.nodes_[b].needs_grad) g.accumulate(b, dy.colwise().sum());
              });
}

int Graph::gelu(int a) {
  const auto& x = nodes_[a].val.array();
  Matrix y = 0.5 * x * (1.0 + x.unaryExpr([](double v) { return erf_approx(v * kInvSqrt2); }));
  return push(std::move(y), nodes_[a].needs_grad, [a](Graph& g, int self) {
    const auto& x = g.nodes_[a].val.array();
    Matrix d = (0.5 * (1.0 + x.unaryExpr([](double v) { return erf_approx(v * kInvSqrt2); })) +
                x * (-0.5 * x * x).exp() * kInvSqrt2Pi)
                   .matrix();
    g.accumulate(a, g.nodes_[self].grad.cwiseProduct(d));
  });
}

int Graph::tanh_op(int a) {
  return push(nodes_[a].val.array().tanh(), nodes_[a].needs_grad, [a](Graph& g, int self) {
    const auto& y = g.nodes_[self].val.array();
    g.accumulate(a, (g.nodes_[self].grad.array() * (1.0 - y * y)).matrix());
  });
}

int Graph::sigmoid(int a) {
  Matrix y = (1.0 / (1.0 + (-nodes_[a].val.array()).exp())).matrix();
  return push(std::move(y), nodes_[a].needs_grad, [a](Graph& g, int self) {
    const auto& y = g.nodes_[self].val.array();
    g.accumulate(a, (g.nodes_[self].grad.array() * y * (1.0 - y)).matrix());
  });
}

int Graph::exp_op(int a) {
  return push(nodes_[a].val.array().exp(), nodes_[a].needs_grad, [a](Graph& g, int self) {
    g.accumulate(a, g.nodes_[self].grad.cwiseProduct(g.nodes_[self].val));
  });
}

int Graph::log_op(int a) {
  return push(nodes_[a].val.array().log(), nodes_[a].needs_grad, [a](Graph& g, int self) {
    g.accumulate(a, (g.nodes_[self].grad.array() / g.nodes_[a].val.array()).matrix());
  });
}

int Graph::erf_op(int a) {
  Matrix y = nodes_[a].val.unaryExpr([](double v) { return erf_approx(v); });
  return push(std::move(y), nodes_[a].needs_grad, [a](Graph& g, int self) {
    const auto& x = g.nodes_[a].val.array();
    const Matrix d = (2.0 / std::sqrt(kPi) * (-x * x).exp()).matrix();
    g.accumulate(a, g.nodes_[self].grad.cwiseProduct(d));
  });
}

int Graph::clamp(int a, double lo, double hi) {
  Matrix y = nodes_[a].val.array().min(hi).max(lo);
  return push(std::move(y), nodes_[a].needs_grad, [a, lo, hi](Graph& g, int self) {
    const auto& x = g.nodes_[a].val.array();
    const Matrix gate = ((x > lo) && (x < hi)).cast<double>();
    g.accumulate(a, g.nodes_[self].grad.cwiseProduct(gate));
  });
}

int Graph::sum_all(int a) {
  Matrix y(1, 1);
  y(0, 0) = nodes_[a].val.sum();
  return push(std::move(y), nodes_[a].needs_grad, [a](Graph& g, int self) {
    const double d = g.nodes_[self].grad(0, 0);
    g.accumulate(a, Matrix::Constant(g.nodes_[a].val.rows(), g.nodes_[a].val.cols(), d));
  });
}

int Graph::mean_all(int a) {
  const double n = static_cast<double>(nodes_[a].val.size());
  Matrix y(1, 1);
  y(0, 0) = nodes_[a].val.sum() / n;
  return push(std::move(y), nodes_[a].needs_grad, [a, n](Graph& g, int self) {
    const double d = g.nodes_[self].grad(0, 0) / n;
    g.accumulate(a, Matrix::Constant(g.nodes_[a].val.rows(), g.nodes_[a].val.cols(), d));
  });
}

int Graph::rowsum(int a) {
  return push(nodes_[a].val.rowwise().sum(), nodes_[a].needs_grad, [a](Graph& g, int self) {
    g.accumulate(a, g.nodes_[self].grad * Matrix::Ones(1, g.nodes_[a].val.cols()));
  });
}

int Graph::colsum(int a) {
  return push(nodes_[a].val.colwise().sum(), nodes_[a].needs_grad, [a](Graph& g, int self) {
    g.accumulate(a, Matrix::Ones(g.nodes_[a].val.rows(), 1) * g.nodes_[self].grad);
  });
}

int Graph::bcast_cols(int a, int k) {
  if (nodes_[a].val.cols() != 1) throw NumericError("bcast_cols: input must be a column");
  return push(nodes_[a].val * Matrix::Ones(1, k), nodes_[a].needs_grad,
              [a](Graph& g, int self) {
                g.accumulate(a, g.nodes_[self].grad.rowwise().sum());
              });
}

int Graph::slice_cols(int a, int start, int count) {
  return push(nodes_[a].val.middleCols(start, count), nodes_[a].needs_grad,
              [a, start, count](Graph& g, int self) {
                Matrix d = Matrix::Zero(g.nodes_[a].val.rows(), g.nodes_[a].val.cols());
                d.middleCols(start, count) = g.nodes_[self].grad;
                g.accumulate(a, d);
              });
}

int Graph::concat_cols(const std::vector<int>& parts) {
  Eigen::Index cols = 0;
  bool needs = false;
  for (int p : parts) {
    cols += nodes_[p].val.cols();
    needs = needs || nodes_[p].needs_grad;
  }
  Matrix y(nodes_[parts.front()].val.rows(), cols);
  Eigen::Index at = 0;
  for (int p : parts) {
    y.middleCols(at, nodes_[p].val.cols()) = nodes_[p].val;
    at += nodes_[p].val.cols();
  }
  return push(std::move(y), needs, [parts](Graph& g, int self) {
    Eigen::Index at = 0;
    for (int p : parts) {
      const Eigen::Index c = g.nodes_[p].val.cols();
      g.accumulate(p, g.nodes_[self].grad.middleCols(at, c));
      at += c;
    }
  });
}

int Graph::stack_tokens(const std::vector<int>& tokens) {
  const auto T = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index B = nodes_[tokens.front()].val.rows();
  const Eigen::Index d = nodes_[tokens.front()].val.cols();
  Matrix y(B * T, d);
  bool needs = false;
  for (Eigen::Index t = 0; t < T; ++t) {
    const Node& n = nodes_[tokens[t]];
    needs = needs || n.needs_grad;
    for (Eigen::Index b = 0; b < B; ++b) y.row(b * T + t) = n.val.row(b);
  }
  return push(std::move(y), needs, [tokens, B, T](Graph& g, int self) {
    for (Eigen::Index t = 0; t < T; ++t) {
      if (!g.nodes_[tokens[t]].needs_grad) continue;
      Matrix d(B, g.nodes_[tokens[t]].val.cols());
      for (Eigen::Index b = 0; b < B; ++b) d.row(b) = g.nodes_[self].grad.row(b * T + t);
      g.accumulate(tokens[t], d);
    }
  });
}

int Graph::flatten_tokens(int a, int tokens) {
  const Eigen::Index T = tokens;
  const Matrix& xv = nodes_[a].val;
  const Eigen::Index B = xv.rows() / T;
  const Eigen::Index d = xv.cols();
  Matrix y(B, T * d);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index t = 0; t < T; ++t) y.block(b, t * d, 1, d) = xv.row(b * T + t);
  }
  return push(std::move(y), nodes_[a].needs_grad, [a, T, B, d](Graph& g, int self) {
    const Matrix& dy = g.nodes_[self].grad;
    Matrix dx(B * T, d);
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index t = 0; t < T; ++t) dx.row(b * T + t) = dy.block(b, t * d, 1, d);
    }
    g.accumulate(a, dx);
  });
}

int Graph::attn_scores(int q, int k, int tokens, double scale) {
  const Eigen::Index T = tokens;
  const Eigen::Index B = nodes_[q].val.rows() / T;
  Matrix y(B * T, T);
  for (Eigen::Index b = 0; b < B; ++b) {
    y.middleRows(b * T, T) = scale * nodes_[q].val.middleRows(b * T, T) *
                             nodes_[k].val.middleRows(b * T, T).transpose();
  }
  return push(std::move(y), nodes_[q].needs_grad || nodes_[k].needs_grad,
              [q, k, T, B, scale](Graph& g, int self) {
                const Matrix& dy = g.nodes_[self].grad;
                Matrix dq = Matrix::Zero(g.nodes_[q].val.rows(), g.nodes_[q].val.cols());
                Matrix dk = dq;
                for (Eigen::Index b = 0; b < B; ++b) {
                  const auto ds = dy.middleRows(b * T, T);
                  dq.middleRows(b * T, T) =
                      scale * ds * g.nodes_[k].val.middleRows(b * T, T);
                  dk.middleRows(b * T, T) =
                      scale * ds.transpose() * g.nodes_[q].val.middleRows(b * T, T);
                }
                g.accumulate(q, dq);
                g.accumulate(k, dk);
              });
}

int Graph::softmax_rows(int a) {
  Matrix y = nodes_[a].val;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return push(std::move(y), nodes_[a].needs_grad, [a](Graph& g, int self) {
    const Matrix& y = g.nodes_[self].val;
    const Matrix& dy = g.nodes_[self].grad;
    Matrix dx = y.cwiseProduct(dy);
    const Eigen::VectorXd dot = dx.rowwise().sum();
    dx -= y.cwiseProduct(dot * Matrix::Ones(1, y.cols()));
    g.accumulate(a, dx);
  });
}

int Graph::attn_apply(int p, int v, int tokens) {
  const Eigen::Index T = tokens;
  const Eigen::Index B = nodes_[p].val.rows() / T;
  Matrix y(B * T, nodes_[v].val.cols());
  for (Eigen::Index b = 0; b < B; ++b) {
    y.middleRows(b * T, T) =
        nodes_[p].val.middleRows(b * T, T) * nodes_[v].val.middleRows(b * T, T);
  }
  return push(std::move(y), nodes_[p].needs_grad || nodes_[v].needs_grad,
              [p, v, T, B](Graph& g, int self) {
                const Matrix& dy = g.nodes_[self].grad;
                Matrix dp = Matrix::Zero(g.nodes_[p].val.rows(), g.nodes_[p].val.cols());
                Matrix dv = Matrix::Zero(g.nodes_[v].val.rows(), g.nodes_[v].val.cols());
                for (Eigen::Index b = 0; b < B; ++b) {
                  const auto dyb = dy.middleRows(b * T, T);
                  dp.middleRows(b * T, T) =
                      dyb * g.nodes_[v].val.middleRows(b * T, T).transpose();
                  dv.middleRows(b * T, T) =
                      g.nodes_[p].val.middleRows(b * T, T).transpose() * dyb;
                }
                g.accumulate(p, dp);
                g.accumulate(v, dv);
              });
}

int Graph::layer_norm(int x, int gamma, int beta) {
  const Matrix& xv = nodes_[x].val;
  const auto d = static_cast<double>(xv.cols());
  Matrix y(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().sum() / d;
    y.row(r) = ((xv.row(r).array() - mu) / std::sqrt(var + kLnEps)).matrix();
  }
  Matrix out = y;
  out.array().rowwise() *= nodes_[gamma].val.row(0).array();
  out.rowwise() += nodes_[beta].val.row(0);
  const bool needs =
      nodes_[x].needs_grad || nodes_[gamma].needs_grad || nodes_[beta].needs_grad;
  const int xhat = constant(std::move(y));  // cached normalized input
  return push(std::move(out), needs, [x, gamma, beta, xhat, d](Graph& g, int self) {
    const Matrix& dy = g.nodes_[self].grad;
    const Matrix& xh = g.nodes_[xhat].val;
    if (g.nodes_[gamma].needs_grad) g.accumulate(gamma, dy.cwiseProduct(xh).colwise().sum());
    if (g.nodes_[beta].needs_grad) g.accumulate(beta, dy.colwise().sum());
    if (!g.nodes_[x].needs_grad) return;
    const Matrix& xv = g.nodes_[x].val;
    Matrix dx(xv.rows(), xv.cols());
    const auto& gam = g.nodes_[gamma].val.row(0).array();
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      const double mu = xv.row(r).mean();
      const double var = (xv.row(r).array() - mu).square().sum() / d;
      const double inv = 1.0 / std::sqrt(var + kLnEps);
      const Eigen::ArrayXd dxhat = dy.row(r).array().transpose() * gam.transpose();
      const Eigen::ArrayXd xhr = xh.row(r).array().transpose();
      const double m1 = dxhat.mean();
      const double m2 = (dxhat * xhr).mean();
      dx.row(r) = ((dxhat - m1 - xhr * m2) * inv).matrix().transpose();
    }
    g.accumulate(x, dx);
  });
}

namespace {

// Rows of token t across the batch, as a dense [B x d] matrix.
Matrix gather_token(const Matrix& x, Eigen::Index t, Eigen::Index B, Eigen::Index T) {
  Matrix out(B, x.cols());
  for (Eigen::Index b = 0; b < B; ++b) out.row(b) = x.row(b * T + t);
  return out;
}

void scatter_token(Matrix& dst, const Matrix& rows, Eigen::Index t, Eigen::Index B,
                   Eigen::Index T) {
  for (Eigen::Index b = 0; b < B; ++b) dst.row(b * T + t) = rows.row(b);
}

}  // namespace

Graph::BatchNormResult Graph::batch_norm_train(int x, int gamma, int beta, int tokens) {
  const Eigen::Index T = tokens;
  const Matrix& xv = nodes_[x].val;
  const Eigen::Index B = xv.rows() / T;
  const Eigen::Index d = xv.cols();

  Matrix mean(T, d), var(T, d);
  Matrix xhat(xv.rows(), d);
  Matrix out(xv.rows(), d);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Matrix group = gather_token(xv, t, B, T);
    mean.row(t) = group.colwise().mean();
    const Matrix centered = group.rowwise() - mean.row(t);
    var.row(t) = centered.array().square().colwise().mean();
    const Eigen::RowVectorXd inv = (var.row(t).array() + kBnEps).sqrt().inverse();
    const Matrix xh = (centered.array().rowwise() * inv.array()).matrix();
    scatter_token(xhat, xh, t, B, T);
    const Matrix y =
        (xh.array().rowwise() * nodes_[gamma].val.row(t).array()).matrix().rowwise() +
        nodes_[beta].val.row(t);
    scatter_token(out, y, t, B, T);
  }
  const bool needs =
      nodes_[x].needs_grad || nodes_[gamma].needs_grad || nodes_[beta].needs_grad;
  const int xhat_id = constant(std::move(xhat));
  const int var_id = constant(var);

  BatchNormResult res;
  res.batch_mean = mean;
  res.batch_var = var;
  res.y = push(std::move(out), needs, [x, gamma, beta, xhat_id, var_id, T, B](Graph& g,
                                                                              int self) {
    const Matrix& dy = g.nodes_[self].grad;
    const Matrix& xh = g.nodes_[xhat_id].val;
    const Matrix& var = g.nodes_[var_id].val;
    const bool want_scale = g.nodes_[gamma].needs_grad || g.nodes_[beta].needs_grad;
    Matrix dgamma, dbeta, dx;
    if (want_scale) {
      dgamma = Matrix::Zero(T, xh.cols());
      dbeta = Matrix::Zero(T, xh.cols());
    }
    if (g.nodes_[x].needs_grad) dx.resize(xh.rows(), xh.cols());
    for (Eigen::Index t = 0; t < T; ++t) {
      const Matrix dy_t = gather_token(dy, t, B, T);
      const Matrix xh_t = gather_token(xh, t, B, T);
      if (want_scale) {
        dgamma.row(t) = dy_t.cwiseProduct(xh_t).colwise().sum();
        dbeta.row(t) = dy_t.colwise().sum();
      }
      if (g.nodes_[x].needs_grad) {
        const Eigen::RowVectorXd inv = (var.row(t).array() + kBnEps).sqrt().inverse();
        const Matrix dxh =
            (dy_t.array().rowwise() * g.nodes_[gamma].val.row(t).array()).matrix();
        const Eigen::RowVectorXd m1 = dxh.colwise().mean();
        const Eigen::RowVectorXd m2 = dxh.cwiseProduct(xh_t).colwise().mean();
        const Matrix dx_t =
            ((((dxh.rowwise() - m1) -
               (xh_t.array().rowwise() * m2.array()).matrix())
                  .array()
                  .rowwise() *
              inv.array()))
                .matrix();
        scatter_token(dx, dx_t, t, B, T);
      }
    }
    if (want_scale) {
      g.accumulate(gamma, dgamma);
      g.accumulate(beta, dbeta);
    }
    if (g.nodes_[x].needs_grad) g.accumulate(x, dx);
  });
  return res;
}

int Graph::batch_norm_eval(int x, int gamma, int beta, const Matrix& run_mean,
                           const Matrix& run_var, int tokens) {
  const Eigen::Index T = tokens;
  const Matrix& xv = nodes_[x].val;
  const Eigen::Index B = xv.rows() / T;
  Matrix inv_scale(T, xv.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    inv_scale.row(t) = (run_var.row(t).array() + kBnEps).sqrt().inverse().matrix();
  }
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    const Matrix group = gather_token(xv, t, B, T);
    const Matrix y = ((((group.rowwise() - run_mean.row(t)).array().rowwise() *
                        inv_scale.row(t).array())
                           .rowwise() *
                       nodes_[gamma].val.row(t).array()))
                         .matrix()
                         .rowwise() +
                     nodes_[beta].val.row(t);
    scatter_token(out, y, t, B, T);
  }
  const bool needs =
      nodes_[x].needs_grad || nodes_[gamma].needs_grad || nodes_[beta].needs_grad;
  const int inv_id = constant(std::move(inv_scale));
  const int mean_id = constant(run_mean);
  return push(std::move(out), needs, [x, gamma, beta, inv_id, mean_id, T, B](Graph& g,
                                                                             int self) {
    const Matrix& dy = g.nodes_[self].grad;
    const Matrix& inv = g.nodes_[inv_id].val;
    if (g.nodes_[gamma].needs_grad || g.nodes_[beta].needs_grad) {
      const Matrix& xv = g.nodes_[x].val;
      const Matrix& mean = g.nodes_[mean_id].val;
      Matrix dgamma = Matrix::Zero(T, xv.cols());
      Matrix dbeta = Matrix::Zero(T, xv.cols());
      for (Eigen::Index t = 0; t < T; ++t) {
        const Matrix dy_t = gather_token(dy, t, B, T);
        const Matrix xh = ((gather_token(xv, t, B, T).rowwise() - mean.row(t))
                               .array()
                               .rowwise() *
                           inv.row(t).array())
                              .matrix();
        dgamma.row(t) = dy_t.cwiseProduct(xh).colwise().sum();
        dbeta.row(t) = dy_t.colwise().sum();
      }
      g.accumulate(gamma, dgamma);
      g.accumulate(beta, dbeta);
    }
    if (!g.nodes_[x].needs_grad) return;
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index t = 0; t < T; ++t) {
      const Matrix dx_t = (gather_token(dy, t, B, T).array().rowwise() *
                           (g.nodes_[gamma].val.row(t).array() * inv.row(t).array()))
                              .matrix();
      scatter_token(dx, dx_t, t, B, T);
    }
    g.accumulate(x, dx);
  });
}

namespace {

// Token-axis shift within each sample block; rows outside [0, T) become zero.
Matrix shift_tokens(const Matrix& x, Eigen::Index T, int offset) {
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  const Eigen::Index B = x.rows() / T;
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const Eigen::Index src = t + offset;
      if (src >= 0 && src < T) out.row(b * T + t) = x.row(b * T + src);
    }
  }
  return out;
}

}  // namespace

int Graph::conv1d_tokens(int x, int w, int bias, int tokens) {
  const Eigen::Index T = tokens;
  const Matrix& xv = nodes_[x].val;
  const Eigen::Index cin = xv.cols();
  const Matrix& wv = nodes_[w].val;  // [3*cin x cout]
  Matrix y = Matrix::Zero(xv.rows(), wv.cols());
  for (int k = 0; k < 3; ++k) {
    y.noalias() += shift_tokens(xv, T, k - 1) * wv.middleRows(k * cin, cin);
  }
  y.rowwise() += nodes_[bias].val.row(0);
  const bool needs =
      nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[bias].needs_grad;
  return push(std::move(y), needs, [x, w, bias, T, cin](Graph& g, int self) {
    const Matrix& dy = g.nodes_[self].grad;
    const Matrix& xv = g.nodes_[x].val;
    const Matrix& wv = g.nodes_[w].val;
    if (g.nodes_[bias].needs_grad) g.accumulate(bias, dy.colwise().sum());
    if (g.nodes_[w].needs_grad) {
      Matrix dw = Matrix::Zero(wv.rows(), wv.cols());
      for (int k = 0; k < 3; ++k) {
        dw.middleRows(k * cin, cin) = shift_tokens(xv, T, k - 1).transpose() * dy;
      }
      g.accumulate(w, dw);
    }
    if (g.nodes_[x].needs_grad) {
      Matrix dx = Matrix::Zero(xv.rows(), xv.cols());
      for (int k = 0; k < 3; ++k) {
        dx += shift_tokens(dy * wv.middleRows(k * cin, cin).transpose(), T, -(k - 1));
      }
      g.accumulate(x, dx);
    }
  });
}

void Graph::backward(int root) {
  Node& r = nodes_[root];
  if (r.val.size() != 1) throw NumericError("ad::backward: root must be scalar");
  if (!r.needs_grad) throw NumericError("ad::backward: root does not require grad");
  r.grad = Matrix::Ones(1, 1);
  r.grad_ready = true;
  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad_ready && n.backward) n.backward(*this, id);
  }
}

}  // namespace gssm::ad

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "otinform/io.hpp"
#include "otinform/matrix.hpp"
#include "otinform/measure.hpp"
#include "otinform/rng.hpp"

namespace otinform::nn {

constexpr double kLeakySlope = 0.2;

enum class Op {
  Leaf,
  Affine,
  LeakyRelu,
  Tanh,
  Exp,
  Log,
  ClampMax,
  Add,
  Sub,
  Mul,
  Scale,
  AddConst,
  MatMulNT,
  PairwiseCost,
  RepeatRow,
  RepeatCol,
  LogSumExpRows,
  MeanAll,
  SumAll,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Affine: return "affine";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::ClampMax: return "clamp_max";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddConst: return "add_const";
    case Op::MatMulNT: return "matmul_nt";
    case Op::PairwiseCost: return "pairwise_cost";
    case Op::RepeatRow: return "repeat_row";
    case Op::RepeatCol: return "repeat_col";
    case Op::LogSumExpRows: return "logsumexp_rows";
    case Op::MeanAll: return "mean_all";
    case Op::SumAll: return "sum_all";
  }
  return "?";
}

/// Record-and-replay reverse-mode tape over Matrix values. The op set covers
/// exactly what the training losses need; every forward result is checked for
/// non-finite entries and reported with the offending op.
class Tape {
 public:
  int leaf(Matrix value, bool requires_grad = false) {
    return push(Op::Leaf, -1, -1, -1, 0.0, CostKind::SqL2, std::move(value), requires_grad);
  }

  /// y = x w + b (row-broadcast bias). x: n x in, w: in x out, b: 1 x out.
  int affine(int x, int w, int b) {
    const Matrix& xv = value(x);
    const Matrix& wv = value(w);
    const Matrix& bv = value(b);
    if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols())
      throw std::invalid_argument("affine: shape mismatch");
    Matrix y = matmul(xv, wv);
    for (int i = 0; i < y.rows(); ++i) {
      double* yi = y.row(i);
      for (int j = 0; j < y.cols(); ++j) yi[j] += bv(0, j);
    }
    return push(Op::Affine, x, w, b, 0.0, CostKind::SqL2, std::move(y),
                needs_grad(x) || needs_grad(w) || needs_grad(b));
  }

  int leaky_relu(int a, double slope = kLeakySlope) {
    Matrix y = value(a);
    for (int i = 0; i < y.rows(); ++i) {
      double* yi = y.row(i);
      for (int j = 0; j < y.cols(); ++j)
        if (yi[j] < 0.0) yi[j] *= slope;
    }
    return push(Op::LeakyRelu, a, -1, -1, slope, CostKind::SqL2, std::move(y), needs_grad(a));
  }

  int tanh_op(int a) {
    Matrix y = value(a);
    for (int i = 0; i < y.rows(); ++i) {
      double* yi = y.row(i);
      for (int j = 0; j < y.cols(); ++j) yi[j] = std::tanh(yi[j]);
    }
    return push(Op::Tanh, a, -1, -1, 0.0, CostKind::SqL2, std::move(y), needs_grad(a));
  }

  int exp_op(int a) {
    Matrix y = value(a);
    for (int i = 0; i < y.rows(); ++i) {
      double* yi = y.row(i);
      for (int j = 0; j < y.cols(); ++j) yi[j] = std::exp(yi[j]);
    }
    return push(Op::Exp, a, -1, -1, 0.0, CostKind::SqL2, std::move(y), needs_grad(a));
  }

  int log_op(int a) {
    Matrix y = value(a);
    for (int i = 0; i < y.rows(); ++i) {
      double* yi = y.row(i);
      for (int j = 0; j < y.cols(); ++j) yi[j] = std::log(yi[j]);
    }
    return push(Op::Log, a, -1, -1, 0.0, CostKind::SqL2, std::move(y), needs_grad(a));
  }

  /// min(x, cap) elementwise; gradient is zero where the cap is active.
  int clamp_max(int a, double cap) {
    Matrix y = value(a);
    for (int i = 0; i < y.rows(); ++i) {
      double* yi = y.row(i);
      for (int j = 0; j < y.cols(); ++j) yi[j] = std::min(yi[j], cap);
    }
    return push(Op::ClampMax, a, -1, -1, cap, CostKind::SqL2, std::move(y), needs_grad(a));
  }

  int add(int a, int b) { return binary(Op::Add, a, b); }
  int sub(int a, int b) { return binary(Op::Sub, a, b); }
  int mul(int a, int b) { return binary(Op::Mul, a, b); }

  int scale(int a, double s) {
    Matrix y = value(a);
    for (int i = 0; i < y.rows(); ++i) {
      double* yi = y.row(i);
      for (int j = 0; j < y.cols(); ++j) yi[j] *= s;
    }
    return push(Op::Scale, a, -1, -1, s, CostKind::SqL2, std::move(y), needs_grad(a));
  }

  int add_const(int a, double s) {
    Matrix y = value(a);
    for (int i = 0; i < y.rows(); ++i) {
      double* yi = y.row(i);
      for (int j = 0; j < y.cols(); ++j) yi[j] += s;
    }
    return push(Op::AddConst, a, -1, -1, s, CostKind::SqL2, std::move(y), needs_grad(a));
  }

  /// y = a b^T; a: n x k, b: m x k.
  int matmul_nt_op(int a, int b) {
    Matrix y = matmul_nt(value(a), value(b));
    return push(Op::MatMulNT, a, b, -1, 0.0, CostKind::SqL2, std::move(y),
                needs_grad(a) || needs_grad(b));
  }

  /// y_ij = c(a_i, b_j) for the given ground cost kind.
  int pairwise_cost(int a, int b, CostKind kind) {
    Matrix y = cost_matrix(GroundCost{kind}, value(a), value(b));
    return push(Op::PairwiseCost, a, b, -1, 0.0, kind, std::move(y),
                needs_grad(a) || needs_grad(b));
  }

  /// a: m x 1 -> n x m, entry (i, j) = a_j.
  int repeat_row(int a, int n) {
    const Matrix& av = value(a);
    if (av.cols() != 1) throw std::invalid_argument("repeat_row: input must be a column vector");
    Matrix y(n, av.rows());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < av.rows(); ++j) y(i, j) = av(j, 0);
    return push(Op::RepeatRow, a, -1, -1, 0.0, CostKind::SqL2, std::move(y), needs_grad(a));
  }

  /// a: n x 1 -> n x m, entry (i, j) = a_i.
  int repeat_col(int a, int m) {
    const Matrix& av = value(a);
    if (av.cols() != 1) throw std::invalid_argument("repeat_col: input must be a column vector");
    Matrix y(av.rows(), m);
    for (int i = 0; i < av.rows(); ++i)
      for (int j = 0; j < m; ++j) y(i, j) = av(i, 0);
    return push(Op::RepeatCol, a, -1, -1, 0.0, CostKind::SqL2, std::move(y), needs_grad(a));
  }

  /// Row-wise log sum exp with max subtraction; n x m -> n x 1.
  int logsumexp_rows(int a) {
    const Matrix& av = value(a);
    Matrix y(av.rows(), 1);
    for (int i = 0; i < av.rows(); ++i) y(i, 0) = logsumexp(av.row_span(i));
    return push(Op::LogSumExpRows, a, -1, -1, 0.0, CostKind::SqL2, std::move(y), needs_grad(a));
  }

  int mean_all(int a) {
    const Matrix& av = value(a);
    Matrix y(1, 1);
    y(0, 0) = av.sum() / static_cast<double>(av.size());
    return push(Op::MeanAll, a, -1, -1, 0.0, CostKind::SqL2, std::move(y), needs_grad(a));
  }

  int sum_all(int a) {
    const Matrix& av = value(a);
    Matrix y(1, 1);
    y(0, 0) = av.sum();
    return push(Op::SumAll, a, -1, -1, 0.0, CostKind::SqL2, std::move(y), needs_grad(a));
  }

  const Matrix& value(int id) const { return nodes_[check(id)].value; }
  double scalar(int id) const {
    const Matrix& v = value(id);
    if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("scalar: node is not 1x1");
    return v(0, 0);
  }
  bool needs_grad(int id) const { return nodes_[check(id)].needs_grad; }
  const Matrix& grad(int id) const {
    const Node& n = nodes_[check(id)];
    if (!n.needs_grad) throw std::invalid_argument("grad: node does not track gradients");
    return n.grad;
  }

  /// Reverse sweep from a scalar loss node.
  void backward(int loss) {
    Node& top = nodes_[check(loss)];
    if (top.value.rows() != 1 || top.value.cols() != 1)
      throw std::invalid_argument("backward: loss must be a 1x1 node");
    if (!top.needs_grad) return;
    for (Node& n : nodes_)
      if (n.needs_grad) {
        n.grad = Matrix(n.value.rows(), n.value.cols());
      }
    top.grad(0, 0) = 1.0;
    for (int id = loss; id >= 0; --id) {
      const Node& n = nodes_[id];
      if (!n.needs_grad || n.op == Op::Leaf) continue;
      backprop(n);
    }
  }

 private:
  struct Node {
    Op op;
    int a, b, c;
    double scalar;
    CostKind kind;
    Matrix value;
    Matrix grad;
    bool needs_grad;
  };

  int check(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("Tape: bad node id");
    return id;
  }

  int binary(Op op, int a, int b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch");
    Matrix y(av.rows(), av.cols());
    const double* pa = av.data();
    const double* pb = bv.data();
    double* py = y.data();
    const std::size_t sz = y.size();
    switch (op) {
      case Op::Add:
        for (std::size_t k = 0; k < sz; ++k) py[k] = pa[k] + pb[k];
        break;
      case Op::Sub:
        for (std::size_t k = 0; k < sz; ++k) py[k] = pa[k] - pb[k];
        break;
      case Op::Mul:
        for (std::size_t k = 0; k < sz; ++k) py[k] = pa[k] * pb[k];
        break;
      default: throw std::logic_error("binary: bad op");
    }
    return push(op, a, b, -1, 0.0, CostKind::SqL2, std::move(y), needs_grad(a) || needs_grad(b));
  }

  int push(Op op, int a, int b, int c, double s, CostKind kind, Matrix value, bool ng) {
    if (!value.all_finite())
      throw std::runtime_error(std::string("non-finite value produced by op '") + op_name(op) + "'");
    nodes_.push_back(Node{op, a, b, c, s, kind, std::move(value), Matrix(), ng});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void accumulate(int id, const Matrix& delta) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    double* pg = n.grad.data();
    const double* pd = delta.data();
    for (std::size_t k = 0; k < n.grad.size(); ++k) pg[k] += pd[k];
  }

  void backprop(const Node& n) {
    const Matrix& dy = n.grad;
    switch (n.op) {
      case Op::Affine: {
        const Matrix& x = nodes_[n.a].value;
        const Matrix& w = nodes_[n.b].value;
        if (nodes_[n.a].needs_grad) accumulate(n.a, matmul_nt(dy, w));
        if (nodes_[n.b].needs_grad) accumulate(n.b, matmul_tn(x, dy));
        if (nodes_[n.c].needs_grad) {
          Matrix db(1, dy.cols());
          for (int i = 0; i < dy.rows(); ++i)
            for (int j = 0; j < dy.cols(); ++j) db(0, j) += dy(i, j);
          accumulate(n.c, db);
        }
        break;
      }
      case Op::LeakyRelu: {
        const Matrix& x = nodes_[n.a].value;
        Matrix dx(x.rows(), x.cols());
        for (int i = 0; i < x.rows(); ++i)
          for (int j = 0; j < x.cols(); ++j)
            dx(i, j) = dy(i, j) * (x(i, j) > 0.0 ? 1.0 : n.scalar);
        accumulate(n.a, dx);
        break;
      }
      case Op::Tanh: {
        Matrix dx(dy.rows(), dy.cols());
        for (int i = 0; i < dy.rows(); ++i)
          for (int j = 0; j < dy.cols(); ++j)
            dx(i, j) = dy(i, j) * (1.0 - n.value(i, j) * n.value(i, j));
        accumulate(n.a, dx);
        break;
      }
      case Op::Exp: {
        Matrix dx(dy.rows(), dy.cols());
        for (int i = 0; i < dy.rows(); ++i)
          for (int j = 0; j < dy.cols(); ++j) dx(i, j) = dy(i, j) * n.value(i, j);
        accumulate(n.a, dx);
        break;
      }
      case Op::Log: {
        const Matrix& x = nodes_[n.a].value;
        Matrix dx(dy.rows(), dy.cols());
        for (int i = 0; i < dy.rows(); ++i)
          for (int j = 0; j < dy.cols(); ++j) dx(i, j) = dy(i, j) / x(i, j);
        accumulate(n.a, dx);
        break;
      }
      case Op::ClampMax: {
        const Matrix& x = nodes_[n.a].value;
        Matrix dx(dy.rows(), dy.cols());
        for (int i = 0; i < dy.rows(); ++i)
          for (int j = 0; j < dy.cols(); ++j)
            dx(i, j) = x(i, j) <= n.scalar ? dy(i, j) : 0.0;
        accumulate(n.a, dx);
        break;
      }
      case Op::Add:
        accumulate(n.a, dy);
        accumulate(n.b, dy);
        break;
      case Op::Sub: {
        accumulate(n.a, dy);
        if (nodes_[n.b].needs_grad) {
          Matrix neg(dy.rows(), dy.cols());
          for (int i = 0; i < dy.rows(); ++i)
            for (int j = 0; j < dy.cols(); ++j) neg(i, j) = -dy(i, j);
          accumulate(n.b, neg);
        }
        break;
      }
      case Op::Mul: {
        if (nodes_[n.a].needs_grad) {
          const Matrix& bv = nodes_[n.b].value;
          Matrix da(dy.rows(), dy.cols());
          for (int i = 0; i < dy.rows(); ++i)
            for (int j = 0; j < dy.cols(); ++j) da(i, j) = dy(i, j) * bv(i, j);
          accumulate(n.a, da);
        }
        if (nodes_[n.b].needs_grad) {
          const Matrix& av = nodes_[n.a].value;
          Matrix db(dy.rows(), dy.cols());
          for (int i = 0; i < dy.rows(); ++i)
            for (int j = 0; j < dy.cols(); ++j) db(i, j) = dy(i, j) * av(i, j);
          accumulate(n.b, db);
        }
        break;
      }
      case Op::Scale: {
        Matrix dx(dy.rows(), dy.cols());
        for (int i = 0; i < dy.rows(); ++i)
          for (int j = 0; j < dy.cols(); ++j) dx(i, j) = dy(i, j) * n.scalar;
        accumulate(n.a, dx);
        break;
      }
      case Op::AddConst:
        accumulate(n.a, dy);
        break;
      case Op::MatMulNT: {
        if (nodes_[n.a].needs_grad) accumulate(n.a, matmul(dy, nodes_[n.b].value));
        if (nodes_[n.b].needs_grad) accumulate(n.b, matmul_tn(dy, nodes_[n.a].value));
        break;
      }
      case Op::PairwiseCost: {
        const Matrix& a = nodes_[n.a].value;
        const Matrix& b = nodes_[n.b].value;
        const int d = a.cols();
        const bool l1 = n.kind == CostKind::L1;
        if (nodes_[n.a].needs_grad) {
          Matrix da(a.rows(), d);
          for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < b.rows(); ++j) {
              const double w = dy(i, j);
              if (w == 0.0) continue;
              for (int k = 0; k < d; ++k) {
                const double diff = a(i, k) - b(j, k);
                da(i, k) += w * (l1 ? (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) : 2.0 * diff);
              }
            }
          accumulate(n.a, da);
        }
        if (nodes_[n.b].needs_grad) {
          Matrix db(b.rows(), d);
          for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < b.rows(); ++j) {
              const double w = dy(i, j);
              if (w == 0.0) continue;
              for (int k = 0; k < d; ++k) {
                const double diff = a(i, k) - b(j, k);
                db(j, k) -= w * (l1 ? (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) : 2.0 * diff);
              }
            }
          accumulate(n.b, db);
        }
        break;
      }
      case Op::RepeatRow: {
        Matrix da(dy.cols(), 1);
        for (int i = 0; i < dy.rows(); ++i)
          for (int j = 0; j < dy.cols(); ++j) da(j, 0) += dy(i, j);
        accumulate(n.a, da);
        break;
      }
      case Op::RepeatCol: {
        Matrix da(dy.rows(), 1);
        for (int i = 0; i < dy.rows(); ++i)
          for (int j = 0; j < dy.cols(); ++j) da(i, 0) += dy(i, j);
        accumulate(n.a, da);
        break;
      }
      case Op::LogSumExpRows: {
        const Matrix& x = nodes_[n.a].value;
        Matrix dx(x.rows(), x.cols());
        for (int i = 0; i < x.rows(); ++i) {
          const double li = n.value(i, 0);
          const double di = dy(i, 0);
          for (int j = 0; j < x.cols(); ++j) dx(i, j) = di * std::exp(x(i, j) - li);
        }
        accumulate(n.a, dx);
        break;
      }
      case Op::MeanAll: {
        const Matrix& x = nodes_[n.a].value;
        const double d = dy(0, 0) / static_cast<double>(x.size());
        Matrix dx(x.rows(), x.cols(), d);
        accumulate(n.a, dx);
        break;
      }
      case Op::SumAll: {
        const Matrix& x = nodes_[n.a].value;
        Matrix dx(x.rows(), x.cols(), dy(0, 0));
        accumulate(n.a, dx);
        break;
      }
      case Op::Leaf:
        break;
    }
  }

  std::vector<Node> nodes_;
};

enum class OutputActivation { Identity, Tanh };

/// Small fully connected network: leaky-rectifier hidden layers, identity or
/// tanh output. Parameters live in one flat vector (per layer: row-major
/// weight block, then bias), which is what the optimizer and the checkpoint
/// format operate on.
class Mlp {
 public:
  Mlp(std::vector<int> layer_sizes, OutputActivation out_act, std::uint64_t seed)
      : sizes_(std::move(layer_sizes)), out_act_(out_act) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (int s : sizes_)
      if (s < 1) throw std::invalid_argument("Mlp: layer sizes must be >= 1");
    params_.assign(count_params(sizes_), 0.0);
    Rng rng(seed);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const int fan_in = sizes_[l], fan_out = sizes_[l + 1];
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (int k = 0; k < fan_in * fan_out; ++k) params_[off++] = rng.uniform(-bound, bound);
      off += fan_out;  // biases start at zero
    }
  }

  static std::size_t count_params(const std::vector<int>& sizes) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      n += static_cast<std::size_t>(sizes[l] + 1) * sizes[l + 1];
    return n;
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  OutputActivation output_activation() const { return out_act_; }
  int in_dim() const { return sizes_.front(); }
  int out_dim() const { return sizes_.back(); }
  std::size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  void set_params(std::span<const double> p) {
    if (p.size() != params_.size()) throw std::invalid_argument("Mlp::set_params: length mismatch");
    std::copy(p.begin(), p.end(), params_.begin());
  }

  Matrix forward(const Matrix& x) const {
    if (x.cols() != in_dim()) throw std::invalid_argument("Mlp::forward: input width mismatch");
    Matrix h = x;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const int in = sizes_[l], out = sizes_[l + 1];
      Matrix y(h.rows(), out);
      for (int i = 0; i < h.rows(); ++i) {
        const double* hi = h.row(i);
        double* yi = y.row(i);
        for (int j = 0; j < out; ++j) yi[j] = params_[off + static_cast<std::size_t>(in) * out + j];
        for (int p = 0; p < in; ++p) {
          const double hv = hi[p];
          const double* wp = params_.data() + off + static_cast<std::size_t>(p) * out;
          for (int j = 0; j < out; ++j) yi[j] += hv * wp[j];
        }
      }
      const bool last = (l + 2 == sizes_.size());
      if (!last) {
        for (int i = 0; i < y.rows(); ++i)
          for (int j = 0; j < y.cols(); ++j)
            if (y(i, j) < 0.0) y(i, j) *= kLeakySlope;
      } else if (out_act_ == OutputActivation::Tanh) {
        for (int i = 0; i < y.rows(); ++i)
          for (int j = 0; j < y.cols(); ++j) y(i, j) = std::tanh(y(i, j));
      }
      h = std::move(y);
      off += static_cast<std::size_t>(in + 1) * out;
    }
    return h;
  }

  /// Parameter leaves pushed onto a tape; one binding per (tape, net) pair so
  /// repeated forwards of the same net accumulate into shared gradients.
  struct Binding {
    std::vector<int> w_nodes;
    std::vector<int> b_nodes;
  };

  Binding bind(Tape& tape) const {
    Binding b;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const int in = sizes_[l], out = sizes_[l + 1];
      Matrix w(in, out);
      for (int p = 0; p < in; ++p)
        for (int j = 0; j < out; ++j) w(p, j) = params_[off + static_cast<std::size_t>(p) * out + j];
      Matrix bias(1, out);
      for (int j = 0; j < out; ++j) bias(0, j) = params_[off + static_cast<std::size_t>(in) * out + j];
      b.w_nodes.push_back(tape.leaf(std::move(w), true));
      b.b_nodes.push_back(tape.leaf(std::move(bias), true));
      off += static_cast<std::size_t>(in + 1) * out;
    }
    return b;
  }

  int forward(Tape& tape, const Binding& binding, int x) const {
    int h = x;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      h = tape.affine(h, binding.w_nodes[l], binding.b_nodes[l]);
      const bool last = (l + 2 == sizes_.size());
      if (!last)
        h = tape.leaky_relu(h);
      else if (out_act_ == OutputActivation::Tanh)
        h = tape.tanh_op(h);
    }
    return h;
  }

  /// Flat gradient in parameter order after Tape::backward.
  std::vector<double> gather_grad(const Tape& tape, const Binding& binding) const {
    std::vector<double> g(params_.size(), 0.0);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const int in = sizes_[l], out = sizes_[l + 1];
      const Matrix& dw = tape.grad(binding.w_nodes[l]);
      const Matrix& db = tape.grad(binding.b_nodes[l]);
      for (int p = 0; p < in; ++p)
        for (int j = 0; j < out; ++j) g[off + static_cast<std::size_t>(p) * out + j] = dw(p, j);
      for (int j = 0; j < out; ++j) g[off + static_cast<std::size_t>(in) * out + j] = db(0, j);
      off += static_cast<std::size_t>(in + 1) * out;
    }
    return g;
  }

 private:
  std::vector<int> sizes_;
  OutputActivation out_act_;
  std::vector<double> params_;
};

/// Bias-corrected Adam.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double lr = 2e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double eps_hat = 1e-8;

  static AdamState create(std::size_t n, double lr, double beta1, double beta2,
                          double eps_hat = 1e-8) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps_hat = eps_hat;
    return s;
  }
};

inline void adam_step(AdamState& state, std::vector<double>& params, std::span<const double> grad) {
  if (params.size() != grad.size() || state.m.size() != params.size())
    throw std::invalid_argument("adam_step: length mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grad[k];
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grad[k] * grad[k];
    const double mhat = state.m[k] / bc1;
    const double vhat = state.v[k] / bc2;
    params[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps_hat);
  }
}

// Flat binary checkpoint: magic "MLP1", little-endian u32 layer count and
// layer sizes, then the parameter vector as little-endian f64 in layer order.

inline std::string mlp_serialize(const Mlp& net) {
  std::string out = "MLP1";
  put_u32_le(out, static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (int s : net.layer_sizes()) put_u32_le(out, static_cast<std::uint32_t>(s));
  for (double p : net.params()) put_f64_le(out, p);
  return out;
}

inline Mlp mlp_deserialize(std::string_view bytes, OutputActivation out_act) {
  if (bytes.size() < 8 || bytes.substr(0, 4) != "MLP1")
    throw std::runtime_error("mlp_deserialize: bad magic");
  const std::uint32_t n_sizes = get_u32_le(bytes, 4);
  if (n_sizes < 2 || n_sizes > 64) throw std::runtime_error("mlp_deserialize: bad layer count");
  std::vector<int> sizes(n_sizes);
  for (std::uint32_t k = 0; k < n_sizes; ++k) {
    const std::uint32_t s = get_u32_le(bytes, 8 + 4 * k);
    if (s < 1 || s > (1u << 20)) throw std::runtime_error("mlp_deserialize: bad layer size");
    sizes[k] = static_cast<int>(s);
  }
  const std::size_t header = 8 + 4 * static_cast<std::size_t>(n_sizes);
  const std::size_t n_params = Mlp::count_params(sizes);
  if (bytes.size() != header + 8 * n_params)
    throw std::runtime_error("mlp_deserialize: payload size mismatch");
  Mlp net(sizes, out_act, 0);
  for (std::size_t k = 0; k < n_params; ++k)
    net.params()[k] = get_f64_le(bytes, header + 8 * k);
  return net;
}

inline void save_mlp(const std::filesystem::path& path, const Mlp& net) {
  write_text_file(path, mlp_serialize(net));
}

inline Mlp load_mlp(const std::filesystem::path& path, OutputActivation out_act) {
  return mlp_deserialize(read_text_file(path), out_act);
}

}  // namespace otinform::nn

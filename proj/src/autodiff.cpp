#include "chartx/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace chartx::ad {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

}  // namespace

const Tensor& Var::value() const { return tape->val(idx); }
const Tensor& Var::grad() const { return tape->grad(idx); }
const std::vector<int>& Var::shape() const { return tape->val(idx).shape(); }

Var Tape::leaf(Tensor v, bool needs_grad) {
  if (!v.all_finite()) throw NumericError("leaf: non-finite values");
  Node n;
  n.value = std::move(v);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::emit(Tensor value, std::vector<int> parents, std::function<void(Tape&, int)> bw,
               const char* op_name) {
  if (!value.all_finite())
    throw NumericError(std::string(op_name) + ": non-finite values in forward result");
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  for (int p : n.parents)
    if (nodes_[static_cast<size_t>(p)].needs_grad) n.needs_grad = true;
  if (n.needs_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int i) {
  Node& n = nodes_[static_cast<size_t>(i)];
  if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw InputError("backward: var from another tape");
  if (val(root.idx).numel() != 1) throw ShapeError("backward: root must be scalar");
  grad_buf(root.idx)[0] = 1.0;
  for (int i = root.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.backward || n.grad.numel() == 0) continue;
    n.backward(*this, i);
  }
}

// ---- elementwise -------------------------------------------------------------

Var add(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.array() += b.value().array();
  return a.tape->emit(std::move(out), {a.idx, b.idx},
                      [pa = a.idx, pb = b.idx](Tape& t, int self) {
                        const Tensor& g = t.grad(self);
                        if (t.needs_grad(pa)) t.grad_buf(pa).array() += g.array();
                        if (t.needs_grad(pb)) t.grad_buf(pb).array() += g.array();
                      },
                      "add");
}

Var sub(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out.array() -= b.value().array();
  return a.tape->emit(std::move(out), {a.idx, b.idx},
                      [pa = a.idx, pb = b.idx](Tape& t, int self) {
                        const Tensor& g = t.grad(self);
                        if (t.needs_grad(pa)) t.grad_buf(pa).array() += g.array();
                        if (t.needs_grad(pb)) t.grad_buf(pb).array() -= g.array();
                      },
                      "sub");
}

Var mul(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  out.array() *= b.value().array();
  return a.tape->emit(std::move(out), {a.idx, b.idx},
                      [pa = a.idx, pb = b.idx](Tape& t, int self) {
                        const Tensor& g = t.grad(self);
                        if (t.needs_grad(pa))
                          t.grad_buf(pa).array() += g.array() * t.val(pb).array();
                        if (t.needs_grad(pb))
                          t.grad_buf(pb).array() += g.array() * t.val(pa).array();
                      },
                      "mul");
}

Var div(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "div");
  Tensor out = a.value();
  out.array() /= b.value().array();
  return a.tape->emit(std::move(out), {a.idx, b.idx},
                      [pa = a.idx, pb = b.idx](Tape& t, int self) {
                        const Tensor& g = t.grad(self);
                        if (t.needs_grad(pa))
                          t.grad_buf(pa).array() += g.array() / t.val(pb).array();
                        if (t.needs_grad(pb))
                          t.grad_buf(pb).array() -= g.array() * t.val(pa).array() /
                                                    t.val(pb).array().square();
                      },
                      "div");
}

Var neg(Var a) { return scale(a, -1.0); }

Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  out.array() += s;
  return a.tape->emit(std::move(out), {a.idx},
                      [pa = a.idx](Tape& t, int self) {
                        if (t.needs_grad(pa)) t.grad_buf(pa).array() += t.grad(self).array();
                      },
                      "add_scalar");
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  out.array() *= s;
  return a.tape->emit(std::move(out), {a.idx},
                      [pa = a.idx, s](Tape& t, int self) {
                        if (t.needs_grad(pa))
                          t.grad_buf(pa).array() += s * t.grad(self).array();
                      },
                      "scale");
}

Var add_const(Var a, const Tensor& c) {
  check_same_shape(a.value(), c, "add_const");
  Tensor out = a.value();
  out.array() += c.array();
  return a.tape->emit(std::move(out), {a.idx},
                      [pa = a.idx](Tape& t, int self) {
                        if (t.needs_grad(pa)) t.grad_buf(pa).array() += t.grad(self).array();
                      },
                      "add_const");
}

Var sub_const(Var a, const Tensor& c) {
  check_same_shape(a.value(), c, "sub_const");
  Tensor out = a.value();
  out.array() -= c.array();
  return a.tape->emit(std::move(out), {a.idx},
                      [pa = a.idx](Tape& t, int self) {
                        if (t.needs_grad(pa)) t.grad_buf(pa).array() += t.grad(self).array();
                      },
                      "sub_const");
}

// ---- nonlinearities ------------------------------------------------------------

Var relu(Var a) {
  Tensor out = a.value();
  out.array() = out.array().max(0.0);
  return a.tape->emit(std::move(out), {a.idx},
                      [pa = a.idx](Tape& t, int self) {
                        if (!t.needs_grad(pa)) return;
                        t.grad_buf(pa).array() +=
                            t.grad(self).array() * (t.val(pa).array() > 0.0).cast<double>();
                      },
                      "relu");
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  out.array() = 0.5 * (0.5 * out.array()).tanh() + 0.5;  // stable sigmoid
  return a.tape->emit(std::move(out), {a.idx},
                      [pa = a.idx](Tape& t, int self) {
                        if (!t.needs_grad(pa)) return;
                        const auto& y = t.val(self).array();
                        t.grad_buf(pa).array() += t.grad(self).array() * y * (1.0 - y);
                      },
                      "sigmoid");
}

Var tanh_v(Var a) {
  Tensor out = a.value();
  out.array() = out.array().tanh();
  return a.tape->emit(std::move(out), {a.idx},
                      [pa = a.idx](Tape& t, int self) {
                        if (!t.needs_grad(pa)) return;
                        const auto& y = t.val(self).array();
                        t.grad_buf(pa).array() += t.grad(self).array() * (1.0 - y.square());
                      },
                      "tanh");
}

Var log_v(Var a) {
  Tensor out = a.value();
  out.array() = out.array().log();
  return a.tape->emit(std::move(out), {a.idx},
                      [pa = a.idx](Tape& t, int self) {
                        if (!t.needs_grad(pa)) return;
                        t.grad_buf(pa).array() += t.grad(self).array() / t.val(pa).array();
                      },
                      "log");
}

Var exp_v(Var a) {
  Tensor out = a.value();
  out.array() = out.array().exp();
  return a.tape->emit(std::move(out), {a.idx},
                      [pa = a.idx](Tape& t, int self) {
                        if (!t.needs_grad(pa)) return;
                        t.grad_buf(pa).array() += t.grad(self).array() * t.val(self).array();
                      },
                      "exp");
}

Var softplus(Var a) {
  Tensor out = a.value();
  out.array() = (out.array() > 0.0)
                    .select(out.array() + (-out.array()).exp().log1p(),
                            out.array().exp().log1p());
  return a.tape->emit(std::move(out), {a.idx},
                      [pa = a.idx](Tape& t, int self) {
                        if (!t.needs_grad(pa)) return;
                        const auto& x = t.val(pa).array();
                        t.grad_buf(pa).array() +=
                            t.grad(self).array() * (0.5 * (0.5 * x).tanh() + 0.5);
                      },
                      "softplus");
}

Var square(Var a) {
  Tensor out = a.value();
  out.array() = out.array().square();
  return a.tape->emit(std::move(out), {a.idx},
                      [pa = a.idx](Tape& t, int self) {
                        if (!t.needs_grad(pa)) return;
                        t.grad_buf(pa).array() +=
                            2.0 * t.grad(self).array() * t.val(pa).array();
                      },
                      "square");
}

// ---- linear algebra --------------------------------------------------------------

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 2) throw ShapeError("matmul: rhs must be rank-2");
  bool vec = (av.rank() == 1);
  int m = vec ? 1 : av.dim(0);
  int k = vec ? av.dim(0) : av.dim(1);
  if (av.rank() > 2 || k != bv.dim(0)) throw ShapeError("matmul: inner dim mismatch");
  int n = bv.dim(1);
  Tensor out(vec ? std::vector<int>{n} : std::vector<int>{m, n});
  out.mat(m, n).noalias() = av.mat(m, k) * bv.mat(k, n);
  return a.tape->emit(std::move(out), {a.idx, b.idx},
                      [pa = a.idx, pb = b.idx, m, k, n](Tape& t, int self) {
                        auto g = t.grad(self).mat(m, n);
                        if (t.needs_grad(pa))
                          t.grad_buf(pa).mat(m, k).noalias() += g * t.val(pb).mat(k, n).transpose();
                        if (t.needs_grad(pb))
                          t.grad_buf(pb).mat(k, n).noalias() +=
                              t.val(pa).mat(m, k).transpose() * g;
                      },
                      "matmul");
}

Var affine(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (wv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != wv.dim(1))
    throw ShapeError("affine: bad weight/bias shapes");
  bool vec = (xv.rank() == 1);
  int m = vec ? 1 : xv.dim(0);
  int in = vec ? xv.dim(0) : xv.dim(1);
  if (in != wv.dim(0)) throw ShapeError("affine: input dim mismatch");
  int out_dim = wv.dim(1);
  Tensor out(vec ? std::vector<int>{out_dim} : std::vector<int>{m, out_dim});
  out.mat(m, out_dim).noalias() = xv.mat(m, in) * wv.mat(in, out_dim);
  out.mat(m, out_dim).rowwise() += bv.mat(1, out_dim).row(0);
  return x.tape->emit(
      std::move(out), {x.idx, w.idx, b.idx},
      [px = x.idx, pw = w.idx, pb = b.idx, m, in, out_dim](Tape& t, int self) {
        auto g = t.grad(self).mat(m, out_dim);
        if (t.needs_grad(px))
          t.grad_buf(px).mat(m, in).noalias() += g * t.val(pw).mat(in, out_dim).transpose();
        if (t.needs_grad(pw))
          t.grad_buf(pw).mat(in, out_dim).noalias() += t.val(px).mat(m, in).transpose() * g;
        if (t.needs_grad(pb))
          t.grad_buf(pb).mat(1, out_dim).row(0) += g.colwise().sum();
      },
      "affine");
}

// ---- softmax / reductions ----------------------------------------------------------

Var softmax_rows(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("softmax_rows: rank != 2");
  Tensor out = xv;
  auto m = out.mat2d();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
  return x.tape->emit(std::move(out), {x.idx},
                      [px = x.idx](Tape& t, int self) {
                        if (!t.needs_grad(px)) return;
                        auto y = t.val(self).mat2d();
                        auto g = t.grad(self).mat2d();
                        auto gx = t.grad_buf(px).mat2d();
                        for (Eigen::Index r = 0; r < y.rows(); ++r) {
                          double dot = (g.row(r).array() * y.row(r).array()).sum();
                          gx.row(r).array() +=
                              (g.row(r).array() - dot) * y.row(r).array();
                        }
                      },
                      "softmax_rows");
}

Var log_softmax_rows(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("log_softmax_rows: rank != 2");
  Tensor out = xv;
  auto m = out.mat2d();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double mx = m.row(r).maxCoeff();
    double lse = mx + std::log((m.row(r).array() - mx).exp().sum());
    m.row(r).array() -= lse;
  }
  return x.tape->emit(std::move(out), {x.idx},
                      [px = x.idx](Tape& t, int self) {
                        if (!t.needs_grad(px)) return;
                        auto y = t.val(self).mat2d();
                        auto g = t.grad(self).mat2d();
                        auto gx = t.grad_buf(px).mat2d();
                        for (Eigen::Index r = 0; r < y.rows(); ++r) {
                          double gs = g.row(r).sum();
                          gx.row(r).array() +=
                              g.row(r).array() - gs * y.row(r).array().exp();
                        }
                      },
                      "log_softmax_rows");
}

Var sum(Var x) {
  Tensor out = Tensor::scalar(x.value().array().sum());
  return x.tape->emit(std::move(out), {x.idx},
                      [px = x.idx](Tape& t, int self) {
                        if (t.needs_grad(px)) t.grad_buf(px).array() += t.grad(self)[0];
                      },
                      "sum");
}

Var mean(Var x) {
  double n = static_cast<double>(x.value().numel());
  Tensor out = Tensor::scalar(x.value().array().sum() / n);
  return x.tape->emit(std::move(out), {x.idx},
                      [px = x.idx, n](Tape& t, int self) {
                        if (t.needs_grad(px)) t.grad_buf(px).array() += t.grad(self)[0] / n;
                      },
                      "mean");
}

// ---- shape ops -------------------------------------------------------------------

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Eigen::Index total = 0;
  std::vector<int> parents;
  for (const Var& p : parts) {
    if (p.value().rank() != 1) throw ShapeError("concat: inputs must be rank-1");
    total += p.value().numel();
    parents.push_back(p.idx);
  }
  Tensor out({static_cast<int>(total)});
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.array().segment(off, p.value().numel()) = p.value().array();
    off += p.value().numel();
  }
  return parts[0].tape->emit(std::move(out), parents,
                             [parents](Tape& t, int self) {
                               const Tensor& g = t.grad(self);
                               Eigen::Index off = 0;
                               for (int p : parents) {
                                 Eigen::Index n = t.val(p).numel();
                                 if (t.needs_grad(p))
                                   t.grad_buf(p).array() += g.array().segment(off, n);
                                 off += n;
                               }
                             },
                             "concat");
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  int k = static_cast<int>(rows[0].value().numel());
  std::vector<int> parents;
  for (const Var& r : rows) {
    if (r.value().numel() != k) throw ShapeError("stack_rows: ragged rows");
    parents.push_back(r.idx);
  }
  int tn = static_cast<int>(rows.size());
  Tensor out({tn, k});
  for (int i = 0; i < tn; ++i)
    out.mat2d().row(i) = rows[static_cast<size_t>(i)].value().mat(1, k).row(0);
  return rows[0].tape->emit(std::move(out), parents,
                            [parents, k](Tape& t, int self) {
                              auto g = t.grad(self).mat2d();
                              for (size_t i = 0; i < parents.size(); ++i) {
                                int p = parents[i];
                                if (t.needs_grad(p))
                                  t.grad_buf(p).mat(1, k).row(0) +=
                                      g.row(static_cast<Eigen::Index>(i));
                              }
                            },
                            "stack_rows");
}

Var slice(Var x, int start, int len) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1) throw ShapeError("slice: rank != 1");
  if (start < 0 || len < 0 || start + len > xv.dim(0)) throw ShapeError("slice: out of range");
  Tensor out({len});
  out.array() = xv.array().segment(start, len);
  return x.tape->emit(std::move(out), {x.idx},
                      [px = x.idx, start, len](Tape& t, int self) {
                        if (t.needs_grad(px))
                          t.grad_buf(px).array().segment(start, len) += t.grad(self).array();
                      },
                      "slice");
}

Var row(Var x, int r) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("row: rank != 2");
  if (r < 0 || r >= xv.dim(0)) throw ShapeError("row: out of range");
  int k = xv.dim(1);
  Tensor out({k});
  out.mat(1, k).row(0) = xv.mat2d().row(r);
  return x.tape->emit(std::move(out), {x.idx},
                      [px = x.idx, r, k](Tape& t, int self) {
                        if (t.needs_grad(px))
                          t.grad_buf(px).mat2d().row(r) += t.grad(self).mat(1, k).row(0);
                      },
                      "row");
}

Var gather(Var x, const std::vector<int>& idx) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1) throw ShapeError("gather: rank != 1");
  Tensor out({static_cast<int>(idx.size())});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= xv.dim(0)) throw ShapeError("gather: index out of range");
    out[static_cast<Eigen::Index>(i)] = xv[idx[i]];
  }
  auto ids = std::make_shared<std::vector<int>>(idx);
  return x.tape->emit(std::move(out), {x.idx},
                      [px = x.idx, ids](Tape& t, int self) {
                        if (!t.needs_grad(px)) return;
                        const Tensor& g = t.grad(self);
                        Tensor& gx = t.grad_buf(px);
                        for (size_t i = 0; i < ids->size(); ++i)
                          gx[(*ids)[i]] += g[static_cast<Eigen::Index>(i)];
                      },
                      "gather");
}

Var gather_rows(Var x, const std::vector<int>& idx) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("gather_rows: rank != 2");
  int k = xv.dim(1);
  Tensor out({static_cast<int>(idx.size()), k});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= xv.dim(0))
      throw ShapeError("gather_rows: index out of range");
    out.mat2d().row(static_cast<Eigen::Index>(i)) = xv.mat2d().row(idx[i]);
  }
  auto ids = std::make_shared<std::vector<int>>(idx);
  return x.tape->emit(std::move(out), {x.idx},
                      [px = x.idx, ids](Tape& t, int self) {
                        if (!t.needs_grad(px)) return;
                        auto g = t.grad(self).mat2d();
                        auto gx = t.grad_buf(px).mat2d();
                        for (size_t i = 0; i < ids->size(); ++i)
                          gx.row((*ids)[i]) += g.row(static_cast<Eigen::Index>(i));
                      },
                      "gather_rows");
}

Var reshape(Var x, std::vector<int> shape) {
  Tensor out(shape);
  if (out.numel() != x.value().numel()) throw ShapeError("reshape: element count mismatch");
  out.array() = x.value().array();
  return x.tape->emit(std::move(out), {x.idx},
                      [px = x.idx](Tape& t, int self) {
                        if (t.needs_grad(px))
                          t.grad_buf(px).array() += t.grad(self).array();
                      },
                      "reshape");
}

Var flatten(Var x) { return reshape(x, {static_cast<int>(x.value().numel())}); }

// ---- convolution / pooling / sampling ----------------------------------------------

namespace {

// x [H,W,Cin] -> M [Ho*Wo, KH*KW*Cin]; channels of each (ky,kx) tap contiguous.
void im2col(const Tensor& x, const ConvSpec& s, int ho, int wo, RowMat& M) {
  int h = x.dim(0), w = x.dim(1), cin = s.cin;
  M.setZero(static_cast<Eigen::Index>(ho) * wo, static_cast<Eigen::Index>(s.kh) * s.kw * cin);
  const double* src = x.data();
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      double* dst = M.row(static_cast<Eigen::Index>(oy) * wo + ox).data();
      for (int ky = 0; ky < s.kh; ++ky) {
        int iy = oy * s.stride - s.pad + ky;
        for (int kx = 0; kx < s.kw; ++kx) {
          int ix = ox * s.stride - s.pad + kx;
          double* cell = dst + (static_cast<Eigen::Index>(ky) * s.kw + kx) * cin;
          if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
            const double* from = src + (static_cast<Eigen::Index>(iy) * w + ix) * cin;
            std::copy(from, from + cin, cell);
          }
        }
      }
    }
  }
}

void col2im_accum(const RowMat& dM, const ConvSpec& s, int ho, int wo, Tensor& gx) {
  int h = gx.dim(0), w = gx.dim(1), cin = s.cin;
  double* dst = gx.data();
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const double* srow = dM.row(static_cast<Eigen::Index>(oy) * wo + ox).data();
      for (int ky = 0; ky < s.kh; ++ky) {
        int iy = oy * s.stride - s.pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < s.kw; ++kx) {
          int ix = ox * s.stride - s.pad + kx;
          if (ix < 0 || ix >= w) continue;
          const double* cell = srow + (static_cast<Eigen::Index>(ky) * s.kw + kx) * cin;
          double* to = dst + (static_cast<Eigen::Index>(iy) * w + ix) * cin;
          for (int c = 0; c < cin; ++c) to[c] += cell[c];
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, const ConvSpec& spec) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || xv.dim(2) != spec.cin) throw ShapeError("conv2d: bad input shape");
  if (w.value().rank() != 2 || w.value().dim(0) != spec.kh * spec.kw * spec.cin ||
      w.value().dim(1) != spec.cout)
    throw ShapeError("conv2d: bad kernel shape");
  if (b.value().numel() != spec.cout) throw ShapeError("conv2d: bad bias shape");
  int h = xv.dim(0), wd = xv.dim(1);
  int ho = (h + 2 * spec.pad - spec.kh) / spec.stride + 1;
  int wo = (wd + 2 * spec.pad - spec.kw) / spec.stride + 1;
  if (ho < 1 || wo < 1) throw ShapeError("conv2d: output would be empty");
  RowMat M;
  im2col(xv, spec, ho, wo, M);
  Tensor out({ho, wo, spec.cout});
  auto om = out.mat(static_cast<Eigen::Index>(ho) * wo, spec.cout);
  om.noalias() = M * w.value().mat(spec.kh * spec.kw * spec.cin, spec.cout);
  om.rowwise() += b.value().mat(1, spec.cout).row(0);
  return x.tape->emit(
      std::move(out), {x.idx, w.idx, b.idx},
      [px = x.idx, pw = w.idx, pb = b.idx, spec, ho, wo](Tape& t, int self) {
        Eigen::Index rows = static_cast<Eigen::Index>(ho) * wo;
        int kdim = spec.kh * spec.kw * spec.cin;
        auto g = t.grad(self).mat(rows, spec.cout);
        if (t.needs_grad(pb))
          t.grad_buf(pb).mat(1, spec.cout).row(0) += g.colwise().sum();
        if (t.needs_grad(pw)) {
          RowMat M;
          im2col(t.val(px), spec, ho, wo, M);
          t.grad_buf(pw).mat(kdim, spec.cout).noalias() += M.transpose() * g;
        }
        if (t.needs_grad(px)) {
          RowMat dM(rows, kdim);
          dM.noalias() = g * t.val(pw).mat(kdim, spec.cout).transpose();
          col2im_accum(dM, spec, ho, wo, t.grad_buf(px));
        }
      },
      "conv2d");
}

Var maxpool2(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("maxpool2: rank != 3");
  int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
  int ho = (h + 1) / 2, wo = (w + 1) / 2;
  Tensor out({ho, wo, c});
  auto argmax = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(ho) * wo * c);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      for (int ch = 0; ch < c; ++ch) {
        double best = -std::numeric_limits<double>::infinity();
        int64_t best_i = -1;
        for (int dy = 0; dy < 2; ++dy) {
          int iy = oy * 2 + dy;
          if (iy >= h) continue;
          for (int dx = 0; dx < 2; ++dx) {
            int ix = ox * 2 + dx;
            if (ix >= w) continue;
            int64_t i = (static_cast<int64_t>(iy) * w + ix) * c + ch;
            if (xv[i] > best) {
              best = xv[i];
              best_i = i;
            }
          }
        }
        int64_t o = (static_cast<int64_t>(oy) * wo + ox) * c + ch;
        out[o] = best;
        (*argmax)[static_cast<size_t>(o)] = best_i;
      }
    }
  }
  return x.tape->emit(std::move(out), {x.idx},
                      [px = x.idx, argmax](Tape& t, int self) {
                        if (!t.needs_grad(px)) return;
                        const Tensor& g = t.grad(self);
                        Tensor& gx = t.grad_buf(px);
                        for (Eigen::Index i = 0; i < g.numel(); ++i)
                          gx[(*argmax)[static_cast<size_t>(i)]] += g[i];
                      },
                      "maxpool2");
}

Var bilinear_gather(Var fm, const std::vector<GridPoint>& pts) {
  const Tensor& f = fm.value();
  if (f.rank() != 3) throw ShapeError("bilinear_gather: rank != 3");
  int h = f.dim(0), w = f.dim(1), c = f.dim(2);
  int n = static_cast<int>(pts.size());
  Tensor out({n, c});
  auto pts_copy = std::make_shared<std::vector<GridPoint>>(pts);
  for (int i = 0; i < n; ++i) {
    double r = pts[static_cast<size_t>(i)].r, cc = pts[static_cast<size_t>(i)].c;
    int r0 = static_cast<int>(std::floor(r)), c0 = static_cast<int>(std::floor(cc));
    double fr = r - r0, fc = cc - c0;
    const double ws[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
    const int ys[4] = {r0, r0, r0 + 1, r0 + 1};
    const int xs[4] = {c0, c0 + 1, c0, c0 + 1};
    for (int k = 0; k < 4; ++k) {
      if (ws[k] == 0.0 || ys[k] < 0 || ys[k] >= h || xs[k] < 0 || xs[k] >= w) continue;
      const double* src = f.data() + (static_cast<Eigen::Index>(ys[k]) * w + xs[k]) * c;
      double* dst = out.data() + static_cast<Eigen::Index>(i) * c;
      for (int ch = 0; ch < c; ++ch) dst[ch] += ws[k] * src[ch];
    }
  }
  return fm.tape->emit(std::move(out), {fm.idx},
                       [pf = fm.idx, pts_copy, h, w, c](Tape& t, int self) {
                         if (!t.needs_grad(pf)) return;
                         const Tensor& g = t.grad(self);
                         Tensor& gf = t.grad_buf(pf);
                         for (size_t i = 0; i < pts_copy->size(); ++i) {
                           double r = (*pts_copy)[i].r, cc = (*pts_copy)[i].c;
                           int r0 = static_cast<int>(std::floor(r));
                           int c0 = static_cast<int>(std::floor(cc));
                           double fr = r - r0, fc = cc - c0;
                           const double ws[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc,
                                                 fr * (1 - fc), fr * fc};
                           const int ys[4] = {r0, r0, r0 + 1, r0 + 1};
                           const int xs[4] = {c0, c0 + 1, c0, c0 + 1};
                           for (int k = 0; k < 4; ++k) {
                             if (ws[k] == 0.0 || ys[k] < 0 || ys[k] >= h || xs[k] < 0 ||
                                 xs[k] >= w)
                               continue;
                             double* dst =
                                 gf.data() + (static_cast<Eigen::Index>(ys[k]) * w + xs[k]) * c;
                             const double* src =
                                 g.data() + static_cast<Eigen::Index>(i) * c;
                             for (int ch = 0; ch < c; ++ch) dst[ch] += ws[k] * src[ch];
                           }
                         }
                       },
                       "bilinear_gather");
}

// ---- losses --------------------------------------------------------------------------

Var ce_with_logits(Var logits, const std::vector<int>& labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw ShapeError("ce_with_logits: rank != 2");
  int n = z.dim(0), k = z.dim(1);
  if (static_cast<int>(labels.size()) != n) throw ShapeError("ce_with_logits: label count");
  double loss = 0;
  auto m = z.mat2d();
  for (int r = 0; r < n; ++r) {
    int lab = labels[static_cast<size_t>(r)];
    if (lab < 0 || lab >= k) throw InputError("ce_with_logits: label out of range");
    double mx = m.row(r).maxCoeff();
    double lse = mx + std::log((m.row(r).array() - mx).exp().sum());
    loss += lse - m(r, lab);
  }
  loss /= n;
  auto labs = std::make_shared<std::vector<int>>(labels);
  return logits.tape->emit(Tensor::scalar(loss), {logits.idx},
                           [pz = logits.idx, labs, n, k](Tape& t, int self) {
                             if (!t.needs_grad(pz)) return;
                             double g = t.grad(self)[0] / n;
                             auto zm = t.val(pz).mat2d();
                             auto gm = t.grad_buf(pz).mat2d();
                             for (int r = 0; r < n; ++r) {
                               double mx = zm.row(r).maxCoeff();
                               Eigen::ArrayXd p = (zm.row(r).array() - mx).exp();
                               p /= p.sum();
                               gm.row(r).array() += g * p.transpose();
                               gm(r, (*labs)[static_cast<size_t>(r)]) -= g;
                             }
                           },
                           "ce_with_logits");
}

Var bce_with_logits(Var z, const Tensor& targets) {
  check_same_shape(z.value(), targets, "bce_with_logits");
  const auto& x = z.value().array();
  const auto& tt = targets.array();
  Eigen::ArrayXd sp =
      (x > 0.0).select(x + (-x).exp().log1p(), x.exp().log1p());
  double n = static_cast<double>(z.value().numel());
  double loss = (sp - tt * x).sum() / n;
  auto tcopy = std::make_shared<Tensor>(targets);
  return z.tape->emit(Tensor::scalar(loss), {z.idx},
                      [pz = z.idx, tcopy, n](Tape& t, int self) {
                        if (!t.needs_grad(pz)) return;
                        double g = t.grad(self)[0] / n;
                        const auto& x = t.val(pz).array();
                        Eigen::ArrayXd sig = 0.5 * (0.5 * x).tanh() + 0.5;
                        t.grad_buf(pz).array() += g * (sig - tcopy->array());
                      },
                      "bce_with_logits");
}

Var smooth_l1(Var pred, const Tensor& target) {
  check_same_shape(pred.value(), target, "smooth_l1");
  int rows = pred.value().rank() == 2 ? pred.value().dim(0) : 1;
  Eigen::ArrayXd d = pred.value().array() - target.array();
  Eigen::ArrayXd f =
      (d.abs() < 1.0).select(0.5 * d.square(), d.abs() - 0.5);
  double loss = f.sum() / rows;
  auto tcopy = std::make_shared<Tensor>(target);
  return pred.tape->emit(Tensor::scalar(loss), {pred.idx},
                         [pp = pred.idx, tcopy, rows](Tape& t, int self) {
                           if (!t.needs_grad(pp)) return;
                           double g = t.grad(self)[0] / rows;
                           Eigen::ArrayXd d = t.val(pp).array() - tcopy->array();
                           Eigen::ArrayXd dd =
                               (d.abs() < 1.0).select(d, d.sign());
                           t.grad_buf(pp).array() += g * dd;
                         },
                         "smooth_l1");
}

Var mse(Var pred, const Tensor& target) {
  check_same_shape(pred.value(), target, "mse");
  double n = static_cast<double>(pred.value().numel());
  Eigen::ArrayXd d = pred.value().array() - target.array();
  double loss = d.square().sum() / n;
  auto tcopy = std::make_shared<Tensor>(target);
  return pred.tape->emit(Tensor::scalar(loss), {pred.idx},
                         [pp = pred.idx, tcopy, n](Tape& t, int self) {
                           if (!t.needs_grad(pp)) return;
                           double g = 2.0 * t.grad(self)[0] / n;
                           t.grad_buf(pp).array() +=
                               g * (t.val(pp).array() - tcopy->array());
                         },
                         "mse");
}

// ---- CTC ------------------------------------------------------------------------------

namespace {

struct CtcWork {
  std::vector<int> lp;  // extended label sequence with blanks
  RowMat log_alpha, log_beta, log_probs;
  double log_p = kNegInf;
};

int ctc_min_frames(const std::vector<int>& target) {
  int need = static_cast<int>(target.size());
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++need;
  return need;
}

}  // namespace

Var ctc_loss(Var logits, const std::vector<int>& target) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw ShapeError("ctc_loss: logits must be [T, A+1]");
  int tn = z.dim(0), kn = z.dim(1);
  int blank = kn - 1;
  for (int s : target)
    if (s < 0 || s >= blank) throw InputError("ctc_loss: symbol out of alphabet");
  if (ctc_min_frames(target) > tn)
    throw InputError("ctc_loss: target does not fit into " + std::to_string(tn) + " frames");

  auto wk = std::make_shared<CtcWork>();
  int u = 2 * static_cast<int>(target.size()) + 1;
  wk->lp.assign(static_cast<size_t>(u), blank);
  for (size_t i = 0; i < target.size(); ++i) wk->lp[2 * i + 1] = target[i];

  // log-softmax rows
  wk->log_probs.resize(tn, kn);
  auto zm = z.mat2d();
  for (int t = 0; t < tn; ++t) {
    double mx = zm.row(t).maxCoeff();
    double lse = mx + std::log((zm.row(t).array() - mx).exp().sum());
    wk->log_probs.row(t) = zm.row(t).array() - lse;
  }

  const auto& lseq = wk->lp;
  auto allow_skip = [&](int uu) {
    return lseq[static_cast<size_t>(uu)] != blank &&
           lseq[static_cast<size_t>(uu)] != lseq[static_cast<size_t>(uu - 2)];
  };

  wk->log_alpha.setConstant(u, tn, kNegInf);
  wk->log_alpha(0, 0) = wk->log_probs(0, blank);
  if (u > 1) wk->log_alpha(1, 0) = wk->log_probs(0, lseq[1]);
  for (int t = 1; t < tn; ++t) {
    for (int uu = 0; uu < u; ++uu) {
      double a = wk->log_alpha(uu, t - 1);
      if (uu > 0) a = log_add(a, wk->log_alpha(uu - 1, t - 1));
      if (uu > 1 && allow_skip(uu)) a = log_add(a, wk->log_alpha(uu - 2, t - 1));
      wk->log_alpha(uu, t) = a + wk->log_probs(t, lseq[static_cast<size_t>(uu)]);
    }
  }
  wk->log_p = wk->log_alpha(u - 1, tn - 1);
  if (u > 1) wk->log_p = log_add(wk->log_p, wk->log_alpha(u - 2, tn - 1));
  if (wk->log_p == kNegInf) throw NumericError("ctc_loss: zero probability for target");

  // beta includes the emission at frame t, mirroring alpha.
  wk->log_beta.setConstant(u, tn, kNegInf);
  wk->log_beta(u - 1, tn - 1) = wk->log_probs(tn - 1, blank);
  if (u > 1) wk->log_beta(u - 2, tn - 1) = wk->log_probs(tn - 1, lseq[static_cast<size_t>(u - 2)]);
  for (int t = tn - 2; t >= 0; --t) {
    for (int uu = 0; uu < u; ++uu) {
      double b = wk->log_beta(uu, t + 1);
      if (uu + 1 < u) b = log_add(b, wk->log_beta(uu + 1, t + 1));
      if (uu + 2 < u && allow_skip(uu + 2)) b = log_add(b, wk->log_beta(uu + 2, t + 1));
      wk->log_beta(uu, t) = b + wk->log_probs(t, lseq[static_cast<size_t>(uu)]);
    }
  }

  double loss = -wk->log_p;
  return logits.tape->emit(
      Tensor::scalar(loss), {logits.idx},
      [pz = logits.idx, wk, tn, kn](Tape& t, int self) {
        if (!t.needs_grad(pz)) return;
        double g = t.grad(self)[0];
        auto gm = t.grad_buf(pz).mat2d();
        int u = static_cast<int>(wk->lp.size());
        for (int ti = 0; ti < tn; ++ti) {
          // posterior over symbols at frame ti
          Eigen::ArrayXd post = Eigen::ArrayXd::Zero(kn);
          for (int uu = 0; uu < u; ++uu) {
            double la = wk->log_alpha(uu, ti) + wk->log_beta(uu, ti) -
                        wk->log_probs(ti, wk->lp[static_cast<size_t>(uu)]) - wk->log_p;
            if (la != kNegInf) post[wk->lp[static_cast<size_t>(uu)]] += std::exp(la);
          }
          Eigen::ArrayXd y = wk->log_probs.row(ti).array().exp();
          gm.row(ti).array() += g * (y - post).transpose();
        }
      },
      "ctc_loss");
}

std::vector<int> ctc_best_path(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("ctc_best_path: rank != 2");
  int tn = logits.dim(0), kn = logits.dim(1), blank = kn - 1;
  std::vector<int> out;
  int prev = -1;
  auto m = logits.mat2d();
  for (int t = 0; t < tn; ++t) {
    Eigen::Index best;
    m.row(t).maxCoeff(&best);
    int s = static_cast<int>(best);
    if (s != prev && s != blank) out.push_back(s);
    prev = s;
  }
  return out;
}

// ---- LSTM ------------------------------------------------------------------------------

std::pair<Var, Var> lstm_cell(Var x, Var h, Var c, const LstmParams& p) {
  int hidden = p.wh.value().dim(0);
  Var z = add(add(matmul(x, p.wx), matmul(h, p.wh)), p.b);
  Var ig = sigmoid(slice(z, 0, hidden));
  Var fg = sigmoid(slice(z, hidden, hidden));
  Var og = sigmoid(slice(z, 2 * hidden, hidden));
  Var gg = tanh_v(slice(z, 3 * hidden, hidden));
  Var cn = add(mul(fg, c), mul(ig, gg));
  Var hn = mul(og, tanh_v(cn));
  return {hn, cn};
}

Var bilstm(Var frames, const LstmParams& fwd, const LstmParams& bwd) {
  const Tensor& f = frames.value();
  if (f.rank() != 2) throw ShapeError("bilstm: frames must be [T,In]");
  int tn = f.dim(0);
  int hidden = fwd.wh.value().dim(0);
  Tape& tape = *frames.tape;
  std::vector<Var> hf(static_cast<size_t>(tn)), hb(static_cast<size_t>(tn));
  Var h = tape.constant(Tensor({hidden}));
  Var c = tape.constant(Tensor({hidden}));
  for (int t = 0; t < tn; ++t) {
    auto [hn, cn] = lstm_cell(row(frames, t), h, c, fwd);
    h = hn;
    c = cn;
    hf[static_cast<size_t>(t)] = hn;
  }
  h = tape.constant(Tensor({hidden}));
  c = tape.constant(Tensor({hidden}));
  for (int t = tn - 1; t >= 0; --t) {
    auto [hn, cn] = lstm_cell(row(frames, t), h, c, bwd);
    h = hn;
    c = cn;
    hb[static_cast<size_t>(t)] = hn;
  }
  std::vector<Var> rows;
  rows.reserve(static_cast<size_t>(tn));
  for (int t = 0; t < tn; ++t)
    rows.push_back(concat({hf[static_cast<size_t>(t)], hb[static_cast<size_t>(t)]}));
  return stack_rows(rows);
}

// ---- gradient checking -----------------------------------------------------------------

double grad_check(const std::function<Var(Tape&, std::vector<Var>&)>& fn,
                  const std::vector<Tensor>& point, double epsilon) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Tensor& p : point) leaves.push_back(tape.leaf(p, true));
  Var out = fn(tape, leaves);
  tape.backward(out);
  std::vector<Tensor> analytic;
  for (const Var& v : leaves)
    analytic.push_back(tape.has_grad(v.idx) ? v.grad() : Tensor(v.value().shape()));

  auto eval_at = [&](const std::vector<Tensor>& pt) {
    Tape t2;
    std::vector<Var> lv;
    for (const Tensor& p : pt) lv.push_back(t2.leaf(p, false));
    Var o = fn(t2, lv);
    return o.value()[0];
  };

  double max_err = 0;
  std::vector<Tensor> pt = point;
  for (size_t i = 0; i < pt.size(); ++i) {
    for (Eigen::Index j = 0; j < pt[i].numel(); ++j) {
      double orig = pt[i][j];
      pt[i][j] = orig + epsilon;
      double fp = eval_at(pt);
      pt[i][j] = orig - epsilon;
      double fm = eval_at(pt);
      pt[i][j] = orig;
      double numeric = (fp - fm) / (2 * epsilon);
      double a = analytic[i][j];
      double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace chartx::ad

#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "chartx/tensor.hpp"

namespace chartx::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid until the tape is cleared.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;

  const Tensor& value() const;
  const Tensor& grad() const;
  const std::vector<int>& shape() const;
};

struct GridPoint {
  double r, c;  // fractional (row, col) in feature-map cells
};

struct ConvSpec {
  int kh, kw, cin, cout;
  int stride = 1;
  int pad = 0;
};

// Reverse-mode tape. Nodes are appended in topological order by the op
// helpers below; backward() walks them in reverse. Single-threaded use only.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    bool needs_grad = false;
    std::vector<int> parents;
    std::function<void(Tape&, int)> backward;
  };

  Var leaf(Tensor v, bool needs_grad = false);
  Var constant(Tensor v) { return leaf(std::move(v), false); }

  // Runs the backward pass from a scalar root.
  void backward(Var root);

  const Tensor& val(int i) const { return nodes_[static_cast<size_t>(i)].value; }
  Tensor& val_mut(int i) { return nodes_[static_cast<size_t>(i)].value; }
  const Tensor& grad(int i) const { return nodes_[static_cast<size_t>(i)].grad; }
  Tensor& grad_buf(int i);  // allocate-to-zero on first touch
  bool has_grad(int i) const { return nodes_[static_cast<size_t>(i)].grad.numel() > 0; }
  bool needs_grad(int i) const { return nodes_[static_cast<size_t>(i)].needs_grad; }

  Var emit(Tensor value, std::vector<int> parents, std::function<void(Tape&, int)> bw,
           const char* op_name);

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

// ---- elementwise arithmetic ------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var add_scalar(Var a, double s);
Var scale(Var a, double s);
Var add_const(Var a, const Tensor& c);
Var sub_const(Var a, const Tensor& c);  // a - c

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator-(Var a) { return neg(a); }

// ---- nonlinearities ----------------------------------------------------------
Var relu(Var a);
Var sigmoid(Var a);
Var tanh_v(Var a);
Var log_v(Var a);
Var exp_v(Var a);
Var softplus(Var a);  // log(1 + exp(x)), overflow-stable
Var square(Var a);

// ---- linear algebra ----------------------------------------------------------
// matmul: [m,k] x [k,n] -> [m,n]; a may be rank-1 [k] (treated as [1,k] -> [n]).
Var matmul(Var a, Var b);
// affine: x [m,in] (or [in]) times w [in,out], bias b [out] broadcast per row.
Var affine(Var x, Var w, Var b);

// ---- softmax / reductions ----------------------------------------------------
Var softmax_rows(Var x);      // rank-2, softmax over the last dim
Var log_softmax_rows(Var x);  // stable
Var sum(Var x);               // -> [1]
Var mean(Var x);              // -> [1]

// ---- shape ops -----------------------------------------------------------------
Var concat(const std::vector<Var>& parts);      // 1-D concatenation
Var stack_rows(const std::vector<Var>& rows);   // each [k] -> [T,k]
Var slice(Var x, int start, int len);           // 1-D view (copying)
Var row(Var x, int r);                          // [m,k] -> [k]
Var gather(Var x, const std::vector<int>& idx);       // 1-D -> [|idx|]
Var gather_rows(Var x, const std::vector<int>& idx);  // [m,k] -> [|idx|,k]
Var reshape(Var x, std::vector<int> shape);
Var flatten(Var x);

// ---- convolution / pooling / sampling -----------------------------------------
// x: [H,W,Cin]; w: [KH*KW*Cin, Cout]; b: [Cout] -> [Ho,Wo,Cout]
Var conv2d(Var x, Var w, Var b, const ConvSpec& spec);
// 2x2 max pooling with stride 2, ceil semantics on odd dims.
Var maxpool2(Var x);
// Bilinear gather at fixed fractional points; zero outside. fm [H,W,C] -> [N,C].
// Gradients flow into feature values only; the grid is constant.
Var bilinear_gather(Var fm, const std::vector<GridPoint>& pts);

// ---- losses --------------------------------------------------------------------
// Mean cross-entropy of logits rows [N,K] against integer labels.
Var ce_with_logits(Var logits, const std::vector<int>& labels);
// Mean binary cross-entropy with logits; targets must match shape.
Var bce_with_logits(Var z, const Tensor& targets);
// Smooth-L1 (Huber at delta=1), summed over coordinates, averaged over rows.
Var smooth_l1(Var pred, const Tensor& target);
// Mean squared error against a constant target.
Var mse(Var pred, const Tensor& target);
// CTC negative log-likelihood. logits [T, A+1], blank = last index.
// target holds symbol ids in [0, A). Throws InputError if the target does not
// fit into T frames (standard admissibility: T >= |target| + #adjacent repeats).
Var ctc_loss(Var logits, const std::vector<int>& target);

// ---- LSTM ----------------------------------------------------------------------
struct LstmParams {
  Var wx;  // [In, 4H]
  Var wh;  // [H, 4H]
  Var b;   // [4H], gate order (input, forget, output, candidate)
};
// One step: returns (h', c').
std::pair<Var, Var> lstm_cell(Var x, Var h, Var c, const LstmParams& p);
// frames [T,In] -> [T,2H]: forward and reverse passes concatenated per frame.
Var bilstm(Var frames, const LstmParams& fwd, const LstmParams& bwd);

// ---- gradient checking -----------------------------------------------------------
// Builds the graph via fn at `point`, then compares analytic gradients of the
// scalar output against central differences. Returns the max over coordinates
// of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const std::function<Var(Tape&, std::vector<Var>&)>& fn,
                  const std::vector<Tensor>& point, double epsilon);

// Best-path CTC collapse of a [T, A+1] logit (or probability) matrix: argmax
// per frame, remove adjacent repeats, drop blanks. Returns symbol ids.
std::vector<int> ctc_best_path(const Tensor& logits);

}  // namespace chartx::ad

#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "preimage/tensor.hpp"

namespace preimage {

// A trainable tensor plus its gradient accumulator. Owned by layers; graphs
// reference it through param() leaves and deposit gradients on backward().
struct Param {
  Tensor value;
  Tensor grad;

  Param() = default;
  explicit Param(Tensor t) : value(std::move(t)) {
    grad = Tensor(value.n, value.c, value.h, value.w, 0.0);
  }
  void zero_grad() { grad.fill(0.0); }
};

// Reverse-mode tape. Operations append nodes in execution order; backward()
// walks the tape in reverse. A fresh Graph is built per forward pass.
class Graph {
 public:
  struct Node {
    Tensor val;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    std::function<void(Graph&, int)> back;  // chain rule into parents
  };

  std::vector<Node> nodes;

  int add(Tensor val, bool needs_grad, std::function<void(Graph&, int)> back) {
    Node nd;
    nd.val = std::move(val);
    nd.needs_grad = needs_grad;
    nd.back = std::move(back);
    nodes.push_back(std::move(nd));
    return static_cast<int>(nodes.size()) - 1;
  }

  Tensor& val(int id) { return nodes[id].val; }
  const Tensor& val(int id) const { return nodes[id].val; }

  // Gradient buffer for a node, zero-allocated on first touch.
  Tensor& grad_buf(int id) {
    Node& nd = nodes[id];
    if (!nd.has_grad) {
      const Tensor& v = nd.val;
      nd.grad = Tensor(v.n, v.c, v.h, v.w, 0.0);
      nd.has_grad = true;
    }
    return nd.grad;
  }

  bool needs_grad(int id) const { return nodes[id].needs_grad; }

  // Seeds d(root)/d(root) = 1 and propagates to all reachable parents.
  // root must be scalar.
  void backward(int root);
};

// Lightweight handle into a Graph.
struct Var {
  Graph* g = nullptr;
  int id = -1;

  bool valid() const { return g != nullptr && id >= 0; }
  const Tensor& val() const { return g->val(id); }
};

// --- graph construction -----------------------------------------------------

Var constant(Graph& g, Tensor t);
Var param(Graph& g, Param& p);          // leaf that accumulates into p.grad
Var frozen(Graph& g, const Param& p);   // leaf with no gradient tracking

// --- elementwise and shape ops ----------------------------------------------

Var add(Var a, Var b);
Var scale(Var x, double k);
Var sub_const(Var x, double k);
Var square(Var x);
Var relu(Var x);
Var leaky_relu(Var x, double slope);
Var sigmoid(Var x);
Var concat_channels(Var a, Var b);

// y = x * sc[c] + sh[c], per channel (constants). Used for input
// normalization and frozen batch-norm.
Var channel_affine(Var x, const Tensor& sc, const Tensor& sh);

// --- neural net ops -----------------------------------------------------------

// b may be an invalid Var for a bias-free convolution.
Var conv2d(Var x, Var wgt, Var b, int stride, int pad);
Var linear(Var x, Var wgt, Var b);  // wgt (out,in,1,1), b (1,out,1,1)

// Batch statistics over (n,h,w) per channel; updates running stats in place
// when update_running is set.
Var batchnorm_train(Var x, Var gamma, Var beta, Tensor& running_mean,
                    Tensor& running_var, double momentum, double eps,
                    bool update_running);

// Per-sample, per-channel statistics over (h,w).
Var instance_norm(Var x, Var gamma, Var beta, double eps);

Var maxpool(Var x, int k, int stride, int pad);
Var global_avg_pool(Var x);           // (n,c,h,w) -> (n,c,1,1)
Var upsample_bilinear2x(Var x);       // (n,c,h,w) -> (n,c,2h,2w)

// --- objectives ---------------------------------------------------------------

Var mse(Var a, Var b);                // scalar, mean over all elements
Var mean_all(Var x);                  // scalar
Var softmax_cross_entropy(Var logits, const std::vector<int>& labels);  // (n,1,1,1)

// Pairwise hinge on estimate differences; true losses enter only through
// their ordering. Returns the plain sum over the given pairs.
Var ranking_hinge(Var estimates, const std::vector<double>& true_losses,
                  const std::vector<std::pair<int, int>>& pairs, double margin);

// Charbonnier-smoothed total variation, summed over batch and channels.
Var tv_smooth(Var x);
// mean(|x|^alpha) over all elements.
Var alpha_norm(Var x, double alpha);

// --- plain (non-graph) helpers -----------------------------------------------

std::vector<double> softmax_row(const double* logits, int k);
double log_sum_exp(const double* logits, int k);

}  // namespace preimage

#pragma once

#include <string>
#include <vector>

#include "preimage/graph.hpp"
#include "preimage/rng.hpp"

namespace preimage {

struct NamedParam {
  std::string name;
  Param* p;
};

// Persistent non-trainable state (running statistics) that still belongs in
// a checkpoint.
struct NamedState {
  std::string name;
  Tensor* t;
};

struct Conv2d {
  Param weight;  // (out, in, k, k)
  Param bias;    // (1, out, 1, 1)
  int stride = 1, pad = 0;
  bool has_bias = true;

  void init(int in_ch, int out_ch, int k, int stride_, int pad_, bool bias_, Rng& rng);
  Var forward(Graph& g, Var x, bool freeze);
  void collect(const std::string& prefix, std::vector<NamedParam>& ps,
               std::vector<NamedState>& st);
};

struct Linear {
  Param weight;  // (out, in, 1, 1)
  Param bias;    // (1, out, 1, 1)

  void init(int in_dim, int out_dim, Rng& rng);
  Var forward(Graph& g, Var x, bool freeze);
  void collect(const std::string& prefix, std::vector<NamedParam>& ps,
               std::vector<NamedState>& st);
};

struct BatchNorm2d {
  Param gamma, beta;
  Tensor running_mean, running_var;
  double eps = 1e-5, momentum = 0.1;

  void init(int channels);
  // train=true uses batch statistics and updates running stats;
  // train=false applies the frozen affine transform.
  Var forward(Graph& g, Var x, bool train, bool freeze);
  void collect(const std::string& prefix, std::vector<NamedParam>& ps,
               std::vector<NamedState>& st);
};

struct InstanceNorm2d {
  Param gamma, beta;
  double eps = 1e-5;

  void init(int channels);
  Var forward(Graph& g, Var x, bool freeze);
  void collect(const std::string& prefix, std::vector<NamedParam>& ps,
               std::vector<NamedState>& st);
};

}  // namespace preimage

#include "preimage/nn.hpp"

#include <cmath>

namespace preimage {

void Conv2d::init(int in_ch, int out_ch, int k, int stride_, int pad_,
                  bool bias_, Rng& rng) {
  stride = stride_;
  pad = pad_;
  has_bias = bias_;
  weight = Param(Tensor(out_ch, in_ch, k, k));
  double sd = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
  for (double& e : weight.value.v) e = rng.normal(0.0, sd);
  if (has_bias) bias = Param(Tensor(1, out_ch, 1, 1, 0.0));
}

Var Conv2d::forward(Graph& g, Var x, bool freeze) {
  Var w = freeze ? frozen(g, weight) : param(g, weight);
  Var b;
  if (has_bias) b = freeze ? frozen(g, bias) : param(g, bias);
  return conv2d(x, w, b, stride, pad);
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedParam>& ps,
                     std::vector<NamedState>& st) {
  (void)st;
  ps.push_back({prefix + ".weight", &weight});
  if (has_bias) ps.push_back({prefix + ".bias", &bias});
}

void Linear::init(int in_dim, int out_dim, Rng& rng) {
  weight = Param(Tensor(out_dim, in_dim, 1, 1));
  double sd = std::sqrt(1.0 / in_dim);
  for (double& e : weight.value.v) e = rng.normal(0.0, sd);
  bias = Param(Tensor(1, out_dim, 1, 1, 0.0));
}

Var Linear::forward(Graph& g, Var x, bool freeze) {
  Var w = freeze ? frozen(g, weight) : param(g, weight);
  Var b = freeze ? frozen(g, bias) : param(g, bias);
  return linear(x, w, b);
}

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& ps,
                     std::vector<NamedState>& st) {
  (void)st;
  ps.push_back({prefix + ".weight", &weight});
  ps.push_back({prefix + ".bias", &bias});
}

void BatchNorm2d::init(int channels) {
  gamma = Param(Tensor(1, channels, 1, 1, 1.0));
  beta = Param(Tensor(1, channels, 1, 1, 0.0));
  running_mean = Tensor(1, channels, 1, 1, 0.0);
  running_var = Tensor(1, channels, 1, 1, 1.0);
}

Var BatchNorm2d::forward(Graph& g, Var x, bool train, bool freeze) {
  if (train) {
    Var ga = freeze ? frozen(g, gamma) : param(g, gamma);
    Var be = freeze ? frozen(g, beta) : param(g, beta);
    return batchnorm_train(x, ga, be, running_mean, running_var, momentum, eps,
                           /*update_running=*/!freeze);
  }
  // frozen statistics fold into a per-channel affine map
  const int cc = gamma.value.size();
  Tensor sc(1, cc, 1, 1), sh(1, cc, 1, 1);
  for (int i = 0; i < cc; ++i) {
    double inv = 1.0 / std::sqrt(running_var.v[i] + eps);
    sc.v[i] = gamma.value.v[i] * inv;
    sh.v[i] = beta.value.v[i] - running_mean.v[i] * gamma.value.v[i] * inv;
  }
  return channel_affine(x, sc, sh);
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<NamedParam>& ps,
                          std::vector<NamedState>& st) {
  ps.push_back({prefix + ".gamma", &gamma});
  ps.push_back({prefix + ".beta", &beta});
  st.push_back({prefix + ".running_mean", &running_mean});
  st.push_back({prefix + ".running_var", &running_var});
}

void InstanceNorm2d::init(int channels) {
  gamma = Param(Tensor(1, channels, 1, 1, 1.0));
  beta = Param(Tensor(1, channels, 1, 1, 0.0));
}

Var InstanceNorm2d::forward(Graph& g, Var x, bool freeze) {
  Var ga = freeze ? frozen(g, gamma) : param(g, gamma);
  Var be = freeze ? frozen(g, beta) : param(g, beta);
  return instance_norm(x, ga, be, eps);
}

void InstanceNorm2d::collect(const std::string& prefix,
                             std::vector<NamedParam>& ps,
                             std::vector<NamedState>& st) {
  (void)st;
  ps.push_back({prefix + ".gamma", &gamma});
  ps.push_back({prefix + ".beta", &beta});
}

}  // namespace preimage

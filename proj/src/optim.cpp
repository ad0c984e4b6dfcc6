#include "preimage/optim.hpp"

#include <cmath>

namespace preimage {

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Param* p : params_) {
    const Tensor& t = p->value;
    m_.emplace_back(t.n, t.c, t.h, t.w, 0.0);
    v_.emplace_back(t.n, t.c, t.h, t.w, 0.0);
  }
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& val = params_[i]->value;
    const Tensor& grd = params_[i]->grad;
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int k = 0; k < val.size(); ++k) {
      double g = grd.v[k];
      m.v[k] = beta1_ * m.v[k] + (1.0 - beta1_) * g;
      v.v[k] = beta2_ * v.v[k] + (1.0 - beta2_) * g * g;
      double mhat = m.v[k] / bc1;
      double vhat = v.v[k] / bc2;
      val.v[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

}  // namespace preimage

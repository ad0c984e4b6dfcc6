#pragma once

#include <vector>

#include "preimage/graph.hpp"

namespace preimage {

// Adaptive moment estimation over a fixed parameter set.
class Adam {
 public:
  Adam(std::vector<Param*> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void step();       // consumes the accumulated gradients
  void zero_grad();  // clears them

  double lr() const { return lr_; }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace preimage

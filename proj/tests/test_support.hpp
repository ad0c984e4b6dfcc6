#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "preimage/graph.hpp"
#include "preimage/rng.hpp"

namespace testsup {

using preimage::Graph;
using preimage::Param;
using preimage::Tensor;
using preimage::Var;

inline Tensor random_tensor(int n, int c, int h, int w, preimage::Rng& rng,
                            double lo = -1.0, double hi = 1.0) {
  Tensor t(n, c, h, w);
  for (double& e : t.v) e = rng.uniform(lo, hi);
  return t;
}

struct GradReport {
  double max_rel_err = 0.0;
  int checked = 0;
};

// Compares analytic gradients of a scalar-valued graph against central
// finite differences. build() must construct the same graph from the
// current parameter values every time it is called.
inline GradReport finite_difference_check(
    std::vector<Param*> params, const std::function<Var(Graph&)>& build,
    double tol, int stride = 1) {
  for (Param* p : params) p->zero_grad();
  {
    Graph g;
    Var out = build(g);
    g.backward(out.id);
  }
  auto eval = [&]() {
    Graph g;
    return build(g).val().v[0];
  };
  GradReport rep;
  for (Param* p : params) {
    for (int k = 0; k < p->value.size(); k += stride) {
      double orig = p->value.v[k];
      double h = 1e-5 * std::max(1.0, std::fabs(orig));
      p->value.v[k] = orig + h;
      double fp = eval();
      p->value.v[k] = orig - h;
      double fm = eval();
      p->value.v[k] = orig;
      double fd = (fp - fm) / (2.0 * h);
      double ana = p->grad.v[k];
      double denom = std::max({1e-8, std::fabs(fd), std::fabs(ana)});
      double rel = std::fabs(fd - ana) / denom;
      // absolute agreement counts for near-zero gradients
      if (std::fabs(fd - ana) < 1e-9) rel = 0.0;
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
      ++rep.checked;
      if (rel > tol) return rep;  // stop early, report the offender
    }
  }
  (void)tol;
  return rep;
}

}  // namespace testsup

#include "preimage/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace preimage {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;
using MapCM = Eigen::Map<Eigen::MatrixXd>;

void Graph::backward(int root) {
  if (nodes[root].val.size() != 1)
    throw std::logic_error("backward: root is not a scalar");
  grad_buf(root).v[0] = 1.0;
  for (int i = root; i >= 0; --i) {
    Node& nd = nodes[i];
    if (nd.has_grad && nd.back) nd.back(*this, i);
  }
}

Var constant(Graph& g, Tensor t) {
  int id = g.add(std::move(t), false, nullptr);
  return {&g, id};
}

Var param(Graph& g, Param& p) {
  Param* pp = &p;
  int id = g.add(p.value, true, [pp](Graph& gg, int self) {
    const Tensor& gr = gg.nodes[self].grad;
    double* dst = pp->grad.data();
    const double* src = gr.data();
    for (int k = 0; k < gr.size(); ++k) dst[k] += src[k];
  });
  return {&g, id};
}

Var frozen(Graph& g, const Param& p) { return constant(g, p.value); }

// ---------------------------------------------------------------------------
// elementwise

Var add(Var a, Var b) {
  Graph& g = *a.g;
  require_same_shape(a.val(), b.val(), "add");
  Tensor out = a.val();
  const double* bv = b.val().data();
  for (int k = 0; k < out.size(); ++k) out.v[k] += bv[k];
  int pa = a.id, pb = b.id;
  bool ng = g.needs_grad(pa) || g.needs_grad(pb);
  int id = g.add(std::move(out), ng, [pa, pb](Graph& gg, int self) {
    const Tensor& gr = gg.nodes[self].grad;
    for (int p : {pa, pb}) {
      if (!gg.needs_grad(p)) continue;
      Tensor& gp = gg.grad_buf(p);
      for (int k = 0; k < gr.size(); ++k) gp.v[k] += gr.v[k];
    }
  });
  return {&g, id};
}

Var scale(Var x, double k) {
  Graph& g = *x.g;
  Tensor out = x.val();
  for (double& e : out.v) e *= k;
  int px = x.id;
  int id = g.add(std::move(out), g.needs_grad(px), [px, k](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    const Tensor& gr = gg.nodes[self].grad;
    Tensor& gx = gg.grad_buf(px);
    for (int i = 0; i < gr.size(); ++i) gx.v[i] += k * gr.v[i];
  });
  return {&g, id};
}

Var sub_const(Var x, double k) {
  Graph& g = *x.g;
  Tensor out = x.val();
  for (double& e : out.v) e -= k;
  int px = x.id;
  int id = g.add(std::move(out), g.needs_grad(px), [px](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    const Tensor& gr = gg.nodes[self].grad;
    Tensor& gx = gg.grad_buf(px);
    for (int i = 0; i < gr.size(); ++i) gx.v[i] += gr.v[i];
  });
  return {&g, id};
}

Var square(Var x) {
  Graph& g = *x.g;
  Tensor out = x.val();
  for (double& e : out.v) e *= e;
  int px = x.id;
  int id = g.add(std::move(out), g.needs_grad(px), [px](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    const Tensor& gr = gg.nodes[self].grad;
    const Tensor& xv = gg.val(px);
    Tensor& gx = gg.grad_buf(px);
    for (int i = 0; i < gr.size(); ++i) gx.v[i] += 2.0 * xv.v[i] * gr.v[i];
  });
  return {&g, id};
}

Var relu(Var x) {
  Graph& g = *x.g;
  Tensor out = x.val();
  for (double& e : out.v) e = e > 0.0 ? e : 0.0;
  int px = x.id;
  int id = g.add(std::move(out), g.needs_grad(px), [px](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    const Tensor& gr = gg.nodes[self].grad;
    const Tensor& xv = gg.val(px);
    Tensor& gx = gg.grad_buf(px);
    for (int i = 0; i < gr.size(); ++i)
      if (xv.v[i] > 0.0) gx.v[i] += gr.v[i];
  });
  return {&g, id};
}

Var leaky_relu(Var x, double slope) {
  Graph& g = *x.g;
  Tensor out = x.val();
  for (double& e : out.v) e = e > 0.0 ? e : slope * e;
  int px = x.id;
  int id = g.add(std::move(out), g.needs_grad(px), [px, slope](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    const Tensor& gr = gg.nodes[self].grad;
    const Tensor& xv = gg.val(px);
    Tensor& gx = gg.grad_buf(px);
    for (int i = 0; i < gr.size(); ++i)
      gx.v[i] += (xv.v[i] > 0.0 ? 1.0 : slope) * gr.v[i];
  });
  return {&g, id};
}

Var sigmoid(Var x) {
  Graph& g = *x.g;
  Tensor out = x.val();
  for (double& e : out.v) e = 1.0 / (1.0 + std::exp(-e));
  int px = x.id;
  int id = g.add(std::move(out), g.needs_grad(px), [px](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    const Tensor& gr = gg.nodes[self].grad;
    const Tensor& yv = gg.nodes[self].val;
    Tensor& gx = gg.grad_buf(px);
    for (int i = 0; i < gr.size(); ++i)
      gx.v[i] += yv.v[i] * (1.0 - yv.v[i]) * gr.v[i];
  });
  return {&g, id};
}

Var concat_channels(Var a, Var b) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (av.n != bv.n || av.h != bv.h || av.w != bv.w)
    throw std::invalid_argument("concat_channels: incompatible shapes " +
                                shape_str(av) + " vs " + shape_str(bv));
  Tensor out(av.n, av.c + bv.c, av.h, av.w);
  const int hw = av.h * av.w;
  for (int in = 0; in < av.n; ++in) {
    std::memcpy(&out.v[(static_cast<std::size_t>(in) * out.c) * hw],
                &av.v[(static_cast<std::size_t>(in) * av.c) * hw],
                sizeof(double) * av.c * hw);
    std::memcpy(&out.v[(static_cast<std::size_t>(in) * out.c + av.c) * hw],
                &bv.v[(static_cast<std::size_t>(in) * bv.c) * hw],
                sizeof(double) * bv.c * hw);
  }
  int pa = a.id, pb = b.id, ca = av.c;
  bool ng = g.needs_grad(pa) || g.needs_grad(pb);
  int id = g.add(std::move(out), ng, [pa, pb, ca, hw](Graph& gg, int self) {
    const Tensor& gr = gg.nodes[self].grad;
    const int cc = gr.c;
    if (gg.needs_grad(pa)) {
      Tensor& ga = gg.grad_buf(pa);
      for (int in = 0; in < gr.n; ++in)
        for (int k = 0; k < ca * hw; ++k)
          ga.v[static_cast<std::size_t>(in) * ca * hw + k] +=
              gr.v[(static_cast<std::size_t>(in) * cc) * hw + k];
    }
    if (gg.needs_grad(pb)) {
      Tensor& gb = gg.grad_buf(pb);
      const int cb = cc - ca;
      for (int in = 0; in < gr.n; ++in)
        for (int k = 0; k < cb * hw; ++k)
          gb.v[static_cast<std::size_t>(in) * cb * hw + k] +=
              gr.v[(static_cast<std::size_t>(in) * cc + ca) * hw + k];
    }
  });
  return {&g, id};
}

Var channel_affine(Var x, const Tensor& sc, const Tensor& sh) {
  Graph& g = *x.g;
  const Tensor& xv = x.val();
  if (sc.size() != xv.c || sh.size() != xv.c)
    throw std::invalid_argument("channel_affine: scale/shift size mismatch");
  Tensor out = xv;
  const int hw = xv.h * xv.w;
  for (int in = 0; in < xv.n; ++in)
    for (int ic = 0; ic < xv.c; ++ic) {
      double s = sc.v[ic], t = sh.v[ic];
      double* p = &out.v[(static_cast<std::size_t>(in) * xv.c + ic) * hw];
      for (int k = 0; k < hw; ++k) p[k] = p[k] * s + t;
    }
  int px = x.id;
  Tensor scv = sc;
  int id = g.add(std::move(out), g.needs_grad(px),
                 [px, scv, hw](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    const Tensor& gr = gg.nodes[self].grad;
    Tensor& gx = gg.grad_buf(px);
    for (int in = 0; in < gr.n; ++in)
      for (int ic = 0; ic < gr.c; ++ic) {
        double s = scv.v[ic];
        const double* gp = &gr.v[(static_cast<std::size_t>(in) * gr.c + ic) * hw];
        double* xp = &gx.v[(static_cast<std::size_t>(in) * gr.c + ic) * hw];
        for (int k = 0; k < hw; ++k) xp[k] += s * gp[k];
      }
  });
  return {&g, id};
}

// ---------------------------------------------------------------------------
// convolution

namespace {

// col is (cin*k*k) x (ho*wo), column-major.
void im2col(const Tensor& x, int in, int kh, int kw, int stride, int pad,
            int ho, int wo, Eigen::MatrixXd& col) {
  const int cin = x.c, hh = x.h, ww = x.w;
  col.resize(cin * kh * kw, ho * wo);
  for (int q = 0; q < ho * wo; ++q) {
    int oh = q / wo, ow = q % wo;
    double* colq = col.data() + static_cast<std::size_t>(q) * cin * kh * kw;
    for (int ci = 0; ci < cin; ++ci) {
      const double* xp =
          &x.v[((static_cast<std::size_t>(in) * cin + ci) * hh) * ww];
      for (int ki = 0; ki < kh; ++ki) {
        int ih = oh * stride - pad + ki;
        for (int kj = 0; kj < kw; ++kj) {
          int iw = ow * stride - pad + kj;
          colq[(ci * kh + ki) * kw + kj] =
              (ih >= 0 && ih < hh && iw >= 0 && iw < ww)
                  ? xp[ih * ww + iw]
                  : 0.0;
        }
      }
    }
  }
}

void col2im_accum(const Eigen::MatrixXd& col, Tensor& dx, int in, int kh,
                  int kw, int stride, int pad, int ho, int wo) {
  const int cin = dx.c, hh = dx.h, ww = dx.w;
  for (int q = 0; q < ho * wo; ++q) {
    int oh = q / wo, ow = q % wo;
    const double* colq = col.data() + static_cast<std::size_t>(q) * cin * kh * kw;
    for (int ci = 0; ci < cin; ++ci) {
      double* xp = &dx.v[((static_cast<std::size_t>(in) * cin + ci) * hh) * ww];
      for (int ki = 0; ki < kh; ++ki) {
        int ih = oh * stride - pad + ki;
        if (ih < 0 || ih >= hh) continue;
        for (int kj = 0; kj < kw; ++kj) {
          int iw = ow * stride - pad + kj;
          if (iw < 0 || iw >= ww) continue;
          xp[ih * ww + iw] += colq[(ci * kh + ki) * kw + kj];
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var wgt, Var b, int stride, int pad) {
  Graph& g = *x.g;
  const Tensor& xv = x.val();
  const Tensor& wv = wgt.val();
  if (wv.c != xv.c)
    throw std::invalid_argument("conv2d: input channel mismatch " +
                                shape_str(xv) + " vs " + shape_str(wv));
  const int cout = wv.n, kh = wv.h, kw = wv.w;
  const int ho = (xv.h + 2 * pad - kh) / stride + 1;
  const int wo = (xv.w + 2 * pad - kw) / stride + 1;
  if (ho <= 0 || wo <= 0)
    throw std::invalid_argument("conv2d: output would be empty");
  const bool has_bias = b.valid();

  Tensor out(xv.n, cout, ho, wo);
  Eigen::MatrixXd col;
  CMapRM wmap(wv.data(), cout, wv.c * kh * kw);
  for (int in = 0; in < xv.n; ++in) {
    im2col(xv, in, kh, kw, stride, pad, ho, wo, col);
    MapRM omap(&out.v[static_cast<std::size_t>(in) * cout * ho * wo], cout, ho * wo);
    omap.noalias() = wmap * col;
    if (has_bias) {
      const Tensor& bv = b.val();
      for (int co = 0; co < cout; ++co)
        omap.row(co).array() += bv.v[co];
    }
  }

  int px = x.id, pw = wgt.id, pb = has_bias ? b.id : -1;
  bool ng = g.needs_grad(px) || g.needs_grad(pw) || (has_bias && g.needs_grad(pb));
  int id = g.add(std::move(out), ng,
                 [px, pw, pb, stride, pad, kh, kw, ho, wo](Graph& gg, int self) {
    const Tensor& gr = gg.nodes[self].grad;
    const Tensor& xv2 = gg.val(px);
    const Tensor& wv2 = gg.val(pw);
    const int cout = wv2.n;
    const int ckk = wv2.c * kh * kw;
    const bool need_x = gg.needs_grad(px);
    const bool need_w = gg.needs_grad(pw);
    const bool need_b = pb >= 0 && gg.needs_grad(pb);
    Eigen::MatrixXd col, dcol;
    CMapRM wmap(wv2.data(), cout, ckk);
    for (int in = 0; in < xv2.n; ++in) {
      CMapRM gmap(&gr.v[static_cast<std::size_t>(in) * cout * ho * wo], cout, ho * wo);
      if (need_w || need_x) {
        if (need_w) {
          im2col(xv2, in, kh, kw, stride, pad, ho, wo, col);
          MapRM dwmap(gg.grad_buf(pw).data(), cout, ckk);
          dwmap.noalias() += gmap * col.transpose();
        }
        if (need_x) {
          dcol.resize(ckk, ho * wo);
          dcol.noalias() = wmap.transpose() * gmap;
          col2im_accum(dcol, gg.grad_buf(px), in, kh, kw, stride, pad, ho, wo);
        }
      }
      if (need_b) {
        Tensor& gb = gg.grad_buf(pb);
        for (int co = 0; co < cout; ++co) gb.v[co] += gmap.row(co).sum();
      }
    }
  });
  return {&g, id};
}

Var linear(Var x, Var wgt, Var b) {
  Graph& g = *x.g;
  const Tensor& xv = x.val();
  const Tensor& wv = wgt.val();
  const int feat = xv.c * xv.h * xv.w;
  const int out_dim = wv.n;
  if (wv.c * wv.h * wv.w != feat)
    throw std::invalid_argument("linear: feature size mismatch " +
                                shape_str(xv) + " vs " + shape_str(wv));
  const bool has_bias = b.valid();
  Tensor out(xv.n, out_dim, 1, 1);
  {
    CMapRM xmap(xv.data(), xv.n, feat);
    CMapRM wmap(wv.data(), out_dim, feat);
    MapRM omap(out.data(), xv.n, out_dim);
    omap.noalias() = xmap * wmap.transpose();
    if (has_bias) {
      const Tensor& bv = b.val();
      CMapRM bmap(bv.data(), 1, out_dim);
      omap.rowwise() += bmap.row(0);
    }
  }
  int px = x.id, pw = wgt.id, pb = has_bias ? b.id : -1;
  bool ng = g.needs_grad(px) || g.needs_grad(pw) || (has_bias && g.needs_grad(pb));
  int id = g.add(std::move(out), ng, [px, pw, pb, feat, out_dim](Graph& gg, int self) {
    const Tensor& gr = gg.nodes[self].grad;
    const Tensor& xv2 = gg.val(px);
    const Tensor& wv2 = gg.val(pw);
    CMapRM gmap(gr.data(), xv2.n, out_dim);
    CMapRM xmap(xv2.data(), xv2.n, feat);
    CMapRM wmap(wv2.data(), out_dim, feat);
    if (gg.needs_grad(pw)) {
      MapRM dw(gg.grad_buf(pw).data(), out_dim, feat);
      dw.noalias() += gmap.transpose() * xmap;
    }
    if (gg.needs_grad(px)) {
      MapRM dx(gg.grad_buf(px).data(), xv2.n, feat);
      dx.noalias() += gmap * wmap;
    }
    if (pb >= 0 && gg.needs_grad(pb)) {
      MapRM db(gg.grad_buf(pb).data(), 1, out_dim);
      db.row(0) += gmap.colwise().sum();
    }
  });
  return {&g, id};
}

// ---------------------------------------------------------------------------
// normalization

Var batchnorm_train(Var x, Var gamma, Var beta, Tensor& running_mean,
                    Tensor& running_var, double momentum, double eps,
                    bool update_running) {
  Graph& g = *x.g;
  const Tensor& xv = x.val();
  const int cc = xv.c, m = xv.n * xv.h * xv.w;
  if (m < 2) throw std::invalid_argument("batchnorm_train: needs >= 2 values per channel");
  std::vector<double> mean(cc, 0.0), inv_sd(cc, 0.0);
  const int hw = xv.h * xv.w;
  for (int ic = 0; ic < cc; ++ic) {
    double s = 0.0;
    for (int in = 0; in < xv.n; ++in) {
      const double* p = &xv.v[(static_cast<std::size_t>(in) * cc + ic) * hw];
      for (int k = 0; k < hw; ++k) s += p[k];
    }
    double mu = s / m;
    double vs = 0.0;
    for (int in = 0; in < xv.n; ++in) {
      const double* p = &xv.v[(static_cast<std::size_t>(in) * cc + ic) * hw];
      for (int k = 0; k < hw; ++k) {
        double d = p[k] - mu;
        vs += d * d;
      }
    }
    double var = vs / m;  // biased, also used for running stats
    mean[ic] = mu;
    inv_sd[ic] = 1.0 / std::sqrt(var + eps);
    if (update_running) {
      running_mean.v[ic] = (1.0 - momentum) * running_mean.v[ic] + momentum * mu;
      running_var.v[ic] = (1.0 - momentum) * running_var.v[ic] + momentum * var;
    }
  }
  Tensor out = xv;
  const Tensor& gv = gamma.val();
  const Tensor& bv = beta.val();
  for (int in = 0; in < xv.n; ++in)
    for (int ic = 0; ic < cc; ++ic) {
      double mu = mean[ic], inv = inv_sd[ic], gam = gv.v[ic], bet = bv.v[ic];
      double* p = &out.v[(static_cast<std::size_t>(in) * cc + ic) * hw];
      for (int k = 0; k < hw; ++k) p[k] = (p[k] - mu) * inv * gam + bet;
    }

  int px = x.id, pg = gamma.id, pbt = beta.id;
  bool ng = g.needs_grad(px) || g.needs_grad(pg) || g.needs_grad(pbt);
  int id = g.add(std::move(out), ng,
                 [px, pg, pbt, mean, inv_sd, m, hw](Graph& gg, int self) {
    const Tensor& gr = gg.nodes[self].grad;
    const Tensor& xv2 = gg.val(px);
    const Tensor& gv2 = gg.val(pg);
    const int cc2 = xv2.c;
    for (int ic = 0; ic < cc2; ++ic) {
      double mu = mean[ic], inv = inv_sd[ic];
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for (int in = 0; in < xv2.n; ++in) {
        const double* gp = &gr.v[(static_cast<std::size_t>(in) * cc2 + ic) * hw];
        const double* xp = &xv2.v[(static_cast<std::size_t>(in) * cc2 + ic) * hw];
        for (int k = 0; k < hw; ++k) {
          sum_gy += gp[k];
          sum_gy_xhat += gp[k] * (xp[k] - mu) * inv;
        }
      }
      if (gg.needs_grad(pbt)) gg.grad_buf(pbt).v[ic] += sum_gy;
      if (gg.needs_grad(pg)) gg.grad_buf(pg).v[ic] += sum_gy_xhat;
      if (gg.needs_grad(px)) {
        Tensor& gx = gg.grad_buf(px);
        double gam = gv2.v[ic];
        double mg = sum_gy / m, mgx = sum_gy_xhat / m;
        for (int in = 0; in < xv2.n; ++in) {
          const double* gp = &gr.v[(static_cast<std::size_t>(in) * cc2 + ic) * hw];
          const double* xp = &xv2.v[(static_cast<std::size_t>(in) * cc2 + ic) * hw];
          double* dp = &gx.v[(static_cast<std::size_t>(in) * cc2 + ic) * hw];
          for (int k = 0; k < hw; ++k) {
            double xhat = (xp[k] - mu) * inv;
            dp[k] += gam * inv * (gp[k] - mg - xhat * mgx);
          }
        }
      }
    }
  });
  return {&g, id};
}

Var instance_norm(Var x, Var gamma, Var beta, double eps) {
  Graph& g = *x.g;
  const Tensor& xv = x.val();
  const int cc = xv.c, hw = xv.h * xv.w;
  // A single spatial value cannot be normalized; fall back to the affine
  // part so 1x1 bottlenecks still carry signal.
  const bool passthrough = hw == 1;
  std::vector<double> mean(static_cast<std::size_t>(xv.n) * cc, 0.0),
      inv_sd(static_cast<std::size_t>(xv.n) * cc, 1.0);
  if (!passthrough)
    for (int in = 0; in < xv.n; ++in)
      for (int ic = 0; ic < cc; ++ic) {
        const double* p = &xv.v[(static_cast<std::size_t>(in) * cc + ic) * hw];
        double s = 0.0;
        for (int k = 0; k < hw; ++k) s += p[k];
        double mu = s / hw;
        double vs = 0.0;
        for (int k = 0; k < hw; ++k) {
          double d = p[k] - mu;
          vs += d * d;
        }
        mean[static_cast<std::size_t>(in) * cc + ic] = mu;
        inv_sd[static_cast<std::size_t>(in) * cc + ic] = 1.0 / std::sqrt(vs / hw + eps);
      }
  Tensor out = xv;
  const Tensor& gv = gamma.val();
  const Tensor& bv = beta.val();
  for (int in = 0; in < xv.n; ++in)
    for (int ic = 0; ic < cc; ++ic) {
      double mu = mean[static_cast<std::size_t>(in) * cc + ic];
      double inv = inv_sd[static_cast<std::size_t>(in) * cc + ic];
      double gam = gv.v[ic], bet = bv.v[ic];
      double* p = &out.v[(static_cast<std::size_t>(in) * cc + ic) * hw];
      for (int k = 0; k < hw; ++k) p[k] = (p[k] - mu) * inv * gam + bet;
    }
  int px = x.id, pg = gamma.id, pbt = beta.id;
  bool ng = g.needs_grad(px) || g.needs_grad(pg) || g.needs_grad(pbt);
  int id = g.add(std::move(out), ng,
                 [px, pg, pbt, mean, inv_sd, hw, passthrough](Graph& gg, int self) {
    const Tensor& gr = gg.nodes[self].grad;
    const Tensor& xv2 = gg.val(px);
    const Tensor& gv2 = gg.val(pg);
    const int cc2 = xv2.c;
    for (int in = 0; in < xv2.n; ++in)
      for (int ic = 0; ic < cc2; ++ic) {
        double mu = mean[static_cast<std::size_t>(in) * cc2 + ic];
        double inv = inv_sd[static_cast<std::size_t>(in) * cc2 + ic];
        const double* gp = &gr.v[(static_cast<std::size_t>(in) * cc2 + ic) * hw];
        const double* xp = &xv2.v[(static_cast<std::size_t>(in) * cc2 + ic) * hw];
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (int k = 0; k < hw; ++k) {
          sum_gy += gp[k];
          sum_gy_xhat += gp[k] * (xp[k] - mu) * inv;
        }
        if (gg.needs_grad(pbt)) gg.grad_buf(pbt).v[ic] += sum_gy;
        if (gg.needs_grad(pg)) gg.grad_buf(pg).v[ic] += sum_gy_xhat;
        if (gg.needs_grad(px)) {
          Tensor& gx = gg.grad_buf(px);
          double* dp = &gx.v[(static_cast<std::size_t>(in) * cc2 + ic) * hw];
          double gam = gv2.v[ic];
          if (passthrough) {
            dp[0] += gam * gp[0];
          } else {
            double mg = sum_gy / hw, mgx = sum_gy_xhat / hw;
            for (int k = 0; k < hw; ++k) {
              double xhat = (xp[k] - mu) * inv;
              dp[k] += gam * inv * (gp[k] - mg - xhat * mgx);
            }
          }
        }
      }
  });
  return {&g, id};
}

// ---------------------------------------------------------------------------
// pooling / resampling

Var maxpool(Var x, int k, int stride, int pad) {
  Graph& g = *x.g;
  const Tensor& xv = x.val();
  const int ho = (xv.h + 2 * pad - k) / stride + 1;
  const int wo = (xv.w + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("maxpool: output would be empty");
  Tensor out(xv.n, xv.c, ho, wo);
  std::vector<int> argmax(static_cast<std::size_t>(out.size()));
  const int hw = xv.h * xv.w;
  std::size_t q = 0;
  for (int in = 0; in < xv.n; ++in)
    for (int ic = 0; ic < xv.c; ++ic) {
      const double* xp = &xv.v[(static_cast<std::size_t>(in) * xv.c + ic) * hw];
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow, ++q) {
          double best = -1e300;
          int best_idx = -1;
          for (int ki = 0; ki < k; ++ki) {
            int ih = oh * stride - pad + ki;
            if (ih < 0 || ih >= xv.h) continue;
            for (int kj = 0; kj < k; ++kj) {
              int iw = ow * stride - pad + kj;
              if (iw < 0 || iw >= xv.w) continue;
              double val = xp[ih * xv.w + iw];
              if (val > best) {  // first max wins on ties
                best = val;
                best_idx = ih * xv.w + iw;
              }
            }
          }
          out.v[q] = best;
          argmax[q] = best_idx;
        }
    }
  int px = x.id;
  int id = g.add(std::move(out), g.needs_grad(px),
                 [px, argmax, hw, ho, wo](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    const Tensor& gr = gg.nodes[self].grad;
    Tensor& gx = gg.grad_buf(px);
    std::size_t q = 0;
    for (int in = 0; in < gr.n; ++in)
      for (int ic = 0; ic < gr.c; ++ic) {
        double* dp = &gx.v[(static_cast<std::size_t>(in) * gr.c + ic) * hw];
        for (int k2 = 0; k2 < ho * wo; ++k2, ++q)
          if (argmax[q] >= 0) dp[argmax[q]] += gr.v[q];
      }
  });
  return {&g, id};
}

Var global_avg_pool(Var x) {
  Graph& g = *x.g;
  const Tensor& xv = x.val();
  const int hw = xv.h * xv.w;
  Tensor out(xv.n, xv.c, 1, 1);
  for (int in = 0; in < xv.n; ++in)
    for (int ic = 0; ic < xv.c; ++ic) {
      const double* p = &xv.v[(static_cast<std::size_t>(in) * xv.c + ic) * hw];
      double s = 0.0;
      for (int k = 0; k < hw; ++k) s += p[k];
      out.at(in, ic, 0, 0) = s / hw;
    }
  int px = x.id;
  int id = g.add(std::move(out), g.needs_grad(px), [px, hw](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    const Tensor& gr = gg.nodes[self].grad;
    Tensor& gx = gg.grad_buf(px);
    for (int in = 0; in < gr.n; ++in)
      for (int ic = 0; ic < gr.c; ++ic) {
        double gv = gr.at(in, ic, 0, 0) / hw;
        double* dp = &gx.v[(static_cast<std::size_t>(in) * gr.c + ic) * hw];
        for (int k = 0; k < hw; ++k) dp[k] += gv;
      }
  });
  return {&g, id};
}

namespace {
// src coordinate and 2-tap weights for factor-2 bilinear upsampling
// (half-pixel centers, edges clamped).
inline void up2_taps(int o, int in_dim, int& i0, int& i1, double& w1) {
  double src = (o + 0.5) * 0.5 - 0.5;
  double fl = std::floor(src);
  w1 = src - fl;
  int i = static_cast<int>(fl);
  i0 = std::clamp(i, 0, in_dim - 1);
  i1 = std::clamp(i + 1, 0, in_dim - 1);
}
}  // namespace

Var upsample_bilinear2x(Var x) {
  Graph& g = *x.g;
  const Tensor& xv = x.val();
  const int ho = xv.h * 2, wo = xv.w * 2;
  Tensor out(xv.n, xv.c, ho, wo);
  for (int in = 0; in < xv.n; ++in)
    for (int ic = 0; ic < xv.c; ++ic) {
      const double* xp = &xv.v[(static_cast<std::size_t>(in) * xv.c + ic) *
                               xv.h * xv.w];
      double* op = &out.v[(static_cast<std::size_t>(in) * xv.c + ic) * ho * wo];
      for (int oh = 0; oh < ho; ++oh) {
        int h0, h1;
        double wh;
        up2_taps(oh, xv.h, h0, h1, wh);
        for (int ow = 0; ow < wo; ++ow) {
          int w0, w1i;
          double ww;
          up2_taps(ow, xv.w, w0, w1i, ww);
          op[oh * wo + ow] = (1.0 - wh) * ((1.0 - ww) * xp[h0 * xv.w + w0] +
                                           ww * xp[h0 * xv.w + w1i]) +
                             wh * ((1.0 - ww) * xp[h1 * xv.w + w0] +
                                   ww * xp[h1 * xv.w + w1i]);
        }
      }
    }
  int px = x.id;
  int ih = xv.h, iw = xv.w;
  int id = g.add(std::move(out), g.needs_grad(px),
                 [px, ih, iw](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    const Tensor& gr = gg.nodes[self].grad;
    Tensor& gx = gg.grad_buf(px);
    const int ho = ih * 2, wo = iw * 2;
    for (int in = 0; in < gr.n; ++in)
      for (int ic = 0; ic < gr.c; ++ic) {
        const double* gp =
            &gr.v[(static_cast<std::size_t>(in) * gr.c + ic) * ho * wo];
        double* dp = &gx.v[(static_cast<std::size_t>(in) * gr.c + ic) * ih * iw];
        for (int oh = 0; oh < ho; ++oh) {
          int h0, h1;
          double wh;
          up2_taps(oh, ih, h0, h1, wh);
          for (int ow = 0; ow < wo; ++ow) {
            int w0, w1i;
            double ww;
            up2_taps(ow, iw, w0, w1i, ww);
            double gv = gp[oh * wo + ow];
            dp[h0 * iw + w0] += (1.0 - wh) * (1.0 - ww) * gv;
            dp[h0 * iw + w1i] += (1.0 - wh) * ww * gv;
            dp[h1 * iw + w0] += wh * (1.0 - ww) * gv;
            dp[h1 * iw + w1i] += wh * ww * gv;
          }
        }
      }
  });
  return {&g, id};
}

// ---------------------------------------------------------------------------
// objectives

Var mse(Var a, Var b) {
  Graph& g = *a.g;
  require_same_shape(a.val(), b.val(), "mse");
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  const int m = av.size();
  double s = 0.0;
  for (int k = 0; k < m; ++k) {
    double d = av.v[k] - bv.v[k];
    s += d * d;
  }
  int pa = a.id, pb = b.id;
  bool ng = g.needs_grad(pa) || g.needs_grad(pb);
  int id = g.add(Tensor::scalar(s / m), ng, [pa, pb, m](Graph& gg, int self) {
    double gv = gg.nodes[self].grad.v[0];
    const Tensor& av2 = gg.val(pa);
    const Tensor& bv2 = gg.val(pb);
    double k2 = 2.0 * gv / m;
    if (gg.needs_grad(pa)) {
      Tensor& ga = gg.grad_buf(pa);
      for (int k = 0; k < m; ++k) ga.v[k] += k2 * (av2.v[k] - bv2.v[k]);
    }
    if (gg.needs_grad(pb)) {
      Tensor& gb = gg.grad_buf(pb);
      for (int k = 0; k < m; ++k) gb.v[k] -= k2 * (av2.v[k] - bv2.v[k]);
    }
  });
  return {&g, id};
}

Var mean_all(Var x) {
  Graph& g = *x.g;
  const Tensor& xv = x.val();
  const int m = xv.size();
  double s = 0.0;
  for (double e : xv.v) s += e;
  int px = x.id;
  int id = g.add(Tensor::scalar(s / m), g.needs_grad(px),
                 [px, m](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    double gv = gg.nodes[self].grad.v[0] / m;
    Tensor& gx = gg.grad_buf(px);
    for (int k = 0; k < m; ++k) gx.v[k] += gv;
  });
  return {&g, id};
}

double log_sum_exp(const double* logits, int k) {
  double mx = logits[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += std::exp(logits[i] - mx);
  return mx + std::log(s);
}

std::vector<double> softmax_row(const double* logits, int k) {
  double mx = logits[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
  std::vector<double> p(k);
  double s = 0.0;
  for (int i = 0; i < k; ++i) {
    p[i] = std::exp(logits[i] - mx);
    s += p[i];
  }
  for (int i = 0; i < k; ++i) p[i] /= s;
  return p;
}

Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
  Graph& g = *logits.g;
  const Tensor& lv = logits.val();
  const int nn = lv.n, kk = lv.c * lv.h * lv.w;
  if (static_cast<int>(labels.size()) != nn)
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= kk)
      throw std::invalid_argument("softmax_cross_entropy: label out of range");
  Tensor out(nn, 1, 1, 1);
  for (int in = 0; in < nn; ++in) {
    const double* row = &lv.v[static_cast<std::size_t>(in) * kk];
    out.v[in] = log_sum_exp(row, kk) - row[labels[in]];
  }
  int pl = logits.id;
  std::vector<int> labs = labels;
  int id = g.add(std::move(out), g.needs_grad(pl),
                 [pl, labs, kk](Graph& gg, int self) {
    if (!gg.needs_grad(pl)) return;
    const Tensor& gr = gg.nodes[self].grad;
    const Tensor& lv2 = gg.val(pl);
    Tensor& gl = gg.grad_buf(pl);
    for (int in = 0; in < lv2.n; ++in) {
      const double* row = &lv2.v[static_cast<std::size_t>(in) * kk];
      std::vector<double> p = softmax_row(row, kk);
      double gv = gr.v[in];
      double* dst = &gl.v[static_cast<std::size_t>(in) * kk];
      for (int i = 0; i < kk; ++i) dst[i] += gv * p[i];
      dst[labs[in]] -= gv;
    }
  });
  return {&g, id};
}

Var ranking_hinge(Var estimates, const std::vector<double>& true_losses,
                  const std::vector<std::pair<int, int>>& pairs, double margin) {
  Graph& g = *estimates.g;
  const Tensor& ev = estimates.val();
  const int m = ev.size();
  if (static_cast<int>(true_losses.size()) != m)
    throw std::invalid_argument("ranking_hinge: loss/estimate length mismatch");
  for (const auto& pr : pairs)
    if (pr.first < 0 || pr.first >= m || pr.second < 0 || pr.second >= m)
      throw std::invalid_argument("ranking_hinge: pair index out of range");
  double total = 0.0;
  for (const auto& pr : pairs) {
    double ind = true_losses[pr.first] > true_losses[pr.second] ? 1.0 : 0.0;
    double z = -ind * (ev.v[pr.first] - ev.v[pr.second]) + margin;
    total += z > 0.0 ? z : 0.0;
  }
  int pe = estimates.id;
  std::vector<double> tl = true_losses;
  std::vector<std::pair<int, int>> prs = pairs;
  int id = g.add(Tensor::scalar(total), g.needs_grad(pe),
                 [pe, tl, prs, margin](Graph& gg, int self) {
    if (!gg.needs_grad(pe)) return;
    double gv = gg.nodes[self].grad.v[0];
    const Tensor& ev2 = gg.val(pe);
    Tensor& ge = gg.grad_buf(pe);
    for (const auto& pr : prs) {
      bool ind = tl[pr.first] > tl[pr.second];
      if (!ind) continue;  // indicator 0: constant term, no gradient
      double z = -(ev2.v[pr.first] - ev2.v[pr.second]) + margin;
      if (z > 0.0) {
        ge.v[pr.first] -= gv;
        ge.v[pr.second] += gv;
      }
    }
  });
  return {&g, id};
}

namespace {
constexpr double kTvEps = 1e-8;
}

Var tv_smooth(Var x) {
  Graph& g = *x.g;
  const Tensor& xv = x.val();
  const int hh = xv.h, ww = xv.w;
  double total = 0.0;
  for (int in = 0; in < xv.n; ++in)
    for (int ic = 0; ic < xv.c; ++ic) {
      const double* p = &xv.v[(static_cast<std::size_t>(in) * xv.c + ic) * hh * ww];
      for (int i = 0; i < hh; ++i)
        for (int j = 0; j < ww; ++j) {
          if (i + 1 >= hh && j + 1 >= ww) continue;
          double dh = (i + 1 < hh) ? p[(i + 1) * ww + j] - p[i * ww + j] : 0.0;
          double dw = (j + 1 < ww) ? p[i * ww + j + 1] - p[i * ww + j] : 0.0;
          total += std::sqrt(dh * dh + dw * dw + kTvEps * kTvEps) - kTvEps;
        }
    }
  int px = x.id;
  int id = g.add(Tensor::scalar(total), g.needs_grad(px),
                 [px](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    double gv = gg.nodes[self].grad.v[0];
    const Tensor& xv2 = gg.val(px);
    Tensor& gx = gg.grad_buf(px);
    const int hh = xv2.h, ww = xv2.w;
    for (int in = 0; in < xv2.n; ++in)
      for (int ic = 0; ic < xv2.c; ++ic) {
        const double* p =
            &xv2.v[(static_cast<std::size_t>(in) * xv2.c + ic) * hh * ww];
        double* dp = &gx.v[(static_cast<std::size_t>(in) * xv2.c + ic) * hh * ww];
        for (int i = 0; i < hh; ++i)
          for (int j = 0; j < ww; ++j) {
            if (i + 1 >= hh && j + 1 >= ww) continue;
            double dh = (i + 1 < hh) ? p[(i + 1) * ww + j] - p[i * ww + j] : 0.0;
            double dw = (j + 1 < ww) ? p[i * ww + j + 1] - p[i * ww + j] : 0.0;
            double r = std::sqrt(dh * dh + dw * dw + kTvEps * kTvEps);
            if (i + 1 < hh) {
              dp[(i + 1) * ww + j] += gv * dh / r;
              dp[i * ww + j] -= gv * dh / r;
            }
            if (j + 1 < ww) {
              dp[i * ww + j + 1] += gv * dw / r;
              dp[i * ww + j] -= gv * dw / r;
            }
          }
      }
  });
  return {&g, id};
}

Var alpha_norm(Var x, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("alpha_norm: alpha must be > 0");
  Graph& g = *x.g;
  const Tensor& xv = x.val();
  const int m = xv.size();
  double s = 0.0;
  for (double e : xv.v) s += std::pow(std::fabs(e), alpha);
  int px = x.id;
  int id = g.add(Tensor::scalar(s / m), g.needs_grad(px),
                 [px, alpha, m](Graph& gg, int self) {
    if (!gg.needs_grad(px)) return;
    double gv = gg.nodes[self].grad.v[0];
    const Tensor& xv2 = gg.val(px);
    Tensor& gx = gg.grad_buf(px);
    for (int k = 0; k < m; ++k) {
      double e = xv2.v[k];
      if (e == 0.0) continue;
      double sgn = e > 0.0 ? 1.0 : -1.0;
      gx.v[k] += gv * alpha * std::pow(std::fabs(e), alpha - 1.0) * sgn / m;
    }
  });
  return {&g, id};
}

}  // namespace preimage

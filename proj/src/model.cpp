#include "preimage/model.hpp"

#include <cmath>
#include <stdexcept>

namespace preimage {

std::string arch_name(ArchKind a) {
  return a == ArchKind::Desk ? "desk" : "resnet18";
}

ArchKind arch_from_name(const std::string& s) {
  if (s == "desk") return ArchKind::Desk;
  if (s == "resnet18") return ArchKind::ResNet18;
  throw std::invalid_argument("unknown architecture: " + s);
}

void ResidualBlock::init(int in_ch, int out_ch, int stride, Rng& rng) {
  conv1.init(in_ch, out_ch, 3, stride, 1, /*bias=*/false, rng);
  bn1.init(out_ch);
  conv2.init(out_ch, out_ch, 3, 1, 1, /*bias=*/false, rng);
  bn2.init(out_ch);
  has_proj = stride != 1 || in_ch != out_ch;
  if (has_proj) {
    proj.init(in_ch, out_ch, 1, stride, 0, /*bias=*/false, rng);
    bn_proj.init(out_ch);
  }
}

Var ResidualBlock::forward(Graph& g, Var x, bool train, bool freeze) {
  Var y = conv1.forward(g, x, freeze);
  y = bn1.forward(g, y, train, freeze);
  y = relu(y);
  y = conv2.forward(g, y, freeze);
  y = bn2.forward(g, y, train, freeze);
  Var sc = x;
  if (has_proj) {
    sc = proj.forward(g, x, freeze);
    sc = bn_proj.forward(g, sc, train, freeze);
  }
  return relu(add(y, sc));
}

void ResidualBlock::collect(const std::string& prefix,
                            std::vector<NamedParam>& ps,
                            std::vector<NamedState>& st) {
  conv1.collect(prefix + ".conv1", ps, st);
  bn1.collect(prefix + ".bn1", ps, st);
  conv2.collect(prefix + ".conv2", ps, st);
  bn2.collect(prefix + ".bn2", ps, st);
  if (has_proj) {
    proj.collect(prefix + ".proj", ps, st);
    bn_proj.collect(prefix + ".bn_proj", ps, st);
  }
}

namespace {

PredictorModel make_model(ArchKind arch, int num_classes, int h, int w,
                          std::array<int, 4> widths, int blocks_per_stage,
                          std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("model: needs >= 2 classes");
  PredictorModel m;
  m.arch = arch;
  m.num_classes = num_classes;
  m.in_h = h;
  m.in_w = w;
  m.in_c = 3;
  m.stage_channels = widths;
  m.norm_mean = Tensor(1, 3, 1, 1, 0.0);
  m.norm_std = Tensor(1, 3, 1, 1, 1.0);
  Rng rng(seed);
  if (arch == ArchKind::Desk) {
    m.stem.init(3, widths[0], 3, 1, 1, /*bias=*/false, rng);
    m.stem_pool = false;
  } else {
    m.stem.init(3, widths[0], 7, 2, 3, /*bias=*/false, rng);
    m.stem_pool = true;
  }
  m.stem_bn.init(widths[0]);
  int in_ch = widths[0];
  for (int s = 0; s < 4; ++s) {
    std::vector<ResidualBlock> blocks(blocks_per_stage);
    for (int b = 0; b < blocks_per_stage; ++b) {
      int stride = (b == 0 && s > 0) ? 2 : 1;
      blocks[b].init(in_ch, widths[s], stride, rng);
      in_ch = widths[s];
    }
    m.stages.push_back(std::move(blocks));
  }
  m.fc.init(widths[3], num_classes, rng);
  return m;
}

}  // namespace

PredictorModel PredictorModel::make_desk(int num_classes, int h, int w,
                                         std::uint64_t seed) {
  return make_model(ArchKind::Desk, num_classes, h, w, {16, 32, 64, 128}, 1, seed);
}

PredictorModel PredictorModel::make_resnet18(int num_classes, std::uint64_t seed) {
  return make_model(ArchKind::ResNet18, num_classes, 224, 224,
                    {64, 128, 256, 512}, 2, seed);
}

void PredictorModel::check_input(const Tensor& images) const {
  if (images.n < 1)
    throw std::invalid_argument("model: empty batch");
  if (images.c != in_c || images.h != in_h || images.w != in_w)
    throw std::invalid_argument("model: input shape " + shape_str(images) +
                                " does not match expected (*, " +
                                std::to_string(in_c) + ", " + std::to_string(in_h) +
                                ", " + std::to_string(in_w) + ")");
}

Var PredictorModel::forward(Graph& g, Var x01, bool train, bool freeze,
                            std::array<Var, 4>* taps, int up_to_stage) {
  check_input(x01.val());
  Tensor sc(1, in_c, 1, 1), sh(1, in_c, 1, 1);
  for (int i = 0; i < in_c; ++i) {
    sc.v[i] = 1.0 / norm_std.v[i];
    sh.v[i] = -norm_mean.v[i] / norm_std.v[i];
  }
  Var x = channel_affine(x01, sc, sh);
  x = stem.forward(g, x, freeze);
  x = stem_bn.forward(g, x, train, freeze);
  x = relu(x);
  if (stem_pool) x = maxpool(x, 3, 2, 1);
  for (int s = 0; s < 4; ++s) {
    for (auto& blk : stages[s]) x = blk.forward(g, x, train, freeze);
    if (taps) (*taps)[s] = x;
    if (up_to_stage == s + 1) return Var{};
  }
  Var pooled = global_avg_pool(x);
  return fc.forward(g, pooled, freeze);
}

ForwardResult PredictorModel::forward_batch(const Tensor& images) {
  check_input(images);
  Graph g;
  Var x = constant(g, images);
  std::array<Var, 4> taps;
  Var logits = forward(g, x, /*train=*/false, /*freeze=*/true, &taps);
  ForwardResult r;
  r.logits = logits.val();
  for (int i = 0; i < 4; ++i) r.taps[i] = taps[i].val();
  if (!all_finite(r.logits) || !all_finite(r.taps[0]) || !all_finite(r.taps[1]) ||
      !all_finite(r.taps[2]) || !all_finite(r.taps[3]))
    throw std::runtime_error("model: non-finite activations in forward pass");
  return r;
}

Tensor PredictorModel::encode(const Tensor& image, int block_index) {
  if (block_index < 1 || block_index > 4)
    throw std::invalid_argument("encode: block_index must be in [1,4]");
  check_input(image);
  Graph g;
  Var x = constant(g, image);
  std::array<Var, 4> taps;
  forward(g, x, /*train=*/false, /*freeze=*/true, &taps, block_index);
  return taps[block_index - 1].val();
}

std::pair<int, std::vector<double>> PredictorModel::predict(const Tensor& image) {
  ForwardResult r = forward_batch(image);
  const int k = num_classes;
  std::vector<double> probs = softmax_row(r.logits.data(), k);
  int best = 0;
  for (int i = 1; i < k; ++i)
    if (probs[i] > probs[best]) best = i;  // lowest index wins ties
  return {best, probs};
}

BlockTaps PredictorModel::taps_for(const Tensor& image) {
  ForwardResult r = forward_batch(image);
  BlockTaps t;
  t.maps = r.taps;
  t.source_shape = {in_h, in_w, in_c};
  return t;
}

std::vector<NamedParam> PredictorModel::named_params() {
  std::vector<NamedParam> ps;
  std::vector<NamedState> st;
  stem.collect("pred.stem", ps, st);
  stem_bn.collect("pred.stem_bn", ps, st);
  for (int s = 0; s < 4; ++s)
    for (std::size_t b = 0; b < stages[s].size(); ++b)
      stages[s][b].collect("pred.stage" + std::to_string(s + 1) + ".block" +
                               std::to_string(b),
                           ps, st);
  fc.collect("pred.fc", ps, st);
  return ps;
}

std::vector<NamedState> PredictorModel::named_state() {
  std::vector<NamedParam> ps;
  std::vector<NamedState> st;
  stem.collect("pred.stem", ps, st);
  stem_bn.collect("pred.stem_bn", ps, st);
  for (int s = 0; s < 4; ++s)
    for (std::size_t b = 0; b < stages[s].size(); ++b)
      stages[s][b].collect("pred.stage" + std::to_string(s + 1) + ".block" +
                               std::to_string(b),
                           ps, st);
  fc.collect("pred.fc", ps, st);
  st.push_back({"pred.norm_mean", &norm_mean});
  st.push_back({"pred.norm_std", &norm_std});
  return st;
}

std::vector<Param*> PredictorModel::trainable_params() {
  std::vector<Param*> out;
  for (auto& np : named_params()) out.push_back(np.p);
  return out;
}

std::vector<double> primary_loss(const Tensor& logits,
                                 const std::vector<int>& labels) {
  const int n = logits.n, k = logits.c * logits.h * logits.w;
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("primary_loss: label count mismatch");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k)
      throw std::invalid_argument("primary_loss: label out of range");
    const double* row = &logits.v[static_cast<std::size_t>(i) * k];
    out[i] = log_sum_exp(row, k) - row[labels[i]];
  }
  return out;
}

}  // namespace preimage

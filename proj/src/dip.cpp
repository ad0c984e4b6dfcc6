#include "preimage/dip.hpp"

#include <stdexcept>
#include <string>

namespace preimage {

DIPGenerator DIPGenerator::make(int h, int w, int c, std::uint64_t seed,
                                const DIPConfig& cfg) {
  if (cfg.depth < 1) throw std::invalid_argument("generator: depth must be >= 1");
  if (static_cast<int>(cfg.channels.size()) != cfg.depth)
    throw std::invalid_argument("generator: channels list must match depth");
  const int factor = 1 << cfg.depth;
  if (h % factor != 0 || w % factor != 0)
    throw std::invalid_argument("generator: spatial dims " + std::to_string(h) +
                                "x" + std::to_string(w) +
                                " not divisible by 2^depth = " +
                                std::to_string(factor));
  DIPGenerator gen;
  gen.cfg = cfg;
  gen.out_h = h;
  gen.out_w = w;
  gen.out_c = c;
  Rng rng(seed);
  gen.z = Tensor(1, cfg.z_channels, h, w);
  for (double& e : gen.z.v) e = rng.uniform(0.0, cfg.z_amplitude);

  gen.levels.resize(cfg.depth);
  int prev = cfg.z_channels;
  for (int i = 0; i < cfg.depth; ++i) {
    Level& lv = gen.levels[i];
    int ch = cfg.channels[i];
    lv.down1.conv.init(prev, ch, 3, 2, 1, /*bias=*/true, rng);
    lv.down1.norm.init(ch);
    lv.down2.conv.init(ch, ch, 3, 1, 1, /*bias=*/true, rng);
    lv.down2.norm.init(ch);
    lv.skip.conv.init(prev, cfg.skip_channels, 1, 1, 0, /*bias=*/true, rng);
    lv.skip.norm.init(cfg.skip_channels);
    prev = ch;
  }
  // decoder, deepest level first
  int carry = cfg.channels[cfg.depth - 1];
  for (int i = cfg.depth - 1; i >= 0; --i) {
    Level& lv = gen.levels[i];
    int out_ch = i >= 1 ? cfg.channels[i - 1] : cfg.channels[0];
    lv.up1.conv.init(carry + cfg.skip_channels, out_ch, 3, 1, 1, /*bias=*/true, rng);
    lv.up1.norm.init(out_ch);
    lv.up2.conv.init(out_ch, out_ch, 3, 1, 1, /*bias=*/true, rng);
    lv.up2.norm.init(out_ch);
    carry = out_ch;
  }
  gen.out_conv.init(carry, c, 1, 1, 0, /*bias=*/true, rng);
  return gen;
}

Var DIPGenerator::forward(Graph& g, Rng* jitter_rng) {
  Tensor input = z;
  if (cfg.jitter_z) {
    if (!jitter_rng)
      throw std::logic_error("generator: jitter enabled but no noise stream given");
    for (double& e : input.v) e += jitter_rng->normal(0.0, cfg.jitter_sd);
  }
  Var x = constant(g, std::move(input));
  const double slope = cfg.leaky_slope;

  auto apply = [&](ConvNorm& cn, Var in) {
    Var y = cn.conv.forward(g, in, /*freeze=*/false);
    y = cn.norm.forward(g, y, /*freeze=*/false);
    return leaky_relu(y, slope);
  };

  std::vector<Var> level_inputs;  // what each level consumed (for skips)
  for (int i = 0; i < cfg.depth; ++i) {
    level_inputs.push_back(x);
    x = apply(levels[i].down1, x);
    x = apply(levels[i].down2, x);
  }
  for (int i = cfg.depth - 1; i >= 0; --i) {
    Var up = upsample_bilinear2x(x);
    Var sk = apply(levels[i].skip, level_inputs[i]);
    x = concat_channels(up, sk);
    x = apply(levels[i].up1, x);
    x = apply(levels[i].up2, x);
  }
  Var out = out_conv.forward(g, x, /*freeze=*/false);
  return sigmoid(out);
}

Tensor DIPGenerator::generate() {
  Graph g;
  Rng jitter(0);
  Var out = forward(g, cfg.jitter_z ? &jitter : nullptr);
  return out.val();
}

std::vector<NamedParam> DIPGenerator::named_params() {
  std::vector<NamedParam> ps;
  std::vector<NamedState> st;
  for (int i = 0; i < cfg.depth; ++i) {
    std::string p = "gen.level" + std::to_string(i + 1);
    levels[i].down1.conv.collect(p + ".down1.conv", ps, st);
    levels[i].down1.norm.collect(p + ".down1.norm", ps, st);
    levels[i].down2.conv.collect(p + ".down2.conv", ps, st);
    levels[i].down2.norm.collect(p + ".down2.norm", ps, st);
    levels[i].skip.conv.collect(p + ".skip.conv", ps, st);
    levels[i].skip.norm.collect(p + ".skip.norm", ps, st);
    levels[i].up1.conv.collect(p + ".up1.conv", ps, st);
    levels[i].up1.norm.collect(p + ".up1.norm", ps, st);
    levels[i].up2.conv.collect(p + ".up2.conv", ps, st);
    levels[i].up2.norm.collect(p + ".up2.norm", ps, st);
  }
  out_conv.collect("gen.out_conv", ps, st);
  return ps;
}

std::vector<Param*> DIPGenerator::trainable_params() {
  std::vector<Param*> out;
  for (auto& np : named_params()) out.push_back(np.p);
  return out;
}

long DIPGenerator::parameter_count() {
  long total = 0;
  for (auto& np : named_params()) total += np.p->value.size();
  return total;
}

}  // namespace preimage

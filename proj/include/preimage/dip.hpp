#pragma once

#include <cstdint>
#include <vector>

#include "preimage/nn.hpp"

namespace preimage {

struct DIPConfig {
  int depth = 4;                            // down levels == up levels
  std::vector<int> channels = {16, 32, 64, 128};
  int z_channels = 32;
  double z_amplitude = 0.1;                 // z ~ U[0, amplitude]
  int skip_channels = 8;
  double leaky_slope = 0.1;
  bool jitter_z = false;                    // per-step additive noise on z
  double jitter_sd = 1.0 / 30.0;
};

// Untrained encoder-decoder generator; the image is reparameterized as
// g(theta; z) with z fixed per run. Downsampling via stride-2 convolutions,
// upsampling via bilinear interpolation, skip connections at every level,
// sigmoid output in [0,1].
struct DIPGenerator {
  DIPConfig cfg;
  int out_h = 0, out_w = 0, out_c = 0;
  Tensor z;  // (1, z_channels, H, W), immutable during a run

  struct ConvNorm {
    Conv2d conv;
    InstanceNorm2d norm;
  };
  struct Level {
    ConvNorm down1, down2;  // down1 strides by 2
    ConvNorm skip;          // 1x1 on the level input
    ConvNorm up1, up2;
  };
  std::vector<Level> levels;
  Conv2d out_conv;

  static DIPGenerator make(int h, int w, int c, std::uint64_t seed,
                           const DIPConfig& cfg = {});

  // jitter_rng is consulted only when cfg.jitter_z is set.
  Var forward(Graph& g, Rng* jitter_rng = nullptr);
  Tensor generate();

  std::vector<NamedParam> named_params();
  std::vector<Param*> trainable_params();
  long parameter_count();
};

}  // namespace preimage

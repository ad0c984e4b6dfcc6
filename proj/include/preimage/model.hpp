#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "preimage/nn.hpp"

namespace preimage {

enum class ArchKind { Desk, ResNet18 };

std::string arch_name(ArchKind);
ArchKind arch_from_name(const std::string&);

// Feature maps tapped at the output of each residual stage for one image,
// shallow to deep (spatial dims non-increasing).
struct BlockTaps {
  std::array<Tensor, 4> maps;
  std::array<int, 3> source_shape;  // (H, W, C)
};

struct ForwardResult {
  Tensor logits;                 // (n, K, 1, 1)
  std::array<Tensor, 4> taps;    // batched stage outputs
};

struct ResidualBlock {
  Conv2d conv1, conv2;
  BatchNorm2d bn1, bn2;
  bool has_proj = false;
  Conv2d proj;
  BatchNorm2d bn_proj;

  void init(int in_ch, int out_ch, int stride, Rng& rng);
  Var forward(Graph& g, Var x, bool train, bool freeze);
  void collect(const std::string& prefix, std::vector<NamedParam>& ps,
               std::vector<NamedState>& st);
};

// Residual convolutional classifier with four sequential stages. Per-channel
// input standardization is part of the model so that encodings are
// reproducible from a checkpoint alone.
struct PredictorModel {
  ArchKind arch = ArchKind::Desk;
  int num_classes = 0;
  int in_h = 0, in_w = 0, in_c = 0;
  std::array<int, 4> stage_channels{};
  Tensor norm_mean, norm_std;  // (1, C, 1, 1)

  Conv2d stem;
  BatchNorm2d stem_bn;
  bool stem_pool = false;  // 3x3/2 maxpool after the stem (ResNet-18)
  std::vector<std::vector<ResidualBlock>> stages;
  Linear fc;

  // Desk-scale default: widths (16,32,64,128), one block per stage, 32x32 inputs.
  static PredictorModel make_desk(int num_classes, int h, int w, std::uint64_t seed);
  // ResNet-18 configuration for 224x224 inputs.
  static PredictorModel make_resnet18(int num_classes, std::uint64_t seed);

  // x01 holds intensities in [0,1]; standardization is applied internally.
  // When taps is non-null all four stage outputs are recorded. Stops early
  // and returns an invalid logits Var when up_to_stage is in [1,4].
  Var forward(Graph& g, Var x01, bool train, bool freeze,
              std::array<Var, 4>* taps, int up_to_stage = 0);

  // Inference helpers (frozen statistics, no gradients kept).
  ForwardResult forward_batch(const Tensor& images);
  Tensor encode(const Tensor& image, int block_index);  // block_index in [1,4]
  std::pair<int, std::vector<double>> predict(const Tensor& image);

  BlockTaps taps_for(const Tensor& image);

  std::vector<NamedParam> named_params();
  std::vector<NamedState> named_state();
  std::vector<Param*> trainable_params();

  void check_input(const Tensor& images) const;
};

// Per-sample softmax cross-entropy; labels are 0-based class indices.
std::vector<double> primary_loss(const Tensor& logits, const std::vector<int>& labels);

}  // namespace preimage

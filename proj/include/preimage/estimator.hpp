#pragma once

#include <array>
#include <utility>
#include <vector>

#include "preimage/model.hpp"
#include "preimage/nn.hpp"

namespace preimage {

enum class PairingScheme { SplitHalf, AllPairs };

std::string pairing_name(PairingScheme);
PairingScheme pairing_from_name(const std::string&);

// SplitHalf pairs element i with i+m in a batch of 2m (requires even n);
// AllPairs enumerates every ordered pair (i, j), i != j.
std::vector<std::pair<int, int>> make_pairs(int n, PairingScheme scheme);

// Pairwise hinge over the configured pairs: for each (i, j),
// max(0, -1[l_i > l_j] * (e_i - e_j) + margin). Plain sum, no normalization.
double ranking_loss(const std::vector<double>& true_losses,
                    const std::vector<double>& estimates, double margin,
                    PairingScheme scheme);

double total_loss(double l_pri, double l_aux, double beta1, double beta2);

// Scalar loss estimate from the predictor's four stage taps. Each tap is
// globally average-pooled, passed through an affine+rectifier transform,
// and the four transformed vectors are fused into a single value.
struct LossEstimatorHead {
  int hidden_dim = 128;
  std::array<int, 4> tap_channels{};
  std::array<Linear, 4> block_fc;
  Linear fuse;
  bool trained = false;
  // Typical estimate level of correctly handled training data (median of
  // training-split estimates). Ranking training fixes only the ordering of
  // estimates, not their offset, so "maximum confidence" must be expressed
  // in the estimator's own units. Serves as the default regularizer target.
  double confident_level = 0.0;

  static LossEstimatorHead make(const std::array<int, 4>& tap_channels,
                                int hidden_dim, std::uint64_t seed);

  // taps are batched stage outputs; returns (n,1,1,1).
  Var forward(Graph& g, const std::array<Var, 4>& taps, bool freeze);

  // Inference on concrete tensors.
  Tensor estimate(const std::array<Tensor, 4>& taps);
  double estimate_one(const BlockTaps& taps);

  std::vector<NamedParam> named_params();
  std::vector<Param*> trainable_params();

  void check_taps(const std::array<int, 4>& channels) const;
};

// Convenience: full-image loss estimate through a predictor.
double estimate_image_loss(const Tensor& image, PredictorModel& model,
                           LossEstimatorHead& head);

}  // namespace preimage

#include "preimage/estimator.hpp"

#include <stdexcept>

namespace preimage {

std::string pairing_name(PairingScheme s) {
  return s == PairingScheme::SplitHalf ? "split_half" : "all_pairs";
}

PairingScheme pairing_from_name(const std::string& s) {
  if (s == "split_half") return PairingScheme::SplitHalf;
  if (s == "all_pairs") return PairingScheme::AllPairs;
  throw std::invalid_argument("unknown pairing scheme: " + s);
}

std::vector<std::pair<int, int>> make_pairs(int n, PairingScheme scheme) {
  std::vector<std::pair<int, int>> pairs;
  if (scheme == PairingScheme::SplitHalf) {
    if (n % 2 != 0)
      throw std::invalid_argument("make_pairs: split-half needs an even batch");
    int m = n / 2;
    pairs.reserve(m);
    for (int i = 0; i < m; ++i) pairs.emplace_back(i, i + m);
  } else {
    pairs.reserve(static_cast<std::size_t>(n) * (n - 1));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) pairs.emplace_back(i, j);
  }
  return pairs;
}

double ranking_loss(const std::vector<double>& true_losses,
                    const std::vector<double>& estimates, double margin,
                    PairingScheme scheme) {
  if (true_losses.size() != estimates.size())
    throw std::invalid_argument("ranking_loss: length mismatch");
  auto pairs = make_pairs(static_cast<int>(true_losses.size()), scheme);
  double total = 0.0;
  for (const auto& pr : pairs) {
    double ind = true_losses[pr.first] > true_losses[pr.second] ? 1.0 : 0.0;
    double z = -ind * (estimates[pr.first] - estimates[pr.second]) + margin;
    total += z > 0.0 ? z : 0.0;
  }
  return total;
}

double total_loss(double l_pri, double l_aux, double beta1, double beta2) {
  return beta1 * l_pri + beta2 * l_aux;
}

LossEstimatorHead LossEstimatorHead::make(const std::array<int, 4>& tap_channels,
                                          int hidden_dim, std::uint64_t seed) {
  LossEstimatorHead h;
  h.hidden_dim = hidden_dim;
  h.tap_channels = tap_channels;
  Rng rng(seed);
  for (int i = 0; i < 4; ++i) h.block_fc[i].init(tap_channels[i], hidden_dim, rng);
  h.fuse.init(4 * hidden_dim, 1, rng);
  return h;
}

void LossEstimatorHead::check_taps(const std::array<int, 4>& channels) const {
  for (int i = 0; i < 4; ++i)
    if (channels[i] != tap_channels[i])
      throw std::invalid_argument(
          "loss estimator: tap " + std::to_string(i + 1) + " has " +
          std::to_string(channels[i]) + " channels, expected " +
          std::to_string(tap_channels[i]));
}

Var LossEstimatorHead::forward(Graph& g, const std::array<Var, 4>& taps,
                               bool freeze) {
  check_taps({taps[0].val().c, taps[1].val().c, taps[2].val().c, taps[3].val().c});
  Var cat;
  for (int i = 0; i < 4; ++i) {
    Var pooled = global_avg_pool(taps[i]);
    Var feat = relu(block_fc[i].forward(g, pooled, freeze));
    cat = i == 0 ? feat : concat_channels(cat, feat);
  }
  return fuse.forward(g, cat, freeze);
}

Tensor LossEstimatorHead::estimate(const std::array<Tensor, 4>& taps) {
  Graph g;
  std::array<Var, 4> tv;
  for (int i = 0; i < 4; ++i) tv[i] = constant(g, taps[i]);
  Var out = forward(g, tv, /*freeze=*/true);
  if (!all_finite(out.val()))
    throw std::runtime_error("loss estimator: non-finite estimate");
  return out.val();
}

double LossEstimatorHead::estimate_one(const BlockTaps& taps) {
  return estimate(taps.maps).v[0];
}

std::vector<NamedParam> LossEstimatorHead::named_params() {
  std::vector<NamedParam> ps;
  std::vector<NamedState> st;
  for (int i = 0; i < 4; ++i)
    block_fc[i].collect("head.block" + std::to_string(i + 1), ps, st);
  fuse.collect("head.fuse", ps, st);
  return ps;
}

std::vector<Param*> LossEstimatorHead::trainable_params() {
  std::vector<Param*> out;
  for (auto& np : named_params()) out.push_back(np.p);
  return out;
}

double estimate_image_loss(const Tensor& image, PredictorModel& model,
                           LossEstimatorHead& head) {
  ForwardResult r = model.forward_batch(image);
  return head.estimate(r.taps).v[0];
}

}  // namespace preimage

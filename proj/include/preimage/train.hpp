#pragma once

#include <cstdint>
#include <vector>

#include "preimage/checkpoint.hpp"
#include "preimage/data.hpp"
#include "preimage/estimator.hpp"

namespace preimage {

struct TrainConfig {
  double beta1 = 1.0;        // primary loss weight
  double beta2 = 0.5;        // auxiliary loss weight
  double margin = 1.0;       // ranking margin
  int batch_size = 32;       // must be even (split-half pairing)
  int epochs = 20;
  double step_size = 1e-3;
  std::uint64_t seed = 0;
  double split_fraction = 0.9;
  PairingScheme pairing = PairingScheme::SplitHalf;
  // Pairs whose true losses differ by no more than this carry no ranking
  // information and are excluded from the auxiliary loss. Without this the
  // hinge keeps separating estimates for near-tied losses once training
  // saturates, and the estimate scale drifts without bound.
  double min_loss_gap = 0.08;
  int hidden_dim = 128;
  ArchKind arch = ArchKind::Desk;
};

struct EpochLog {
  int epoch;            // 1-based
  double l_pri;         // mean primary loss over training batches
  double l_aux;         // mean per-pair auxiliary loss over training batches
  double val_accuracy;
  double val_rank_corr;  // Spearman between estimated and true losses
};

struct TrainResult {
  CheckpointBundle bundle;
  std::vector<EpochLog> log;
};

// Joint optimization of predictor and loss estimator. The split, parameter
// initialization, and batch order all derive from config.seed; identical
// inputs reproduce identical results bit for bit.
TrainResult train_joint(const LabeledDataset& dataset, const TrainConfig& config);

void write_training_log_csv(const std::string& path, const std::vector<EpochLog>& log);

}  // namespace preimage

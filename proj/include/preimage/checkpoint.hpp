#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "preimage/estimator.hpp"
#include "preimage/model.hpp"

namespace preimage {

// Serialized predictor + loss-estimator head + normalization statistics,
// with training metadata. Single binary file, little-endian doubles.
struct CheckpointBundle {
  PredictorModel model;
  LossEstimatorHead head;
  std::map<std::string, std::int64_t> meta_int;
  std::map<std::string, double> meta_double;
  std::map<std::string, std::string> meta_string;
};

constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, CheckpointBundle& bundle);
CheckpointBundle load_checkpoint(const std::string& path);

}  // namespace preimage

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "preimage/dip.hpp"
#include "preimage/estimator.hpp"
#include "preimage/model.hpp"

namespace preimage {

enum class InversionMode {
  DipOnly,         // generator reparameterization, no explicit regularizer
  DipRegularized,  // + loss-estimator regularizer
  Counterfactual,  // + class-steering term
  ExplicitTV,      // direct pixel optimization with total variation
  ExplicitAlpha,   // direct pixel optimization with alpha-norm
};

std::string mode_name(InversionMode);
InversionMode mode_from_name(const std::string&);

struct InversionConfig {
  int block_index = 1;   // encoding stage, in [1,4]
  int iterations = 5000;
  double step_size = 0.01;
  double lambda1 = 0.02;      // loss-estimator regularizer weight
  double lambda2 = 0.1;       // class-steering weight
  // Regularizer target; when unset, the trained estimator's own confident
  // level is used (the estimate offset is a free gauge of ranking training,
  // so a fixed absolute target is not transferable across checkpoints).
  std::optional<double> target_loss;
  int target_class = -1;      // required for counterfactual runs
  InversionMode mode = InversionMode::DipOnly;
  std::optional<double> lambda_explicit;  // defaults: 1e-4 (tv), 1e-6 (alpha)
  double alpha = 6.0;
  std::uint64_t seed = 0;
  DIPConfig dip;

  double resolved_lambda_explicit() const {
    if (lambda_explicit) return *lambda_explicit;
    return mode == InversionMode::ExplicitAlpha ? 1e-6 : 1e-4;
  }
};

struct PreimageResult {
  Tensor preimage;  // (1,C,H,W) in [0,1]
  std::vector<double> objective_trajectory;
  double best_objective = 0.0;
  int best_iteration = 0;
  double final_encoding_distance = 0.0;
  double final_estimated_loss = 0.0;
  int predicted_class = -1;
  std::optional<double> psnr_vs_reference;
  Tensor difference_map;  // (1,1,H,W), counterfactual runs only
};

// Thrown when the objective stops being finite; carries the trajectory
// accumulated so far.
struct numerical_error : std::runtime_error {
  std::vector<double> trajectory;
  numerical_error(const std::string& what, std::vector<double> traj)
      : std::runtime_error(what), trajectory(std::move(traj)) {}
};

// Mean squared difference between two feature maps.
double encoding_distance(const Tensor& a, const Tensor& b);

// (estimated loss - target)^2 through the predictor taps.
double loss_regularizer(const Tensor& image, PredictorModel& model,
                        LossEstimatorHead& head, double target_loss);

double tv_value(const Tensor& image);
double alpha_norm_value(const Tensor& image, double alpha);

// Fits the search parameterization so the recovered image's encoding at
// config.block_index matches target_encoding, plus the mode's regularizers.
// Returns the best-objective iterate.
PreimageResult recover_preimage(const Tensor& target_encoding,
                                const Tensor* reference, PredictorModel& model,
                                LossEstimatorHead& head,
                                const InversionConfig& config);

// Counterfactual synthesis: target encoding is taken from source, and the
// class-steering term drives the prediction toward target_class. The result
// carries the channel-summed absolute difference against source.
PreimageResult generate_counterfactual(const Tensor& source, int target_class,
                                       PredictorModel& model,
                                       LossEstimatorHead& head,
                                       InversionConfig config);

}  // namespace preimage

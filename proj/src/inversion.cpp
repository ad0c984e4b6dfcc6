#include "preimage/inversion.hpp"

#include <cmath>

#include "preimage/data.hpp"
#include "preimage/optim.hpp"

namespace preimage {

std::string mode_name(InversionMode m) {
  switch (m) {
    case InversionMode::DipOnly: return "dip_only";
    case InversionMode::DipRegularized: return "dip_regularized";
    case InversionMode::Counterfactual: return "counterfactual";
    case InversionMode::ExplicitTV: return "explicit_tv";
    case InversionMode::ExplicitAlpha: return "explicit_alpha";
  }
  return "?";
}

InversionMode mode_from_name(const std::string& s) {
  if (s == "dip_only") return InversionMode::DipOnly;
  if (s == "dip_regularized") return InversionMode::DipRegularized;
  if (s == "counterfactual") return InversionMode::Counterfactual;
  if (s == "explicit_tv") return InversionMode::ExplicitTV;
  if (s == "explicit_alpha") return InversionMode::ExplicitAlpha;
  throw std::invalid_argument("unknown inversion mode: " + s);
}

double encoding_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "encoding_distance");
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double d = a.v[i] - b.v[i];
    s += d * d;
  }
  return s / a.size();
}

double loss_regularizer(const Tensor& image, PredictorModel& model,
                        LossEstimatorHead& head, double target_loss) {
  if (!head.trained)
    throw std::logic_error("loss_regularizer: loss estimator has not been trained");
  double lhat = estimate_image_loss(image, model, head);
  double d = lhat - target_loss;
  return d * d;
}

double tv_value(const Tensor& image) {
  Graph g;
  return tv_smooth(constant(g, image)).val().v[0];
}

double alpha_norm_value(const Tensor& image, double alpha) {
  Graph g;
  return alpha_norm(constant(g, image), alpha).val().v[0];
}

namespace {

void validate_config(const InversionConfig& cfg) {
  if (cfg.block_index < 1 || cfg.block_index > 4)
    throw std::invalid_argument("inversion: block_index must be in [1,4]");
  if (cfg.iterations < 1)
    throw std::invalid_argument("inversion: iterations must be >= 1");
  if (cfg.step_size <= 0.0)
    throw std::invalid_argument("inversion: step_size must be > 0");
  if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0)
    throw std::invalid_argument("inversion: lambda weights must be >= 0");
}

PreimageResult run_inversion(const Tensor& target_encoding,
                             const Tensor* reference, PredictorModel& model,
                             LossEstimatorHead& head,
                             const InversionConfig& cfg) {
  validate_config(cfg);
  const int hh = model.in_h, ww = model.in_w, cc = model.in_c;
  {
    Tensor probe(1, cc, hh, ww, 0.0);
    Tensor expect = model.encode(probe, cfg.block_index);
    if (!expect.same_shape(target_encoding))
      throw std::invalid_argument("inversion: target encoding " +
                                  shape_str(target_encoding) +
                                  " incompatible with block " +
                                  std::to_string(cfg.block_index) +
                                  ", expected " + shape_str(expect));
  }
  const bool explicit_mode = cfg.mode == InversionMode::ExplicitTV ||
                             cfg.mode == InversionMode::ExplicitAlpha;
  const bool use_head = (cfg.mode == InversionMode::DipRegularized ||
                         cfg.mode == InversionMode::Counterfactual) &&
                        cfg.lambda1 != 0.0;
  const bool use_steer =
      cfg.mode == InversionMode::Counterfactual && cfg.lambda2 != 0.0;
  if (use_head && !head.trained)
    throw std::logic_error("inversion: loss estimator has not been trained");
  if (cfg.mode == InversionMode::Counterfactual &&
      (cfg.target_class < 0 || cfg.target_class >= model.num_classes))
    throw std::invalid_argument("inversion: target class out of range");
  const double target_loss = cfg.target_loss.value_or(head.confident_level);

  // search parameterization
  DIPGenerator gen;
  Param pixel_logits;  // explicit modes optimize the image directly
  std::vector<Param*> vars;
  if (explicit_mode) {
    pixel_logits = Param(Tensor(1, cc, hh, ww));
    Rng rng(cfg.seed);
    for (double& e : pixel_logits.value.v) e = rng.normal(0.0, 0.5);
    vars = {&pixel_logits};
  } else {
    gen = DIPGenerator::make(hh, ww, cc, cfg.seed, cfg.dip);
    vars = gen.trainable_params();
  }
  Adam opt(vars, cfg.step_size);
  Rng jitter_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  const double lambda_explicit = cfg.resolved_lambda_explicit();
  std::vector<double> trajectory;
  trajectory.reserve(cfg.iterations);
  Tensor best_image;
  double best_obj = 0.0;
  int best_iter = -1;

  for (int t = 0; t < cfg.iterations; ++t) {
    Graph g;
    Var x = explicit_mode
                ? sigmoid(param(g, pixel_logits))
                : gen.forward(g, cfg.dip.jitter_z ? &jitter_rng : nullptr);
    std::array<Var, 4> taps;
    Var logits;
    if (use_steer)
      logits = model.forward(g, x, /*train=*/false, /*freeze=*/true, &taps);
    else if (use_head)
      model.forward(g, x, false, true, &taps, /*up_to_stage=*/4);
    else
      model.forward(g, x, false, true, &taps, cfg.block_index);
    Var target = constant(g, target_encoding);
    Var obj = mse(taps[cfg.block_index - 1], target);
    if (explicit_mode) {
      Var reg = cfg.mode == InversionMode::ExplicitTV ? tv_smooth(x)
                                                      : alpha_norm(x, cfg.alpha);
      obj = add(obj, scale(reg, lambda_explicit));
    }
    if (use_head) {
      Var lhat = head.forward(g, taps, /*freeze=*/true);
      Var m = square(sub_const(lhat, target_loss));
      obj = add(obj, scale(m, cfg.lambda1));
    }
    if (use_steer) {
      Var ce = softmax_cross_entropy(logits, {cfg.target_class});
      obj = add(obj, scale(ce, cfg.lambda2));
    }

    double obj_val = obj.val().v[0];
    if (!std::isfinite(obj_val))
      throw numerical_error("inversion: non-finite objective at iteration " +
                                std::to_string(t),
                            std::move(trajectory));
    trajectory.push_back(obj_val);
    if (best_iter < 0 || obj_val < best_obj) {
      best_obj = obj_val;
      best_iter = t;
      best_image = x.val();
    }
    g.backward(obj.id);
    opt.step();
    opt.zero_grad();
  }

  PreimageResult res;
  res.preimage = std::move(best_image);
  res.objective_trajectory = std::move(trajectory);
  res.best_objective = best_obj;
  res.best_iteration = best_iter;
  Tensor enc = model.encode(res.preimage, cfg.block_index);
  res.final_encoding_distance = encoding_distance(enc, target_encoding);
  res.final_estimated_loss = estimate_image_loss(res.preimage, model, head);
  res.predicted_class = model.predict(res.preimage).first;
  if (reference) res.psnr_vs_reference = psnr(res.preimage, *reference);
  return res;
}

}  // namespace

PreimageResult recover_preimage(const Tensor& target_encoding,
                                const Tensor* reference, PredictorModel& model,
                                LossEstimatorHead& head,
                                const InversionConfig& config) {
  if (config.mode == InversionMode::Counterfactual)
    throw std::invalid_argument(
        "recover_preimage: counterfactual runs go through generate_counterfactual");
  return run_inversion(target_encoding, reference, model, head, config);
}

PreimageResult generate_counterfactual(const Tensor& source, int target_class,
                                       PredictorModel& model,
                                       LossEstimatorHead& head,
                                       InversionConfig config) {
  config.mode = InversionMode::Counterfactual;
  config.target_class = target_class;
  if (target_class < 0 || target_class >= model.num_classes)
    throw std::invalid_argument("counterfactual: target class out of range");
  int current = model.predict(source).first;
  if (current == target_class)
    throw std::invalid_argument(
        "counterfactual: target class equals the current prediction (" +
        std::to_string(current) + ")");
  Tensor target_encoding = model.encode(source, config.block_index);
  PreimageResult res =
      run_inversion(target_encoding, &source, model, head, config);
  res.difference_map = difference_map(res.preimage, source);
  return res;
}

}  // namespace preimage

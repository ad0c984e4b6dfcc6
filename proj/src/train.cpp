#include "preimage/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "preimage/optim.hpp"

namespace preimage {

namespace {

Tensor stack_images(const LabeledDataset& ds, const std::vector<int>& idx,
                    int from, int count) {
  const Tensor& first = ds.images[idx[from]];
  Tensor batch(count, first.c, first.h, first.w);
  const std::size_t stride = static_cast<std::size_t>(first.size());
  for (int b = 0; b < count; ++b) {
    const Tensor& img = ds.images[idx[from + b]];
    std::copy(img.v.begin(), img.v.end(), batch.v.begin() + b * stride);
  }
  return batch;
}

// per-channel mean and standard deviation over a set of images
void compute_norm_stats(const LabeledDataset& ds, const std::vector<int>& idx,
                        Tensor& mean, Tensor& sd) {
  const int cc = ds.images[0].c;
  mean = Tensor(1, cc, 1, 1, 0.0);
  sd = Tensor(1, cc, 1, 1, 0.0);
  double count = 0.0;
  for (int i : idx) {
    const Tensor& img = ds.images[i];
    const int hw = img.h * img.w;
    for (int c = 0; c < cc; ++c) {
      const double* p = &img.v[static_cast<std::size_t>(c) * hw];
      for (int k = 0; k < hw; ++k) mean.v[c] += p[k];
    }
    count += img.h * img.w;
  }
  for (int c = 0; c < cc; ++c) mean.v[c] /= count;
  for (int i : idx) {
    const Tensor& img = ds.images[i];
    const int hw = img.h * img.w;
    for (int c = 0; c < cc; ++c) {
      const double* p = &img.v[static_cast<std::size_t>(c) * hw];
      for (int k = 0; k < hw; ++k) {
        double d = p[k] - mean.v[c];
        sd.v[c] += d * d;
      }
    }
  }
  for (int c = 0; c < cc; ++c)
    sd.v[c] = std::max(std::sqrt(sd.v[c] / count), 1e-6);
}

}  // namespace

TrainResult train_joint(const LabeledDataset& dataset, const TrainConfig& config) {
  if (dataset.size() == 0) throw std::invalid_argument("train: empty dataset");
  {
    std::set<int> distinct(dataset.labels.begin(), dataset.labels.end());
    if (distinct.size() < 2)
      throw std::invalid_argument("train: dataset must contain >= 2 classes");
  }
  if (config.batch_size < 2 || config.batch_size % 2 != 0)
    throw std::invalid_argument("train: batch size must be even and >= 2");
  if (config.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");

  auto [train_set, holdout] =
      stratified_split(dataset, config.split_fraction, config.seed);
  if (train_set.size() < config.batch_size)
    throw std::invalid_argument("train: training split smaller than one batch");

  const int k = dataset.num_classes();
  const int hh = dataset.images[0].h, ww = dataset.images[0].w;

  Rng rng(config.seed);
  std::uint64_t model_seed = rng.next_u64();
  std::uint64_t head_seed = rng.next_u64();
  PredictorModel model = config.arch == ArchKind::Desk
                             ? PredictorModel::make_desk(k, hh, ww, model_seed)
                             : PredictorModel::make_resnet18(k, model_seed);
  LossEstimatorHead head =
      LossEstimatorHead::make(model.stage_channels, config.hidden_dim, head_seed);

  std::vector<int> all_train(train_set.size());
  std::iota(all_train.begin(), all_train.end(), 0);
  compute_norm_stats(train_set, all_train, model.norm_mean, model.norm_std);

  std::vector<Param*> params = model.trainable_params();
  for (Param* p : head.trainable_params()) params.push_back(p);
  Adam opt(params, config.step_size);

  auto evaluate = [&](std::vector<double>* true_losses,
                      std::vector<double>* estimates) {
    int correct = 0;
    const int chunk = 32;
    std::vector<int> idx(holdout.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int from = 0; from < holdout.size(); from += chunk) {
      int count = std::min(chunk, holdout.size() - from);
      Tensor batch = stack_images(holdout, idx, from, count);
      Graph g;
      std::array<Var, 4> taps;
      Var logits = model.forward(g, constant(g, batch), /*train=*/false,
                                 /*freeze=*/true, &taps);
      std::vector<int> labels(holdout.labels.begin() + from,
                              holdout.labels.begin() + from + count);
      std::vector<double> losses = primary_loss(logits.val(), labels);
      Var est = head.forward(g, taps, /*freeze=*/true);
      for (int b = 0; b < count; ++b) {
        const double* row = &logits.val().v[static_cast<std::size_t>(b) * k];
        int arg = 0;
        for (int i = 1; i < k; ++i)
          if (row[i] > row[arg]) arg = i;
        if (arg == labels[b]) ++correct;
        if (true_losses) true_losses->push_back(losses[b]);
        if (estimates) estimates->push_back(est.val().v[b]);
      }
    }
    return static_cast<double>(correct) / holdout.size();
  };

  TrainResult result;
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const int bs = config.batch_size;
  const auto pairs = make_pairs(bs, config.pairing);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_pri = 0.0, epoch_aux = 0.0;
    int batches = 0;
    for (int from = 0; from + bs <= train_set.size(); from += bs) {
      Tensor batch = stack_images(train_set, order, from, bs);
      std::vector<int> labels(bs);
      for (int b = 0; b < bs; ++b) labels[b] = train_set.labels[order[from + b]];

      Graph g;
      std::array<Var, 4> taps;
      Var logits = model.forward(g, constant(g, batch), /*train=*/true,
                                 /*freeze=*/false, &taps);
      Var sample_losses = softmax_cross_entropy(logits, labels);
      Var l_pri = mean_all(sample_losses);
      // ranking targets are the detached per-sample losses; near-ties are
      // dropped from the pairing
      std::vector<double> detached(sample_losses.val().v);
      std::vector<std::pair<int, int>> active;
      for (const auto& pr : pairs)
        if (std::fabs(detached[pr.first] - detached[pr.second]) > config.min_loss_gap)
          active.push_back(pr);
      Var estimates = head.forward(g, taps, /*freeze=*/false);
      Var l_aux = active.empty()
                      ? constant(g, Tensor::scalar(0.0))
                      : scale(ranking_hinge(estimates, detached, active,
                                            config.margin),
                              1.0 / active.size());
      Var total = add(scale(l_pri, config.beta1), scale(l_aux, config.beta2));
      if (!std::isfinite(total.val().v[0]))
        throw std::runtime_error("train: non-finite loss at epoch " +
                                 std::to_string(epoch));
      g.backward(total.id);
      opt.step();
      opt.zero_grad();
      epoch_pri += l_pri.val().v[0];
      epoch_aux += l_aux.val().v[0];
      ++batches;
    }
    std::vector<double> val_losses, val_estimates;
    double acc = evaluate(&val_losses, &val_estimates);
    double corr = spearman_rank_correlation(val_estimates, val_losses);
    result.log.push_back({epoch, epoch_pri / batches, epoch_aux / batches, acc, corr});
  }

  // anchor the regularizer target in the estimator's own units
  {
    std::vector<double> estimates;
    const int chunk = 32;
    for (int from = 0; from < train_set.size(); from += chunk) {
      int count = std::min(chunk, train_set.size() - from);
      Tensor batch = stack_images(train_set, all_train, from, count);
      Graph g;
      std::array<Var, 4> taps;
      model.forward(g, constant(g, batch), /*train=*/false, /*freeze=*/true,
                    &taps, /*up_to_stage=*/4);
      Var est = head.forward(g, taps, /*freeze=*/true);
      for (int b = 0; b < count; ++b) estimates.push_back(est.val().v[b]);
    }
    std::sort(estimates.begin(), estimates.end());
    head.confident_level = estimates[estimates.size() / 2];
  }

  head.trained = true;
  result.bundle.model = std::move(model);
  result.bundle.head = std::move(head);
  result.bundle.meta_int["epochs"] = config.epochs;
  result.bundle.meta_int["seed"] = static_cast<std::int64_t>(config.seed);
  result.bundle.meta_int["batch_size"] = bs;
  result.bundle.meta_double["beta1"] = config.beta1;
  result.bundle.meta_double["beta2"] = config.beta2;
  result.bundle.meta_double["margin"] = config.margin;
  result.bundle.meta_double["step_size"] = config.step_size;
  result.bundle.meta_double["split_fraction"] = config.split_fraction;
  result.bundle.meta_double["confident_level"] = head.confident_level;
  result.bundle.meta_double["final_val_accuracy"] = result.log.back().val_accuracy;
  result.bundle.meta_double["final_val_rank_corr"] = result.log.back().val_rank_corr;
  result.bundle.meta_string["pairing"] = pairing_name(config.pairing);
  return result;
}

void write_training_log_csv(const std::string& path,
                            const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write training log " + path);
  out << "epoch,l_pri,l_aux,val_accuracy,val_rank_correlation\n";
  char buf[256];
  for (const EpochLog& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", e.epoch,
                  e.l_pri, e.l_aux, e.val_accuracy, e.val_rank_corr);
    out << buf;
  }
}

}  // namespace preimage

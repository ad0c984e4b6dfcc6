#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "preimage/checkpoint.hpp"
#include "preimage/data.hpp"
#include "preimage/image_io.hpp"
#include "preimage/inversion.hpp"
#include "preimage/train.hpp"
#include "run_artifacts.hpp"
#include "textplot.hpp"

namespace fs = std::filesystem;
using namespace preimage;
using namespace preimage::cli;

namespace {

struct CommonOpts {
  std::string out;
  std::string run_id;
  std::string config_file;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--out", c.out,
                  "Output root (default: $PREIMAGE_OUTPUT_ROOT or ./runs)");
  cmd->add_option("--run-id", c.run_id,
                  "Run directory name (default: timestamp + seed)");
  cmd->add_option("--config", c.config_file,
                  "Flat key=value config file; flags override file values");
}

// Config-file support: values are applied to the option structs before the
// command line is parsed, so explicit flags always win.
using Setter = std::function<void(const std::string&)>;

std::map<std::string, std::string> read_flat_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = line;
    trimmed.erase(0, trimmed.find_first_not_of(" \t"));
    if (trimmed.empty() || trimmed[0] == '#') continue;
    auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config file " + path + " line " +
                                  std::to_string(lineno) + ": expected key=value");
    auto strip = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    kv[strip(trimmed.substr(0, eq))] = strip(trimmed.substr(eq + 1));
  }
  return kv;
}

// Looks for --config in the raw arguments of one subcommand and applies the
// file through the given setters. Unknown keys are an error.
void apply_config_file(int argc, char** argv,
                       const std::map<std::string, Setter>& setters) {
  std::string path;
  for (int i = 2; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) path = argv[i + 1];
    else if (arg.rfind("--config=", 0) == 0) path = arg.substr(9);
  }
  if (path.empty()) return;
  for (const auto& [key, value] : read_flat_config(path)) {
    auto it = setters.find(key);
    if (it == setters.end())
      throw std::invalid_argument("config file key '" + key +
                                  "' is not an option of this command");
    it->second(value);
  }
}

Setter set_str(std::string& dst) {
  return [&dst](const std::string& v) { dst = v; };
}
Setter set_int(int& dst) {
  return [&dst](const std::string& v) { dst = std::stoi(v); };
}
Setter set_u64(std::uint64_t& dst) {
  return [&dst](const std::string& v) { dst = std::stoull(v); };
}
Setter set_dbl(double& dst) {
  return [&dst](const std::string& v) { dst = std::stod(v); };
}
Setter set_opt_dbl(std::optional<double>& dst) {
  return [&dst](const std::string& v) { dst = std::stod(v); };
}
Setter set_flag(bool& dst) {
  return [&dst](const std::string& v) {
    dst = v == "true" || v == "1" || v == "yes";
  };
}

struct ImageSource {
  Tensor image;                 // clean image at model resolution
  std::optional<Tensor> mask;  // relevance mask when known
  std::string desc;
};

// --image accepts a PPM/PGM path or "synthetic:<index>".
ImageSource resolve_image(const std::string& spec, int data_n,
                          std::uint64_t data_seed, int resolution,
                          const std::string& mask_path) {
  ImageSource src;
  src.desc = spec;
  if (spec.rfind("synthetic:", 0) == 0) {
    int idx = std::stoi(spec.substr(10));
    LabeledDataset ds = make_synthetic_lesions(data_n, data_seed);
    if (idx < 0 || idx >= ds.size())
      throw std::invalid_argument("image index " + std::to_string(idx) +
                                  " out of range for synthetic dataset of " +
                                  std::to_string(ds.size()));
    src.image = resize_area(ds.images[idx], resolution, resolution);
    Tensor m = ds.masks[idx];
    if (m.h != resolution) {
      m = resize_area(m, resolution, resolution);
      for (double& e : m.v) e = e >= 0.5 ? 1.0 : 0.0;
    }
    src.mask = m;
  } else {
    src.image = resize_area(read_image(spec), resolution, resolution);
  }
  if (!mask_path.empty()) {
    Tensor m = read_mask(mask_path);
    if (m.h != resolution) {
      m = resize_area(m, resolution, resolution);
      for (double& e : m.v) e = e >= 0.5 ? 1.0 : 0.0;
    }
    src.mask = m;
  }
  return src;
}

Tensor normalized_difference(const Tensor& diff) {
  Tensor out = diff;
  double mx = 0.0;
  for (double e : out.v) mx = std::max(mx, e);
  if (mx > 0.0)
    for (double& e : out.v) e /= mx;
  return out;
}

// ---------------------------------------------------------------------------

struct TrainOpts {
  CommonOpts common;
  std::string data = "synthetic";
  std::string labels;
  int data_n = 600;
  std::uint64_t data_seed = 11;
  int resolution = 32;
  std::string arch = "desk";
  TrainConfig cfg;
  std::string pairing = "split_half";
};

int cmd_train(const TrainOpts& o) {
  TrainConfig cfg = o.cfg;
  cfg.pairing = pairing_from_name(o.pairing);
  cfg.arch = arch_from_name(o.arch);

  LabeledDataset ds;
  std::string data_desc;
  if (o.data == "synthetic") {
    ds = make_synthetic_lesions(o.data_n, o.data_seed);
    if (o.resolution != 32) {
      for (Tensor& img : ds.images) img = resize_area(img, o.resolution, o.resolution);
      for (Tensor& m : ds.masks) {
        m = resize_area(m, o.resolution, o.resolution);
        for (double& e : m.v) e = e >= 0.5 ? 1.0 : 0.0;
      }
    }
    data_desc = "synthetic(n=" + std::to_string(o.data_n) +
                ",seed=" + std::to_string(o.data_seed) + ")";
  } else {
    std::string labels = o.labels.empty()
                             ? (fs::path(o.data) / "labels.csv").string()
                             : o.labels;
    ds = load_image_folder(o.data, labels, o.resolution);
    data_desc = o.data;
  }

  TrainResult result = train_joint(ds, cfg);
  result.bundle.meta_string["dataset"] = data_desc;

  std::string root = resolve_output_root(o.common.out);
  std::string run_id =
      o.common.run_id.empty() ? default_run_id(cfg.seed) : o.common.run_id;
  fs::path dir = create_run_dir(root, run_id);
  save_checkpoint((dir / "checkpoint.bin").string(), result.bundle);
  write_training_log_csv((dir / "training_log.csv").string(), result.log);
  write_config_echo(dir, {
      {"command", "train"},
      {"data", o.data},
      {"data_n", std::to_string(o.data_n)},
      {"data_seed", std::to_string(o.data_seed)},
      {"resolution", std::to_string(o.resolution)},
      {"arch", o.arch},
      {"epochs", std::to_string(cfg.epochs)},
      {"batch_size", std::to_string(cfg.batch_size)},
      {"step_size", fmt17(cfg.step_size)},
      {"beta1", fmt17(cfg.beta1)},
      {"beta2", fmt17(cfg.beta2)},
      {"margin", fmt17(cfg.margin)},
      {"min_loss_gap", fmt17(cfg.min_loss_gap)},
      {"split_fraction", fmt17(cfg.split_fraction)},
      {"pairing", o.pairing},
      {"hidden_dim", std::to_string(cfg.hidden_dim)},
      {"seed", std::to_string(cfg.seed)},
      {"run_id", run_id},
  });
  const EpochLog& last = result.log.back();
  std::printf("train %s: epochs=%d final_val_accuracy=%.6f final_val_rank_correlation=%.6f\n",
              run_id.c_str(), cfg.epochs, last.val_accuracy, last.val_rank_corr);
  std::printf("checkpoint: %s\n", (dir / "checkpoint.bin").string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct InvertOpts {
  CommonOpts common;
  std::string checkpoint;
  std::string image;
  std::string mask;
  int data_n = 600;
  std::uint64_t data_seed = 11;
  std::string mode = "dip_only";
  std::string corrupt_spec;
  std::uint64_t corrupt_seed = 0;
  InversionConfig cfg;
  double lambda_explicit = -1.0;  // <0 means "mode default"
  bool jitter = false;
};

int cmd_invert(const InvertOpts& o) {
  CheckpointBundle ck = load_checkpoint(o.checkpoint);
  InversionConfig cfg = o.cfg;
  cfg.mode = mode_from_name(o.mode);
  if (cfg.mode == InversionMode::Counterfactual)
    throw std::invalid_argument("use the counterfactual command for counterfactual runs");
  if (o.lambda_explicit >= 0.0) cfg.lambda_explicit = o.lambda_explicit;
  cfg.dip.jitter_z = o.jitter;

  ImageSource src =
      resolve_image(o.image, o.data_n, o.data_seed, ck.model.in_h, o.mask);
  Tensor input = src.image;
  std::optional<CorruptionSpec> corruption;
  if (!o.corrupt_spec.empty()) {
    CorruptionSpec spec = CorruptionSpec::parse(o.corrupt_spec);
    spec.seed = o.corrupt_seed;
    corruption = spec;
    input = corrupt(src.image, spec);
  }
  Tensor target = ck.model.encode(input, cfg.block_index);
  PreimageResult res =
      recover_preimage(target, &src.image, ck.model, ck.head, cfg);

  double input_lhat = estimate_image_loss(input, ck.model, ck.head);
  int input_pred = ck.model.predict(input).first;
  double input_psnr = psnr(input, src.image);

  std::string root = resolve_output_root(o.common.out);
  std::string run_id =
      o.common.run_id.empty() ? default_run_id(cfg.seed) : o.common.run_id;
  fs::path dir = create_run_dir(root, run_id);
  write_ppm((dir / "input.ppm").string(), input);
  write_ppm((dir / "reference.ppm").string(), src.image);
  write_ppm((dir / "preimage.ppm").string(), res.preimage);
  write_trajectory_csv(dir / "trajectory.csv", res.objective_trajectory);
  write_metrics_csv(dir / "metrics.csv", {
      {"run_id", run_id},
      {"command", "invert"},
      {"mode", o.mode},
      {"block", std::to_string(cfg.block_index)},
      {"iterations", std::to_string(cfg.iterations)},
      {"seed", std::to_string(cfg.seed)},
      {"lambda1", fmt17(cfg.lambda1)},
      {"lambda2", ""},
      {"target_class", ""},
      {"pred_before", std::to_string(input_pred)},
      {"pred_after", std::to_string(res.predicted_class)},
      {"flip_success", ""},
      {"corrupt", corruption ? corruption->str() : ""},
      {"best_objective", fmt17(res.best_objective)},
      {"best_iteration", std::to_string(res.best_iteration)},
      {"final_encoding_distance", fmt17(res.final_encoding_distance)},
      {"final_estimated_loss", fmt17(res.final_estimated_loss)},
      {"psnr_vs_reference", fmt17(*res.psnr_vs_reference)},
      {"input_estimated_loss", fmt17(input_lhat)},
      {"input_psnr_vs_reference", fmt17(input_psnr)},
      {"localization_ratio", ""},
  });
  write_config_echo(dir, {
      {"command", "invert"},
      {"checkpoint", o.checkpoint},
      {"image", o.image},
      {"data_n", std::to_string(o.data_n)},
      {"data_seed", std::to_string(o.data_seed)},
      {"mode", o.mode},
      {"block", std::to_string(cfg.block_index)},
      {"iterations", std::to_string(cfg.iterations)},
      {"step_size", fmt17(cfg.step_size)},
      {"lambda1", fmt17(cfg.lambda1)},
      {"target_loss", fmt17(cfg.target_loss.value_or(ck.head.confident_level))},
      {"lambda_explicit", fmt17(cfg.resolved_lambda_explicit())},
      {"alpha", fmt17(cfg.alpha)},
      {"corrupt", corruption ? corruption->str() : "none"},
      {"corrupt_seed", std::to_string(o.corrupt_seed)},
      {"jitter_z", o.jitter ? "true" : "false"},
      {"seed", std::to_string(cfg.seed)},
      {"run_id", run_id},
  });
  std::printf(
      "invert %s: mode=%s psnr=%.3f dB encoding_distance=%.6g estimated_loss=%.6g "
      "predicted_class=%d\n",
      run_id.c_str(), o.mode.c_str(), *res.psnr_vs_reference,
      res.final_encoding_distance, res.final_estimated_loss, res.predicted_class);
  return 0;
}

// ---------------------------------------------------------------------------

struct CounterfactualOpts {
  CommonOpts common;
  std::string checkpoint;
  std::string image;
  std::string mask;
  int data_n = 600;
  std::uint64_t data_seed = 11;
  int target_class = -1;
  InversionConfig cfg;
  bool jitter = false;
};

int cmd_counterfactual(const CounterfactualOpts& o) {
  CheckpointBundle ck = load_checkpoint(o.checkpoint);
  InversionConfig cfg = o.cfg;
  cfg.dip.jitter_z = o.jitter;
  ImageSource src =
      resolve_image(o.image, o.data_n, o.data_seed, ck.model.in_h, o.mask);
  int pred_before = ck.model.predict(src.image).first;
  PreimageResult res =
      generate_counterfactual(src.image, o.target_class, ck.model, ck.head, cfg);
  bool flipped = res.predicted_class == o.target_class;
  std::string loc_ratio;
  if (src.mask) loc_ratio = fmt17(localization_ratio(res.difference_map, *src.mask));

  std::string root = resolve_output_root(o.common.out);
  std::string run_id =
      o.common.run_id.empty() ? default_run_id(cfg.seed) : o.common.run_id;
  fs::path dir = create_run_dir(root, run_id);
  write_ppm((dir / "original.ppm").string(), src.image);
  write_ppm((dir / "counterfactual.ppm").string(), res.preimage);
  write_pgm((dir / "difference.pgm").string(),
            normalized_difference(res.difference_map));
  if (src.mask) write_pgm((dir / "mask.pgm").string(), *src.mask);
  write_trajectory_csv(dir / "trajectory.csv", res.objective_trajectory);
  write_metrics_csv(dir / "metrics.csv", {
      {"run_id", run_id},
      {"command", "counterfactual"},
      {"mode", "counterfactual"},
      {"block", std::to_string(cfg.block_index)},
      {"iterations", std::to_string(cfg.iterations)},
      {"seed", std::to_string(cfg.seed)},
      {"lambda1", fmt17(cfg.lambda1)},
      {"lambda2", fmt17(cfg.lambda2)},
      {"target_class", std::to_string(o.target_class)},
      {"pred_before", std::to_string(pred_before)},
      {"pred_after", std::to_string(res.predicted_class)},
      {"flip_success", flipped ? "1" : "0"},
      {"corrupt", ""},
      {"best_objective", fmt17(res.best_objective)},
      {"best_iteration", std::to_string(res.best_iteration)},
      {"final_encoding_distance", fmt17(res.final_encoding_distance)},
      {"final_estimated_loss", fmt17(res.final_estimated_loss)},
      {"psnr_vs_reference", fmt17(*res.psnr_vs_reference)},
      {"input_estimated_loss", ""},
      {"input_psnr_vs_reference", ""},
      {"localization_ratio", loc_ratio},
  });
  write_config_echo(dir, {
      {"command", "counterfactual"},
      {"checkpoint", o.checkpoint},
      {"image", o.image},
      {"data_n", std::to_string(o.data_n)},
      {"data_seed", std::to_string(o.data_seed)},
      {"target_class", std::to_string(o.target_class)},
      {"block", std::to_string(cfg.block_index)},
      {"iterations", std::to_string(cfg.iterations)},
      {"step_size", fmt17(cfg.step_size)},
      {"lambda1", fmt17(cfg.lambda1)},
      {"lambda2", fmt17(cfg.lambda2)},
      {"target_loss", fmt17(cfg.target_loss.value_or(ck.head.confident_level))},
      {"jitter_z", o.jitter ? "true" : "false"},
      {"seed", std::to_string(cfg.seed)},
      {"run_id", run_id},
  });
  std::printf(
      "counterfactual %s: pred %d -> %d (target %d, %s) psnr=%.3f dB "
      "estimated_loss=%.6g%s\n",
      run_id.c_str(), pred_before, res.predicted_class, o.target_class,
      flipped ? "flipped" : "not flipped", *res.psnr_vs_reference,
      res.final_estimated_loss,
      loc_ratio.empty() ? "" : (" localization_ratio=" + loc_ratio).c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateOpts {
  CommonOpts common;
  std::vector<std::string> runs;
  std::string runs_root;
};

int cmd_evaluate(const EvaluateOpts& o) {
  std::vector<fs::path> run_dirs;
  for (const std::string& r : o.runs) run_dirs.emplace_back(r);
  if (!o.runs_root.empty()) {
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(o.runs_root))
      if (entry.is_directory() && fs::exists(entry.path() / "metrics.csv"))
        found.push_back(entry.path());
    std::sort(found.begin(), found.end());
    run_dirs.insert(run_dirs.end(), found.begin(), found.end());
  }
  if (run_dirs.empty())
    throw std::invalid_argument("evaluate: no runs given (use --runs or --runs-root)");

  const std::vector<std::string> columns = {
      "run_id", "command", "mode", "block", "iterations", "seed", "lambda1",
      "lambda2", "target_class", "pred_before", "pred_after", "flip_success",
      "corrupt", "best_objective", "best_iteration", "final_encoding_distance",
      "final_estimated_loss", "psnr_vs_reference", "input_estimated_loss",
      "input_psnr_vs_reference", "localization_ratio"};
  std::vector<std::map<std::string, std::string>> rows;
  for (const fs::path& dir : run_dirs) {
    fs::path metrics = dir / "metrics.csv";
    if (!fs::exists(metrics))
      throw std::invalid_argument("evaluate: " + dir.string() +
                                  " has no metrics.csv");
    auto parsed = read_csv(metrics);
    if (parsed.empty())
      throw std::invalid_argument("evaluate: empty metrics in " + dir.string());
    rows.push_back(parsed.front());
  }

  std::string root = resolve_output_root(o.common.out);
  std::string run_id =
      o.common.run_id.empty() ? default_run_id(rows.size()) : o.common.run_id;
  fs::path dir = create_run_dir(root, run_id);

  {
    std::ofstream out(dir / "report.csv");
    for (std::size_t i = 0; i < columns.size(); ++i)
      out << columns[i] << (i + 1 < columns.size() ? "," : "\n");
    for (auto& row : rows)
      for (std::size_t i = 0; i < columns.size(); ++i) {
        auto it = row.find(columns[i]);
        out << (it == row.end() ? "" : it->second)
            << (i + 1 < columns.size() ? "," : "\n");
      }
  }

  // per-mode aggregates
  auto mean_of = [&](const std::string& mode, const std::string& col,
                     int* count_out) {
    double s = 0.0;
    int n = 0;
    for (auto& row : rows) {
      if (row.at("mode") != mode) continue;
      auto it = row.find(col);
      if (it == row.end() || it->second.empty()) continue;
      s += std::stod(it->second);
      ++n;
    }
    if (count_out) *count_out = n;
    return n ? s / n : 0.0;
  };
  std::vector<std::string> modes;
  for (auto& row : rows) {
    const std::string& m = row.at("mode");
    if (std::find(modes.begin(), modes.end(), m) == modes.end()) modes.push_back(m);
  }
  {
    std::ofstream out(dir / "summary.csv");
    out << "group,count,mean_final_estimated_loss,mean_psnr_vs_reference,"
           "mean_localization_ratio,flip_rate\n";
    for (const std::string& m : modes) {
      int count = 0;
      for (auto& row : rows)
        if (row.at("mode") == m) ++count;
      double lhat = mean_of(m, "final_estimated_loss", nullptr);
      double db = mean_of(m, "psnr_vs_reference", nullptr);
      int nloc = 0;
      double loc = mean_of(m, "localization_ratio", &nloc);
      int nflip = 0;
      double flip = mean_of(m, "flip_success", &nflip);
      out << m << "," << count << "," << fmt17(lhat) << "," << fmt17(db) << ","
          << (nloc ? fmt17(loc) : "") << "," << (nflip ? fmt17(flip) : "")
          << "\n";
    }
    bool has_plain = std::find(modes.begin(), modes.end(), "dip_only") != modes.end();
    bool has_reg =
        std::find(modes.begin(), modes.end(), "dip_regularized") != modes.end();
    if (has_plain && has_reg) {
      double gap = mean_of("dip_only", "final_estimated_loss", nullptr) -
                   mean_of("dip_regularized", "final_estimated_loss", nullptr);
      out << "lhat_gap_dip_only_minus_dip_regularized,," << fmt17(gap)
          << ",,,\n";
    }
  }

  // one bar per run; pick the most informative metric present
  std::string metric = "final_estimated_loss";
  std::string title = "ESTIMATED LOSS PER RUN";
  for (auto& row : rows)
    if (!row.at("psnr_vs_reference").empty()) {
      metric = "psnr_vs_reference";
      title = "PSNR VS REFERENCE PER RUN";
      break;
    }
  for (auto& row : rows)
    if (!row.at("localization_ratio").empty()) {
      metric = "localization_ratio";
      title = "LOCALIZATION RATIO PER RUN";
      break;
    }
  std::vector<Bar> bars;
  for (auto& row : rows) {
    auto it = row.find(metric);
    if (it == row.end() || it->second.empty()) continue;
    Bar b;
    b.label = row.at("run_id");
    b.value = std::stod(it->second);
    b.color = static_cast<int>(
        std::find(modes.begin(), modes.end(), row.at("mode")) - modes.begin());
    bars.push_back(std::move(b));
  }
  write_ppm((dir / "plot.ppm").string(), render_bar_chart(title, bars));

  std::map<std::string, std::string> echo = {{"command", "evaluate"},
                                             {"run_id", run_id},
                                             {"metric", metric}};
  for (std::size_t i = 0; i < run_dirs.size(); ++i)
    echo["run." + std::to_string(i)] = run_dirs[i].string();
  write_config_echo(dir, echo);
  std::printf("evaluate %s: %zu runs aggregated, metric=%s\n", run_id.c_str(),
              rows.size(), metric.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct MakeDataOpts {
  int n = 600;
  std::uint64_t seed = 11;
  std::string out_dir;
};

int cmd_make_data(const MakeDataOpts& o) {
  if (fs::exists(fs::path(o.out_dir) / "labels.csv"))
    throw std::runtime_error("make-data: " + o.out_dir +
                             " already contains labels.csv; refusing to overwrite");
  LabeledDataset ds = make_synthetic_lesions(o.n, o.seed);
  export_dataset(ds, o.out_dir);
  std::printf("make-data: wrote %d images (3 classes, with masks) to %s\n",
              ds.size(), o.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "preimage: pre-image recovery and counterfactual synthesis for a "
      "residual classifier via an untrained generator prior regularized by a "
      "jointly trained loss estimator"};
  app.require_subcommand(1);

  TrainOpts t;
  CLI::App* train = app.add_subcommand(
      "train", "Jointly train the classifier and the loss estimator");
  train->add_option("--data", t.data, "'synthetic' or an image-folder path");
  train->add_option("--labels", t.labels, "labels csv (default <data>/labels.csv)");
  train->add_option("--data-n", t.data_n, "synthetic dataset size");
  train->add_option("--data-seed", t.data_seed, "synthetic dataset seed");
  train->add_option("--resolution", t.resolution, "input resolution");
  train->add_option("--arch", t.arch, "desk|resnet18");
  train->add_option("--epochs", t.cfg.epochs);
  train->add_option("--batch-size", t.cfg.batch_size, "even batch size");
  train->add_option("--lr", t.cfg.step_size, "optimizer step size");
  train->add_option("--beta1", t.cfg.beta1, "primary loss weight");
  train->add_option("--beta2", t.cfg.beta2, "auxiliary loss weight");
  train->add_option("--margin", t.cfg.margin, "ranking margin");
  train->add_option("--min-loss-gap", t.cfg.min_loss_gap,
                    "smallest true-loss difference that forms a ranking pair");
  train->add_option("--split", t.cfg.split_fraction, "train fraction");
  train->add_option("--hidden-dim", t.cfg.hidden_dim);
  train->add_option("--pairing", t.pairing, "split_half|all_pairs");
  train->add_option("--seed", t.cfg.seed);
  add_common(train, t.common);

  InvertOpts iv;
  CLI::App* invert = app.add_subcommand(
      "invert", "Recover a pre-image from an intermediate encoding");
  invert->add_option("--checkpoint", iv.checkpoint)->required();
  invert->add_option("--image", iv.image, "PPM path or synthetic:<index>")->required();
  invert->add_option("--mask", iv.mask, "optional relevance mask (PGM)");
  invert->add_option("--data-n", iv.data_n);
  invert->add_option("--data-seed", iv.data_seed);
  invert->add_option("--mode", iv.mode,
                     "dip_only|dip_regularized|explicit_tv|explicit_alpha");
  invert->add_option("--block", iv.cfg.block_index, "encoding stage in [1,4]");
  invert->add_option("--iters", iv.cfg.iterations);
  invert->add_option("--lr", iv.cfg.step_size);
  invert->add_option("--lambda1", iv.cfg.lambda1);
  invert->add_option("--target-loss", iv.cfg.target_loss,
                     "regularizer target (default: checkpoint confident level)");
  invert->add_option("--lambda-explicit", iv.lambda_explicit,
                     "weight for explicit regularizer modes");
  invert->add_option("--alpha", iv.cfg.alpha);
  invert->add_option("--corrupt", iv.corrupt_spec,
                     "occlusion:<patch>[:<fill>] or blur:<sigma>");
  invert->add_option("--corrupt-seed", iv.corrupt_seed);
  invert->add_flag("--jitter-z", iv.jitter, "perturb generator input each step");
  invert->add_option("--seed", iv.cfg.seed);
  add_common(invert, iv.common);

  CounterfactualOpts cf;
  CLI::App* counter = app.add_subcommand(
      "counterfactual", "Synthesize an on-manifold counterfactual");
  counter->add_option("--checkpoint", cf.checkpoint)->required();
  counter->add_option("--image", cf.image)->required();
  counter->add_option("--mask", cf.mask);
  counter->add_option("--data-n", cf.data_n);
  counter->add_option("--data-seed", cf.data_seed);
  counter->add_option("--target-class", cf.target_class)->required();
  counter->add_option("--block", cf.cfg.block_index);
  counter->add_option("--iters", cf.cfg.iterations);
  counter->add_option("--lr", cf.cfg.step_size);
  counter->add_option("--lambda1", cf.cfg.lambda1);
  counter->add_option("--lambda2", cf.cfg.lambda2);
  counter->add_option("--target-loss", cf.cfg.target_loss,
                      "regularizer target (default: checkpoint confident level)");
  counter->add_flag("--jitter-z", cf.jitter);
  counter->add_option("--seed", cf.cfg.seed);
  add_common(counter, cf.common);

  EvaluateOpts ev;
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Aggregate metrics across run directories");
  evaluate->add_option("--runs", ev.runs, "run directories");
  evaluate->add_option("--runs-root", ev.runs_root,
                       "directory whose children are runs");
  add_common(evaluate, ev.common);

  MakeDataOpts md;
  CLI::App* makedata = app.add_subcommand(
      "make-data", "Export the synthetic lesion dataset as an image folder");
  makedata->add_option("--n", md.n);
  makedata->add_option("--seed", md.seed);
  makedata->add_option("--out-dir", md.out_dir)->required();

  if (argc > 1) {
    std::string sub = argv[1];
    try {
      if (sub == "train") {
        apply_config_file(argc, argv, {
            {"data", set_str(t.data)}, {"labels", set_str(t.labels)},
            {"data-n", set_int(t.data_n)}, {"data-seed", set_u64(t.data_seed)},
            {"resolution", set_int(t.resolution)}, {"arch", set_str(t.arch)},
            {"epochs", set_int(t.cfg.epochs)},
            {"batch-size", set_int(t.cfg.batch_size)},
            {"lr", set_dbl(t.cfg.step_size)}, {"beta1", set_dbl(t.cfg.beta1)},
            {"beta2", set_dbl(t.cfg.beta2)}, {"margin", set_dbl(t.cfg.margin)},
            {"split", set_dbl(t.cfg.split_fraction)},
            {"hidden-dim", set_int(t.cfg.hidden_dim)},
            {"pairing", set_str(t.pairing)}, {"seed", set_u64(t.cfg.seed)},
            {"out", set_str(t.common.out)}, {"run-id", set_str(t.common.run_id)},
        });
      } else if (sub == "invert") {
        apply_config_file(argc, argv, {
            {"checkpoint", set_str(iv.checkpoint)}, {"image", set_str(iv.image)},
            {"mask", set_str(iv.mask)}, {"data-n", set_int(iv.data_n)},
            {"data-seed", set_u64(iv.data_seed)}, {"mode", set_str(iv.mode)},
            {"block", set_int(iv.cfg.block_index)},
            {"iters", set_int(iv.cfg.iterations)},
            {"lr", set_dbl(iv.cfg.step_size)},
            {"lambda1", set_dbl(iv.cfg.lambda1)},
            {"target-loss", set_opt_dbl(iv.cfg.target_loss)},
            {"lambda-explicit", set_dbl(iv.lambda_explicit)},
            {"alpha", set_dbl(iv.cfg.alpha)},
            {"corrupt", set_str(iv.corrupt_spec)},
            {"corrupt-seed", set_u64(iv.corrupt_seed)},
            {"jitter-z", set_flag(iv.jitter)}, {"seed", set_u64(iv.cfg.seed)},
            {"out", set_str(iv.common.out)}, {"run-id", set_str(iv.common.run_id)},
        });
      } else if (sub == "counterfactual") {
        apply_config_file(argc, argv, {
            {"checkpoint", set_str(cf.checkpoint)}, {"image", set_str(cf.image)},
            {"mask", set_str(cf.mask)}, {"data-n", set_int(cf.data_n)},
            {"data-seed", set_u64(cf.data_seed)},
            {"target-class", set_int(cf.target_class)},
            {"block", set_int(cf.cfg.block_index)},
            {"iters", set_int(cf.cfg.iterations)},
            {"lr", set_dbl(cf.cfg.step_size)},
            {"lambda1", set_dbl(cf.cfg.lambda1)},
            {"lambda2", set_dbl(cf.cfg.lambda2)},
            {"target-loss", set_opt_dbl(cf.cfg.target_loss)},
            {"jitter-z", set_flag(cf.jitter)}, {"seed", set_u64(cf.cfg.seed)},
            {"out", set_str(cf.common.out)}, {"run-id", set_str(cf.common.run_id)},
        });
      } else if (sub == "evaluate") {
        apply_config_file(argc, argv, {
            {"runs-root", set_str(ev.runs_root)},
            {"out", set_str(ev.common.out)}, {"run-id", set_str(ev.common.run_id)},
        });
      }
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(t);
    if (invert->parsed()) return cmd_invert(iv);
    if (counter->parsed()) return cmd_counterfactual(cf);
    if (evaluate->parsed()) return cmd_evaluate(ev);
    if (makedata->parsed()) return cmd_make_data(md);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

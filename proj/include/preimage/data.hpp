#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "preimage/tensor.hpp"

namespace preimage {

struct LabeledDataset {
  std::vector<Tensor> images;           // each (1,3,H,W), values in [0,1]
  std::vector<int> labels;              // 0-based class indices
  std::vector<std::string> class_names; // index -> name
  std::vector<Tensor> masks;            // optional (1,1,H,W) binary, aligned

  int size() const { return static_cast<int>(images.size()); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
  bool has_masks() const { return !masks.empty(); }
};

// 32x32x3 textured backgrounds with one elliptical lesion each. Three
// classes keyed to lesion geometry and shade: small_dark, large_dark,
// large_light. Relevance masks mark lesion pixels.
LabeledDataset make_synthetic_lesions(int n, std::uint64_t seed);

// Seeded per-class split; per-class proportions preserved to within one
// sample. Both halves keep the original item order.
std::pair<LabeledDataset, LabeledDataset> stratified_split(
    const LabeledDataset& ds, double fraction, std::uint64_t seed);

struct CorruptionSpec {
  enum class Kind { Occlusion, Blur };
  Kind kind = Kind::Occlusion;
  int patch_size = 8;        // occlusion
  double fill_value = 0.5;   // occlusion
  double sigma = 1.0;        // blur
  std::uint64_t seed = 0;

  static CorruptionSpec parse(const std::string& text);  // "occlusion:8:0.5" / "blur:1.5"
  std::string str() const;
};

Tensor corrupt(const Tensor& image, const CorruptionSpec& spec);

// 10*log10(1/MSE) with peak 1.0, capped at 100 dB for MSE < 1e-10.
double psnr(const Tensor& a, const Tensor& b);

// Fraction of difference mass inside the mask. difference_map and mask are
// (1,1,H,W); mask is binary.
double localization_ratio(const Tensor& difference_map, const Tensor& mask);

// Spearman correlation with average ranks on ties; 0 for degenerate input.
double spearman_rank_correlation(const std::vector<double>& a,
                                 const std::vector<double>& b);

// Channel-summed absolute difference, (1,1,H,W).
Tensor difference_map(const Tensor& a, const Tensor& b);

// Area-averaging resample to (oh, ow). Identity when sizes already match.
Tensor resize_area(const Tensor& image, int oh, int ow);

// Image-folder ingestion: labels_csv has header "filename,label"; filenames
// are relative to root. Class indices follow sorted distinct label names.
// Masks are picked up from <root>/masks/<stem>.pgm when present for all files.
LabeledDataset load_image_folder(const std::string& root,
                                 const std::string& labels_csv, int resolution);

// Writes images/, optional masks/, and labels.csv in the layout
// load_image_folder expects.
void export_dataset(const LabeledDataset& ds, const std::string& dir);

}  // namespace preimage

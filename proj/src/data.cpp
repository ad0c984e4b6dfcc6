#include "preimage/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "preimage/image_io.hpp"
#include "preimage/rng.hpp"

namespace fs = std::filesystem;

namespace preimage {

// ---------------------------------------------------------------------------
// synthetic lesions

namespace {

constexpr int kSynthRes = 32;
constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Wave {
  double dx, dy, freq, phase, amp;
  double chan_w[3];
};

}  // namespace

LabeledDataset make_synthetic_lesions(int n, std::uint64_t seed) {
  const int k = 3;
  if (n < 2 * k)
    throw std::invalid_argument("make_synthetic_lesions: need at least " +
                                std::to_string(2 * k) + " samples");
  LabeledDataset ds;
  ds.class_names = {"small_dark", "large_dark", "large_light"};
  Rng rng(seed);
  const int hh = kSynthRes, ww = kSynthRes;
  for (int item = 0; item < n; ++item) {
    int label = item % k;
    double base[3] = {0.80 + rng.uniform(-0.03, 0.03),
                      0.62 + rng.uniform(-0.03, 0.03),
                      0.55 + rng.uniform(-0.03, 0.03)};
    Wave waves[3];
    for (Wave& wv : waves) {
      double theta = rng.uniform(0.0, kTwoPi);
      wv.dx = std::cos(theta);
      wv.dy = std::sin(theta);
      wv.freq = rng.uniform(0.05, 0.30);
      wv.phase = rng.uniform(0.0, kTwoPi);
      wv.amp = rng.uniform(0.01, 0.04);
      for (double& cw : wv.chan_w) cw = rng.uniform(0.5, 1.0);
    }
    // class rule: radius separates small from large, shade separates the
    // two large classes. The radius ranges abut so borderline lesions are
    // genuinely ambiguous and per-sample losses keep a realistic spread.
    double radius = label == 0 ? rng.uniform(2.8, 5.4) : rng.uniform(5.6, 9.5);
    bool light = label == 2;
    double ecc = rng.uniform(1.0, 1.3);
    double rot = rng.uniform(0.0, kTwoPi / 2.0);
    double margin = radius * ecc + 2.0;
    double cx = rng.uniform(margin, ww - 1 - margin);
    double cy = rng.uniform(margin, hh - 1 - margin);
    double col[3];
    if (light) {
      col[0] = 0.66 + rng.uniform(-0.03, 0.03);
      col[1] = 0.47 + rng.uniform(-0.03, 0.03);
      col[2] = 0.40 + rng.uniform(-0.03, 0.03);
    } else {
      col[0] = 0.30 + rng.uniform(-0.03, 0.03);
      col[1] = 0.17 + rng.uniform(-0.03, 0.03);
      col[2] = 0.13 + rng.uniform(-0.03, 0.03);
    }
    double a = radius * ecc, b = radius / ecc;
    double cr = std::cos(rot), sr = std::sin(rot);

    Tensor img(1, 3, hh, ww);
    Tensor mask(1, 1, hh, ww, 0.0);
    for (int i = 0; i < hh; ++i)
      for (int j = 0; j < ww; ++j) {
        double px = j - cx, py = i - cy;
        double u = (px * cr + py * sr) / a;
        double v = (-px * sr + py * cr) / b;
        double d = std::sqrt(u * u + v * v);
        double alpha = std::clamp((1.05 - d) / 0.15, 0.0, 1.0);
        if (d <= 1.0) mask.at(0, 0, i, j) = 1.0;
        for (int c = 0; c < 3; ++c) {
          double bg = base[c];
          for (const Wave& wv : waves)
            bg += wv.amp * wv.chan_w[c] *
                  std::cos(wv.freq * (j * wv.dx + i * wv.dy) + wv.phase);
          double shade = col[c] * (1.0 - 0.12 * (1.0 - std::min(d, 1.0)));
          double val = bg * (1.0 - alpha) + shade * alpha;
          val += rng.uniform(-0.015, 0.015);
          img.at(0, c, i, j) = std::clamp(val, 0.0, 1.0);
        }
      }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
    ds.masks.push_back(std::move(mask));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// splits

std::pair<LabeledDataset, LabeledDataset> stratified_split(
    const LabeledDataset& ds, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw std::invalid_argument("stratified_split: fraction must be in (0,1)");
  const int k = ds.num_classes();
  std::vector<std::vector<int>> by_class(k);
  for (int i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] < 0 || ds.labels[i] >= k)
      throw std::invalid_argument("stratified_split: label out of range");
    by_class[ds.labels[i]].push_back(i);
  }
  Rng rng(seed);
  std::vector<char> in_first(ds.size(), 0);
  for (int c = 0; c < k; ++c) {
    auto& idx = by_class[c];
    if (idx.size() < 2)
      throw std::invalid_argument("stratified_split: class " +
                                  ds.class_names[c] + " has fewer than 2 samples");
    rng.shuffle(idx);
    int take = static_cast<int>(std::llround(fraction * idx.size()));
    take = std::clamp(take, 1, static_cast<int>(idx.size()) - 1);
    for (int t = 0; t < take; ++t) in_first[idx[t]] = 1;
  }
  LabeledDataset first, second;
  first.class_names = ds.class_names;
  second.class_names = ds.class_names;
  for (int i = 0; i < ds.size(); ++i) {
    LabeledDataset& dst = in_first[i] ? first : second;
    dst.images.push_back(ds.images[i]);
    dst.labels.push_back(ds.labels[i]);
    if (ds.has_masks()) dst.masks.push_back(ds.masks[i]);
  }
  return {std::move(first), std::move(second)};
}

// ---------------------------------------------------------------------------
// corruptions

CorruptionSpec CorruptionSpec::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ':')) parts.push_back(tok);
  if (parts.empty()) throw std::invalid_argument("corruption: empty spec");
  CorruptionSpec spec;
  try {
    if (parts[0] == "occlusion") {
      spec.kind = Kind::Occlusion;
      if (parts.size() > 1) spec.patch_size = std::stoi(parts[1]);
      if (parts.size() > 2) spec.fill_value = std::stod(parts[2]);
      if (parts.size() > 3) throw std::invalid_argument("");
    } else if (parts[0] == "blur") {
      spec.kind = Kind::Blur;
      if (parts.size() > 1) spec.sigma = std::stod(parts[1]);
      if (parts.size() > 2) throw std::invalid_argument("");
    } else {
      throw std::invalid_argument("");
    }
  } catch (const std::exception&) {
    throw std::invalid_argument(
        "corruption: expected occlusion:<patch>[:<fill>] or blur:<sigma>, got '" +
        text + "'");
  }
  if (spec.fill_value < 0.0 || spec.fill_value > 1.0)
    throw std::invalid_argument("corruption: fill value must be in [0,1]");
  if (spec.sigma < 0.0 || !std::isfinite(spec.sigma))
    throw std::invalid_argument("corruption: sigma must be finite and >= 0");
  return spec;
}

std::string CorruptionSpec::str() const {
  std::ostringstream os;
  if (kind == Kind::Occlusion)
    os << "occlusion:" << patch_size << ":" << fill_value;
  else
    os << "blur:" << sigma;
  return os.str();
}

namespace {

// mirror index without repeating the edge sample
int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

Tensor gaussian_blur(const Tensor& img, double sigma) {
  if (sigma == 0.0) return img;
  int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kern(2 * r + 1);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) {
    kern[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    s += kern[i + r];
  }
  for (double& e : kern) e /= s;
  Tensor tmp = img, out = img;
  const int hh = img.h, ww = img.w;
  for (int c = 0; c < img.c; ++c) {
    for (int i = 0; i < hh; ++i)
      for (int j = 0; j < ww; ++j) {
        double acc = 0.0;
        for (int t = -r; t <= r; ++t)
          acc += kern[t + r] * img.at(0, c, i, reflect(j + t, ww));
        tmp.at(0, c, i, j) = acc;
      }
    for (int i = 0; i < hh; ++i)
      for (int j = 0; j < ww; ++j) {
        double acc = 0.0;
        for (int t = -r; t <= r; ++t)
          acc += kern[t + r] * tmp.at(0, c, reflect(i + t, hh), j);
        out.at(0, c, i, j) = acc;
      }
  }
  return out;
}

}  // namespace

Tensor corrupt(const Tensor& image, const CorruptionSpec& spec) {
  if (image.n != 1) throw std::invalid_argument("corrupt: expected single image");
  if (spec.kind == CorruptionSpec::Kind::Blur) {
    if (spec.sigma < 0.0 || !std::isfinite(spec.sigma))
      throw std::invalid_argument("corrupt: sigma must be finite and >= 0");
    return gaussian_blur(image, spec.sigma);
  }
  const int p = spec.patch_size;
  if (p == 0) return image;
  if (p < 0 || p > std::min(image.h, image.w))
    throw std::invalid_argument("corrupt: patch size " + std::to_string(p) +
                                " exceeds image size");
  Rng rng(spec.seed);
  int top = rng.uniform_int(image.h - p + 1);
  int left = rng.uniform_int(image.w - p + 1);
  Tensor out = image;
  for (int c = 0; c < image.c; ++c)
    for (int i = top; i < top + p; ++i)
      for (int j = left; j < left + p; ++j)
        out.at(0, c, i, j) = spec.fill_value;
  return out;
}

// ---------------------------------------------------------------------------
// metrics

double psnr(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "psnr");
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double d = a.v[i] - b.v[i];
    s += d * d;
  }
  double mse = s / a.size();
  if (mse < 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / mse);
}

double localization_ratio(const Tensor& difference_map, const Tensor& mask) {
  require_same_shape(difference_map, mask, "localization_ratio");
  double inside = 0.0, total = 0.0;
  for (int i = 0; i < difference_map.size(); ++i) {
    double d = difference_map.v[i];
    if (d < 0.0)
      throw std::invalid_argument("localization_ratio: negative difference mass");
    double m = mask.v[i];
    if (m != 0.0 && m != 1.0)
      throw std::invalid_argument("localization_ratio: mask is not binary");
    total += d;
    inside += d * m;
  }
  if (total <= 0.0)
    throw std::domain_error("localization_ratio: all-zero difference map");
  return inside / total;
}

double spearman_rank_correlation(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("spearman: length mismatch");
  const int n = static_cast<int>(a.size());
  if (n < 2) return 0.0;
  auto ranks = [](const std::vector<double>& xs) {
    const int m = static_cast<int>(xs.size());
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&xs](int i, int j) { return xs[i] < xs[j]; });
    std::vector<double> r(m);
    int i = 0;
    while (i < m) {
      int j = i;
      while (j + 1 < m && xs[idx[j + 1]] == xs[idx[i]]) ++j;
      double avg = 0.5 * (i + j) + 1.0;  // average rank for the tie run
      for (int t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> ra = ranks(a), rb = ranks(b);
  double ma = 0.0, mb = 0.0;
  for (int i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, va = 0.0, vb = 0.0;
  for (int i = 0; i < n; ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return num / std::sqrt(va * vb);
}

Tensor difference_map(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "difference_map");
  Tensor out(1, 1, a.h, a.w, 0.0);
  for (int c = 0; c < a.c; ++c)
    for (int i = 0; i < a.h; ++i)
      for (int j = 0; j < a.w; ++j)
        out.at(0, 0, i, j) += std::fabs(a.at(0, c, i, j) - b.at(0, c, i, j));
  return out;
}

// ---------------------------------------------------------------------------
// resize

Tensor resize_area(const Tensor& image, int oh, int ow) {
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("resize_area: bad target size");
  if (image.h == oh && image.w == ow) return image;
  Tensor out(image.n, image.c, oh, ow);
  const double sy = static_cast<double>(image.h) / oh;
  const double sx = static_cast<double>(image.w) / ow;
  for (int n = 0; n < image.n; ++n)
    for (int c = 0; c < image.c; ++c)
      for (int i = 0; i < oh; ++i) {
        double y0 = i * sy, y1 = (i + 1) * sy;
        int iy0 = static_cast<int>(std::floor(y0));
        int iy1 = std::min(static_cast<int>(std::ceil(y1)), image.h);
        for (int j = 0; j < ow; ++j) {
          double x0 = j * sx, x1 = (j + 1) * sx;
          int ix0 = static_cast<int>(std::floor(x0));
          int ix1 = std::min(static_cast<int>(std::ceil(x1)), image.w);
          double acc = 0.0, area = 0.0;
          for (int y = iy0; y < iy1; ++y) {
            double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
            for (int x = ix0; x < ix1; ++x) {
              double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
              acc += wy * wx * image.at(n, c, y, x);
              area += wy * wx;
            }
          }
          out.at(n, c, i, j) = acc / area;
        }
      }
  return out;
}

// ---------------------------------------------------------------------------
// folder ingestion / export

LabeledDataset load_image_folder(const std::string& root,
                                 const std::string& labels_csv, int resolution) {
  std::ifstream in(labels_csv);
  if (!in)
    throw std::invalid_argument("load_image_folder: cannot open labels file " +
                                labels_csv);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("load_image_folder: empty labels file");
  // tolerate CRLF
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "filename,label")
    throw std::invalid_argument(
        "load_image_folder: labels file must start with 'filename,label'");
  std::vector<std::pair<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == line.size())
      throw std::invalid_argument("load_image_folder: malformed row: " + line);
    rows.emplace_back(line.substr(0, comma), line.substr(comma + 1));
  }
  if (rows.empty())
    throw std::invalid_argument("load_image_folder: no entries in labels file");
  std::sort(rows.begin(), rows.end());

  std::vector<std::string> missing;
  for (const auto& [fname, label] : rows)
    if (!fs::exists(fs::path(root) / fname)) missing.push_back(fname);
  if (!missing.empty()) {
    std::string msg = "load_image_folder: missing files:";
    for (const auto& f : missing) msg += " " + f;
    throw std::invalid_argument(msg);
  }

  std::set<std::string> names;
  for (const auto& [fname, label] : rows) names.insert(label);
  LabeledDataset ds;
  ds.class_names.assign(names.begin(), names.end());
  std::map<std::string, int> name_to_idx;
  for (int i = 0; i < ds.num_classes(); ++i) name_to_idx[ds.class_names[i]] = i;

  bool all_masks = true;
  std::vector<Tensor> masks;
  for (const auto& [fname, label] : rows) {
    fs::path p = fs::path(root) / fname;
    Tensor img = read_image(p.string());
    img = resize_area(img, resolution, resolution);
    ds.images.push_back(std::move(img));
    ds.labels.push_back(name_to_idx[label]);
    fs::path mask_path = fs::path(root) / "masks" / (p.stem().string() + ".pgm");
    if (all_masks && fs::exists(mask_path)) {
      Tensor m = read_mask(mask_path.string());
      if (m.h != resolution || m.w != resolution) {
        m = resize_area(m, resolution, resolution);
        for (double& e : m.v) e = e >= 0.5 ? 1.0 : 0.0;
      }
      masks.push_back(std::move(m));
    } else {
      all_masks = false;
    }
  }
  if (all_masks) ds.masks = std::move(masks);
  return ds;
}

void export_dataset(const LabeledDataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  if (ds.has_masks()) fs::create_directories(fs::path(dir) / "masks");
  std::ofstream labels((fs::path(dir) / "labels.csv").string());
  if (!labels) throw std::runtime_error("export_dataset: cannot write labels.csv");
  labels << "filename,label\n";
  char buf[32];
  for (int i = 0; i < ds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%05d", i);
    std::string stem = buf;
    write_ppm((fs::path(dir) / "images" / (stem + ".ppm")).string(), ds.images[i]);
    if (ds.has_masks())
      write_pgm((fs::path(dir) / "masks" / (stem + ".pgm")).string(), ds.masks[i]);
    labels << "images/" << stem << ".ppm," << ds.class_names[ds.labels[i]] << "\n";
  }
}

}  // namespace preimage

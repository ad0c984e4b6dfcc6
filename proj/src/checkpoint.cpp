#include "preimage/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace preimage {

namespace {

constexpr char kMagic[8] = {'P', 'R', 'E', 'I', 'M', 'C', 'K', '1'};

void write_u32(std::ostream& out, std::uint32_t x) {
  out.write(reinterpret_cast<const char*>(&x), sizeof(x));
}
void write_i64(std::ostream& out, std::int64_t x) {
  out.write(reinterpret_cast<const char*>(&x), sizeof(x));
}
void write_f64(std::ostream& out, double x) {
  out.write(reinterpret_cast<const char*>(&x), sizeof(x));
}
void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  write_str(out, name);
  write_u32(out, static_cast<std::uint32_t>(t.n));
  write_u32(out, static_cast<std::uint32_t>(t.c));
  write_u32(out, static_cast<std::uint32_t>(t.h));
  write_u32(out, static_cast<std::uint32_t>(t.w));
  out.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t x;
  in.read(reinterpret_cast<char*>(&x), sizeof(x));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return x;
}
std::int64_t read_i64(std::istream& in) {
  std::int64_t x;
  in.read(reinterpret_cast<char*>(&x), sizeof(x));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return x;
}
double read_f64(std::istream& in) {
  double x;
  in.read(reinterpret_cast<char*>(&x), sizeof(x));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return x;
}
std::string read_str(std::istream& in) {
  std::uint32_t len = read_u32(in);
  if (len > (1u << 20)) throw std::runtime_error("checkpoint: corrupt string length");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}
Tensor read_tensor(std::istream& in) {
  int n = static_cast<int>(read_u32(in));
  int c = static_cast<int>(read_u32(in));
  int h = static_cast<int>(read_u32(in));
  int w = static_cast<int>(read_u32(in));
  Tensor t(n, c, h, w);
  in.read(reinterpret_cast<char*>(t.v.data()),
          static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, CheckpointBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kCheckpointVersion);

  auto meta_int = bundle.meta_int;
  meta_int["num_classes"] = bundle.model.num_classes;
  meta_int["input_h"] = bundle.model.in_h;
  meta_int["input_w"] = bundle.model.in_w;
  meta_int["input_c"] = bundle.model.in_c;
  meta_int["hidden_dim"] = bundle.head.hidden_dim;
  for (int i = 0; i < 4; ++i)
    meta_int["stage_channels" + std::to_string(i + 1)] =
        bundle.model.stage_channels[i];
  auto meta_double = bundle.meta_double;
  meta_double["head.confident_level"] = bundle.head.confident_level;
  auto meta_string = bundle.meta_string;
  meta_string["arch"] = arch_name(bundle.model.arch);

  write_u32(out, static_cast<std::uint32_t>(meta_int.size()));
  for (const auto& [k, v] : meta_int) {
    write_str(out, k);
    write_i64(out, v);
  }
  write_u32(out, static_cast<std::uint32_t>(meta_double.size()));
  for (const auto& [k, v] : meta_double) {
    write_str(out, k);
    write_f64(out, v);
  }
  write_u32(out, static_cast<std::uint32_t>(meta_string.size()));
  for (const auto& [k, v] : meta_string) {
    write_str(out, k);
    write_str(out, v);
  }

  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (auto& np : bundle.model.named_params()) tensors.emplace_back(np.name, &np.p->value);
  for (auto& ns : bundle.model.named_state()) tensors.emplace_back(ns.name, ns.t);
  for (auto& np : bundle.head.named_params()) tensors.emplace_back(np.name, &np.p->value);
  write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) write_tensor(out, name, *t);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

CheckpointBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
  std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version));

  CheckpointBundle b;
  std::uint32_t n_int = read_u32(in);
  for (std::uint32_t i = 0; i < n_int; ++i) {
    std::string k = read_str(in);
    b.meta_int[k] = read_i64(in);
  }
  std::uint32_t n_dbl = read_u32(in);
  for (std::uint32_t i = 0; i < n_dbl; ++i) {
    std::string k = read_str(in);
    b.meta_double[k] = read_f64(in);
  }
  std::uint32_t n_str = read_u32(in);
  for (std::uint32_t i = 0; i < n_str; ++i) {
    std::string k = read_str(in);
    b.meta_string[k] = read_str(in);
  }

  ArchKind arch = arch_from_name(b.meta_string.at("arch"));
  int num_classes = static_cast<int>(b.meta_int.at("num_classes"));
  int in_h = static_cast<int>(b.meta_int.at("input_h"));
  int in_w = static_cast<int>(b.meta_int.at("input_w"));
  int hidden = static_cast<int>(b.meta_int.at("hidden_dim"));
  b.model = arch == ArchKind::Desk
                ? PredictorModel::make_desk(num_classes, in_h, in_w, 0)
                : PredictorModel::make_resnet18(num_classes, 0);
  b.head = LossEstimatorHead::make(b.model.stage_channels, hidden, 0);
  b.head.trained = true;
  if (auto it = b.meta_double.find("head.confident_level"); it != b.meta_double.end())
    b.head.confident_level = it->second;

  std::map<std::string, Tensor*> slots;
  for (auto& np : b.model.named_params()) slots[np.name] = &np.p->value;
  for (auto& ns : b.model.named_state()) slots[ns.name] = ns.t;
  for (auto& np : b.head.named_params()) slots[np.name] = &np.p->value;

  std::uint32_t n_tensors = read_u32(in);
  std::size_t filled = 0;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = read_str(in);
    Tensor t = read_tensor(in);
    auto it = slots.find(name);
    if (it == slots.end())
      throw std::runtime_error("checkpoint: unknown tensor '" + name + "'");
    if (!it->second->same_shape(t))
      throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                               shape_str(t) + ", expected " + shape_str(*it->second));
    *it->second = std::move(t);
    ++filled;
  }
  if (filled != slots.size())
    throw std::runtime_error("checkpoint: file is missing tensors (" +
                             std::to_string(filled) + " of " +
                             std::to_string(slots.size()) + ")");
  return b;
}

}  // namespace preimage

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "preimage/checkpoint.hpp"
#include "preimage/data.hpp"

using namespace preimage;
namespace fs = std::filesystem;

namespace {

CheckpointBundle make_bundle() {
  CheckpointBundle b;
  b.model = PredictorModel::make_desk(3, 32, 32, 77);
  b.model.norm_mean.v = {0.6, 0.5, 0.4};
  b.model.norm_std.v = {0.21, 0.22, 0.23};
  b.head = LossEstimatorHead::make(b.model.stage_channels, 32, 78);
  b.head.trained = true;
  b.meta_int["epochs"] = 20;
  b.meta_double["final_val_accuracy"] = 0.93;
  b.meta_string["dataset"] = "synthetic";
  return b;
}

fs::path temp_file(const char* name) {
  fs::path dir = fs::temp_directory_path() / "preimage_ckpt_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("checkpoint roundtrip is bit-exact") {
  CheckpointBundle b = make_bundle();
  fs::path p = temp_file("roundtrip.bin");
  save_checkpoint(p.string(), b);
  CheckpointBundle r = load_checkpoint(p.string());

  CHECK(r.model.arch == ArchKind::Desk);
  CHECK(r.model.num_classes == 3);
  CHECK(r.model.stage_channels == b.model.stage_channels);
  CHECK(r.model.norm_mean.v == b.model.norm_mean.v);
  CHECK(r.model.norm_std.v == b.model.norm_std.v);
  CHECK(r.head.hidden_dim == 32);
  CHECK(r.head.trained);
  CHECK(r.meta_int.at("epochs") == 20);
  CHECK(r.meta_double.at("final_val_accuracy") == 0.93);
  CHECK(r.meta_string.at("dataset") == "synthetic");

  auto pa = b.model.named_params();
  auto pb = r.model.named_params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(pa[i].p->value.v == pb[i].p->value.v);
  }
  auto ha = b.head.named_params();
  auto hb = r.head.named_params();
  for (std::size_t i = 0; i < ha.size(); ++i)
    CHECK(ha[i].p->value.v == hb[i].p->value.v);

  // behavioral equivalence: identical encodings from the restored model
  LabeledDataset ds = make_synthetic_lesions(6, 5);
  Tensor ea = b.model.encode(ds.images[0], 1);
  Tensor eb = r.model.encode(ds.images[0], 1);
  CHECK(ea.v == eb.v);
  fs::remove(p);
}

TEST_CASE("checkpoint rejects foreign and damaged files") {
  fs::path junk = temp_file("junk.bin");
  {
    std::ofstream out(junk, std::ios::binary);
    out << "this is not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_checkpoint(junk.string()), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/path/ck.bin"), std::runtime_error);

  CheckpointBundle b = make_bundle();
  fs::path p = temp_file("damaged.bin");
  save_checkpoint(p.string(), b);
  // flip the version field (bytes 8..11)
  {
    std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(8);
    std::uint32_t bad = 999;
    f.write(reinterpret_cast<const char*>(&bad), sizeof(bad));
  }
  CHECK_THROWS_AS(load_checkpoint(p.string()), std::runtime_error);
  // truncate
  save_checkpoint(p.string(), b);
  fs::resize_file(p, fs::file_size(p) / 2);
  CHECK_THROWS_AS(load_checkpoint(p.string()), std::runtime_error);
  fs::remove_all(fs::temp_directory_path() / "preimage_ckpt_test");
}

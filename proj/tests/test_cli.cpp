#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* env = std::getenv("PREIMAGE_CLI_BIN");
  REQUIRE_MESSAGE(env != nullptr, "PREIMAGE_CLI_BIN must point at the CLI binary");
  return env;
}

fs::path workspace() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "preimage_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct RunResult {
  int code;
  std::string output;
};

RunResult run(const std::string& args) {
  static int counter = 0;
  fs::path log = workspace() / ("cmd_" + std::to_string(counter++) + ".log");
  std::string cmd = "\"" + cli_path() + "\" " + args + " > \"" + log.string() +
                    "\" 2>&1";
  int rc = std::system(cmd.c_str());
  std::ifstream in(log);
  std::ostringstream ss;
  ss << in.rdbuf();
  return {rc, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

const std::string kTrainArgs =
    "train --data synthetic --data-n 60 --epochs 2 --batch-size 10 --seed 7";

}  // namespace

TEST_CASE("train produces its artifacts and reruns identically") {
  fs::path w = workspace();
  RunResult a = run(kTrainArgs + " --run-id t1 --out " + q(w / "outA"));
  REQUIRE_MESSAGE(a.code == 0, a.output);
  CHECK(fs::exists(w / "outA" / "t1" / "checkpoint.bin"));
  CHECK(fs::exists(w / "outA" / "t1" / "training_log.csv"));
  CHECK(fs::exists(w / "outA" / "t1" / "config.txt"));

  RunResult b = run(kTrainArgs + " --run-id t1 --out " + q(w / "outB"));
  REQUIRE(b.code == 0);
  // identical summary line (the second line reports the output path)
  CHECK(a.output.substr(0, a.output.find('\n')) ==
        b.output.substr(0, b.output.find('\n')));
  CHECK(slurp(w / "outA" / "t1" / "training_log.csv") ==
        slurp(w / "outB" / "t1" / "training_log.csv"));
  CHECK(slurp(w / "outA" / "t1" / "checkpoint.bin") ==
        slurp(w / "outB" / "t1" / "checkpoint.bin"));
}

TEST_CASE("train with a missing data path fails without leaving artifacts") {
  fs::path w = workspace();
  RunResult r = run("train --data /no/such/dir --run-id bad --out " + q(w / "outbad"));
  CHECK(r.code != 0);
  CHECK(!fs::exists(w / "outbad" / "bad"));
  CHECK(!fs::exists(w / "outbad" / "bad" / "checkpoint.bin"));
}

TEST_CASE("run id collisions are an error, never an overwrite") {
  fs::path w = workspace();
  std::string before = slurp(w / "outA" / "t1" / "config.txt");
  RunResult r = run(kTrainArgs + " --run-id t1 --out " + q(w / "outA"));
  CHECK(r.code != 0);
  CHECK(r.output.find("exists") != std::string::npos);
  CHECK(slurp(w / "outA" / "t1" / "config.txt") == before);
}

TEST_CASE("invert writes a complete run directory; --iters 1 degenerates") {
  fs::path w = workspace();
  std::string ckpt = q(w / "outA" / "t1" / "checkpoint.bin");
  RunResult r = run("invert --checkpoint " + ckpt +
                    " --image synthetic:3 --data-n 60 --mode dip_only"
                    " --iters 1 --seed 5 --run-id i1 --out " + q(w / "outA"));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  fs::path dir = w / "outA" / "i1";
  for (const char* f : {"preimage.ppm", "input.ppm", "reference.ppm",
                        "trajectory.csv", "metrics.csv", "config.txt"})
    CHECK_MESSAGE(fs::exists(dir / f), f);
  CHECK(count_lines(dir / "trajectory.csv") == 2);  // header + one iteration
}

TEST_CASE("invert with corruption reports input and recovered metrics") {
  fs::path w = workspace();
  std::string ckpt = q(w / "outA" / "t1" / "checkpoint.bin");
  RunResult r = run("invert --checkpoint " + ckpt +
                    " --image synthetic:4 --data-n 60 --mode dip_regularized"
                    " --corrupt occlusion:8:0.25 --iters 5 --seed 5"
                    " --run-id i2 --out " + q(w / "outA"));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  std::string metrics = slurp(w / "outA" / "i2" / "metrics.csv");
  CHECK(metrics.find("input_estimated_loss") != std::string::npos);
  CHECK(metrics.find("psnr_vs_reference") != std::string::npos);
  CHECK(metrics.find("occlusion:8:0.25") != std::string::npos);
  // corrupted input differs from the clean reference
  CHECK(slurp(w / "outA" / "i2" / "input.ppm") !=
        slurp(w / "outA" / "i2" / "reference.ppm"));
}

TEST_CASE("counterfactual with lambda2=0 matches dip_regularized inversion") {
  fs::path w = workspace();
  std::string ckpt = q(w / "outA" / "t1" / "checkpoint.bin");
  // find the current prediction so the target is a genuinely different class
  RunResult probe = run("invert --checkpoint " + ckpt +
                        " --image synthetic:8 --data-n 60 --mode dip_only"
                        " --iters 1 --seed 1 --run-id probe --out " + q(w / "outA"));
  REQUIRE(probe.code == 0);
  auto pos = probe.output.find("predicted_class=");
  REQUIRE(pos != std::string::npos);
  // pred_before comes from the metrics row
  std::string metrics = slurp(w / "outA" / "probe" / "metrics.csv");
  std::istringstream ss(metrics);
  std::string header, row;
  std::getline(ss, header);
  std::getline(ss, row);
  std::vector<std::string> hc, rc;
  {
    std::stringstream h(header), r2(row);
    std::string tok;
    while (std::getline(h, tok, ',')) hc.push_back(tok);
    while (std::getline(r2, tok, ',')) rc.push_back(tok);
  }
  int pred_before = -1;
  for (std::size_t i = 0; i < hc.size() && i < rc.size(); ++i)
    if (hc[i] == "pred_before") pred_before = std::stoi(rc[i]);
  REQUIRE(pred_before >= 0);
  int target = (pred_before + 1) % 3;

  RunResult cf = run("counterfactual --checkpoint " + ckpt +
                     " --image synthetic:8 --data-n 60 --target-class " +
                     std::to_string(target) +
                     " --lambda2 0 --iters 12 --seed 9 --run-id cf0 --out " +
                     q(w / "outA"));
  REQUIRE_MESSAGE(cf.code == 0, cf.output);
  RunResult inv = run("invert --checkpoint " + ckpt +
                      " --image synthetic:8 --data-n 60 --mode dip_regularized"
                      " --iters 12 --seed 9 --run-id reg0 --out " + q(w / "outA"));
  REQUIRE_MESSAGE(inv.code == 0, inv.output);
  CHECK(slurp(w / "outA" / "cf0" / "counterfactual.ppm") ==
        slurp(w / "outA" / "reg0" / "preimage.ppm"));
  CHECK(slurp(w / "outA" / "cf0" / "trajectory.csv") ==
        slurp(w / "outA" / "reg0" / "trajectory.csv"));
  // counterfactual artifacts present
  CHECK(fs::exists(w / "outA" / "cf0" / "difference.pgm"));
  CHECK(fs::exists(w / "outA" / "cf0" / "mask.pgm"));

  // target equal to the current prediction is rejected with an explanation
  RunResult bad = run("counterfactual --checkpoint " + ckpt +
                      " --image synthetic:8 --data-n 60 --target-class " +
                      std::to_string(pred_before) +
                      " --iters 5 --seed 9 --run-id cfbad --out " + q(w / "outA"));
  CHECK(bad.code != 0);
  CHECK(bad.output.find("current prediction") != std::string::npos);
  CHECK(!fs::exists(w / "outA" / "cfbad"));
}

TEST_CASE("evaluate aggregates runs and regenerates idempotently") {
  fs::path w = workspace();
  std::string runs = q(w / "outA" / "i1") + " " + q(w / "outA" / "i2");
  RunResult a = run("evaluate --runs " + runs + " --run-id e1 --out " + q(w / "outA"));
  REQUIRE_MESSAGE(a.code == 0, a.output);
  fs::path dir = w / "outA" / "e1";
  CHECK(fs::exists(dir / "report.csv"));
  CHECK(fs::exists(dir / "summary.csv"));
  CHECK(fs::exists(dir / "plot.ppm"));
  CHECK(count_lines(dir / "report.csv") == 3);  // header + two runs
  // paired dip_only / dip_regularized runs report their estimated-loss gap
  std::string summary = slurp(dir / "summary.csv");
  CHECK(summary.find("lhat_gap_dip_only_minus_dip_regularized") != std::string::npos);

  RunResult b = run("evaluate --runs " + runs + " --run-id e1 --out " + q(w / "outB"));
  REQUIRE(b.code == 0);
  CHECK(slurp(dir / "report.csv") == slurp(w / "outB" / "e1" / "report.csv"));
  CHECK(slurp(dir / "summary.csv") == slurp(w / "outB" / "e1" / "summary.csv"));
  CHECK(slurp(dir / "plot.ppm") == slurp(w / "outB" / "e1" / "plot.ppm"));

  RunResult empty = run("evaluate --run-id e2 --out " + q(w / "outA"));
  CHECK(empty.code != 0);
}

TEST_CASE("make-data exports a loadable dataset and train consumes it") {
  fs::path w = workspace();
  RunResult md = run("make-data --n 24 --seed 3 --out-dir " + q(w / "ds"));
  REQUIRE_MESSAGE(md.code == 0, md.output);
  CHECK(fs::exists(w / "ds" / "labels.csv"));
  CHECK(fs::exists(w / "ds" / "images" / "00000.ppm"));
  CHECK(fs::exists(w / "ds" / "masks" / "00000.pgm"));
  RunResult md2 = run("make-data --n 24 --seed 3 --out-dir " + q(w / "ds"));
  CHECK(md2.code != 0);  // refuses to overwrite

  RunResult tr = run("train --data " + q(w / "ds") +
                     " --epochs 1 --batch-size 6 --seed 1 --run-id tfolder"
                     " --out " + q(w / "outA"));
  REQUIRE_MESSAGE(tr.code == 0, tr.output);
  CHECK(fs::exists(w / "outA" / "tfolder" / "checkpoint.bin"));
}

TEST_CASE("output root falls back to the environment variable") {
  fs::path w = workspace();
  std::string ckpt = q(w / "outA" / "t1" / "checkpoint.bin");
  static int counter = 900;
  fs::path log = w / ("cmd_env_" + std::to_string(counter++) + ".log");
  std::string cmd = "PREIMAGE_OUTPUT_ROOT=" + q(w / "envroot") + " \"" +
                    cli_path() + "\" invert --checkpoint " + ckpt +
                    " --image synthetic:5 --data-n 60 --iters 1 --seed 2"
                    " --run-id env1 > \"" + log.string() + "\" 2>&1";
  int rc = std::system(cmd.c_str());
  REQUIRE(rc == 0);
  CHECK(fs::exists(w / "envroot" / "env1" / "metrics.csv"));
}

TEST_CASE("config file values are overridden by flags") {
  fs::path w = workspace();
  std::string ckpt = q(w / "outA" / "t1" / "checkpoint.bin");
  fs::path cfg = w / "invert.cfg";
  {
    std::ofstream out(cfg);
    out << "iters=3\nseed=5\n";
  }
  RunResult file_only = run("invert --checkpoint " + ckpt +
                            " --image synthetic:2 --data-n 60 --config " +
                            q(cfg) + " --run-id cfg1 --out " + q(w / "outA"));
  REQUIRE_MESSAGE(file_only.code == 0, file_only.output);
  CHECK(count_lines(w / "outA" / "cfg1" / "trajectory.csv") == 4);  // header + 3

  RunResult flag_wins = run("invert --checkpoint " + ckpt +
                            " --image synthetic:2 --data-n 60 --config " +
                            q(cfg) + " --iters 1 --run-id cfg2 --out " +
                            q(w / "outA"));
  REQUIRE_MESSAGE(flag_wins.code == 0, flag_wins.output);
  CHECK(count_lines(w / "outA" / "cfg2" / "trajectory.csv") == 2);  // header + 1
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "preimage/data.hpp"
#include "preimage/estimator.hpp"
#include "preimage/train.hpp"
#include "test_support.hpp"

using namespace preimage;
using testsup::random_tensor;

// Brute-force evaluator of the pairwise hinge, kept independent of the
// module implementation: enumerate the configured pairs and apply the
// definition term by term.
static double brute_force_ranking(const std::vector<double>& l,
                                  const std::vector<double>& e, double margin,
                                  PairingScheme scheme) {
  double total = 0.0;
  int n = static_cast<int>(l.size());
  if (scheme == PairingScheme::SplitHalf) {
    for (int i = 0; i < n / 2; ++i) {
      int j = i + n / 2;
      double term;
      if (l[i] > l[j])
        term = -(e[i] - e[j]) + margin;
      else
        term = margin;
      total += term > 0.0 ? term : 0.0;
    }
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        double term;
        if (l[i] > l[j])
          term = -(e[i] - e[j]) + margin;
        else
          term = margin;
        total += term > 0.0 ? term : 0.0;
      }
  }
  return total;
}

TEST_CASE("make_pairs layouts") {
  auto sh = make_pairs(6, PairingScheme::SplitHalf);
  REQUIRE(sh.size() == 3);
  CHECK(sh[0] == std::make_pair(0, 3));
  CHECK(sh[2] == std::make_pair(2, 5));
  CHECK_THROWS_AS(make_pairs(5, PairingScheme::SplitHalf), std::invalid_argument);
  auto ap = make_pairs(4, PairingScheme::AllPairs);
  CHECK(ap.size() == 12);
}

TEST_CASE("ranking_loss worked examples") {
  // ordered correctly with margin-exceeding gap: hinge inactive
  CHECK(ranking_loss({2.0, 1.0}, {3.0, 1.0}, 1.0, PairingScheme::SplitHalf) == 0.0);
  // tied estimates pay the full margin
  CHECK(ranking_loss({2.0, 1.0}, {1.0, 1.0}, 1.0, PairingScheme::SplitHalf) == 1.0);
  // everything ordered with margin >= gamma on every pair
  CHECK(ranking_loss({3.0, 2.0, 1.0, 0.5}, {9.0, 6.0, 3.0, 0.0}, 1.0,
                     PairingScheme::AllPairs) ==
        doctest::Approx(6.0 * 1.0));  // the 6 reversed-order pairs keep the constant
  CHECK(ranking_loss({2.0, 1.0}, {0.0, 5.0}, 1.0, PairingScheme::SplitHalf) ==
        doctest::Approx(6.0));  // badly mis-ordered pair is penalized
  CHECK_THROWS_AS(ranking_loss({1.0}, {1.0, 2.0}, 1.0, PairingScheme::AllPairs),
                  std::invalid_argument);
}

TEST_CASE("ranking_loss is always non-negative") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 * (1 + rng.uniform_int(4));
    std::vector<double> l(n), e(n);
    for (int i = 0; i < n; ++i) {
      l[i] = rng.uniform(0.0, 3.0);
      e[i] = rng.uniform(-2.0, 2.0);
    }
    auto scheme = trial % 2 ? PairingScheme::SplitHalf : PairingScheme::AllPairs;
    CHECK(ranking_loss(l, e, 1.0, scheme) >= 0.0);
  }
}

TEST_CASE("ranking_loss shift invariance of estimates") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 6;
    std::vector<double> l(n), e(n), es(n);
    double c = rng.uniform(-5.0, 5.0);
    for (int i = 0; i < n; ++i) {
      l[i] = rng.uniform(0.0, 3.0);
      e[i] = rng.uniform(-2.0, 2.0);
      es[i] = e[i] + c;
    }
    double base = ranking_loss(l, e, 1.0, PairingScheme::AllPairs);
    double shifted = ranking_loss(l, es, 1.0, PairingScheme::AllPairs);
    CHECK(shifted == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("ranking_loss depends on true losses only through their ordering") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 8;
    std::vector<double> l(n), lt(n), e(n);
    for (int i = 0; i < n; ++i) {
      l[i] = rng.uniform(0.1, 3.0);
      lt[i] = std::exp(2.0 * l[i]) + 5.0;  // strictly increasing transform
      e[i] = rng.uniform(-2.0, 2.0);
    }
    CHECK(ranking_loss(l, e, 1.0, PairingScheme::AllPairs) ==
          ranking_loss(lt, e, 1.0, PairingScheme::AllPairs));
  }
}

TEST_CASE("ranking_loss equals the brute-force evaluator exactly") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 * (1 + rng.uniform_int(4));  // 2..8
    std::vector<double> l(n), e(n);
    for (int i = 0; i < n; ++i) {
      l[i] = rng.uniform(0.0, 2.0);
      e[i] = rng.uniform(-1.0, 1.0);
    }
    for (auto scheme : {PairingScheme::SplitHalf, PairingScheme::AllPairs}) {
      double module = ranking_loss(l, e, 1.0, scheme);
      double oracle = brute_force_ranking(l, e, 1.0, scheme);
      CHECK(module == oracle);  // bit-level agreement
    }
  }
}

TEST_CASE("total_loss composition") {
  CHECK(total_loss(2.0, 4.0, 1.0, 0.5) == 4.0);
  CHECK(total_loss(1.7, 9.0, 1.0, 0.0) == 1.7);
  CHECK(total_loss(0.0, 2.0, 1.0, 0.5) == 1.0);
}

TEST_CASE("estimate is deterministic and validates tap channels") {
  auto head = LossEstimatorHead::make({4, 8, 16, 32}, 16, 3);
  Rng rng(9);
  std::array<Tensor, 4> taps = {
      random_tensor(1, 4, 8, 8, rng), random_tensor(1, 8, 4, 4, rng),
      random_tensor(1, 16, 2, 2, rng), random_tensor(1, 32, 1, 1, rng)};
  Tensor a = head.estimate(taps);
  Tensor b = head.estimate(taps);
  CHECK(a.v[0] == b.v[0]);
  CHECK(std::isfinite(a.v[0]));

  std::array<Tensor, 4> bad = taps;
  bad[1] = random_tensor(1, 9, 4, 4, rng);
  CHECK_THROWS_AS(head.estimate(bad), std::invalid_argument);
}

TEST_CASE("estimate is invariant to spatial permutations of each tap") {
  auto head = LossEstimatorHead::make({4, 8, 16, 32}, 16, 4);
  Rng rng(10);
  std::array<Tensor, 4> taps = {
      random_tensor(1, 4, 8, 8, rng), random_tensor(1, 8, 4, 4, rng),
      random_tensor(1, 16, 2, 2, rng), random_tensor(1, 32, 2, 2, rng)};
  double base = head.estimate(taps).v[0];
  // reverse the spatial order within every channel
  std::array<Tensor, 4> perm = taps;
  for (Tensor& t : perm)
    for (int c = 0; c < t.c; ++c) {
      const int hw = t.h * t.w;
      double* p = &t.v[static_cast<std::size_t>(c) * hw];
      std::reverse(p, p + hw);
    }
  CHECK(head.estimate(perm).v[0] == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("joint training on a tiny synthetic set beats chance and is reproducible") {
  LabeledDataset ds = make_synthetic_lesions(120, 31);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 12;
  cfg.seed = 17;
  TrainResult r1 = train_joint(ds, cfg);
  REQUIRE(r1.log.size() == 5);
  CHECK(r1.log.back().val_accuracy > 0.5);  // chance is 1/3
  for (const EpochLog& e : r1.log) {
    CHECK(std::isfinite(e.l_pri));
    CHECK(e.l_aux >= 0.0);
  }
  TrainResult r2 = train_joint(ds, cfg);
  CHECK(r1.log.back().val_accuracy == r2.log.back().val_accuracy);
  CHECK(r1.log.back().val_rank_corr == r2.log.back().val_rank_corr);
  CHECK(r1.log.back().l_pri == r2.log.back().l_pri);
  CHECK(r1.log.back().l_aux == r2.log.back().l_aux);
  CHECK(r1.bundle.head.trained);
}

TEST_CASE("train_joint input validation") {
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train_joint(LabeledDataset{}, cfg), std::invalid_argument);

  LabeledDataset single;
  single.class_names = {"only"};
  for (int i = 0; i < 10; ++i) {
    single.images.push_back(Tensor(1, 3, 32, 32, 0.5));
    single.labels.push_back(0);
  }
  CHECK_THROWS_AS(train_joint(single, cfg), std::invalid_argument);

  LabeledDataset ds = make_synthetic_lesions(12, 1);
  cfg.batch_size = 7;  // odd
  CHECK_THROWS_AS(train_joint(ds, cfg), std::invalid_argument);
}

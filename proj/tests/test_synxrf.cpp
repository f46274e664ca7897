#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cavenet/checkpoint.hpp"
#include "cavenet/error.hpp"
#include "cavenet/synxrf.hpp"
#include "fixtures.hpp"

using namespace cavenet;
using namespace cavenet::synxrf;
using cavenet::testing::cluster_latents;

namespace {

LatentSet two_blobs(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  LatentSet x(2 * per_class, 2);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const int c = static_cast<int>(i % 2);
    x.labels[i] = c;
    x.row(i)[0] = static_cast<float>((c ? 3.0 : -3.0) + 0.5 * rng.normal());
    x.row(i)[1] = static_cast<float>((c ? 2.0 : -2.0) + 0.5 * rng.normal());
  }
  return x;
}

LatentSet one_row(std::vector<float> v) {
  LatentSet x(1, v.size());
  x.values = std::move(v);
  return x;
}

// Leaf-only tree whose histogram favours `cls`.
DecisionTree constant_tree(std::size_t classes, std::size_t cls) {
  std::vector<float> table = {-1.0f, 0.0f, -1.0f, -1.0f};
  for (std::size_t c = 0; c < classes; ++c) table.push_back(c == cls ? 1.0f : 0.0f);
  return DecisionTree::from_table(table, classes);
}

// Independent walk of a serialized node table.
int walk_table(const std::vector<float>& t, std::size_t classes, std::span<const float> x) {
  const std::size_t width = 4 + classes;
  std::size_t node = 0;
  while (t[node * width] >= 0.0f) {
    const auto f = static_cast<std::size_t>(t[node * width]);
    node = static_cast<std::size_t>(x[f] <= t[node * width + 1] ? t[node * width + 2] : t[node * width + 3]);
  }
  int best = 0;
  for (std::size_t c = 1; c < classes; ++c) {
    if (t[node * width + 4 + c] > t[node * width + 4 + static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  return best;
}

double accuracy(const ProbMatrix& p, const std::vector<int>& labels) {
  const auto pred = p.predictions();
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

ProbMatrix rows(std::initializer_list<std::vector<double>> r) {
  ProbMatrix m(r.size(), r.begin()->size());
  std::size_t i = 0;
  for (const auto& row : r) std::copy(row.begin(), row.end(), m.row(i++).begin());
  return m;
}

}  // namespace

// --- SVM ---------------------------------------------------------------------

TEST(Svm, SeparableBlobsPerfectWithUnitMargins) {
  const LatentSet x = two_blobs(50, 1);
  SvmConfig cfg;
  cfg.lambda = 1e-3;
  cfg.epochs = 200;
  const SvmModel m = svm_fit(x, 2, cfg, 3);
  EXPECT_DOUBLE_EQ(accuracy(svm_predict_proba(m, x), x.labels), 1.0);
  double worst = 1e9;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto s = m.scores(x.row(i));
    for (std::size_t c = 0; c < 2; ++c) {
      const double y = x.labels[i] == static_cast<int>(c) ? 1.0 : -1.0;
      worst = std::min(worst, y * s[c]);
    }
  }
  EXPECT_GE(worst, 1.0 - 0.05);
}

TEST(Svm, ScoresAreAffine) {
  const LatentSet x = cluster_latents(3, 10, 4, 2);
  const SvmModel m = svm_fit(x, 3, {}, 1);
  const auto a = x.row(0), b = x.row(1);
  std::vector<float> mid(4);
  for (std::size_t j = 0; j < 4; ++j) mid[j] = 0.25f * a[j] + 0.75f * b[j];
  const auto sa = m.scores(a), sb = m.scores(b), sm = m.scores(mid);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(sm[c], 0.25 * sa[c] + 0.75 * sb[c], 1e-5);
}

TEST(Svm, ProbabilityMapping) {
  SvmModel m;
  m.classes = 3;
  m.dim = 1;
  m.weights = {0.0, 0.0, 0.0};
  m.bias = {0.5, 0.5, 0.5};
  m.mean = {0.0};
  m.inv_scale = {1.0};
  for (double p : svm_predict_proba(m, one_row({2.0f})).values) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);

  const LatentSet x = cluster_latents(4, 15, 5, 3);
  SvmModel t = svm_fit(x, 4, {}, 2);
  for (double temp : {0.1, 1.0, 10.0}) {
    t.temperature = temp;
    const ProbMatrix p = svm_predict_proba(t, x);
    EXPECT_NO_THROW(p.check_distribution(1e-6));
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto s = t.scores(x.row(i));
      EXPECT_EQ(argmax(p.row(i)), argmax(s));
    }
  }
}

TEST(Svm, SingleClassIsAnError) {
  LatentSet x = cluster_latents(1, 5, 2, 1);
  EXPECT_THROW(svm_fit(x, 2, {}, 1), DataError);
}

// --- Random forest -----------------------------------------------------------

TEST(Forest, HandVotes) {
  RandomForestModel f;
  f.classes = 2;
  f.trees = {constant_tree(2, 0), constant_tree(2, 0), constant_tree(2, 1)};
  const ProbMatrix p = rf_predict_proba(f, one_row({0.0f}));
  EXPECT_DOUBLE_EQ(p.row(0)[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(p.row(0)[1], 1.0 / 3.0);
  EXPECT_EQ(p.predictions()[0], 0);
  f.trees.push_back(constant_tree(2, 1));  // 2-2 tie
  EXPECT_EQ(rf_predict_proba(f, one_row({0.0f})).predictions()[0], 0);
}

TEST(Forest, SingleFullTreeMemorizes) {
  const LatentSet x = cluster_latents(5, 30, 6, 4, 0.5);
  RfConfig cfg;
  cfg.trees = 1;
  cfg.bootstrap = false;
  cfg.max_features = 6;
  const RandomForestModel m = rf_fit(x, 5, cfg, 1);
  EXPECT_DOUBLE_EQ(accuracy(rf_predict_proba(m, x), x.labels), 1.0);
}

TEST(Forest, ForestTrainBeatsSingleTreeTest) {
  double forest = 0.0, single = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const LatentSet train = cluster_latents(3, 40, 6, 10 + s, 1.0);
    const LatentSet test = cluster_latents(3, 40, 6, 100 + s, 1.0);
    RfConfig cfg;
    cfg.trees = 30;
    forest += accuracy(rf_predict_proba(rf_fit(train, 3, cfg, s), train), train.labels);
    RfConfig one;
    one.trees = 1;
    single += accuracy(rf_predict_proba(rf_fit(train, 3, one, s), test), test.labels);
  }
  EXPECT_GE(forest / 5, single / 5);
}

TEST(Forest, ProbabilitiesEqualTreeEnumeration) {
  const LatentSet x = cluster_latents(4, 25, 5, 6);
  RfConfig cfg;
  cfg.trees = 10;
  const RandomForestModel m = rf_fit(x, 4, cfg, 9);
  ASSERT_EQ(m.trees.size(), 10u);
  const LatentSet q = cluster_latents(4, 10, 5, 60);
  const ProbMatrix p = rf_predict_proba(m, q);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::vector<double> counts(4, 0.0);
    for (const auto& t : m.trees) counts[static_cast<std::size_t>(walk_table(t.to_table(4), 4, q.row(i)))] += 1.0;
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(p.row(i)[c], counts[c] / 10.0);
  }
}

TEST(Forest, ThreadCountDoesNotChangeTrees) {
  const LatentSet x = cluster_latents(3, 20, 4, 6);
  RfConfig cfg;
  cfg.trees = 12;
  const auto a = rf_fit(x, 3, cfg, 5, 1), b = rf_fit(x, 3, cfg, 5, 4);
  for (std::size_t t = 0; t < 12; ++t) EXPECT_EQ(a.trees[t].to_table(3), b.trees[t].to_table(3));
}

TEST(Tree, TableRoundTripAndLeafHistograms) {
  const LatentSet x = cluster_latents(3, 20, 4, 6);
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(1);
  const DecisionTree t = DecisionTree::fit_classifier(x, rows, 3, {}, rng);
  double leaf_total = 0.0;
  for (const auto& n : t.nodes()) {
    if (n.leaf()) leaf_total += std::accumulate(n.value.begin(), n.value.end(), 0.0);
    else EXPECT_TRUE(n.left > 0 && n.right > 0);
  }
  EXPECT_DOUBLE_EQ(leaf_total, static_cast<double>(x.rows()));
  const DecisionTree back = DecisionTree::from_table(t.to_table(3), 3);
  for (std::size_t i = 0; i < x.rows(); ++i) EXPECT_EQ(back.predict_class(x.row(i)), t.predict_class(x.row(i)));
  EXPECT_THROW(DecisionTree::from_table(std::vector<float>{0, 0, 0, 0, 1, 1, 1}, 3), DataError);
}

TEST(Tree, DepthLimit) {
  const LatentSet x = cluster_latents(4, 30, 4, 2, 0.3);
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(1);
  TreeConfig cfg;
  cfg.max_depth = 2;
  EXPECT_LE(DecisionTree::fit_classifier(x, rows, 4, cfg, rng).depth(), 2u);
}

// --- KNN ---------------------------------------------------------------------

TEST(Knn, SelfMatch) {
  const LatentSet x = cluster_latents(3, 10, 4, 1);
  const KnnModel m = knn_fit(x, 3, 1);
  const ProbMatrix p = knn_predict_proba(m, x);
  for (std::size_t i = 0; i < x.rows(); ++i) EXPECT_EQ(p.row(i)[static_cast<std::size_t>(x.labels[i])], 1.0);
}

TEST(Knn, MatchesBruteForceOracle) {
  for (std::size_t k : {1u, 3u, 7u}) {
    const LatentSet store = cluster_latents(4, 100, 8, 20 + k, 0.7);
    const LatentSet queries = cluster_latents(4, 25, 8, 40 + k, 0.7);
    const KnnModel m = knn_fit(store, 4, k);
    const ProbMatrix p = knn_predict_proba(m, queries);
    for (std::size_t q = 0; q < queries.rows(); ++q) {
      // Double loop: distances, then k rounds of selecting the smallest
      // unused distance with the lowest index.
      std::vector<double> d(store.rows());
      for (std::size_t i = 0; i < store.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < store.dim; ++j) {
          const double diff = static_cast<double>(queries.row(q)[j]) - store.row(i)[j];
          s += diff * diff;
        }
        d[i] = s;
      }
      std::vector<bool> used(store.rows(), false);
      std::vector<double> freq(4, 0.0);
      for (std::size_t round = 0; round < k; ++round) {
        std::size_t best = store.rows();
        for (std::size_t i = 0; i < store.rows(); ++i) {
          if (!used[i] && (best == store.rows() || d[i] < d[best])) best = i;
        }
        used[best] = true;
        freq[static_cast<std::size_t>(store.labels[best])] += 1.0;
      }
      double total = 0.0;
      for (std::size_t c = 0; c < 4; ++c) {
        ASSERT_EQ(p.row(q)[c], freq[c] / static_cast<double>(k)) << "k=" << k << " q=" << q;
        total += p.row(q)[c];
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Knn, DistanceTiesKeepLowerIndex) {
  LatentSet store(3, 1);
  store.values = {1.0f, -1.0f, 1.0f};
  store.labels = {0, 1, 2};
  const KnnModel m = knn_fit(store, 3, 2);
  EXPECT_EQ(m.neighbours(std::vector<float>{0.0f}), (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(knn_fit(store, 3, 4), ConfigError);
}

// --- GBT ---------------------------------------------------------------------

TEST(Gbt, RoundsZeroRejected) {
  GbtConfig cfg;
  cfg.rounds = 0;
  EXPECT_THROW(gbt_fit(cluster_latents(2, 5, 2, 1), 2, cfg, 1), ConfigError);
}

TEST(Gbt, LossDecreasesOverFirstRounds) {
  const LatentSet x = cluster_latents(4, 40, 8, 3);
  GbtConfig cfg;
  cfg.rounds = 10;
  const GbtModel m = gbt_fit(x, 4, cfg, 1);
  ASSERT_EQ(m.loss_history.size(), 10u);
  // Round zero: all scores are 0, loss is C * log 2.
  EXPECT_LT(m.loss_history[0], 4 * std::log(2.0));
  for (std::size_t r = 1; r < 10; ++r) EXPECT_LT(m.loss_history[r], m.loss_history[r - 1]);
}

TEST(Gbt, ScoresAreAdditiveInStages) {
  const LatentSet x = cluster_latents(3, 20, 4, 3);
  GbtConfig cfg;
  cfg.rounds = 6;
  const GbtModel m = gbt_fit(x, 3, cfg, 1);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto full = m.scores(x.row(i)), prefix = m.scores(x.row(i), 5);
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(full[c] - prefix[c], m.lr * m.stages[5][c].predict_value(x.row(i)), 1e-12);
    }
  }
}

TEST(Gbt, TinyLearningRateIsNearUniform) {
  const LatentSet x = cluster_latents(3, 20, 4, 3);
  GbtConfig cfg;
  cfg.rounds = 1;
  cfg.lr = 1e-9;
  for (double p : gbt_predict_proba(gbt_fit(x, 3, cfg, 1), x).values) EXPECT_NEAR(p, 1.0 / 3.0, 1e-8);
}

// --- Ensemble ----------------------------------------------------------------

TEST(Vote, WorkedExample) {
  const std::array<ProbMatrix, 4> m = {rows({{0.6, 0.4}}), rows({{0.3, 0.7}}), rows({{0.2, 0.8}}), rows({{0.5, 0.5}})};
  const ProbMatrix v = soft_vote(m);
  EXPECT_NEAR(v.row(0)[0], 0.4, 1e-15);
  EXPECT_NEAR(v.row(0)[1], 0.6, 1e-15);
  EXPECT_EQ(v.predictions()[0], 1);
}

TEST(Vote, IdempotentAndOrderFree) {
  const ProbMatrix a = rows({{0.1, 0.2, 0.7}, {1.0 / 3, 1.0 / 3, 1.0 / 3}});
  const ProbMatrix b = rows({{0.3, 0.3, 0.4}, {0.9, 0.05, 0.05}});
  const ProbMatrix c = rows({{0.25, 0.5, 0.25}, {0.2, 0.2, 0.6}});
  const std::array<ProbMatrix, 4> same = {a, a, a, a};
  EXPECT_EQ(soft_vote(same).values, a.values);
  const std::array<ProbMatrix, 3> p1 = {a, b, c}, p2 = {c, a, b}, p3 = {b, c, a};
  EXPECT_EQ(soft_vote(p1).values, soft_vote(p2).values);
  EXPECT_EQ(soft_vote(p1).values, soft_vote(p3).values);
  EXPECT_EQ(hard_vote(p1).values, hard_vote(p3).values);
}

TEST(Ensemble, MembersBeatChanceAndCheckpointRoundTrips) {
  const LatentSet train = cluster_latents(4, 60, 8, 1, 2.5);
  const LatentSet test = cluster_latents(4, 30, 8, 2, 2.5);
  SynXrfConfig cfg;
  cfg.rf.trees = 20;
  cfg.gbt.rounds = 10;
  const SynXrfModel m = synxrf_fit(train, 4, cfg, 7);
  const auto members = m.member_proba(test);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NO_THROW(members[k].check_distribution(1e-6)) << kMemberNames[k];
    EXPECT_GT(accuracy(members[k], test.labels), 0.55) << kMemberNames[k];
  }
  const ProbMatrix p = m.predict_proba(test);
  EXPECT_EQ(p.values, soft_vote(members).values);

  const SynXrfModel back = SynXrfModel::from_checkpoint(Checkpoint::deserialize(m.to_checkpoint().serialize()));
  EXPECT_EQ(back.predict_proba(test).values, p.values);

  const SynXrfModel threaded = synxrf_fit(train, 4, cfg, 7, 4);
  EXPECT_EQ(threaded.predict_proba(test).values, p.values);

  SynXrfModel hard = m;
  hard.vote = VoteMode::hard;
  EXPECT_EQ(hard.predict_proba(test).values, hard_vote(members).values);
}

TEST(Ensemble, UntrainedMemberIsAnError) {
  SynXrfModel m;
  m.classes = 2;
  m.knn = knn_fit(cluster_latents(2, 3, 2, 1), 2, 1);
  EXPECT_THROW(m.predict_proba(cluster_latents(2, 1, 2, 1)), StateError);
  EXPECT_THROW(parse_vote_mode("majority"), ConfigError);
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "advrec/errors.hpp"
#include "advrec/eval.hpp"
#include "oracles.hpp"

using namespace advrec;

namespace {

RankResult rank(const std::vector<double>& scores, const std::vector<ItemId>& excluded,
                const std::vector<ItemId>& relevant) {
  return rank_scores(0, scores, excluded, relevant);
}

RankResult single_positive_at(std::size_t position) {
  RankResult r;
  r.relevant_positions = {position};
  r.n_relevant = 1;
  return r;
}

}  // namespace

TEST(Rank, ExcludesTrainPositivesAndBreaksTiesById) {
  const auto r = rank({5.0, 1.0, 2.0}, {0}, {});
  EXPECT_EQ(r.ranked, (std::vector<ItemId>{2, 1}));
  const auto tie = rank({0.5, 0.5, 0.5, 0.5}, {}, {});
  EXPECT_EQ(tie.ranked, (std::vector<ItemId>{0, 1, 2, 3}));
  EXPECT_THROW(rank({1.0}, {0}, {}), NoCandidates);
}

TEST(Rank, AgreesWithNaiveSortAndPositionOnlyPath) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> level(0, 5);  // coarse scores force ties
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 5 + t % 30;
    std::vector<double> s(n);
    for (auto& x : s) x = level(rng) * 0.25;
    std::vector<ItemId> excl, rel;
    for (ItemId i = 0; i < n; ++i) {
      const int c = level(rng);
      if (c == 0) excl.push_back(i);
      else if (c == 1) rel.push_back(i);
    }
    if (excl.size() == n) continue;
    const auto r = rank(s, excl, rel);
    std::vector<ItemId> ref;
    for (ItemId i = 0; i < n; ++i)
      if (std::find(excl.begin(), excl.end(), i) == excl.end()) ref.push_back(i);
    std::sort(ref.begin(), ref.end(), [&](ItemId a, ItemId b) { return s[a] != s[b] ? s[a] > s[b] : a < b; });
    ASSERT_EQ(r.ranked, ref);
    const auto fast = rank_scores(0, s, excl, rel, {}, false);
    EXPECT_TRUE(fast.ranked.empty());
    EXPECT_EQ(fast.relevant_positions, r.relevant_positions);
    EXPECT_EQ(fast.n_relevant, rel.size());
  }
}

TEST(Rank, CandidateFilterRestrictsTheList) {
  const std::vector<ItemId> cand{1, 3};
  const auto r = rank_scores(0, std::vector<double>{9.0, 1.0, 8.0, 2.0}, std::vector<ItemId>{},
                             std::vector<ItemId>{3}, cand);
  EXPECT_EQ(r.ranked, (std::vector<ItemId>{3, 1}));
  EXPECT_EQ(r.relevant_positions, (std::vector<std::size_t>{1}));
}

TEST(Metrics, HandExamples) {
  RankResult perfect;
  perfect.relevant_positions = {1, 2};
  perfect.n_relevant = 2;
  auto m = topk_metrics(std::vector<RankResult>{perfect}, 20);
  EXPECT_EQ(m.hr, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_NEAR(m.ndcg, 1.0, 1e-15);

  m = topk_metrics(std::vector<RankResult>{single_positive_at(21)}, 20);
  EXPECT_EQ(m.hr, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.ndcg, 0.0);

  m = topk_metrics(std::vector<RankResult>{single_positive_at(2)}, 20);
  EXPECT_NEAR(m.ndcg, std::log(2.0) / std::log(3.0), 1e-15);

  RankResult none;
  EXPECT_THROW(topk_metrics(std::vector<RankResult>{none}, 20), EmptyEval);
  EXPECT_THROW(topk_metrics(std::vector<RankResult>{perfect}, 0), BadParam);
}

TEST(Metrics, MatchBruteForceOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 10 + t % 40;
    const std::size_t k = 1 + t % 25;
    std::vector<RankResult> results;
    std::vector<oracle::BruteMetrics> ref;
    for (UserId user = 0; user < 4; ++user) {
      std::vector<double> s(n);
      for (auto& x : s) x = std::floor(u(rng) * 20.0);
      std::set<unsigned> ex, rel;
      for (unsigned i = 0; i < n; ++i) {
        const double c = u(rng);
        if (c < 0.2) ex.insert(i);
        else if (c < 0.35) rel.insert(i);
      }
      if (rel.empty()) continue;
      results.push_back(rank_scores(user, s, std::vector<ItemId>(ex.begin(), ex.end()),
                                    std::vector<ItemId>(rel.begin(), rel.end())));
      ref.push_back(oracle::brute_user_metrics(s, ex, rel, k));
    }
    if (results.empty()) continue;
    const auto m = topk_metrics(results, k);
    double hr = 0, rc = 0, nd = 0;
    for (const auto& r : ref) {
      hr += r.hr;
      rc += r.recall;
      nd += r.ndcg;
    }
    const double users = static_cast<double>(ref.size());
    ASSERT_NEAR(m.hr, hr / users, 1e-12);
    ASSERT_NEAR(m.recall, rc / users, 1e-12);
    ASSERT_NEAR(m.ndcg, nd / users, 1e-12);
  }
}

TEST(Metrics, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> s(40), e(40);
  for (std::size_t i = 0; i < s.size(); ++i) e[i] = std::exp(s[i] = nd(rng));
  const std::vector<ItemId> ex{3, 7}, rel{1, 5, 30};
  const auto a = topk_metrics(std::vector<RankResult>{rank(s, ex, rel)}, 10);
  const auto b = topk_metrics(std::vector<RankResult>{rank(e, ex, rel)}, 10);
  EXPECT_EQ(a.ndcg, b.ndcg);
  EXPECT_EQ(a.recall, b.recall);
}

TEST(Evaluate, ThreadCountDoesNotChangeMetrics) {
  SyntheticSpec spec;
  spec.n_users = 300;
  spec.n_items = 150;
  const auto d = generate_synthetic(spec);
  std::mt19937_64 rng(4);
  const Encoder enc(Backbone::MF, d.set, 8, 0, 0.2, rng);
  const auto one = evaluate_split(enc, d.set, Split::Test, 20, {}, 1);
  const auto three = evaluate_split(enc, d.set, Split::Test, 20, {}, 3);
  EXPECT_EQ(one.recall, three.recall);
  EXPECT_EQ(one.ndcg, three.ndcg);
  EXPECT_EQ(one.users, three.users);
}

TEST(Evaluate, PerfectModelHasRecallOneAtOne) {
  // Each user's single test item shares the user's direction.
  const InteractionSet s(2, 3, {{0, 2}, {1, 2}}, {}, {{0, 0}, {1, 1}});
  EmbeddingTable users(2, 2), items(3, 2);
  users.values(0, 0) = 1.0;
  users.values(1, 1) = 1.0;
  items.values(0, 0) = 1.0;
  items.values(1, 1) = 1.0;
  items.values(2, 0) = items.values(2, 1) = -1.0;
  const Encoder enc(Backbone::MF, users, items, 0, 1.0);
  const auto m = evaluate_split(enc, s, Split::Test, 1);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.users, 2u);
}

TEST(DcgBound, HoldsOnEdgeAndRandomCases) {
  const std::vector<double> low{-3.0, -2.0}, zero{0.0, 0.0};
  auto b = dcg_bound_check(1.0, low, zero);
  EXPECT_EQ(b.neg_log_dcg, 0.0);
  EXPECT_TRUE(b.holds);
  const std::vector<double> high(5, 2.0), zero5(5, 0.0);
  b = dcg_bound_check(0.0, high, zero5);
  EXPECT_NEAR(b.neg_log_dcg, std::log(std::log2(7.0)), 1e-15);  // pi = 6
  EXPECT_TRUE(b.holds);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> s(1 + t % 30), d(s.size());
    for (auto& x : s) x = u(rng);
    for (auto& x : d) x = u(rng) * 0.4;
    EXPECT_TRUE(dcg_bound_check(u(rng), s, d).holds);
  }
}

TEST(AlignUniform, DegenerateAndAntipodalCases) {
  Matrix same(3, 2, 1.0);
  const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}};
  const std::vector<std::size_t> all{0, 1, 2};
  auto au = alignment_uniformity(same, pairs, all);
  EXPECT_NEAR(au.align, 0.0, 1e-15);
  EXPECT_NEAR(au.uniform, 0.0, 1e-15);
  Matrix anti(2, 2);
  anti(0, 0) = 1.0;
  anti(1, 0) = -3.0;
  const std::vector<std::size_t> two{0, 1};
  au = alignment_uniformity(anti, pairs, two);
  EXPECT_NEAR(au.uniform, -8.0, 1e-12);
  EXPECT_NEAR(au.align, 4.0, 1e-12);
  const std::vector<std::size_t> one{0};
  EXPECT_THROW(alignment_uniformity(anti, pairs, one), EmptySample);
  EXPECT_THROW(alignment_uniformity(anti, {}, two), EmptySample);
}

TEST(AlignUniform, MatchesDoubleLoopAndIsRotationInvariant) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  Matrix x(12, 3);
  for (auto& v : x.data()) v = nd(rng);
  const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 5}, {2, 7}, {3, 3}, {11, 1}};
  std::vector<std::size_t> ent(12);
  std::iota(ent.begin(), ent.end(), 0);
  const auto au = alignment_uniformity(x, pairs, ent);

  Matrix unit = x;
  for (std::size_t r = 0; r < 12; ++r) {
    double n = 0;
    for (double v : unit.row(r)) n += v * v;
    for (double& v : unit.row(r)) v /= std::sqrt(n);
  }
  auto sq = [&](std::size_t a, std::size_t b) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) s += (unit(a, c) - unit(b, c)) * (unit(a, c) - unit(b, c));
    return s;
  };
  double align = 0;
  for (auto [a, b] : pairs) align += sq(a, b);
  double uni = 0;
  std::size_t cnt = 0;
  for (std::size_t a = 0; a < 12; ++a)
    for (std::size_t b = a + 1; b < 12; ++b, ++cnt) uni += std::exp(-2.0 * sq(a, b));
  EXPECT_NEAR(au.align, align / pairs.size(), 1e-12);
  EXPECT_NEAR(au.uniform, std::log(uni / cnt), 1e-12);

  // rotate about the z axis
  const double th = 0.7;
  Matrix rot = x;
  for (std::size_t r = 0; r < 12; ++r) {
    rot(r, 0) = std::cos(th) * x(r, 0) - std::sin(th) * x(r, 1);
    rot(r, 1) = std::sin(th) * x(r, 0) + std::cos(th) * x(r, 1);
  }
  const auto ar = alignment_uniformity(rot, pairs, ent);
  EXPECT_NEAR(ar.align, au.align, 1e-10);
  EXPECT_NEAR(ar.uniform, au.uniform, 1e-10);
}

namespace {

struct HardnessFixture {
  InteractionSet data;
  Encoder enc;
  HardnessFixture() {
    std::vector<Pair> train;
    // item popularity decreases with id
    for (UserId u = 0; u < 40; ++u)
      for (ItemId i = 0; i < 20; ++i)
        if (i < 2 || (u * 7 + i) % (i + 2) == 0) train.emplace_back(u, i);
    data = InteractionSet(40, 20, train, {}, {});
    std::mt19937_64 rng(7);
    enc = Encoder(Backbone::MF, data, 4, 0, 0.2, rng);
  }
};

}  // namespace

TEST(FnRate, ZeroInitAndHandSetModels) {
  HardnessFixture f;
  std::mt19937_64 rng(8);
  const auto zero = HardnessModel::embed(40, 20, 4, rng);
  const std::vector<Pair> planted{{3, 17}, {5, 19}};
  auto r = fn_identification_rate(zero, planted, f.enc, f.data, 8, 3, rng);
  EXPECT_EQ(r.rate, 0.0);
  EXPECT_EQ(r.trials, 6u);

  // g(u, j) = <e1, item row>: planted items point away from every user.
  EmbeddingTable users(40, 4), items(20, 4);
  for (std::size_t u = 0; u < 40; ++u) users.values(u, 0) = 1.0;
  for (std::size_t i = 0; i < 20; ++i) items.values(i, 0) = (i == 17 || i == 19) ? -5.0 : 1.0;
  const auto low = HardnessModel::from_tables(HardnessKind::Embed, users, items);
  r = fn_identification_rate(low, planted, f.enc, f.data, 8, 3, rng);
  EXPECT_EQ(r.rate, 1.0);
  EXPECT_THROW(fn_identification_rate(low, {}, f.enc, f.data, 8, 3, rng), EmptyFnList);
}

TEST(Profile, UniformAtInitAndMonotoneWhenPlanted) {
  HardnessFixture f;
  std::mt19937_64 rng(9);
  const auto zero = HardnessModel::embed(40, 20, 4, rng);
  const std::size_t n = 16, samples = 300;
  auto prof = hardness_popularity_profile(zero, f.enc, f.data, 4, n, samples, rng);
  std::size_t total = 0;
  for (const auto& b : prof) {
    EXPECT_NEAR(b.mean_p, 1.0 / n, 1e-12);
    total += b.count;
  }
  EXPECT_EQ(total, n * samples);

  // g grows with popularity
  const auto& pop = f.data.item_popularity();
  EmbeddingTable users(40, 4), items(20, 4);
  for (std::size_t u = 0; u < 40; ++u) users.values(u, 0) = 1.0;
  for (std::size_t i = 0; i < 20; ++i) items.values(i, 0) = 0.1 * static_cast<double>(pop[i]);
  const auto planted = HardnessModel::from_tables(HardnessKind::Embed, users, items);
  prof = hardness_popularity_profile(planted, f.enc, f.data, 4, n, samples, rng);
  for (std::size_t b = 1; b < prof.size(); ++b) EXPECT_GT(prof[b - 1].mean_p, prof[b].mean_p);
}

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "advrec/dataio.hpp"
#include "advrec/errors.hpp"

using namespace advrec;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "advrec_test_dataio";
  fs::create_directories(dir);
  return dir / name;
}

fs::path write_file(const std::string& name, const std::string& body) {
  const auto p = scratch(name);
  std::ofstream(p) << body;
  return p;
}

InteractionSet small_set() {
  return InteractionSet(3, 5, {{0, 1}, {0, 0}, {1, 2}, {2, 2}}, {{0, 3}}, {{1, 4}});
}

}  // namespace

TEST(InteractionSet, IndexesAndPopularity) {
  const auto s = small_set();
  const auto p0 = s.positives(Split::Train, 0);
  ASSERT_EQ(p0.size(), 2u);
  EXPECT_EQ(p0[0], 0u);
  EXPECT_EQ(p0[1], 1u);
  EXPECT_TRUE(s.is_positive(Split::Valid, 0, 3));
  EXPECT_FALSE(s.is_positive(Split::Train, 0, 3));
  const std::vector<std::size_t> pop{1, 1, 2, 0, 0};
  EXPECT_EQ(s.item_popularity(), pop);
  EXPECT_EQ(s.dense_item(4), 4);
  EXPECT_EQ(s.dense_item(17), -1);
}

TEST(InteractionSet, RejectsBadInput) {
  EXPECT_THROW(InteractionSet(2, 2, {{0, 2}}, {}, {}), IdOutOfRange);
  EXPECT_THROW(InteractionSet(2, 2, {{0, 1}, {0, 1}}, {}, {}), ParseError);
}

TEST(Load, RemapsInFirstSeenOrderAcrossSplits) {
  const auto tr = write_file("tr.tsv", "# header\n100\t7\r\n5\t9\n\n100\t9\n");
  const auto va = write_file("va.tsv", "5\t7\n");
  const auto te = write_file("te.tsv", "42\t8\n");
  const auto s = load_interactions(tr, va, te);
  EXPECT_EQ(s.n_users(), 3u);
  EXPECT_EQ(s.n_items(), 3u);
  const std::vector<std::int64_t> users{100, 5, 42}, items{7, 9, 8};
  EXPECT_EQ(s.raw_user_ids(), users);
  EXPECT_EQ(s.raw_item_ids(), items);
  EXPECT_EQ(s.pairs(Split::Train).size(), 3u);
  EXPECT_TRUE(s.is_positive(Split::Test, 2, 2));

  const auto out = scratch("roundtrip.tsv");
  write_pairs(out, s.pairs(Split::Train), s);
  const auto back = load_pairs_mapped(out, s);
  EXPECT_EQ(back, s.pairs(Split::Train));
}

TEST(Load, ErrorsCarryPathAndLine) {
  const auto bad = write_file("bad.tsv", "1\t2\nnot a pair\n");
  try {
    load_interactions(bad, "", "");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.tsv:2"), std::string::npos) << e.what();
  }
  const auto dup = write_file("dup.tsv", "1\t2\n1\t2\n");
  EXPECT_THROW(load_interactions(dup, "", ""), ParseError);
  const auto empty = write_file("empty.tsv", "# nothing\n");
  EXPECT_THROW(load_interactions(empty, "", ""), EmptySplitError);
  EXPECT_THROW(load_interactions(scratch("missing.tsv"), "", ""), IoError);
}

TEST(Load, UnknownIdsAreDroppedWhenMapping) {
  const auto s = small_set();
  const auto p = write_file("extra.tsv", "0\t1\n9\t1\n0\t99\n");
  const auto got = load_pairs_mapped(p, s);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0], Pair(0, 1));
}

TEST(Negatives, NeverTrainPositivesAndRoughlyUniform) {
  const auto s = small_set();
  std::mt19937_64 rng(3);
  const auto neg = sample_negatives(s, 0, 30000, rng);
  std::vector<std::size_t> count(5, 0);
  for (auto j : neg) ++count[j];
  EXPECT_EQ(count[0], 0u);
  EXPECT_EQ(count[1], 0u);
  for (std::size_t j = 2; j < 5; ++j) EXPECT_NEAR(count[j] / 30000.0, 1.0 / 3.0, 0.02);
}

TEST(Negatives, DeterministicForSameSeedAndFailsWhenNoneLeft) {
  const auto s = small_set();
  std::mt19937_64 a(11), b(11);
  EXPECT_EQ(sample_negatives(s, 1, 50, a), sample_negatives(s, 1, 50, b));
  const InteractionSet full(1, 2, {{0, 0}, {0, 1}}, {}, {});
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_negatives(full, 0, 1, rng), NoNegativesError);
}

TEST(GammaQuotas, MatchFormula) {
  for (double gamma : {1.0, 2.0, 10.0, 200.0}) {
    for (std::size_t n0 : {10u, 100u}) {
      const auto q = gamma_quotas(gamma, 50, n0);
      ASSERT_EQ(q.size(), 50u);
      for (std::size_t i = 1; i <= 50; ++i) {
        const long double x = static_cast<long double>(n0) *
                              std::pow(static_cast<long double>(gamma), -static_cast<long double>(i - 1) / 49.0L);
        EXPECT_EQ(q[i - 1], static_cast<std::size_t>(std::llround(x))) << gamma << " " << n0 << " " << i;
      }
      EXPECT_EQ(q.front(), n0);
    }
  }
  // gamma = 200, n0 = 10: the last group gets 10/200 = 0.05 -> 0
  EXPECT_EQ(gamma_quotas(200.0, 50, 10).back(), 0u);
  EXPECT_EQ(gamma_quotas(1.0, 50, 10).back(), 10u);
  EXPECT_THROW(gamma_quotas(0.0, 50, 10), BadParam);
  EXPECT_THROW(gamma_quotas(2.0, 1, 10), BadParam);
}

TEST(GammaSplit, PartitionsThePool) {
  std::vector<Pair> pool;
  std::mt19937_64 gen(5);
  for (UserId u = 0; u < 60; ++u)
    for (ItemId i = 0; i < 100; ++i)
      if (std::uniform_real_distribution<double>(0, 1)(gen) < 1.0 / (1.0 + i * 0.2)) pool.emplace_back(u, i);
  std::mt19937_64 rng(1);
  const auto g = gamma_split(pool, 100, 10.0, 50, 10, rng);
  EXPECT_EQ(g.train.size() + g.valid.size() + g.test.size(), pool.size());
  std::set<Pair> all(pool.begin(), pool.end()), seen;
  for (const auto* part : {&g.train, &g.valid, &g.test})
    for (const auto& p : *part) EXPECT_TRUE(seen.insert(p).second && all.count(p));
  std::size_t drawn = 0;
  for (std::size_t k = 0; k < 50; ++k) {
    EXPECT_LE(g.drawn[k], g.quotas[k]);
    drawn += g.drawn[k];
  }
  EXPECT_EQ(g.test.size(), drawn);
  std::vector<std::size_t> per_group(50, 0);
  for (const auto& p : g.test) ++per_group[g.group_of_item[p.second]];
  for (std::size_t k = 0; k < 50; ++k) EXPECT_EQ(per_group[k], g.drawn[k]);
  const std::size_t rest = pool.size() - g.test.size();
  EXPECT_EQ(g.train.size(), static_cast<std::size_t>(std::floor(rest * 6.0 / 7.0 + 0.5)));
}

TEST(Synthetic, DeterministicAndWellFormed) {
  SyntheticSpec spec;
  spec.n_users = 300;
  spec.n_items = 200;
  spec.seed = 9;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  EXPECT_EQ(a.set.pairs(Split::Train), b.set.pairs(Split::Train));
  EXPECT_EQ(a.planted_fn, b.planted_fn);
  EXPECT_FALSE(a.planted_fn.empty());
  EXPECT_EQ(a.planted_fn, a.set.pairs(Split::Test));
  for (const auto& [u, i] : a.planted_fn) {
    EXPECT_FALSE(a.set.is_positive(Split::Train, u, i));
    EXPECT_FALSE(a.set.is_positive(Split::Valid, u, i));
  }
  const double ratio = static_cast<double>(a.set.pairs(Split::Train).size()) /
                       static_cast<double>(a.set.pairs(Split::Train).size() + a.set.pairs(Split::Valid).size());
  EXPECT_NEAR(ratio, 6.0 / 7.0, 0.01);
}

TEST(Synthetic, ExposureFavoursPopularItems) {
  SyntheticSpec spec;
  spec.n_users = 500;
  spec.n_items = 300;
  spec.exposure_bias_strength = 1.5;
  const auto d = generate_synthetic(spec);
  // Planted false negatives sit on items that are less exposed than the
  // observed ones on average.
  double obs = 0.0, fn = 0.0;
  for (const auto& p : d.set.pairs(Split::Train)) obs += d.exposure_prob[p.second];
  for (const auto& p : d.planted_fn) fn += d.exposure_prob[p.second];
  EXPECT_LT(fn / d.planted_fn.size(), obs / d.set.pairs(Split::Train).size());
}

TEST(Synthetic, ZeroPlantRateAndDegenerateSpecs) {
  SyntheticSpec spec;
  spec.n_users = 200;
  spec.n_items = 100;
  spec.fn_plant_rate = 0.0;
  EXPECT_TRUE(generate_synthetic(spec).planted_fn.empty());
  spec.fn_plant_rate = 1.5;
  EXPECT_THROW(generate_synthetic(spec), BadParam);
  SyntheticSpec tiny;
  tiny.n_users = 1;
  tiny.n_items = 1;
  tiny.train_fraction = 1e-9;
  EXPECT_THROW(generate_synthetic(tiny), DegenerateSpec);
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "advrec/encoder.hpp"
#include "advrec/errors.hpp"
#include "oracles.hpp"

using namespace advrec;

namespace {

InteractionSet toy_set() {
  return InteractionSet(3, 4, {{0, 0}, {0, 1}, {1, 1}, {2, 3}}, {{1, 2}}, {{2, 0}});
}

NormAdjacency train_adj(const InteractionSet& s) {
  return NormAdjacency::bipartite(s.n_users(), s.n_items(), s.pairs(Split::Train));
}

Encoder with_values(Backbone kind, const InteractionSet& s, std::size_t dim, int layers, double tau,
                    const std::vector<double>& flat) {
  EmbeddingTable users(s.n_users(), dim), items(s.n_items(), dim);
  std::copy(flat.begin(), flat.begin() + static_cast<long>(s.n_users() * dim), users.values.data().begin());
  std::copy(flat.begin() + static_cast<long>(s.n_users() * dim), flat.end(), items.values.data().begin());
  NormAdjacency adj;
  if (kind == Backbone::LightGCN) adj = train_adj(s);
  return Encoder(kind, users, items, layers, tau, adj);
}

}  // namespace

TEST(Encoder, MfForwardStacksTables) {
  const auto s = toy_set();
  std::mt19937_64 rng(1);
  const Encoder enc(Backbone::MF, s, 5, 0, 0.2, rng);
  const auto reps = enc.forward();
  EXPECT_EQ(reps.rows.rows(), 7u);
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_EQ(reps.user(2)[c], enc.user_table().values(2, c));
    EXPECT_EQ(reps.item(3)[c], enc.item_table().values(3, c));
  }
}

TEST(Encoder, LightGcnUsesTrainEdgesOnly) {
  const auto s = toy_set();
  std::mt19937_64 rng(2);
  const Encoder enc(Backbone::LightGCN, s, 4, 2, 0.2, rng);
  EXPECT_EQ(enc.adjacency().nnz(), 2 * s.pairs(Split::Train).size());
  // user 1 <-> item 2 is a valid pair, not an edge
  for (const auto& e : enc.adjacency().edges()) EXPECT_FALSE(e.row == 1 && e.col == 3 + 2);

  Matrix x(7, 4);
  for (std::size_t u = 0; u < 3; ++u)
    for (std::size_t c = 0; c < 4; ++c) x(u, c) = enc.user_table().values(u, c);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 4; ++c) x(3 + i, c) = enc.item_table().values(i, c);
  EXPECT_EQ(enc.forward().rows, propagate(x, enc.adjacency(), 2));
}

TEST(Encoder, ScoreIsTemperatureScaledCosine) {
  const auto s = toy_set();
  std::mt19937_64 rng(3);
  const Encoder enc(Backbone::MF, s, 6, 0, 0.5, rng);
  const std::vector<ItemId> items{3, 0, 2};
  const auto got = score(enc, 1, items);
  for (std::size_t k = 0; k < items.size(); ++k) {
    EXPECT_DOUBLE_EQ(got[k], cosine_score(enc.user_table().values.row(1), enc.item_table().values.row(items[k]), 0.5));
  }
  const std::vector<ItemId> bad{9};
  EXPECT_THROW(score(enc, 1, bad), IdOutOfRange);
  EXPECT_THROW(score(enc, 7, items), IdOutOfRange);
}

TEST(Encoder, FullChainMatchesFiniteDifferences) {
  const auto s = toy_set();  // 7 nodes
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (int t = 0; t < 1000; ++t) {
    const auto kind = t % 2 ? Backbone::LightGCN : Backbone::MF;
    const int layers = kind == Backbone::LightGCN ? 1 + t % 3 : 0;
    const std::size_t dim = 3;
    std::vector<double> flat(7 * dim);
    for (auto& x : flat) x = nd(rng);
    const UserId u = t % 3;
    const std::vector<ItemId> items{static_cast<ItemId>(t % 4), static_cast<ItemId>((t + 1) % 4), 2};
    const std::vector<double> up{nd(rng), nd(rng), nd(rng)};
    const auto enc = with_values(kind, s, dim, layers, 0.3, flat);
    const auto g = score_backward(enc, u, items, up);
    std::vector<double> analytic(flat.size(), 0.0);
    for (const auto& [r, v] : g.user)
      for (std::size_t c = 0; c < dim; ++c) analytic[r * dim + c] = v[c];
    for (const auto& [r, v] : g.item)
      for (std::size_t c = 0; c < dim; ++c) analytic[(3 + r) * dim + c] = v[c];
    auto f = [&](const std::vector<double>& x) {
      const auto sc = score(with_values(kind, s, dim, layers, 0.3, x), u, items);
      double acc = 0.0;
      for (std::size_t k = 0; k < sc.size(); ++k) acc += up[k] * sc[k];
      return acc;
    };
    ASSERT_LT(oracle::rel_error(analytic, oracle::numeric_grad(f, flat)), 1e-5)
        << to_string(kind) << " instance " << t;
  }
}

TEST(Encoder, BackwardOmitsRowsWithoutGradient) {
  const auto s = toy_set();
  std::mt19937_64 rng(5);
  const Encoder enc(Backbone::MF, s, 4, 0, 0.2, rng);
  const std::vector<ItemId> items{1};
  const std::vector<double> up{1.0};
  const auto g = score_backward(enc, 0, items, up);
  EXPECT_EQ(g.user.size(), 1u);
  EXPECT_EQ(g.item.size(), 1u);
  EXPECT_TRUE(g.item.count(1));
}

TEST(Encoder, TableRoundTripIsBitExact) {
  std::mt19937_64 rng(6);
  auto t = EmbeddingTable::uniform(5, 3, rng);
  RowGrads g;
  g[2] = {0.1, -0.3, 1e-7};
  adam_step(t, g, AdamHyper{});
  std::stringstream ss;
  write_table(ss, "user", t);
  const auto back = read_table(ss, "user");
  EXPECT_EQ(back, t);
  std::stringstream wrong;
  write_table(wrong, "item", t);
  EXPECT_THROW(read_table(wrong, "user"), IncompatibleCheckpoint);
  std::stringstream junk("table user 2 2 0\n0x1p+0 zz\n");
  EXPECT_THROW(read_table(junk, "user"), IncompatibleCheckpoint);
}

TEST(Encoder, ParsesBackboneNames) {
  EXPECT_EQ(parse_backbone("mf"), Backbone::MF);
  EXPECT_EQ(parse_backbone("lightgcn"), Backbone::LightGCN);
  EXPECT_THROW(parse_backbone("gcn"), BadParam);
}

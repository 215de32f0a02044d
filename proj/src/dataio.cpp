#include "advrec/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "advrec/errors.hpp"
#include "advrec/numkit.hpp"

namespace advrec {

namespace {

std::size_t index_of(Split s) { return static_cast<std::size_t>(s); }

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

std::uint64_t pair_key(const Pair& p) {
  return (static_cast<std::uint64_t>(p.first) << 32) | p.second;
}

struct RawPair {
  std::int64_t user;
  std::int64_t item;
  std::size_t line;
};

std::vector<RawPair> read_raw_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<RawPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    auto bad = [&](const std::string& why) {
      return ParseError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (tab == std::string::npos) throw bad("expected user<TAB>item");
    auto parse_id = [&](const std::string& tok) -> std::int64_t {
      if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw bad("'" + tok + "' is not a non-negative integer");
      }
      try {
        return std::stoll(tok);
      } catch (const std::out_of_range&) {
        throw bad("id out of range");
      }
    };
    out.push_back({parse_id(line.substr(0, tab)), parse_id(line.substr(tab + 1)), line_no});
  }
  return out;
}

}  // namespace

InteractionSet::InteractionSet(std::size_t n_users, std::size_t n_items, std::vector<Pair> train,
                               std::vector<Pair> valid, std::vector<Pair> test)
    : n_users_(n_users), n_items_(n_items) {
  splits_[0] = std::move(train);
  splits_[1] = std::move(valid);
  splits_[2] = std::move(test);
  popularity_.assign(n_items_, 0);
  for (std::size_t s = 0; s < 3; ++s) {
    by_user_[s].assign(n_users_, {});
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(splits_[s].size() * 2);
    for (const auto& p : splits_[s]) {
      if (p.first >= n_users_ || p.second >= n_items_) {
        throw IdOutOfRange("pair (" + std::to_string(p.first) + "," + std::to_string(p.second) +
                           ") outside id space");
      }
      if (!seen.insert(pair_key(p)).second) {
        throw ParseError(std::string("duplicate pair in ") + split_name(static_cast<Split>(s)) +
                         " split: (" + std::to_string(p.first) + "," + std::to_string(p.second) + ")");
      }
      by_user_[s][p.first].push_back(p.second);
      if (s == 0) popularity_[p.second] += 1;
    }
    for (auto& items : by_user_[s]) std::sort(items.begin(), items.end());
  }
  raw_users_.resize(n_users_);
  raw_items_.resize(n_items_);
  std::iota(raw_users_.begin(), raw_users_.end(), 0);
  std::iota(raw_items_.begin(), raw_items_.end(), 0);
}

const std::vector<Pair>& InteractionSet::pairs(Split s) const { return splits_[index_of(s)]; }

std::span<const ItemId> InteractionSet::positives(Split s, UserId u) const {
  if (u >= n_users_) throw IdOutOfRange("user " + std::to_string(u));
  return by_user_[index_of(s)][u];
}

bool InteractionSet::is_positive(Split s, UserId u, ItemId i) const {
  auto items = positives(s, u);
  return std::binary_search(items.begin(), items.end(), i);
}

void InteractionSet::set_raw_ids(std::vector<std::int64_t> users, std::vector<std::int64_t> items) {
  if (users.size() != n_users_ || items.size() != n_items_) {
    throw DimMismatch("raw id tables do not match id space");
  }
  raw_users_ = std::move(users);
  raw_items_ = std::move(items);
}

std::int64_t InteractionSet::dense_user(std::int64_t raw) const {
  auto it = std::find(raw_users_.begin(), raw_users_.end(), raw);
  return it == raw_users_.end() ? -1 : static_cast<std::int64_t>(it - raw_users_.begin());
}

std::int64_t InteractionSet::dense_item(std::int64_t raw) const {
  auto it = std::find(raw_items_.begin(), raw_items_.end(), raw);
  return it == raw_items_.end() ? -1 : static_cast<std::int64_t>(it - raw_items_.begin());
}

InteractionSet load_interactions(const std::filesystem::path& train,
                                 const std::filesystem::path& valid,
                                 const std::filesystem::path& test) {
  std::unordered_map<std::int64_t, UserId> user_map;
  std::unordered_map<std::int64_t, ItemId> item_map;
  std::vector<std::int64_t> raw_users;
  std::vector<std::int64_t> raw_items;

  auto remap = [&](const std::filesystem::path& path) {
    std::vector<Pair> out;
    if (path.empty()) return out;
    std::unordered_set<std::uint64_t> seen;
    for (const auto& r : read_raw_pairs(path)) {
      auto [uit, u_new] = user_map.try_emplace(r.user, static_cast<UserId>(raw_users.size()));
      if (u_new) raw_users.push_back(r.user);
      auto [iit, i_new] = item_map.try_emplace(r.item, static_cast<ItemId>(raw_items.size()));
      if (i_new) raw_items.push_back(r.item);
      Pair p{uit->second, iit->second};
      if (!seen.insert(pair_key(p)).second) {
        throw ParseError(path.string() + ":" + std::to_string(r.line) + ": duplicate pair " +
                         std::to_string(r.user) + "\t" + std::to_string(r.item));
      }
      out.push_back(p);
    }
    return out;
  };

  auto tr = remap(train);
  if (tr.empty()) throw EmptySplitError("train split " + train.string() + " has no interactions");
  auto va = remap(valid);
  auto te = remap(test);
  InteractionSet set(raw_users.size(), raw_items.size(), std::move(tr), std::move(va), std::move(te));
  set.set_raw_ids(std::move(raw_users), std::move(raw_items));
  return set;
}

std::vector<Pair> load_pairs_mapped(const std::filesystem::path& path, const InteractionSet& set) {
  std::unordered_map<std::int64_t, UserId> users;
  std::unordered_map<std::int64_t, ItemId> items;
  for (std::size_t k = 0; k < set.raw_user_ids().size(); ++k) users.emplace(set.raw_user_ids()[k], k);
  for (std::size_t k = 0; k < set.raw_item_ids().size(); ++k) items.emplace(set.raw_item_ids()[k], k);
  std::vector<Pair> out;
  for (const auto& r : read_raw_pairs(path)) {
    auto u = users.find(r.user);
    auto i = items.find(r.item);
    if (u == users.end() || i == items.end()) continue;
    out.emplace_back(u->second, i->second);
  }
  return out;
}

void write_pairs(const std::filesystem::path& path, std::span<const Pair> pairs,
                 const InteractionSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [u, i] : pairs) {
    out << set.raw_user_ids().at(u) << '\t' << set.raw_item_ids().at(i) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ItemId> sample_negatives(const InteractionSet& set, UserId u, std::size_t n,
                                     std::mt19937_64& rng) {
  const auto pos = set.positives(Split::Train, u);
  if (pos.size() >= set.n_items()) {
    throw NoNegativesError("user " + std::to_string(u) + " interacted with every item");
  }
  const std::size_t candidates = set.n_items() - pos.size();
  std::uniform_int_distribution<std::size_t> dist(0, candidates - 1);
  std::vector<ItemId> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    // r-th item of the sorted complement of `pos`.
    std::size_t item = dist(rng);
    for (ItemId p : pos) {
      if (p <= item) {
        ++item;
      } else {
        break;
      }
    }
    out.push_back(static_cast<ItemId>(item));
  }
  return out;
}

std::vector<std::size_t> gamma_quotas(double gamma, std::size_t groups, std::size_t n0) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw BadParam("gamma must be > 0");
  if (groups < 2) throw BadParam("need at least two popularity groups");
  if (n0 < 1) throw BadParam("n0 must be >= 1");
  std::vector<std::size_t> quotas(groups);
  const double denom = static_cast<double>(groups - 1);
  for (std::size_t g = 0; g < groups; ++g) {
    const double q = static_cast<double>(n0) * std::pow(gamma, -static_cast<double>(g) / denom);
    quotas[g] = static_cast<std::size_t>(std::floor(q + 0.5));
  }
  return quotas;
}

GammaSplitResult gamma_split(std::span<const Pair> pool, std::size_t n_items, double gamma,
                             std::size_t groups, std::size_t n0, std::mt19937_64& rng) {
  GammaSplitResult res;
  res.quotas = gamma_quotas(gamma, groups, n0);
  if (n_items == 0) throw BadParam("empty item space");

  std::vector<std::size_t> pop(n_items, 0);
  for (const auto& [u, i] : pool) {
    if (i >= n_items) throw IdOutOfRange("item " + std::to_string(i));
    pop[i] += 1;
  }
  std::vector<ItemId> order(n_items);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](ItemId a, ItemId b) { return pop[a] > pop[b]; });
  res.group_of_item.assign(n_items, 0);
  for (std::size_t r = 0; r < n_items; ++r) res.group_of_item[order[r]] = r * groups / n_items;

  std::vector<std::vector<std::size_t>> members(groups);
  for (std::size_t k = 0; k < pool.size(); ++k) members[res.group_of_item[pool[k].second]].push_back(k);

  std::vector<char> in_test(pool.size(), 0);
  res.drawn.assign(groups, 0);
  for (std::size_t g = 0; g < groups; ++g) {
    auto& idx = members[g];
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t take = std::min(res.quotas[g], idx.size());
    res.drawn[g] = take;
    for (std::size_t k = 0; k < take; ++k) in_test[idx[k]] = 1;
  }
  std::vector<std::size_t> test_idx;
  std::vector<std::size_t> rest;
  for (std::size_t k = 0; k < pool.size(); ++k) (in_test[k] ? test_idx : rest).push_back(k);

  std::shuffle(rest.begin(), rest.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(rest.size()) * 6.0 / 7.0 + 0.5));
  for (std::size_t k = 0; k < rest.size(); ++k) {
    (k < n_train ? res.train : res.valid).push_back(pool[rest[k]]);
  }
  for (std::size_t k : test_idx) res.test.push_back(pool[k]);
  return res;
}

void SyntheticSpec::validate() const {
  if (n_users == 0 || n_items == 0 || latent_dim == 0) throw BadParam("dimensions must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw BadParam("train_fraction must lie in (0,1)");
  if (!(fn_plant_rate >= 0.0 && fn_plant_rate < 1.0)) throw BadParam("fn_plant_rate must lie in [0,1)");
  if (!(relevance_quantile > 0.0 && relevance_quantile < 1.0)) {
    throw BadParam("relevance_quantile must lie in (0,1)");
  }
  if (!(exposure_bias_strength >= 0.0)) throw BadParam("exposure_bias_strength must be >= 0");
  if (!(zipf_exponent >= 0.0)) throw BadParam("zipf_exponent must be >= 0");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  auto rng = substream(spec.seed, "synthetic");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix users(spec.n_users, spec.latent_dim);
  Matrix items(spec.n_items, spec.latent_dim);
  for (double& v : users.data()) v = normal(rng);
  for (double& v : items.data()) v = normal(rng);

  // Zipf-like popularity weight over a random item ranking.
  std::vector<std::size_t> rank(spec.n_items);
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> weight(spec.n_items);
  for (std::size_t i = 0; i < spec.n_items; ++i) {
    weight[i] = std::pow(static_cast<double>(rank[i] + 1), -spec.zipf_exponent * spec.exposure_bias_strength);
  }
  const double mean_w = std::accumulate(weight.begin(), weight.end(), 0.0) / static_cast<double>(spec.n_items);

  SyntheticData out;
  out.exposure_prob.resize(spec.n_items);
  for (std::size_t i = 0; i < spec.n_items; ++i) {
    out.exposure_prob[i] = spec.exposure_bias_strength == 0.0
                               ? spec.train_fraction
                               : std::min(1.0, spec.train_fraction * weight[i] / mean_w);
  }

  const auto n_relevant = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(spec.relevance_quantile * static_cast<double>(spec.n_items))));
  std::vector<Pair> exposed;
  std::vector<double> affinity(spec.n_items);
  std::vector<ItemId> order(spec.n_items);
  for (UserId u = 0; u < spec.n_users; ++u) {
    for (std::size_t i = 0; i < spec.n_items; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < spec.latent_dim; ++k) s += users(u, k) * items(i, k);
      affinity[i] = s;
    }
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_relevant), order.end(),
                      [&](ItemId a, ItemId b) {
                        return affinity[a] != affinity[b] ? affinity[a] > affinity[b] : a < b;
                      });
    std::vector<ItemId> relevant(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_relevant));
    std::sort(relevant.begin(), relevant.end());
    for (ItemId i : relevant) {
      if (unit(rng) < out.exposure_prob[i]) {
        exposed.emplace_back(u, i);
      } else if (unit(rng) < spec.fn_plant_rate) {
        out.planted_fn.emplace_back(u, i);
      }
    }
  }

  std::shuffle(exposed.begin(), exposed.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(exposed.size()) * 6.0 / 7.0 + 0.5));
  std::vector<Pair> train(exposed.begin(), exposed.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<Pair> valid(exposed.begin() + static_cast<std::ptrdiff_t>(n_train), exposed.end());
  if (train.empty()) throw DegenerateSpec("no relevant pair was exposed into train");
  std::sort(train.begin(), train.end());
  std::sort(valid.begin(), valid.end());

  out.set = InteractionSet(spec.n_users, spec.n_items, std::move(train), std::move(valid), out.planted_fn);
  return out;
}

}  // namespace advrec

#ifndef ADVREC_DATAIO_HPP
#define ADVREC_DATAIO_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace advrec {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;
using Pair = std::pair<UserId, ItemId>;

enum class Split { Train, Valid, Test };

/// Observed positives in a dense id space, partitioned into
/// train/valid/test. Immutable once built.
class InteractionSet {
 public:
  InteractionSet() = default;

  /// Validates ids and per-split uniqueness, then builds per-user indexes.
  /// Throws IdOutOfRange or ParseError("duplicate ...").
  InteractionSet(std::size_t n_users, std::size_t n_items, std::vector<Pair> train,
                 std::vector<Pair> valid, std::vector<Pair> test);

  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }

  const std::vector<Pair>& pairs(Split s) const;
  /// Sorted items of user `u` in split `s`.
  std::span<const ItemId> positives(Split s, UserId u) const;
  bool is_positive(Split s, UserId u, ItemId i) const;

  /// Train interaction count per item.
  const std::vector<std::size_t>& item_popularity() const { return popularity_; }

  /// Raw ids as they appeared in the source files, indexed by dense id.
  /// Identity when the set was built in memory.
  const std::vector<std::int64_t>& raw_user_ids() const { return raw_users_; }
  const std::vector<std::int64_t>& raw_item_ids() const { return raw_items_; }
  void set_raw_ids(std::vector<std::int64_t> users, std::vector<std::int64_t> items);

  /// Dense id for a raw id, or -1 when unknown.
  std::int64_t dense_user(std::int64_t raw) const;
  std::int64_t dense_item(std::int64_t raw) const;

 private:
  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  std::vector<Pair> splits_[3];
  std::vector<std::vector<ItemId>> by_user_[3];
  std::vector<std::size_t> popularity_;
  std::vector<std::int64_t> raw_users_;
  std::vector<std::int64_t> raw_items_;
};

/// Reads three "user<TAB>item" files, remapping raw ids to dense 0-based
/// ranges in first-seen order (train, then valid, then test). Lines starting
/// with '#' and blank lines are skipped. An empty valid/test path means an
/// empty split.
InteractionSet load_interactions(const std::filesystem::path& train,
                                 const std::filesystem::path& valid,
                                 const std::filesystem::path& test);

/// Reads a pair file and maps it through `set`'s raw->dense tables.
/// Pairs naming unknown ids are dropped.
std::vector<Pair> load_pairs_mapped(const std::filesystem::path& path, const InteractionSet& set);

/// Writes pairs as TSV using the set's raw ids.
void write_pairs(const std::filesystem::path& path, std::span<const Pair> pairs,
                 const InteractionSet& set);

/// n items drawn uniformly with replacement from items outside the user's
/// train positives.
std::vector<ItemId> sample_negatives(const InteractionSet& set, UserId u, std::size_t n,
                                     std::mt19937_64& rng);

/// round-half-up(n0 * gamma^{-(i-1)/(groups-1)}) for i = 1..groups.
std::vector<std::size_t> gamma_quotas(double gamma, std::size_t groups, std::size_t n0);

struct GammaSplitResult {
  std::vector<Pair> train;
  std::vector<Pair> valid;
  std::vector<Pair> test;
  std::vector<std::size_t> quotas;
  std::vector<std::size_t> drawn;  // min(quota, available) per group
  std::vector<std::size_t> group_of_item;
};

/// Long-tail test construction: items sorted by descending pool popularity
/// (ties by ascending id) form `groups` equal-size groups; group i
/// contributes min(quota_i, available) interactions drawn uniformly at
/// random to test. The remainder is shuffled and split 60:10 into
/// train:valid.
GammaSplitResult gamma_split(std::span<const Pair> pool, std::size_t n_items, double gamma,
                             std::size_t groups, std::size_t n0, std::mt19937_64& rng);

struct SyntheticSpec {
  std::size_t n_users = 2000;
  std::size_t n_items = 1000;
  std::size_t latent_dim = 8;
  double exposure_bias_strength = 1.0;
  /// Mean probability that a relevant pair is exposed (observed).
  double train_fraction = 0.2;
  /// Fraction of relevant-but-unexposed pairs planted into the test split.
  double fn_plant_rate = 0.2;
  /// Per-user fraction of items that are truly relevant.
  double relevance_quantile = 0.05;
  /// Exponent of the Zipf-like item weights that define popularity.
  double zipf_exponent = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  InteractionSet set;
  std::vector<Pair> planted_fn;
  /// Exposure probability used for each item.
  std::vector<double> exposure_prob;
};

/// Biased-exposure synthetic world: exposed relevant pairs are split 60:10
/// into train:valid, a fn_plant_rate share of the unexposed relevant pairs
/// forms the unbiased test split and is returned as planted false negatives.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace advrec

#endif  // ADVREC_DATAIO_HPP

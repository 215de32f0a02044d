#ifndef ADVREC_EVAL_HPP
#define ADVREC_EVAL_HPP

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "advrec/dataio.hpp"
#include "advrec/encoder.hpp"
#include "advrec/loss.hpp"

namespace advrec {

/// Ranking of one user's candidate items.
struct RankResult {
  UserId user = 0;
  /// Candidates by descending score, ties by ascending item id. Left empty
  /// by the position-only fast path.
  std::vector<ItemId> ranked;
  /// 1-based ranks of the relevant items that are candidates, ascending.
  std::vector<std::size_t> relevant_positions;
  /// Relevant items of the user, including any that were not candidates.
  std::size_t n_relevant = 0;
};

struct UserMetrics {
  UserId user = 0;
  double hr = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
};

struct MetricReport {
  std::size_t k = 20;
  double hr = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t users = 0;
  std::vector<UserMetrics> per_user;
};

/// Scores through L2-normalized representations; the one scoring path
/// shared by ranking and evaluation.
class Scorer {
 public:
  Scorer(const Representations& reps, double tau);
  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  void score_all(UserId u, std::vector<double>& out) const;

 private:
  Matrix unit_;
  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  double inv_tau_ = 1.0;
};

/// Ranks arbitrary per-item scores. Items in `excluded` are dropped; when
/// `candidates` is non-empty only those items are ranked.
RankResult rank_scores(UserId u, std::span<const double> scores, std::span<const ItemId> excluded,
                       std::span<const ItemId> relevant, std::span<const ItemId> candidates = {},
                       bool keep_list = true);

/// All-ranking of every non-train-positive item for `u`, marking the
/// positives of `target`. Throws NoCandidates when nothing is left to rank.
RankResult rank_all(const Encoder& enc, UserId u, const InteractionSet& data,
                    Split target = Split::Test, std::span<const ItemId> candidates = {});
RankResult rank_all(const Scorer& scorer, UserId u, const InteractionSet& data,
                    Split target = Split::Test, std::span<const ItemId> candidates = {},
                    bool keep_list = true);

/// HR/Recall/NDCG@k macro-averaged over results with n_relevant > 0.
/// Throws EmptyEval when there is no such result.
MetricReport topk_metrics(std::span<const RankResult> results, std::size_t k);

/// Ranks every user with a positive in `target` and scores the result.
MetricReport evaluate_split(const Encoder& enc, const InteractionSet& data, Split target,
                            std::size_t k, std::span<const ItemId> candidates = {},
                            unsigned threads = 1);

struct DcgBound {
  double neg_log_dcg;
  double loss;
  bool holds;
};

/// Hardness-adjusted rank pi = 1 + #{j : s_j - s+ + delta_j > 0}; checks
/// -log(1/log2(1+pi)) <= AdvInfoNCE (K = 1).
DcgBound dcg_bound_check(double s_pos, std::span<const double> s_negs,
                         std::span<const double> deltas);

struct AlignUniform {
  double align;
  double uniform;
};

/// On L2-normalized rows: align = mean ||f(a)-f(b)||^2 over `pairs`,
/// uniform = log mean exp(-2 ||f(x)-f(y)||^2) over distinct pairs of
/// `entities`. Both index rows of `rows`.
AlignUniform alignment_uniformity(const Matrix& rows,
                                  std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                  std::span<const std::size_t> entities);

/// Encoder overload: positive pairs are (u, i) interactions, entities are
/// every user and item row of the representations.
AlignUniform alignment_uniformity(const Encoder& enc, std::span<const Pair> positives,
                                  std::span<const std::size_t> entity_rows);

struct FnRate {
  double rate = 0.0;
  std::size_t trials = 0;
  std::size_t identified = 0;
};

/// Share of planted false negatives (u, j) that receive delta_j < 0 when
/// scored inside a context of j plus n_negatives - 1 uniform negatives.
FnRate fn_identification_rate(const HardnessModel& model, std::span<const Pair> planted,
                              const Encoder& enc, const InteractionSet& data,
                              std::size_t n_negatives, std::size_t resamples, std::mt19937_64& rng);

struct ProfileBin {
  std::size_t bin = 0;
  double mean_p = 0.0;
  std::size_t count = 0;
};

/// Mean sampling probability p_j per item-popularity bin (bin 0 holds the
/// most popular items) over `samples` random train pairs with n_negatives
/// uniform negatives each.
std::vector<ProfileBin> hardness_popularity_profile(const HardnessModel& model, const Encoder& enc,
                                                    const InteractionSet& data, std::size_t bins,
                                                    std::size_t n_negatives, std::size_t samples,
                                                    std::mt19937_64& rng);

/// Popularity bin of every item; equal-size groups over items sorted by
/// descending train popularity, ties by ascending id.
std::vector<std::size_t> popularity_bins(const InteractionSet& data, std::size_t bins);

}  // namespace advrec

#endif  // ADVREC_EVAL_HPP

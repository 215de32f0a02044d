#include "advrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "advrec/errors.hpp"

namespace advrec {

namespace {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

Matrix normalized_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double n = 0.0;
    for (double v : row) n += v * v;
    n = std::sqrt(n);
    if (n <= 1e-12) throw ZeroNormError("representation row " + std::to_string(r));
    for (double& v : row) v /= n;
  }
  return out;
}

}  // namespace

Scorer::Scorer(const Representations& reps, double tau)
    : unit_(normalized_rows(reps.rows)),
      n_users_(reps.n_users),
      n_items_(reps.rows.rows() - reps.n_users),
      inv_tau_(1.0 / tau) {
  if (!(tau > 0.0)) throw BadParam("temperature must be positive");
}

void Scorer::score_all(UserId u, std::vector<double>& out) const {
  if (u >= n_users_) throw IdOutOfRange("user " + std::to_string(u));
  out.resize(n_items_);
  auto pu = unit_.row(u);
  for (std::size_t i = 0; i < n_items_; ++i) {
    auto qi = unit_.row(n_users_ + i);
    double s = 0.0;
    for (std::size_t c = 0; c < pu.size(); ++c) s += pu[c] * qi[c];
    out[i] = s * inv_tau_;
  }
}

RankResult rank_scores(UserId u, std::span<const double> scores, std::span<const ItemId> excluded,
                       std::span<const ItemId> relevant, std::span<const ItemId> candidates,
                       bool keep_list) {
  const std::size_t n = scores.size();
  std::vector<char> eligible(n, candidates.empty() ? 1 : 0);
  for (ItemId c : candidates) {
    if (c >= n) throw IdOutOfRange("candidate " + std::to_string(c));
    eligible[c] = 1;
  }
  for (ItemId e : excluded) {
    if (e < n) eligible[e] = 0;
  }
  RankResult res;
  res.user = u;
  res.n_relevant = relevant.size();
  if (std::find(eligible.begin(), eligible.end(), 1) == eligible.end()) {
    throw NoCandidates("user " + std::to_string(u) + " has no item left to rank");
  }
  auto before = [&](ItemId a, ItemId b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; };

  if (keep_list) {
    for (ItemId i = 0; i < n; ++i) {
      if (eligible[i]) res.ranked.push_back(i);
    }
    std::sort(res.ranked.begin(), res.ranked.end(), before);
    std::vector<std::size_t> pos(n, 0);
    for (std::size_t r = 0; r < res.ranked.size(); ++r) pos[res.ranked[r]] = r + 1;
    for (ItemId t : relevant) {
      if (t < n && eligible[t]) res.relevant_positions.push_back(pos[t]);
    }
  } else {
    for (ItemId t : relevant) {
      if (t >= n || !eligible[t]) continue;
      std::size_t rank = 1;
      for (ItemId j = 0; j < n; ++j) {
        if (eligible[j] && j != t && before(j, t)) ++rank;
      }
      res.relevant_positions.push_back(rank);
    }
  }
  std::sort(res.relevant_positions.begin(), res.relevant_positions.end());
  return res;
}

RankResult rank_all(const Scorer& scorer, UserId u, const InteractionSet& data, Split target,
                    std::span<const ItemId> candidates, bool keep_list) {
  std::vector<double> scores;
  scorer.score_all(u, scores);
  return rank_scores(u, scores, data.positives(Split::Train, u), data.positives(target, u), candidates,
                     keep_list);
}

RankResult rank_all(const Encoder& enc, UserId u, const InteractionSet& data, Split target,
                    std::span<const ItemId> candidates) {
  const Scorer scorer(enc.forward(), enc.tau());
  return rank_all(scorer, u, data, target, candidates, true);
}

MetricReport topk_metrics(std::span<const RankResult> results, std::size_t k) {
  if (k < 1) throw BadParam("k must be >= 1");
  MetricReport rep;
  rep.k = k;
  CompensatedSum hr;
  CompensatedSum recall;
  CompensatedSum ndcg;
  for (const auto& r : results) {
    if (r.n_relevant == 0) continue;
    UserMetrics m;
    m.user = r.user;
    std::size_t hits = 0;
    double dcg = 0.0;
    for (std::size_t pos : r.relevant_positions) {
      if (pos > k) break;
      ++hits;
      dcg += 1.0 / std::log2(1.0 + static_cast<double>(pos));
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min(k, r.n_relevant);
    for (std::size_t p = 1; p <= ideal; ++p) idcg += 1.0 / std::log2(1.0 + static_cast<double>(p));
    m.hr = hits > 0 ? 1.0 : 0.0;
    m.recall = static_cast<double>(hits) / static_cast<double>(r.n_relevant);
    m.ndcg = dcg / idcg;
    hr.add(m.hr);
    recall.add(m.recall);
    ndcg.add(m.ndcg);
    rep.per_user.push_back(m);
  }
  if (rep.per_user.empty()) throw EmptyEval("no user has a relevant item");
  rep.users = rep.per_user.size();
  const double n = static_cast<double>(rep.users);
  rep.hr = hr.value() / n;
  rep.recall = recall.value() / n;
  rep.ndcg = ndcg.value() / n;
  return rep;
}

MetricReport evaluate_split(const Encoder& enc, const InteractionSet& data, Split target, std::size_t k,
                            std::span<const ItemId> candidates, unsigned threads) {
  const Scorer scorer(enc.forward(), enc.tau());
  std::vector<UserId> users;
  for (UserId u = 0; u < data.n_users(); ++u) {
    if (!data.positives(target, u).empty()) users.push_back(u);
  }
  std::vector<RankResult> results(users.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k2 = begin; k2 < end; ++k2) {
      results[k2] = rank_all(scorer, users[k2], data, target, candidates, false);
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1 || users.size() < 2 * threads) {
    work(0, users.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (users.size() + threads - 1) / threads;
    for (std::size_t b = 0; b < users.size(); b += chunk) {
      pool.emplace_back(work, b, std::min(users.size(), b + chunk));
    }
    for (auto& t : pool) t.join();
  }
  return topk_metrics(results, k);
}

DcgBound dcg_bound_check(double s_pos, std::span<const double> s_negs, std::span<const double> deltas) {
  const double loss = advinfonce_forward(s_pos, s_negs, deltas, 1.0);
  std::size_t rank = 1;
  for (std::size_t j = 0; j < s_negs.size(); ++j) {
    if (s_negs[j] - s_pos + deltas[j] > 0.0) ++rank;
  }
  const double neg_log_dcg = -std::log(1.0 / std::log2(1.0 + static_cast<double>(rank)));
  return {neg_log_dcg, loss, neg_log_dcg <= loss + 1e-12};
}

AlignUniform alignment_uniformity(const Matrix& rows,
                                  std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                  std::span<const std::size_t> entities) {
  if (pairs.empty()) throw EmptySample("no positive pairs");
  if (entities.size() < 2) throw EmptySample("uniformity needs at least two entities");
  const Matrix unit = normalized_rows(rows);

  CompensatedSum align;
  for (auto [a, b] : pairs) {
    if (a >= unit.rows() || b >= unit.rows()) throw IdOutOfRange("pair row");
    align.add(squared_distance(unit.row(a), unit.row(b)));
  }

  // log-mean-exp of -2 d^2; every exponent lies in [-8, 0].
  CompensatedSum kernel;
  std::size_t count = 0;
  for (std::size_t x = 0; x < entities.size(); ++x) {
    if (entities[x] >= unit.rows()) throw IdOutOfRange("entity row");
    for (std::size_t y = x + 1; y < entities.size(); ++y) {
      kernel.add(std::exp(-2.0 * squared_distance(unit.row(entities[x]), unit.row(entities[y]))));
      ++count;
    }
  }
  return {align.value() / static_cast<double>(pairs.size()),
          std::log(kernel.value() / static_cast<double>(count))};
}

AlignUniform alignment_uniformity(const Encoder& enc, std::span<const Pair> positives,
                                  std::span<const std::size_t> entity_rows) {
  const auto reps = enc.forward();
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  rows.reserve(positives.size());
  for (auto [u, i] : positives) rows.emplace_back(u, reps.n_users + i);
  return alignment_uniformity(reps.rows, rows, entity_rows);
}

FnRate fn_identification_rate(const HardnessModel& model, std::span<const Pair> planted,
                              const Encoder& enc, const InteractionSet& data, std::size_t n_negatives,
                              std::size_t resamples, std::mt19937_64& rng) {
  if (planted.empty()) throw EmptyFnList("no planted false negatives");
  if (n_negatives < 1 || resamples < 1) throw BadParam("need n_negatives >= 1 and resamples >= 1");
  const auto reps = enc.forward();
  FnRate out;
  for (const auto& [u, j] : planted) {
    const auto pos = data.positives(Split::Train, u);
    for (std::size_t r = 0; r < resamples; ++r) {
      std::vector<ItemId> negatives{j};
      const auto rest = sample_negatives(data, u, n_negatives - 1, rng);
      negatives.insert(negatives.end(), rest.begin(), rest.end());
      const ItemId anchor = pos.empty() ? j : pos[std::uniform_int_distribution<std::size_t>(0, pos.size() - 1)(rng)];
      const auto hb = hardness_forward(model, u, anchor, negatives, &reps);
      ++out.trials;
      if (hb.deltas[0] < 0.0) ++out.identified;
    }
  }
  out.rate = static_cast<double>(out.identified) / static_cast<double>(out.trials);
  return out;
}

std::vector<std::size_t> popularity_bins(const InteractionSet& data, std::size_t bins) {
  if (bins < 2) throw BadParam("need at least two bins");
  const auto& pop = data.item_popularity();
  std::vector<ItemId> order(data.n_items());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](ItemId a, ItemId b) { return pop[a] > pop[b]; });
  std::vector<std::size_t> bin(data.n_items());
  for (std::size_t r = 0; r < order.size(); ++r) bin[order[r]] = r * bins / order.size();
  return bin;
}

std::vector<ProfileBin> hardness_popularity_profile(const HardnessModel& model, const Encoder& enc,
                                                    const InteractionSet& data, std::size_t bins,
                                                    std::size_t n_negatives, std::size_t samples,
                                                    std::mt19937_64& rng) {
  const auto bin_of = popularity_bins(data, bins);
  const auto& train = data.pairs(Split::Train);
  if (train.empty()) throw EmptySample("no train pairs");
  const auto reps = enc.forward();
  std::vector<CompensatedSum> sums(bins);
  std::vector<ProfileBin> out(bins);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto [u, i] = train[pick(rng)];
    const auto negatives = sample_negatives(data, u, n_negatives, rng);
    const auto hb = hardness_forward(model, u, i, negatives, &reps);
    for (std::size_t k = 0; k < negatives.size(); ++k) {
      const std::size_t b = bin_of[negatives[k]];
      sums[b].add(hb.probs[k]);
      out[b].count += 1;
    }
  }
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].bin = b;
    out[b].mean_p = out[b].count ? sums[b].value() / static_cast<double>(out[b].count) : 0.0;
  }
  return out;
}

}  // namespace advrec

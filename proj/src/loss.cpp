#include "advrec/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advrec/errors.hpp"

namespace advrec {

namespace {

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw NonFinite(what);
}

void check_inputs(double s_pos, std::span<const double> s_negs, std::span<const double> deltas,
                  double k_weight) {
  if (s_negs.size() != deltas.size()) {
    throw DimMismatch("scores and hardness have different lengths");
  }
  if (s_negs.empty()) throw DimMismatch("need at least one negative");
  if (!(k_weight >= 1.0) || !std::isfinite(k_weight)) throw BadParam("k_weight must be >= 1");
  require_finite(s_pos, "positive score");
  for (double s : s_negs) require_finite(s, "negative score");
  for (double d : deltas) require_finite(d, "hardness");
}

/// Shifted logits of the negatives: s_j + delta_j + log K.
struct Logits {
  std::vector<double> neg;
  double max = 0.0;
};

Logits logits(double s_pos, std::span<const double> s_negs, std::span<const double> deltas,
              double k_weight) {
  Logits out;
  const double log_k = std::log(k_weight);
  out.neg.resize(s_negs.size());
  out.max = s_pos;
  for (std::size_t j = 0; j < s_negs.size(); ++j) {
    out.neg[j] = s_negs[j] + deltas[j] + log_k;
    out.max = std::max(out.max, out.neg[j]);
  }
  return out;
}

/// log(1 + sum_j exp(x_j - s_pos)) given max-shifted logits.
double neg_log_softmax_pos(double s_pos, const Logits& z) {
  double rest = 0.0;
  for (double x : z.neg) rest += std::exp(x - z.max);
  if (z.max == s_pos) return std::log1p(rest);
  return (z.max - s_pos) + std::log(std::exp(s_pos - z.max) + rest);
}

}  // namespace

double advinfonce_forward(double s_pos, std::span<const double> s_negs,
                          std::span<const double> deltas, double k_weight) {
  check_inputs(s_pos, s_negs, deltas, k_weight);
  return neg_log_softmax_pos(s_pos, logits(s_pos, s_negs, deltas, k_weight));
}

LossGrad advinfonce_backward(double s_pos, std::span<const double> s_negs,
                             std::span<const double> deltas, double k_weight) {
  check_inputs(s_pos, s_negs, deltas, k_weight);
  const auto z = logits(s_pos, s_negs, deltas, k_weight);
  LossGrad g;
  g.loss = neg_log_softmax_pos(s_pos, z);
  g.d_neg.resize(s_negs.size());
  double total = std::exp(s_pos - z.max);
  for (std::size_t j = 0; j < s_negs.size(); ++j) {
    g.d_neg[j] = std::exp(z.neg[j] - z.max);
    total += g.d_neg[j];
  }
  double neg_mass = 0.0;
  for (double& w : g.d_neg) {
    w /= total;
    neg_mass += w;
  }
  // 1 - e^{s+}/Z is exactly the normalized negative mass.
  g.d_pos = -neg_mass;
  g.d_delta = g.d_neg;
  return g;
}

double infonce_forward(double s_pos, std::span<const double> s_negs, double k_weight) {
  const std::vector<double> zeros(s_negs.size(), 0.0);
  return advinfonce_forward(s_pos, s_negs, zeros, k_weight);
}

LossGrad infonce_backward(double s_pos, std::span<const double> s_negs, double k_weight) {
  const std::vector<double> zeros(s_negs.size(), 0.0);
  return advinfonce_backward(s_pos, s_negs, zeros, k_weight);
}

double dro_form_loss(double s_pos, std::span<const double> s_negs, std::span<const double> probs,
                     std::size_t n, double k_weight) {
  if (probs.size() != s_negs.size()) throw DimMismatch("scores and probabilities differ in length");
  if (s_negs.empty()) throw DimMismatch("need at least one negative");
  if (n == 0) throw BadParam("n must be positive");
  if (!(k_weight >= 1.0) || !std::isfinite(k_weight)) throw BadParam("k_weight must be >= 1");
  double mass = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw BadDistribution("probabilities must be finite and >= 0");
    mass += p;
  }
  if (std::abs(mass - 1.0) > 1e-8) throw BadDistribution("probabilities sum to " + std::to_string(mass));
  require_finite(s_pos, "positive score");

  const double shift = std::log(k_weight) + std::log(static_cast<double>(n));
  Logits z;
  z.max = s_pos;
  for (std::size_t j = 0; j < s_negs.size(); ++j) {
    require_finite(s_negs[j], "negative score");
    if (probs[j] == 0.0) continue;
    z.neg.push_back(s_negs[j] + std::log(probs[j]) + shift);
    z.max = std::max(z.max, z.neg.back());
  }
  return neg_log_softmax_pos(s_pos, z);
}

double bpr_forward(double s_pos, double s_neg) {
  require_finite(s_pos, "positive score");
  require_finite(s_neg, "negative score");
  const double x = s_pos - s_neg;
  // softplus(-x)
  return std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

LossGrad bpr_backward(double s_pos, double s_neg) {
  LossGrad g;
  g.loss = bpr_forward(s_pos, s_neg);
  const double x = s_pos - s_neg;
  // sigma(-x), stable for either sign of x.
  const double sig = x >= 0.0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x));
  g.d_pos = -sig;
  g.d_neg = {sig};
  return g;
}

RankingBound ranking_max_bound(double s_pos, std::span<const double> s_negs,
                               std::span<const double> deltas) {
  check_inputs(s_pos, s_negs, deltas, 1.0);
  double lhs = 0.0;
  for (std::size_t j = 0; j < s_negs.size(); ++j) lhs = std::max(lhs, s_negs[j] - s_pos + deltas[j]);
  return {lhs, advinfonce_forward(s_pos, s_negs, deltas, 1.0)};
}

double kl_uniform_to(std::span<const double> probs) {
  if (probs.empty()) throw DimMismatch("empty distribution");
  const double n = static_cast<double>(probs.size());
  double acc = 0.0;
  for (double p : probs) acc += std::log(1.0 / n) - std::log(p);
  return acc / n;
}

double uniform_deviation(std::span<const double> probs) {
  if (probs.empty()) throw DimMismatch("empty distribution");
  const double u = 1.0 / static_cast<double>(probs.size());
  double dev = 0.0;
  for (double p : probs) dev = std::max(dev, std::abs(p - u));
  return dev;
}

std::string to_string(HardnessKind k) { return k == HardnessKind::Embed ? "embed" : "mlp"; }

HardnessKind parse_hardness_kind(const std::string& s) {
  if (s == "embed") return HardnessKind::Embed;
  if (s == "mlp") return HardnessKind::Mlp;
  throw BadParam("unknown hardness model '" + s + "' (expected embed or mlp)");
}

HardnessBatch hardness_from_raw(std::vector<double> raw) {
  if (raw.empty()) throw DimMismatch("hardness needs at least one negative");
  for (double g : raw) require_finite(g, "raw hardness");
  HardnessBatch b;
  const double m = *std::max_element(raw.begin(), raw.end());
  double sum = 0.0;
  for (double g : raw) sum += std::exp(g - m);
  const double log_sum = std::log(sum);
  const double log_n = std::log(static_cast<double>(raw.size()));
  b.probs.resize(raw.size());
  b.deltas.resize(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) {
    // Shift first: a constant g then gives log_p = -log N and delta = 0 exactly.
    const double log_p = (raw[j] - m) - log_sum;
    b.probs[j] = std::exp(log_p);
    b.deltas[j] = log_n + log_p;
  }
  b.raw = std::move(raw);
  return b;
}

HardnessModel HardnessModel::embed(std::size_t n_users, std::size_t n_items, std::size_t dim,
                                   std::mt19937_64& rng) {
  HardnessModel m;
  m.kind_ = HardnessKind::Embed;
  m.first_ = EmbeddingTable(n_users, dim);
  m.second_ = EmbeddingTable::uniform(n_items, dim, rng);
  return m;
}

HardnessModel HardnessModel::mlp(std::size_t input_dim, std::size_t latent_dim, std::mt19937_64& rng) {
  HardnessModel m;
  m.kind_ = HardnessKind::Mlp;
  m.first_ = EmbeddingTable(latent_dim, input_dim + 1);
  m.second_ = EmbeddingTable::uniform(latent_dim, input_dim + 1, rng);
  for (std::size_t r = 0; r < latent_dim; ++r) m.second_.values(r, input_dim) = 0.0;
  return m;
}

HardnessModel HardnessModel::from_tables(HardnessKind kind, EmbeddingTable first, EmbeddingTable second) {
  if (first.dim() != second.dim()) throw DimMismatch("hardness blocks differ in width");
  if (kind == HardnessKind::Mlp && first.rows() != second.rows()) {
    throw DimMismatch("mlp projections differ in latent size");
  }
  HardnessModel m;
  m.kind_ = kind;
  m.first_ = std::move(first);
  m.second_ = std::move(second);
  return m;
}

namespace {

// W x + b with the bias stored in the last column of W.
std::vector<double> project(const Matrix& w, std::span<const double> x) {
  if (w.cols() != x.size() + 1) throw DimMismatch("projection input dimension");
  std::vector<double> out(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    auto row = w.row(r);
    double s = row[x.size()];
    for (std::size_t c = 0; c < x.size(); ++c) s += row[c] * x[c];
    out[r] = s;
  }
  return out;
}

const Representations& need_reps(const Representations* reps) {
  if (reps == nullptr) throw BadParam("mlp hardness needs encoder representations");
  return *reps;
}

}  // namespace

std::vector<double> HardnessModel::raw_scores(UserId u, std::span<const ItemId> negatives,
                                              const Representations* reps) const {
  std::vector<double> g(negatives.size());
  if (kind_ == HardnessKind::Embed) {
    if (u >= first_.rows()) throw IdOutOfRange("user " + std::to_string(u));
    auto pu = first_.values.row(u);
    for (std::size_t k = 0; k < negatives.size(); ++k) {
      if (negatives[k] >= second_.rows()) throw IdOutOfRange("item " + std::to_string(negatives[k]));
      auto qi = second_.values.row(negatives[k]);
      double s = 0.0;
      for (std::size_t c = 0; c < pu.size(); ++c) s += pu[c] * qi[c];
      g[k] = s;
    }
    return g;
  }
  const auto& r = need_reps(reps);
  const auto a = project(first_.values, r.user(u));
  for (std::size_t k = 0; k < negatives.size(); ++k) {
    const auto c = project(second_.values, r.item(negatives[k]));
    double s = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) s += a[l] * c[l];
    g[k] = s;
  }
  return g;
}

HardnessGrads HardnessModel::backward(UserId u, std::span<const ItemId> negatives,
                                      std::span<const double> d_raw, const Representations* reps) const {
  if (d_raw.size() != negatives.size()) throw DimMismatch("hardness gradient length");
  HardnessGrads out;
  if (kind_ == HardnessKind::Embed) {
    auto pu = first_.values.row(u);
    std::vector<double> gu(pu.size(), 0.0);
    for (std::size_t k = 0; k < negatives.size(); ++k) {
      if (d_raw[k] == 0.0) continue;
      auto qi = second_.values.row(negatives[k]);
      for (std::size_t c = 0; c < gu.size(); ++c) gu[c] += d_raw[k] * qi[c];
      accumulate(out.second, negatives[k], pu, d_raw[k]);
    }
    if (std::any_of(gu.begin(), gu.end(), [](double v) { return v != 0.0; })) accumulate(out.first, u, gu);
    return out;
  }

  const auto& r = need_reps(reps);
  const auto xu = r.user(u);
  const auto a = project(first_.values, xu);
  const std::size_t latent = a.size();
  const std::size_t in = xu.size();
  std::vector<double> da(latent, 0.0);
  std::vector<double> row(in + 1);
  for (std::size_t k = 0; k < negatives.size(); ++k) {
    if (d_raw[k] == 0.0) continue;
    const auto xk = r.item(negatives[k]);
    const auto c = project(second_.values, xk);
    std::copy(xk.begin(), xk.end(), row.begin());
    row[in] = 1.0;
    for (std::size_t l = 0; l < latent; ++l) {
      da[l] += d_raw[k] * c[l];
      if (a[l] != 0.0) accumulate(out.second, l, row, d_raw[k] * a[l]);
    }
  }
  std::copy(xu.begin(), xu.end(), row.begin());
  row[in] = 1.0;
  for (std::size_t l = 0; l < latent; ++l) {
    if (da[l] != 0.0) accumulate(out.first, l, row, da[l]);
  }
  return out;
}

void HardnessModel::apply(const HardnessGrads& grads, const AdamHyper& hyper, bool ascend) {
  if (!ascend) {
    adam_step(first_, grads.first, hyper);
    adam_step(second_, grads.second, hyper);
    return;
  }
  auto negate = [](const RowGrads& g) {
    RowGrads out = g;
    for (auto& [row, v] : out) {
      for (double& x : v) x = -x;
    }
    return out;
  };
  adam_step(first_, negate(grads.first), hyper);
  adam_step(second_, negate(grads.second), hyper);
}

HardnessBatch hardness_forward(const HardnessModel& model, UserId u, ItemId /*i*/,
                               std::span<const ItemId> negatives, const Representations* reps) {
  return hardness_from_raw(model.raw_scores(u, negatives, reps));
}

std::vector<double> raw_grad_from_delta_grad(std::span<const double> probs,
                                             std::span<const double> d_delta) {
  if (probs.size() != d_delta.size()) throw DimMismatch("hardness gradient length");
  double total = 0.0;
  for (double d : d_delta) total += d;
  std::vector<double> out(d_delta.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = d_delta[k] - probs[k] * total;
  return out;
}

HardnessGrads hardness_backward(const HardnessModel& model, const HardnessBatch& batch,
                                std::span<const double> d_delta, UserId u, ItemId /*i*/,
                                std::span<const ItemId> negatives, const Representations* reps) {
  if (batch.probs.size() != negatives.size()) throw DimMismatch("batch and negatives differ in length");
  const auto d_raw = raw_grad_from_delta_grad(batch.probs, d_delta);
  return model.backward(u, negatives, d_raw, reps);
}

}  // namespace advrec

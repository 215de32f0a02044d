#include "advrec/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "advrec/errors.hpp"
#include "json.hpp"

namespace advrec {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Adv: return "adv";
    case Strategy::Reverse: return "reverse";
    case Strategy::Rand: return "rand";
    case Strategy::None: return "none";
  }
  return "?";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "adv") return Strategy::Adv;
  if (s == "reverse") return Strategy::Reverse;
  if (s == "rand") return Strategy::Rand;
  if (s == "none") return Strategy::None;
  throw BadParam("unknown hardness strategy '" + s + "' (expected adv, reverse, rand or none)");
}

std::string to_string(LossKind k) { return k == LossKind::AdvInfoNCE ? "advinfonce" : "bpr"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "advinfonce" || s == "infonce") return LossKind::AdvInfoNCE;
  if (s == "bpr") return LossKind::BPR;
  throw BadParam("unknown loss '" + s + "' (expected advinfonce or bpr)");
}

void TrainConfig::validate() const {
  if (dim == 0) throw BadParam("dim must be positive");
  if (layers < 0) throw BadParam("layers must be >= 0");
  if (!(tau > 0.0)) throw BadParam("tau must be positive");
  if (!(lr > 0.0) || !(lr_adv > 0.0)) throw BadParam("learning rates must be positive");
  if (batch_size == 0 || n_negatives == 0) throw BadParam("batch_size and n_negatives must be positive");
  if (!(k_weight >= 1.0)) throw BadParam("k_weight must be >= 1");
  if (e_adv_max < 0) throw BadParam("e_adv_max must be >= 0");
  if (t_adv_interval < 1) throw BadParam("t_adv_interval must be >= 1");
  if (max_epochs < 1) throw BadParam("max_epochs must be >= 1");
  if (eval_every < 0) throw BadParam("eval_every must be >= 0");
  if (patience < 1) throw BadParam("patience must be >= 1");
  if (k_eval < 1) throw BadParam("k_eval must be >= 1");
  if (mlp_latent == 0) throw BadParam("mlp_latent must be positive");
}

std::string to_json_line(const MetricsRecord& r) {
  const std::string k = std::to_string(r.k);
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["split"] = r.split;
  j["hr@" + k] = r.hr;
  j["recall@" + k] = r.recall;
  j["ndcg@" + k] = r.ndcg;
  j["loss"] = r.loss;
  j["kl_mean"] = r.kl_mean;
  j["eps_proxy"] = r.eps_proxy;
  j["e_adv"] = r.e_adv;
  return j.dump();
}

TrainState init_state(const InteractionSet& data, const TrainConfig& cfg) {
  cfg.validate();
  auto init = substream(cfg.seed, "init");
  TrainState st;
  st.encoder = Encoder(cfg.backbone, data, cfg.dim, cfg.layers, cfg.tau, init);
  st.hardness = cfg.hardness_model == HardnessKind::Embed
                    ? HardnessModel::embed(data.n_users(), data.n_items(), cfg.dim, init)
                    : HardnessModel::mlp(cfg.dim, cfg.mlp_latent, init);
  st.shuffle_rng = substream(cfg.seed, "shuffle");
  st.negative_rng = substream(cfg.seed, "negatives");
  st.rand_rng = substream(cfg.seed, "rand-hardness");
  return st;
}

std::vector<TrainBatch> make_epoch_batches(TrainState& state, const InteractionSet& data,
                                           const TrainConfig& cfg) {
  std::vector<Pair> order = data.pairs(Split::Train);
  std::shuffle(order.begin(), order.end(), state.shuffle_rng);
  std::vector<TrainBatch> out;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    TrainBatch b;
    b.n = cfg.n_negatives;
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    b.anchors.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
    b.negatives.reserve(b.anchors.size() * b.n);
    for (const auto& [u, i] : b.anchors) {
      const auto neg = sample_negatives(data, u, b.n, state.negative_rng);
      b.negatives.insert(b.negatives.end(), neg.begin(), neg.end());
    }
    out.push_back(std::move(b));
  }
  return out;
}

namespace {

std::vector<double> softmax(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> p(x.size());
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (p[k] = std::exp(x[k] - m));
  for (double& v : p) v /= s;
  return p;
}

void merge(RowGrads& dst, const RowGrads& src) {
  for (const auto& [row, g] : src) accumulate(dst, row, g);
}

}  // namespace

StepStats batch_loss(const TrainState& state, const TrainBatch& batch, const TrainConfig& cfg,
                     EncoderGrads* grads, std::mt19937_64* rand_rng) {
  const std::size_t B = batch.size();
  const std::size_t N = batch.n;
  if (B == 0) throw BadParam("empty batch");
  const auto reps = state.encoder.forward();
  const double tau = state.encoder.tau();
  const double inv_b = 1.0 / static_cast<double>(B);
  const bool learned = cfg.loss == LossKind::AdvInfoNCE &&
                       (cfg.hardness_strategy == Strategy::Adv || cfg.hardness_strategy == Strategy::Reverse);

  Matrix rep_grad;
  if (grads != nullptr) rep_grad = Matrix(reps.rows.rows(), reps.rows.cols());
  std::uniform_real_distribution<double> rand_delta(-0.5, 0.5);

  StepStats stats;
  std::vector<double> s_negs(N);
  std::vector<double> deltas(N, 0.0);
  std::vector<ItemId> items(N + 1);
  std::vector<double> upstream(N + 1);
  for (std::size_t b = 0; b < B; ++b) {
    const auto [u, i] = batch.anchors[b];
    const auto negs = batch.negatives_of(b);
    const double s_pos = cosine_score(reps.user(u), reps.item(i), tau);
    for (std::size_t j = 0; j < N; ++j) s_negs[j] = cosine_score(reps.user(u), reps.item(negs[j]), tau);

    LossGrad lg;
    if (cfg.loss == LossKind::BPR) {
      lg.d_neg.assign(N, 0.0);
      for (std::size_t j = 0; j < N; ++j) {
        const auto g = bpr_backward(s_pos, s_negs[j]);
        lg.loss += g.loss / static_cast<double>(N);
        lg.d_pos += g.d_pos / static_cast<double>(N);
        lg.d_neg[j] = g.d_neg[0] / static_cast<double>(N);
      }
    } else {
      if (learned) {
        auto hb = hardness_forward(state.hardness, u, i, negs, &reps);
        deltas = std::move(hb.deltas);
        stats.kl_sum += kl_uniform_to(hb.probs);
        stats.eps_max = std::max(stats.eps_max, uniform_deviation(hb.probs));
      } else if (cfg.hardness_strategy == Strategy::Rand) {
        if (rand_rng == nullptr) throw BadParam("random hardness needs a generator");
        for (double& d : deltas) d = rand_delta(*rand_rng);
        const auto p = softmax(deltas);
        stats.kl_sum += kl_uniform_to(p);
        stats.eps_max = std::max(stats.eps_max, uniform_deviation(p));
      }
      lg = advinfonce_backward(s_pos, s_negs, deltas, cfg.k_weight);
    }
    stats.loss += lg.loss;

    if (grads != nullptr) {
      items[0] = i;
      upstream[0] = lg.d_pos * inv_b;
      for (std::size_t j = 0; j < N; ++j) {
        items[j + 1] = negs[j];
        upstream[j + 1] = lg.d_neg[j] * inv_b;
      }
      accumulate_score_grad(reps, tau, u, items, upstream, rep_grad);
    }
  }
  stats.loss *= inv_b;
  if (!std::isfinite(stats.loss)) throw NonFinite("batch loss");
  if (grads != nullptr) *grads = state.encoder.backward(rep_grad);
  return stats;
}

StepStats min_step(TrainState& state, const TrainBatch& batch, const TrainConfig& cfg) {
  EncoderGrads grads;
  const auto stats = batch_loss(state, batch, cfg, &grads, &state.rand_rng);
  const AdamHyper hyper{cfg.lr};
  adam_step(state.encoder.user_table(), grads.user, hyper);
  adam_step(state.encoder.item_table(), grads.item, hyper);
  return stats;
}

double hardness_batch_grad(const TrainState& state, const TrainBatch& batch, const TrainConfig& cfg,
                           HardnessGrads& grads) {
  const std::size_t B = batch.size();
  const std::size_t N = batch.n;
  if (B == 0) throw BadParam("empty batch");
  const auto reps = state.encoder.forward();
  const double tau = state.encoder.tau();
  const double inv_b = 1.0 / static_cast<double>(B);
  grads = {};
  double loss = 0.0;
  std::vector<double> s_negs(N);
  for (std::size_t b = 0; b < B; ++b) {
    const auto [u, i] = batch.anchors[b];
    const auto negs = batch.negatives_of(b);
    const double s_pos = cosine_score(reps.user(u), reps.item(i), tau);
    for (std::size_t j = 0; j < N; ++j) s_negs[j] = cosine_score(reps.user(u), reps.item(negs[j]), tau);
    const auto hb = hardness_forward(state.hardness, u, i, negs, &reps);
    auto lg = advinfonce_backward(s_pos, s_negs, hb.deltas, cfg.k_weight);
    loss += lg.loss;
    for (double& d : lg.d_delta) d *= inv_b;
    const auto hg = hardness_backward(state.hardness, hb, lg.d_delta, u, i, negs, &reps);
    merge(grads.first, hg.first);
    merge(grads.second, hg.second);
  }
  return loss * inv_b;
}

AdvStepResult adv_step(TrainState& state, const TrainBatch& batch, const TrainConfig& cfg) {
  if (!cfg.adversarial() || state.adv_epochs >= cfg.e_adv_max) return {true, 0.0};
  HardnessGrads grads;
  const double loss = hardness_batch_grad(state, batch, cfg, grads);
  if (!std::isfinite(loss)) throw NonFinite("adversarial batch loss");
  state.hardness.apply(grads, AdamHyper{cfg.lr_adv}, cfg.hardness_strategy == Strategy::Adv);
  return {false, loss};
}

std::optional<double> run_adversarial_epoch(TrainState& state, const std::vector<TrainBatch>& batches,
                                            const TrainConfig& cfg) {
  if (!cfg.adversarial() || state.adv_epochs >= cfg.e_adv_max) return std::nullopt;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& b : batches) {
    const auto r = adv_step(state, b, cfg);
    total += r.loss * static_cast<double>(b.size());
    count += b.size();
  }
  state.adv_epochs += 1;
  return count ? total / static_cast<double>(count) : 0.0;
}

BatchSummary summarize_batches(const TrainState& state, const std::vector<TrainBatch>& batches,
                               const TrainConfig& cfg) {
  BatchSummary s;
  std::size_t anchors = 0;
  for (const auto& b : batches) {
    const auto st = batch_loss(state, b, cfg, nullptr, nullptr);
    s.loss += st.loss;
    s.kl += st.kl_sum;
    anchors += b.size();
  }
  if (!batches.empty()) s.loss /= static_cast<double>(batches.size());
  if (anchors) s.kl /= static_cast<double>(anchors);
  return s;
}

bool EarlyStopper::update(double metric) {
  improved_ = metric > best_;
  if (improved_) {
    best_ = metric;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ >= patience_;
}

TrainResult run_training(const InteractionSet& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  TrainResult res;
  res.state = init_state(data, cfg);
  auto& st = res.state;
  res.best_encoder = st.encoder;
  res.best_hardness = st.hardness;
  const bool has_valid = !data.pairs(Split::Valid).empty();
  EarlyStopper stopper(cfg.patience);

  for (int e = 1; e <= cfg.max_epochs; ++e) {
    const auto batches = make_epoch_batches(st, data, cfg);
    double loss_sum = 0.0;
    double kl_sum = 0.0;
    double eps = 0.0;
    std::size_t anchors = 0;
    for (const auto& b : batches) {
      const auto s = min_step(st, b, cfg);
      loss_sum += s.loss * static_cast<double>(b.size());
      kl_sum += s.kl_sum;
      eps = std::max(eps, s.eps_max);
      anchors += b.size();
    }
    st.epoch = e;
    res.stopped_epoch = e;

    if (cfg.adversarial() && e % cfg.t_adv_interval == 0 && st.adv_epochs < cfg.e_adv_max) {
      const auto adv_batches = make_epoch_batches(st, data, cfg);
      run_adversarial_epoch(st, adv_batches, cfg);
      res.adversarial_after_epochs.push_back(e);
    }

    if (!has_valid || cfg.eval_every == 0 || e % cfg.eval_every != 0) {
      if (on_epoch) on_epoch(st, nullptr);
      continue;
    }
    const auto rep = evaluate_split(st.encoder, data, Split::Valid, cfg.k_eval, {}, cfg.threads);
    MetricsRecord rec;
    rec.epoch = e;
    rec.split = "valid";
    rec.k = cfg.k_eval;
    rec.hr = rep.hr;
    rec.recall = rep.recall;
    rec.ndcg = rep.ndcg;
    rec.loss = anchors ? loss_sum / static_cast<double>(anchors) : 0.0;
    rec.kl_mean = anchors ? kl_sum / static_cast<double>(anchors) : 0.0;
    rec.eps_proxy = eps;
    rec.e_adv = st.adv_epochs;
    st.history.push_back(rec);

    const bool stop = stopper.update(rep.recall);
    if (stopper.improved()) {
      res.best_encoder = st.encoder;
      res.best_hardness = st.hardness;
      res.best_epoch = e;
      st.best_epoch = e;
    }
    st.best_recall = stopper.best();
    st.evals_since_best = stopper.since_best();
    if (on_epoch) on_epoch(st, &st.history.back());
    if (stop) break;
  }
  if (res.best_epoch == 0) {
    res.best_encoder = st.encoder;
    res.best_hardness = st.hardness;
    res.best_epoch = st.epoch;
  }
  return res;
}

}  // namespace advrec

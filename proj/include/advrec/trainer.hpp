#ifndef ADVREC_TRAINER_HPP
#define ADVREC_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "advrec/dataio.hpp"
#include "advrec/encoder.hpp"
#include "advrec/eval.hpp"
#include "advrec/loss.hpp"

namespace advrec {

/// How the per-negative hardness is produced during minimization.
enum class Strategy {
  Adv,      // learned, adversarial ascent
  Reverse,  // learned, descent instead of ascent
  Rand,     // fresh uniform draws in [-0.5, 0.5]
  None,     // zero everywhere (plain InfoNCE)
};

enum class LossKind { AdvInfoNCE, BPR };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);
std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

struct TrainConfig {
  Backbone backbone = Backbone::LightGCN;
  std::size_t dim = 64;
  int layers = 2;
  double tau = 0.09;
  LossKind loss = LossKind::AdvInfoNCE;
  Strategy hardness_strategy = Strategy::Adv;
  HardnessKind hardness_model = HardnessKind::Embed;
  std::size_t mlp_latent = 4;

  double lr = 1e-3;
  double lr_adv = 5e-5;
  std::size_t batch_size = 2048;
  std::size_t n_negatives = 128;
  double k_weight = 64.0;
  int e_adv_max = 7;
  int t_adv_interval = 5;
  int max_epochs = 1000;
  int eval_every = 1;
  int patience = 20;
  std::size_t k_eval = 20;
  unsigned threads = 1;
  std::uint64_t seed = 2023;

  void validate() const;
  bool adversarial() const {
    return loss == LossKind::AdvInfoNCE &&
           (hardness_strategy == Strategy::Adv || hardness_strategy == Strategy::Reverse);
  }
};

/// One evaluation record of the metrics log.
struct MetricsRecord {
  int epoch = 0;
  std::string split = "valid";
  std::size_t k = 20;
  double hr = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
  double loss = 0.0;
  double kl_mean = 0.0;
  double eps_proxy = 0.0;
  int e_adv = 0;
};

/// Single JSON object, keys in log order, no trailing newline.
std::string to_json_line(const MetricsRecord& r);

struct TrainState {
  Encoder encoder;
  HardnessModel hardness;
  int epoch = 0;       // completed epochs
  int adv_epochs = 0;  // completed adversarial epochs, never above e_adv_max
  double best_recall = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int evals_since_best = 0;
  std::vector<MetricsRecord> history;

  std::mt19937_64 shuffle_rng;
  std::mt19937_64 negative_rng;
  std::mt19937_64 rand_rng;
};

/// Fresh encoder (from the "init" substream) and a hardness model whose
/// deltas are all zero.
TrainState init_state(const InteractionSet& data, const TrainConfig& cfg);

/// Observed pairs with N negatives each, stored row-major.
struct TrainBatch {
  std::vector<Pair> anchors;
  std::vector<ItemId> negatives;
  std::size_t n = 0;

  std::size_t size() const { return anchors.size(); }
  std::span<const ItemId> negatives_of(std::size_t b) const { return {negatives.data() + b * n, n}; }
};

/// Shuffles the train pairs and cuts them into batches with freshly drawn
/// negatives.
std::vector<TrainBatch> make_epoch_batches(TrainState& state, const InteractionSet& data,
                                           const TrainConfig& cfg);

struct StepStats {
  double loss = 0.0;     // batch mean
  double kl_sum = 0.0;   // sum over anchors of KL(P0 || P)
  double eps_max = 0.0;  // max over anchors of max_j |p_j - 1/N|
};

/// Batch-mean loss and its gradient w.r.t. the encoder tables; nothing is
/// applied. Hardness comes from the strategy; `rand_rng` is consumed for
/// Strategy::Rand.
StepStats batch_loss(const TrainState& state, const TrainBatch& batch, const TrainConfig& cfg,
                     EncoderGrads* grads, std::mt19937_64* rand_rng);

/// Minimization step on the encoder; the hardness model is untouched.
StepStats min_step(TrainState& state, const TrainBatch& batch, const TrainConfig& cfg);

struct AdvStepResult {
  bool skipped = false;  // budget exhausted or strategy without learned hardness
  double loss = 0.0;     // batch mean before the update
};

/// Ascent (Adv) or descent (Reverse) step on the hardness model with the
/// encoder frozen.
AdvStepResult adv_step(TrainState& state, const TrainBatch& batch, const TrainConfig& cfg);

/// Batch-mean AdvInfoNCE gradient w.r.t. the hardness parameters.
double hardness_batch_grad(const TrainState& state, const TrainBatch& batch, const TrainConfig& cfg,
                           HardnessGrads& grads);

/// Runs adv_step over every batch, then counts one adversarial epoch.
/// Returns nullopt (and changes nothing) once the budget is spent.
std::optional<double> run_adversarial_epoch(TrainState& state, const std::vector<TrainBatch>& batches,
                                            const TrainConfig& cfg);

/// Mean AdvInfoNCE loss and mean KL(P0 || P) over fixed batches.
struct BatchSummary {
  double loss = 0.0;
  double kl = 0.0;
};
BatchSummary summarize_batches(const TrainState& state, const std::vector<TrainBatch>& batches,
                               const TrainConfig& cfg);

/// Counts evaluations without strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  /// Returns true when training should stop after this evaluation.
  bool update(double metric);
  bool improved() const { return improved_; }
  double best() const { return best_; }
  int since_best() const { return since_best_; }

 private:
  int patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  int since_best_ = 0;
  bool improved_ = false;
};

struct TrainResult {
  TrainState state;
  Encoder best_encoder;
  HardnessModel best_hardness;
  int best_epoch = 0;
  int stopped_epoch = 0;
  std::vector<int> adversarial_after_epochs;
};

using EpochCallback = std::function<void(const TrainState&, const MetricsRecord*)>;

/// The alternating loop: a minimization epoch, then an adversarial epoch
/// every t_adv_interval epochs while fewer than e_adv_max have run, then
/// validation every eval_every epochs with early stopping on Recall@k.
TrainResult run_training(const InteractionSet& data, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {});

}  // namespace advrec

#endif  // ADVREC_TRAINER_HPP

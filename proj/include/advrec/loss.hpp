#ifndef ADVREC_LOSS_HPP
#define ADVREC_LOSS_HPP

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "advrec/dataio.hpp"
#include "advrec/encoder.hpp"
#include "advrec/numkit.hpp"

namespace advrec {

/// Loss value plus its gradients w.r.t. the positive score, every negative
/// score and every hardness term.
struct LossGrad {
  double loss = 0.0;
  double d_pos = 0.0;
  std::vector<double> d_neg;
  std::vector<double> d_delta;
};

/// -log( e^{s+} / (e^{s+} + K * sum_j e^{delta_j} e^{s_j}) ), evaluated with
/// max-subtracted log-sum-exp.
double advinfonce_forward(double s_pos, std::span<const double> s_negs,
                          std::span<const double> deltas, double k_weight);
LossGrad advinfonce_backward(double s_pos, std::span<const double> s_negs,
                             std::span<const double> deltas, double k_weight);

/// AdvInfoNCE with every hardness term at zero; shares the same code path.
double infonce_forward(double s_pos, std::span<const double> s_negs, double k_weight);
LossGrad infonce_backward(double s_pos, std::span<const double> s_negs, double k_weight);

/// Sampling-distribution form: -log( e^{s+} / (e^{s+} + K n sum_j p_j e^{s_j}) ).
/// Throws BadDistribution unless p is non-negative and sums to 1 within 1e-8.
double dro_form_loss(double s_pos, std::span<const double> s_negs, std::span<const double> probs,
                     std::size_t n, double k_weight);

/// -log sigmoid(s+ - s-).
double bpr_forward(double s_pos, double s_neg);
/// d_neg has a single entry; d_delta is empty.
LossGrad bpr_backward(double s_pos, double s_neg);

struct RankingBound {
  double lhs;  // max{0, max_j (s_j - s+ + delta_j)}
  double rhs;  // AdvInfoNCE with K = 1
};
RankingBound ranking_max_bound(double s_pos, std::span<const double> s_negs,
                               std::span<const double> deltas);

/// KL(P0 || P) with P0 uniform over p's support size.
double kl_uniform_to(std::span<const double> probs);
/// max_j |p_j - 1/N|.
double uniform_deviation(std::span<const double> probs);

enum class HardnessKind { Embed, Mlp };

std::string to_string(HardnessKind k);
HardnessKind parse_hardness_kind(const std::string& s);

/// Raw hardness scores g, their softmax p over the sampled negatives, and
/// delta_j = log(N p_j).
struct HardnessBatch {
  std::vector<double> raw;
  std::vector<double> probs;
  std::vector<double> deltas;
};

/// Builds p and delta from raw scores through a log-softmax.
HardnessBatch hardness_from_raw(std::vector<double> raw);

/// Gradient on the two parameter blocks of a hardness model: the user and
/// item hardness tables (Embed) or the user and item projections (Mlp).
struct HardnessGrads {
  RowGrads first;
  RowGrads second;
};

/// Trainable hardness g(u, j).
///
/// Embed: g = <psi_adv(u), phi_adv(j)> over dedicated tables.
/// Mlp:   g = <W_u x_u + b_u, W_v x_j + b_v> where x are the encoder's
///        representations, held constant. Each projection is stored as a
///        table with one row per latent unit and the bias as last column.
///
/// Both start with the user side at zero so that g is constant and every
/// delta is exactly 0 before any adversarial update; the item side is
/// random so the first ascent step has a non-zero gradient.
class HardnessModel {
 public:
  HardnessModel() = default;

  static HardnessModel embed(std::size_t n_users, std::size_t n_items, std::size_t dim,
                             std::mt19937_64& rng);
  static HardnessModel mlp(std::size_t input_dim, std::size_t latent_dim, std::mt19937_64& rng);
  static HardnessModel from_tables(HardnessKind kind, EmbeddingTable first, EmbeddingTable second);

  HardnessKind kind() const { return kind_; }
  EmbeddingTable& first() { return first_; }
  EmbeddingTable& second() { return second_; }
  const EmbeddingTable& first() const { return first_; }
  const EmbeddingTable& second() const { return second_; }

  /// `reps` is required for Mlp and ignored for Embed.
  std::vector<double> raw_scores(UserId u, std::span<const ItemId> negatives,
                                 const Representations* reps) const;

  /// Chains dL/dg into the parameter blocks.
  HardnessGrads backward(UserId u, std::span<const ItemId> negatives, std::span<const double> d_raw,
                         const Representations* reps) const;

  /// Adam on both blocks. `ascend` flips the gradient sign (maximization).
  void apply(const HardnessGrads& grads, const AdamHyper& hyper, bool ascend);

  bool operator==(const HardnessModel&) const = default;

 private:
  HardnessKind kind_ = HardnessKind::Embed;
  EmbeddingTable first_;
  EmbeddingTable second_;
};

/// The item `i` of the observed pair does not enter the hardness; it is
/// kept for symmetry with the loss call sites.
HardnessBatch hardness_forward(const HardnessModel& model, UserId u, ItemId i,
                               std::span<const ItemId> negatives, const Representations* reps);

/// dL/dg_k = dL/ddelta_k - p_k sum_j dL/ddelta_j, chained into the model.
HardnessGrads hardness_backward(const HardnessModel& model, const HardnessBatch& batch,
                                std::span<const double> d_delta, UserId u, ItemId i,
                                std::span<const ItemId> negatives, const Representations* reps);

/// Just the softmax Jacobian part of hardness_backward.
std::vector<double> raw_grad_from_delta_grad(std::span<const double> probs,
                                             std::span<const double> d_delta);

}  // namespace advrec

#endif  // ADVREC_LOSS_HPP

#ifndef ADVREC_ENCODER_HPP
#define ADVREC_ENCODER_HPP

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "advrec/dataio.hpp"
#include "advrec/numkit.hpp"

namespace advrec {

enum class Backbone { MF, LightGCN };

std::string to_string(Backbone b);
Backbone parse_backbone(const std::string& s);

/// Final user and item representations. Row u is user u, row
/// n_users + i is item i.
struct Representations {
  Matrix rows;
  std::size_t n_users = 0;

  std::span<const double> user(UserId u) const { return rows.row(u); }
  std::span<const double> item(ItemId i) const { return rows.row(n_users + i); }
};

/// Gradient of a loss w.r.t. the encoder's own tables.
struct EncoderGrads {
  RowGrads user;
  RowGrads item;
};

class Encoder {
 public:
  Encoder() = default;

  /// Tables drawn from `rng`; for LightGCN the adjacency comes from the
  /// train split of `data` only.
  Encoder(Backbone kind, const InteractionSet& data, std::size_t dim, int layers, double tau,
          std::mt19937_64& rng);

  /// Wraps existing tables.
  Encoder(Backbone kind, EmbeddingTable users, EmbeddingTable items, int layers, double tau,
          NormAdjacency adj = {});

  Backbone kind() const { return kind_; }
  double tau() const { return tau_; }
  int layers() const { return layers_; }
  std::size_t dim() const { return users_.dim(); }
  std::size_t n_users() const { return users_.rows(); }
  std::size_t n_items() const { return items_.rows(); }

  EmbeddingTable& user_table() { return users_; }
  EmbeddingTable& item_table() { return items_; }
  const EmbeddingTable& user_table() const { return users_; }
  const EmbeddingTable& item_table() const { return items_; }
  const NormAdjacency& adjacency() const { return adj_; }
  void set_adjacency(NormAdjacency adj) { adj_ = std::move(adj); }

  /// Raw rows for MF; propagated rows for LightGCN.
  Representations forward() const;

  /// Pulls a gradient on the representations back to the tables. Rows whose
  /// gradient is exactly zero are omitted.
  EncoderGrads backward(const Matrix& rep_grad) const;

 private:
  Backbone kind_ = Backbone::MF;
  EmbeddingTable users_;
  EmbeddingTable items_;
  int layers_ = 0;
  double tau_ = 1.0;
  NormAdjacency adj_;
};

/// Temperature-scaled cosine scores of `items` for user `u`.
std::vector<double> score(const Encoder& enc, UserId u, std::span<const ItemId> items);
std::vector<double> score(const Representations& reps, double tau, UserId u,
                          std::span<const ItemId> items);

/// Chain rule from per-item upstream dL/ds to the encoder tables.
EncoderGrads score_backward(const Encoder& enc, UserId u, std::span<const ItemId> items,
                            std::span<const double> upstream);

/// Accumulates dL/ds contributions into a representation gradient; the
/// batched building block behind score_backward.
void accumulate_score_grad(const Representations& reps, double tau, UserId u,
                           std::span<const ItemId> items, std::span<const double> upstream,
                           Matrix& rep_grad);

/// Text serialization of an EmbeddingTable (values and Adam state as
/// hexadecimal floats, so a round trip is bit-exact).
void write_table(std::ostream& out, const std::string& name, const EmbeddingTable& t);
EmbeddingTable read_table(std::istream& in, const std::string& name);

}  // namespace advrec

#endif  // ADVREC_ENCODER_HPP

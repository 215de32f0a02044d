#include "advrec/encoder.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "advrec/errors.hpp"

namespace advrec {

std::string to_string(Backbone b) { return b == Backbone::MF ? "mf" : "lightgcn"; }

Backbone parse_backbone(const std::string& s) {
  if (s == "mf") return Backbone::MF;
  if (s == "lightgcn") return Backbone::LightGCN;
  throw BadParam("unknown backbone '" + s + "' (expected mf or lightgcn)");
}

Encoder::Encoder(Backbone kind, const InteractionSet& data, std::size_t dim, int layers, double tau,
                 std::mt19937_64& rng)
    : kind_(kind), layers_(kind == Backbone::LightGCN ? layers : 0), tau_(tau) {
  if (!(tau > 0.0)) throw BadParam("temperature must be positive");
  if (dim == 0) throw BadParam("embedding dimension must be positive");
  if (layers < 0) throw BadParam("layer count must be non-negative");
  users_ = EmbeddingTable::uniform(data.n_users(), dim, rng);
  items_ = EmbeddingTable::uniform(data.n_items(), dim, rng);
  if (kind_ == Backbone::LightGCN) {
    adj_ = NormAdjacency::bipartite(data.n_users(), data.n_items(), data.pairs(Split::Train));
  }
}

Encoder::Encoder(Backbone kind, EmbeddingTable users, EmbeddingTable items, int layers, double tau,
                 NormAdjacency adj)
    : kind_(kind),
      users_(std::move(users)),
      items_(std::move(items)),
      layers_(kind == Backbone::LightGCN ? layers : 0),
      tau_(tau),
      adj_(std::move(adj)) {
  if (!(tau > 0.0)) throw BadParam("temperature must be positive");
  if (users_.dim() != items_.dim()) throw DimMismatch("user and item tables differ in dimension");
  if (kind_ == Backbone::LightGCN && adj_.node_count() != users_.rows() + items_.rows()) {
    throw DimMismatch("adjacency does not cover users + items");
  }
}

Representations Encoder::forward() const {
  const std::size_t nu = users_.rows();
  const std::size_t d = dim();
  Matrix stacked(nu + items_.rows(), d);
  std::copy(users_.values.data().begin(), users_.values.data().end(), stacked.data().begin());
  std::copy(items_.values.data().begin(), items_.values.data().end(),
            stacked.data().begin() + static_cast<std::ptrdiff_t>(nu * d));
  if (kind_ == Backbone::LightGCN) return {propagate(stacked, adj_, layers_), nu};
  return {std::move(stacked), nu};
}

EncoderGrads Encoder::backward(const Matrix& rep_grad) const {
  const std::size_t nu = users_.rows();
  if (rep_grad.rows() != nu + items_.rows() || rep_grad.cols() != dim()) {
    throw DimMismatch("representation gradient shape");
  }
  const Matrix grad = kind_ == Backbone::LightGCN ? propagate_backward(rep_grad, adj_, layers_) : rep_grad;
  EncoderGrads out;
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    auto g = grad.row(r);
    bool any = false;
    for (double v : g) any = any || v != 0.0;
    if (!any) continue;
    if (r < nu) {
      out.user.emplace(r, std::vector<double>(g.begin(), g.end()));
    } else {
      out.item.emplace(r - nu, std::vector<double>(g.begin(), g.end()));
    }
  }
  return out;
}

std::vector<double> score(const Representations& reps, double tau, UserId u,
                          std::span<const ItemId> items) {
  const std::size_t n_items = reps.rows.rows() - reps.n_users;
  if (u >= reps.n_users) throw IdOutOfRange("user " + std::to_string(u));
  std::vector<double> out;
  out.reserve(items.size());
  for (ItemId i : items) {
    if (i >= n_items) throw IdOutOfRange("item " + std::to_string(i));
    out.push_back(cosine_score(reps.user(u), reps.item(i), tau));
  }
  return out;
}

std::vector<double> score(const Encoder& enc, UserId u, std::span<const ItemId> items) {
  return score(enc.forward(), enc.tau(), u, items);
}

void accumulate_score_grad(const Representations& reps, double tau, UserId u,
                           std::span<const ItemId> items, std::span<const double> upstream,
                           Matrix& rep_grad) {
  if (upstream.size() != items.size()) throw DimMismatch("upstream length != item count");
  const std::size_t n_items = reps.rows.rows() - reps.n_users;
  if (u >= reps.n_users) throw IdOutOfRange("user " + std::to_string(u));
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (items[k] >= n_items) throw IdOutOfRange("item " + std::to_string(items[k]));
    if (!std::isfinite(upstream[k])) throw NonFinite("upstream gradient");
    if (upstream[k] == 0.0) continue;
    cosine_score_grad_into(reps.user(u), reps.item(items[k]), tau, upstream[k], rep_grad.row(u),
                           rep_grad.row(reps.n_users + items[k]));
  }
}

EncoderGrads score_backward(const Encoder& enc, UserId u, std::span<const ItemId> items,
                            std::span<const double> upstream) {
  const auto reps = enc.forward();
  Matrix rep_grad(reps.rows.rows(), reps.rows.cols());
  accumulate_score_grad(reps, enc.tau(), u, items, upstream, rep_grad);
  return enc.backward(rep_grad);
}

void write_table(std::ostream& out, const std::string& name, const EmbeddingTable& t) {
  out << "table " << name << ' ' << t.rows() << ' ' << t.dim() << ' ' << t.step_count << '\n';
  char buf[64];
  auto dump = [&](const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%a", m(r, c));
        out << (c ? " " : "") << buf;
      }
      out << '\n';
    }
  };
  dump(t.values);
  dump(t.adam_m);
  dump(t.adam_v);
}

EmbeddingTable read_table(std::istream& in, const std::string& name) {
  std::string tag;
  std::string got;
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::uint64_t step = 0;
  if (!(in >> tag >> got >> rows >> dim >> step) || tag != "table" || got != name) {
    throw IncompatibleCheckpoint("expected table '" + name + "'");
  }
  EmbeddingTable t(rows, dim);
  t.step_count = step;
  auto load = [&](Matrix& m) {
    std::string tok;
    for (double& v : m.data()) {
      if (!(in >> tok)) throw IncompatibleCheckpoint("truncated table '" + name + "'");
      char* end = nullptr;
      v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') throw IncompatibleCheckpoint("bad number '" + tok + "'");
    }
  };
  load(t.values);
  load(t.adam_m);
  load(t.adam_v);
  return t;
}

}  // namespace advrec

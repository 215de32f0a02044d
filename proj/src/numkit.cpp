#include "advrec/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "advrec/errors.hpp"

namespace advrec {

namespace {

constexpr double kMinNorm = 1e-12;

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void check_pair(std::span<const double> u, std::span<const double> v, double tau) {
  if (u.size() != v.size()) {
    throw DimMismatch("cosine operands have lengths " + std::to_string(u.size()) + " and " +
                      std::to_string(v.size()));
  }
  if (!(tau > 0.0)) throw BadParam("temperature must be positive");
}

}  // namespace

void accumulate(RowGrads& grads, std::size_t row, std::span<const double> grad, double scale) {
  auto [it, inserted] = grads.try_emplace(row, grad.size(), 0.0);
  auto& dst = it->second;
  if (dst.size() != grad.size()) throw DimMismatch("gradient row length changed");
  for (std::size_t k = 0; k < grad.size(); ++k) dst[k] += scale * grad[k];
}

void AdamHyper::validate() const {
  if (!(lr > 0.0)) throw BadParam("adam lr must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw BadParam("adam beta1 must lie in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw BadParam("adam beta2 must lie in (0,1)");
  if (!(eps > 0.0)) throw BadParam("adam eps must be > 0");
}

EmbeddingTable EmbeddingTable::uniform(std::size_t rows, std::size_t dim, std::mt19937_64& rng) {
  EmbeddingTable t(rows, dim);
  const double bound = 0.5 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values.data()) v = dist(rng);
  // Redraw the (practically impossible) degenerate rows.
  for (std::size_t r = 0; r < rows; ++r) {
    while (norm2(t.values.row(r)) <= kMinNorm) {
      for (double& v : t.values.row(r)) v = dist(rng);
    }
  }
  return t;
}

void adam_step(EmbeddingTable& table, const RowGrads& grads, const AdamHyper& hyper) {
  hyper.validate();
  const std::size_t d = table.dim();
  for (const auto& [row, g] : grads) {
    if (row >= table.rows()) {
      throw IdOutOfRange("gradient row " + std::to_string(row) + " >= " +
                         std::to_string(table.rows()));
    }
    if (g.size() != d) throw DimMismatch("gradient length does not match table dimension");
    for (double x : g) {
      if (!std::isfinite(x)) {
        throw NonFiniteGradient("row " + std::to_string(row));
      }
    }
  }

  table.step_count += 1;
  const double t = static_cast<double>(table.step_count);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);

  for (const auto& [row, g] : grads) {
    auto x = table.values.row(row);
    auto m = table.adam_m.row(row);
    auto v = table.adam_v.row(row);
    for (std::size_t k = 0; k < d; ++k) {
      m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g[k];
      v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      x[k] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

double cosine_score(std::span<const double> u, std::span<const double> v, double tau) {
  check_pair(u, v, tau);
  const double nu = norm2(u);
  const double nv = norm2(v);
  if (nu <= kMinNorm || nv <= kMinNorm) throw ZeroNormError("cosine operand has norm <= 1e-12");
  return dot(u, v) / (nu * nv) / tau;
}

double cosine_score_grad_into(std::span<const double> u, std::span<const double> v, double tau,
                              double scale, std::span<double> out_u, std::span<double> out_v) {
  check_pair(u, v, tau);
  if (out_u.size() != u.size() || out_v.size() != v.size()) {
    throw DimMismatch("gradient output length");
  }
  const double nu = norm2(u);
  const double nv = norm2(v);
  if (nu <= kMinNorm || nv <= kMinNorm) throw ZeroNormError("cosine operand has norm <= 1e-12");
  const double cos = dot(u, v) / (nu * nv);
  if (scale != 0.0) {
    const double c = scale / tau;
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double uh = u[k] / nu;
      const double vh = v[k] / nv;
      out_v[k] += c * (uh - cos * vh) / nv;
      out_u[k] += c * (vh - cos * uh) / nu;
    }
  }
  return cos / tau;
}

CosineGrad cosine_score_grad(std::span<const double> u, std::span<const double> v, double tau) {
  CosineGrad g{std::vector<double>(u.size(), 0.0), std::vector<double>(v.size(), 0.0)};
  cosine_score_grad_into(u, v, tau, 1.0, g.grad_u, g.grad_v);
  return g;
}

NormAdjacency NormAdjacency::from_edges(
    std::size_t node_count, std::span<const std::pair<std::size_t, std::size_t>> edges) {
  std::vector<std::pair<std::size_t, std::size_t>> directed;
  directed.reserve(edges.size() * 2);
  for (auto [a, b] : edges) {
    if (a >= node_count || b >= node_count) throw IdOutOfRange("edge endpoint out of range");
    if (a == b) throw BadParam("self-loops are not allowed");
    directed.emplace_back(a, b);
    directed.emplace_back(b, a);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  NormAdjacency adj;
  adj.node_count_ = node_count;
  adj.row_ptr_.assign(node_count + 1, 0);
  for (auto [r, c] : directed) adj.row_ptr_[r + 1] += 1;
  std::partial_sum(adj.row_ptr_.begin(), adj.row_ptr_.end(), adj.row_ptr_.begin());

  adj.cols_.reserve(directed.size());
  adj.weights_.reserve(directed.size());
  for (auto [r, c] : directed) {
    const double deg_r = static_cast<double>(adj.row_ptr_[r + 1] - adj.row_ptr_[r]);
    const double deg_c = static_cast<double>(adj.row_ptr_[c + 1] - adj.row_ptr_[c]);
    adj.cols_.push_back(c);
    adj.weights_.push_back(1.0 / std::sqrt(deg_r * deg_c));
  }
  return adj;
}

NormAdjacency NormAdjacency::bipartite(
    std::size_t n_users, std::size_t n_items,
    std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(pairs.size());
  for (auto [u, i] : pairs) {
    if (u >= n_users || i >= n_items) throw IdOutOfRange("interaction outside id space");
    edges.emplace_back(u, n_users + i);
  }
  return from_edges(n_users + n_items, edges);
}

std::vector<NormAdjacency::Edge> NormAdjacency::edges() const {
  std::vector<Edge> out;
  out.reserve(cols_.size());
  for (std::size_t r = 0; r < node_count_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      out.push_back({r, cols_[k], weights_[k]});
    }
  }
  return out;
}

void NormAdjacency::multiply(const Matrix& in, Matrix& out) const {
  if (in.rows() != node_count_) throw DimMismatch("propagation input rows != node count");
  out = Matrix(in.rows(), in.cols());
  const std::size_t d = in.cols();
  for (std::size_t r = 0; r < node_count_; ++r) {
    auto dst = out.row(r);
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      const double w = weights_[k];
      auto src = in.row(cols_[k]);
      for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
    }
  }
}

Matrix propagate(const Matrix& layer0, const NormAdjacency& adj, int layers) {
  if (layer0.rows() != adj.node_count()) {
    throw DimMismatch("propagation input has " + std::to_string(layer0.rows()) +
                      " rows, adjacency has " + std::to_string(adj.node_count()) + " nodes");
  }
  if (layers < 0) throw BadParam("layer count must be non-negative");
  if (layers == 0) return layer0;

  Matrix acc = layer0;
  Matrix cur = layer0;
  Matrix next;
  for (int l = 1; l <= layers; ++l) {
    adj.multiply(cur, next);
    std::swap(cur, next);
    auto& a = acc.data();
    const auto& c = cur.data();
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += c[k];
  }
  const double denom = static_cast<double>(layers + 1);
  for (double& v : acc.data()) v /= denom;
  return acc;
}

Matrix propagate_backward(const Matrix& grad_out, const NormAdjacency& adj, int layers) {
  return propagate(grad_out, adj, layers);
}

std::mt19937_64 substream(std::uint64_t base_seed, std::string_view name) {
  // FNV-1a keeps the name hash stable across standard libraries.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace advrec

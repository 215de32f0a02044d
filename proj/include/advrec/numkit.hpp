#ifndef ADVREC_NUMKIT_HPP
#define ADVREC_NUMKIT_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace advrec {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Sparse per-row gradient. Ordered so that iteration (and thus every
/// update built from it) is deterministic.
using RowGrads = std::map<std::size_t, std::vector<double>>;

/// Adds scale * grad into grads[row], creating the row if needed.
void accumulate(RowGrads& grads, std::size_t row, std::span<const double> grad, double scale = 1.0);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Throws BadParam unless lr > 0, both betas in (0,1) and eps > 0.
  void validate() const;
};

/// Parameter matrix paired with its Adam moment accumulators.
struct EmbeddingTable {
  Matrix values;
  Matrix adam_m;
  Matrix adam_v;
  std::uint64_t step_count = 0;

  EmbeddingTable() = default;
  EmbeddingTable(std::size_t rows, std::size_t dim)
      : values(rows, dim), adam_m(rows, dim), adam_v(rows, dim) {}

  /// Entries drawn uniformly from [-0.5/sqrt(dim), 0.5/sqrt(dim)].
  static EmbeddingTable uniform(std::size_t rows, std::size_t dim, std::mt19937_64& rng);

  std::size_t rows() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }

  bool operator==(const EmbeddingTable&) const = default;
};

/// One Adam step with bias correction on the rows present in `grads`.
/// Rows absent from `grads` keep their values and moments (lazy update);
/// step_count advances once per call regardless.
void adam_step(EmbeddingTable& table, const RowGrads& grads, const AdamHyper& hyper);

/// (1/tau) * <u, v> / (|u| |v|).
double cosine_score(std::span<const double> u, std::span<const double> v, double tau);

struct CosineGrad {
  std::vector<double> grad_u;
  std::vector<double> grad_v;
};

CosineGrad cosine_score_grad(std::span<const double> u, std::span<const double> v, double tau);

/// Accumulating form: out_u += scale * d/du, out_v += scale * d/dv.
/// Returns the score.
double cosine_score_grad_into(std::span<const double> u, std::span<const double> v, double tau,
                              double scale, std::span<double> out_u, std::span<double> out_v);

/// Symmetric-normalized adjacency D^{-1/2} A D^{-1/2} in CSR form.
class NormAdjacency {
 public:
  struct Edge {
    std::size_t row;
    std::size_t col;
    double weight;
  };

  NormAdjacency() = default;

  /// Builds from undirected edges; duplicates collapse and self-loops are
  /// rejected with BadParam.
  static NormAdjacency from_edges(std::size_t node_count,
                                  std::span<const std::pair<std::size_t, std::size_t>> edges);

  /// Users occupy nodes [0, n_users), items [n_users, n_users + n_items).
  static NormAdjacency bipartite(std::size_t n_users, std::size_t n_items,
                                 std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs);

  std::size_t node_count() const { return node_count_; }
  std::size_t nnz() const { return cols_.size(); }
  std::vector<Edge> edges() const;

  /// out = A * in; out must not alias in.
  void multiply(const Matrix& in, Matrix& out) const;

 private:
  std::size_t node_count_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> cols_;
  std::vector<double> weights_;
};

/// Mean of A^l * layer0 over l = 0..layers.
Matrix propagate(const Matrix& layer0, const NormAdjacency& adj, int layers);

/// Adjoint of propagate. A is symmetric, so this is propagate itself.
Matrix propagate_backward(const Matrix& grad_out, const NormAdjacency& adj, int layers);

/// Generator for the named substream of a base seed. Distinct names give
/// independent streams; the same (seed, name) always gives the same stream.
std::mt19937_64 substream(std::uint64_t base_seed, std::string_view name);

}  // namespace advrec

#endif  // ADVREC_NUMKIT_HPP

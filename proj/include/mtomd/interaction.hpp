#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "mtomd/compound.hpp"

namespace mtomd {

/// Weighted undirected task graph: symmetric, nonnegative, zero diagonal.
struct GraphSpec {
  std::size_t n_tasks = 0;
  Mat weights;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;

  /// L^W = diag(W 1) - W.
  Mat laplacian() const;

  /// Clique with every edge weighted 1/N (the graph behind A(b) at b = 1).
  static GraphSpec clique(std::size_t n_tasks, double weight);
};

/// Reads an edge list: one "i j w" per line, 0-based indices, '#' comments.
/// The task count is max index + 1 unless `n_tasks` is given.
GraphSpec load_graph(const std::string& path, std::optional<std::size_t> n_tasks = std::nullopt);

enum class MatrixKind { A, Sqrt, Inv, InvSqrt };

inline constexpr double kMaxCliqueB = 1e12;

/// Symmetric positive definite N x N interaction matrix with its square
/// root, inverse and inverse square root cached at construction. Applied
/// blockwise as (M kron I_d) without forming the Nd x Nd matrix.
class InteractionOperator {
 public:
  /// A(b) = I + b (I - 11^T/N) from closed forms; b is capped at kMaxCliqueB.
  static InteractionOperator clique(std::size_t n_tasks, double b);
  /// A = I + L^W via symmetric eigendecomposition.
  static InteractionOperator laplacian(const GraphSpec& graph);
  /// Any symmetric positive definite matrix.
  static InteractionOperator from_matrix(const Mat& a);
  static InteractionOperator identity(std::size_t n_tasks) { return clique(n_tasks, 0.0); }

  std::size_t n_tasks() const { return static_cast<std::size_t>(a_.rows()); }
  const Mat& matrix(MatrixKind which = MatrixKind::A) const;
  double max_inv_diag() const { return max_inv_diag_; }
  bool closed_form() const { return closed_form_; }
  /// The clique parameter when built by clique().
  std::optional<double> clique_b() const { return b_; }

  const Vec& eigenvalues() const { return eigenvalues_; }
  const Mat& eigenvectors() const { return eigenvectors_; }

  /// Whether A^{-1/2} has nonnegative entries and unit row sums (within
  /// 1e-12 / 1e-10), which the exponentiated-gradient closed form needs.
  bool inv_sqrt_stochastic() const { return inv_sqrt_stochastic_; }
  bool is_identity() const { return is_identity_; }

  CompoundVector apply(MatrixKind which, const CompoundVector& x) const;

 private:
  InteractionOperator() = default;
  void finish();

  Mat a_, sqrt_, inv_, inv_sqrt_;
  Vec eigenvalues_;
  Mat eigenvectors_;
  double max_inv_diag_ = 1.0;
  bool closed_form_ = false;
  bool inv_sqrt_stochastic_ = false;
  bool is_identity_ = false;
  std::optional<double> b_;
};

InteractionOperator clique_operator(std::size_t n_tasks, double b);
InteractionOperator laplacian_operator(const GraphSpec& graph);
CompoundVector apply_block(const InteractionOperator& op, MatrixKind which, const CompoundVector& x);

/// (A(b)^{1/2} X)^(i) = sqrt(1+b) X^(i) + (1 - sqrt(1+b)) mean(X).
CompoundVector sqrt_block_action(double b, const CompoundVector& x);

/// True when every entry is >= -1e-12 and every row sums to 1 within 1e-10.
bool is_row_stochastic(const Mat& m);

}  // namespace mtomd

#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace mtomd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;

/// N stacked task blocks of dimension d.
///
/// Stored as a row-major N x d matrix, so block i occupies the contiguous
/// coordinates [i*d, (i+1)*d) of the flat Nd vector. Acting with (M kron I_d)
/// on the flat vector is then just M * blocks().
class CompoundVector {
 public:
  using Blocks = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  CompoundVector() = default;
  CompoundVector(std::size_t n_tasks, std::size_t dim) : blocks_(Blocks::Zero(n_tasks, dim)) {}
  explicit CompoundVector(Blocks blocks) : blocks_(std::move(blocks)) {}

  /// Every block set to `block`.
  static CompoundVector constant(std::size_t n_tasks, const Vec& block) {
    Blocks b(n_tasks, block.size());
    for (std::size_t i = 0; i < n_tasks; ++i) b.row(i) = block.transpose();
    return CompoundVector(std::move(b));
  }

  std::size_t n_tasks() const { return static_cast<std::size_t>(blocks_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(blocks_.cols()); }

  Vec block(std::size_t i) const { return blocks_.row(i).transpose(); }
  void set_block(std::size_t i, const Vec& v) { blocks_.row(i) = v.transpose(); }

  Blocks& blocks() { return blocks_; }
  const Blocks& blocks() const { return blocks_; }

  Eigen::Map<const Vec> flat() const { return {blocks_.data(), blocks_.size()}; }

  Vec mean() const { return blocks_.colwise().mean().transpose(); }
  double squared_norm() const { return blocks_.squaredNorm(); }

  bool all_finite() const { return blocks_.allFinite(); }

 private:
  Blocks blocks_;
};

}  // namespace mtomd

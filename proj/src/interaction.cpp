#include "mtomd/interaction.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtomd/errors.hpp"

namespace mtomd {

void GraphSpec::validate() const {
  const auto n = static_cast<Eigen::Index>(n_tasks);
  if (n_tasks == 0) throw std::invalid_argument("graph needs at least one task");
  if (weights.rows() != n || weights.cols() != n) throw std::invalid_argument("graph weights must be N x N");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (weights(i, i) != 0.0) throw std::invalid_argument("graph weights need a zero diagonal");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!std::isfinite(weights(i, j)) || weights(i, j) < 0.0)
        throw std::invalid_argument("graph weights must be finite and nonnegative");
      if (weights(i, j) != weights(j, i)) throw std::invalid_argument("graph weights must be symmetric");
    }
  }
}

Mat GraphSpec::laplacian() const {
  Mat l = -weights;
  l.diagonal() = weights.rowwise().sum();
  return l;
}

GraphSpec GraphSpec::clique(std::size_t n_tasks, double weight) {
  const auto n = static_cast<Eigen::Index>(n_tasks);
  Mat w = Mat::Constant(n, n, weight);
  w.diagonal().setZero();
  return {n_tasks, w};
}

GraphSpec load_graph(const std::string& path, std::optional<std::size_t> n_tasks) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open graph file '" + path + "'");

  struct Edge {
    std::size_t i, j;
    double w;
  };
  std::vector<Edge> edges;
  std::size_t max_index = 0;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    long long i = 0, j = 0;
    double w = 0.0;
    if (!(ss >> i)) continue;  // blank line
    std::string rest;
    if (!(ss >> j >> w) || (ss >> rest))
      throw config_error(path + ":" + std::to_string(lineno) + ": expected 'i j w'");
    if (i < 0 || j < 0) throw config_error(path + ":" + std::to_string(lineno) + ": negative task index");
    if (i == j) throw config_error(path + ":" + std::to_string(lineno) + ": self-loop");
    if (!std::isfinite(w) || w < 0.0)
      throw config_error(path + ":" + std::to_string(lineno) + ": weight must be finite and nonnegative");
    edges.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), w});
    max_index = std::max({max_index, edges.back().i, edges.back().j});
  }

  const std::size_t n = n_tasks ? *n_tasks : (edges.empty() ? 0 : max_index + 1);
  if (n == 0) throw config_error("graph file '" + path + "' has no edges and no task count was given");
  if (!edges.empty() && max_index >= n)
    throw config_error("graph file '" + path + "' references task " + std::to_string(max_index) +
                       " but only " + std::to_string(n) + " tasks exist");

  GraphSpec g{n, Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))};
  for (const auto& e : edges) {
    const auto a = static_cast<Eigen::Index>(e.i), b = static_cast<Eigen::Index>(e.j);
    if (g.weights(a, b) != 0.0)
      throw config_error("graph file '" + path + "' lists edge " + std::to_string(e.i) + "-" +
                         std::to_string(e.j) + " twice");
    g.weights(a, b) = e.w;
    g.weights(b, a) = e.w;
  }
  return g;
}

bool is_row_stochastic(const Mat& m) {
  if (m.size() == 0) return false;
  if (m.minCoeff() < -1e-12) return false;
  return ((m.rowwise().sum().array() - 1.0).abs() <= 1e-10).all();
}

InteractionOperator InteractionOperator::clique(std::size_t n_tasks, double b) {
  if (n_tasks == 0) throw std::invalid_argument("clique operator needs N >= 1");
  if (!(b >= 0.0)) throw std::invalid_argument("clique operator needs b >= 0");
  b = std::min(b, kMaxCliqueB);

  const auto n = static_cast<Eigen::Index>(n_tasks);
  const double nd = static_cast<double>(n_tasks);
  const Mat eye = Mat::Identity(n, n);
  const Mat avg = Mat::Constant(n, n, 1.0 / nd);  // 11^T / N
  const double r = std::sqrt(1.0 + b);

  InteractionOperator op;
  op.a_ = (1.0 + b) * eye - b * avg;
  op.sqrt_ = r * eye + (1.0 - r) * avg;
  op.inv_ = eye / (1.0 + b) + (b / (1.0 + b)) * avg;
  op.inv_sqrt_ = eye / r + (1.0 - 1.0 / r) * avg;
  op.max_inv_diag_ = (b + nd) / ((1.0 + b) * nd);
  op.closed_form_ = true;
  op.b_ = b;

  // Spectrum: 1 on span(1), 1 + b on its complement.
  Eigen::SelfAdjointEigenSolver<Mat> es(op.a_);
  op.eigenvalues_ = es.eigenvalues();
  op.eigenvectors_ = es.eigenvectors();
  op.finish();
  return op;
}

InteractionOperator InteractionOperator::from_matrix(const Mat& a) {
  if (a.rows() == 0 || a.rows() != a.cols()) throw std::invalid_argument("interaction matrix must be square");
  if (!a.allFinite()) throw std::invalid_argument("interaction matrix has non-finite entries");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("interaction matrix must be symmetric");

  const Mat sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition of interaction matrix failed");
  const Vec& lam = es.eigenvalues();
  if (lam.minCoeff() < 1e-12) throw std::invalid_argument("interaction matrix is not positive definite");

  const Mat& q = es.eigenvectors();
  InteractionOperator op;
  op.a_ = sym;
  op.sqrt_ = q * lam.cwiseSqrt().asDiagonal() * q.transpose();
  op.inv_ = q * lam.cwiseInverse().asDiagonal() * q.transpose();
  op.inv_sqrt_ = q * lam.cwiseSqrt().cwiseInverse().asDiagonal() * q.transpose();
  op.max_inv_diag_ = op.inv_.diagonal().maxCoeff();
  op.eigenvalues_ = lam;
  op.eigenvectors_ = q;
  op.finish();
  return op;
}

InteractionOperator InteractionOperator::laplacian(const GraphSpec& graph) {
  graph.validate();
  const auto n = static_cast<Eigen::Index>(graph.n_tasks);
  const Mat a = Mat::Identity(n, n) + graph.laplacian();

  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition of I + L failed");
  if (es.eigenvalues().minCoeff() < 1.0 - 1e-8)
    throw std::runtime_error("I + L has an eigenvalue below 1: corrupted Laplacian");

  InteractionOperator op = from_matrix(a);
  if (!is_row_stochastic(op.inv_) || !op.inv_sqrt_stochastic_)
    throw std::runtime_error("inverse (square root) of I + L is not stochastic; weights too ill-conditioned");
  return op;
}

void InteractionOperator::finish() {
  inv_sqrt_stochastic_ = is_row_stochastic(inv_sqrt_);
  is_identity_ = a_.isIdentity(0.0);
}

const Mat& InteractionOperator::matrix(MatrixKind which) const {
  switch (which) {
    case MatrixKind::A:
      return a_;
    case MatrixKind::Sqrt:
      return sqrt_;
    case MatrixKind::Inv:
      return inv_;
    case MatrixKind::InvSqrt:
      return inv_sqrt_;
  }
  return a_;
}

CompoundVector InteractionOperator::apply(MatrixKind which, const CompoundVector& x) const {
  if (x.n_tasks() != n_tasks())
    throw std::invalid_argument("apply_block: compound vector has " + std::to_string(x.n_tasks()) +
                                " blocks, operator has " + std::to_string(n_tasks()));
  return CompoundVector(CompoundVector::Blocks(matrix(which) * x.blocks()));
}

InteractionOperator clique_operator(std::size_t n_tasks, double b) { return InteractionOperator::clique(n_tasks, b); }

InteractionOperator laplacian_operator(const GraphSpec& graph) { return InteractionOperator::laplacian(graph); }

CompoundVector apply_block(const InteractionOperator& op, MatrixKind which, const CompoundVector& x) {
  return op.apply(which, x);
}

CompoundVector sqrt_block_action(double b, const CompoundVector& x) {
  if (!(b >= 0.0)) throw std::invalid_argument("sqrt_block_action needs b >= 0");
  const double r = std::sqrt(1.0 + std::min(b, kMaxCliqueB));
  const Eigen::RowVectorXd mean = x.blocks().colwise().mean();
  CompoundVector::Blocks out = r * x.blocks();
  out.rowwise() += (1.0 - r) * mean;
  return CompoundVector(std::move(out));
}

}  // namespace mtomd

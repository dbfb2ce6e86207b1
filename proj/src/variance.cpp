#include "mtomd/variance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mtomd {

void VarianceSpec::validate() const {
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw std::invalid_argument("sigma must lie in [0, 1]");
  if (kind != Kind::Simplex && !(diameter > 0.0)) throw std::invalid_argument("diameter must be positive");
  if (kind == Kind::LocalNorm) graph.validate();
}

double norm_variance(const CompoundVector& u, const NormTag& norm) {
  const std::size_t n = u.n_tasks();
  if (n < 2) return 0.0;
  const Vec mean = u.mean();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = mtomd::norm(u.block(i) - mean, norm);
    s += d * d;
  }
  return s / static_cast<double>(n - 1);
}

namespace {

void require_simplex_blocks(const CompoundVector& u) {
  for (std::size_t i = 0; i < u.n_tasks(); ++i)
    if (!on_simplex(u.block(i))) throw std::domain_error("simplex variance: block " + std::to_string(i) + " is off the simplex");
}

double relative_range_sq(double hi, double lo) {
  if (hi <= 0.0) return 0.0;  // 0/0 = 0; hi < 0 only from round-off
  const double r = (hi - std::max(lo, 0.0)) / hi;
  return r * r;
}

}  // namespace

double simplex_variance(const CompoundVector& u) {
  require_simplex_blocks(u);
  const auto& b = u.blocks();
  double v = 0.0;
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    v = std::max(v, relative_range_sq(b.col(j).maxCoeff(), b.col(j).minCoeff()));
  return v;
}

double local_norm_variance(const CompoundVector& u, const GraphSpec& graph, const NormTag& norm) {
  graph.validate();
  if (graph.n_tasks != u.n_tasks()) throw std::invalid_argument("local variance: graph and compound sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < u.n_tasks(); ++i)
    for (std::size_t j = i + 1; j < u.n_tasks(); ++j) {
      const double w = graph.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (w == 0.0) continue;
      const double d = mtomd::norm(u.block(i) - u.block(j), norm);
      s += w * d * d;
    }
  return s;
}

double local_simplex_variance(const CompoundVector& u, const GraphSpec& graph) {
  graph.validate();
  if (graph.n_tasks != u.n_tasks()) throw std::invalid_argument("local variance: graph and compound sizes differ");
  require_simplex_blocks(u);
  const auto& b = u.blocks();
  double v = 0.0;
  for (Eigen::Index i = 0; i < b.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double hi = b(i, j), lo = b(i, j);
      for (Eigen::Index k = 0; k < b.rows(); ++k) {
        if (graph.weights(i, k) <= 0.0) continue;
        hi = std::max(hi, b(k, j));
        lo = std::min(lo, b(k, j));
      }
      v = std::max(v, relative_range_sq(hi, lo));
    }
  return v;
}

double admissible_b_simplex(double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be nonnegative");
  if (sigma > 1.0) throw std::invalid_argument("sigma must not exceed 1");
  if (sigma < 1e-6) return kMaxCliqueB;
  return std::min((1.0 - sigma * sigma) / (sigma * sigma), kMaxCliqueB);
}

bool in_comparator_set(const CompoundVector& u, const VarianceSpec& spec) {
  constexpr double slack = 1e-12;
  const double s2 = spec.sigma * spec.sigma;
  switch (spec.kind) {
    case VarianceSpec::Kind::Norm:
      return norm_variance(u, spec.norm) <= s2 * spec.diameter * spec.diameter + slack;
    case VarianceSpec::Kind::Simplex:
      return simplex_variance(u) <= s2 + slack;
    case VarianceSpec::Kind::LocalNorm: {
      const double n1 = u.n_tasks() > 1 ? static_cast<double>(u.n_tasks() - 1) : 0.0;
      return local_norm_variance(u, spec.graph, spec.norm) <= n1 * s2 * spec.diameter * spec.diameter + slack;
    }
  }
  return false;
}

}  // namespace mtomd

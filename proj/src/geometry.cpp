#include "mtomd/geometry.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mtomd {

NormTag NormTag::lp(double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("lp norm requires p >= 1, got " + std::to_string(p));
  return {Kind::Lp, p};
}

bool operator==(const NormTag& a, const NormTag& b) {
  if (a.kind != b.kind) return false;
  return a.kind != NormTag::Kind::Lp || a.p == b.p;
}

double norm(VecRef x, const NormTag& tag) {
  switch (tag.kind) {
    case NormTag::Kind::L1:
      return x.lpNorm<1>();
    case NormTag::Kind::L2:
      return x.norm();
    case NormTag::Kind::Linf:
      return x.size() == 0 ? 0.0 : x.lpNorm<Eigen::Infinity>();
    case NormTag::Kind::Lp: {
      if (tag.p < 1.0) throw std::invalid_argument("lp norm requires p >= 1");
      // Scale by the max entry so large p does not overflow.
      const double m = x.size() == 0 ? 0.0 : x.lpNorm<Eigen::Infinity>();
      if (m == 0.0) return 0.0;
      double s = 0.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) s += std::pow(std::abs(x[j]) / m, tag.p);
      return m * std::pow(s, 1.0 / tag.p);
    }
  }
  return 0.0;
}

NormTag dual_norm_tag(const NormTag& tag) {
  switch (tag.kind) {
    case NormTag::Kind::L1:
      return NormTag::linf();
    case NormTag::Kind::L2:
      return NormTag::l2();
    case NormTag::Kind::Linf:
      return NormTag::l1();
    case NormTag::Kind::Lp:
      if (tag.p == 1.0) return NormTag::linf();
      return NormTag::lp(tag.p / (tag.p - 1.0));
  }
  return tag;
}

Regularizer Regularizer::euclidean() {
  return {RegularizerKind::Euclidean, 2.0, 1.0, NormTag::l2(), NormTag::l2(), Domain::AllSpace};
}

Regularizer Regularizer::pnorm(double p) {
  if (!(p > 1.0 && p <= 2.0))
    throw std::invalid_argument("p-norm regularizer requires 1 < p <= 2, got " + std::to_string(p));
  const NormTag primal = NormTag::lp(p);
  return {RegularizerKind::PNorm, p, p - 1.0, primal, dual_norm_tag(primal), Domain::AllSpace};
}

Regularizer Regularizer::neg_entropy() {
  return {RegularizerKind::NegEntropy, 1.0, 1.0, NormTag::l1(), NormTag::linf(), Domain::Simplex};
}

bool on_simplex(VecRef x, double sum_tol) {
  if (x.size() == 0 || !x.allFinite()) return false;
  if (x.minCoeff() < -kSimplexEntryTol) return false;
  return std::abs(x.sum() - 1.0) <= sum_tol;
}

Vec clamp_interior(VecRef x) {
  Vec y = x.cwiseMax(kEntropyFloor);
  return y / y.sum();
}

void check_domain(const Regularizer& reg, VecRef x) {
  if (!x.allFinite()) throw std::domain_error("non-finite entries in regularizer argument");
  if (reg.domain == Domain::Simplex && !on_simplex(x))
    throw std::domain_error("point is not on the probability simplex (sum " + std::to_string(x.sum()) + ")");
}

namespace {

// x ln x with 0 ln 0 = 0; negative round-off entries count as zero.
double xlogx(double v) { return v <= 0.0 ? 0.0 : v * std::log(v); }

}  // namespace

double psi_value(const Regularizer& reg, VecRef x) {
  check_domain(reg, x);
  switch (reg.kind) {
    case RegularizerKind::Euclidean:
      return 0.5 * x.squaredNorm();
    case RegularizerKind::PNorm: {
      const double n = norm(x, reg.primal_norm);
      return 0.5 * n * n;
    }
    case RegularizerKind::NegEntropy: {
      double s = 0.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) s += xlogx(x[j]);
      return s;
    }
  }
  return 0.0;
}

Vec mirror_grad(const Regularizer& reg, VecRef x) {
  check_domain(reg, x);
  switch (reg.kind) {
    case RegularizerKind::Euclidean:
      return x;
    case RegularizerKind::PNorm: {
      const double n = norm(x, reg.primal_norm);
      if (n == 0.0) return Vec::Zero(x.size());
      const double scale = std::pow(n, 2.0 - reg.p);
      Vec g(x.size());
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double a = std::abs(x[j]);
        g[j] = a == 0.0 ? 0.0 : std::copysign(std::pow(a, reg.p - 1.0), x[j]) * scale;
      }
      return g;
    }
    case RegularizerKind::NegEntropy: {
      const Vec c = clamp_interior(x);
      return (c.array().log() + 1.0).matrix();
    }
  }
  return x;
}

double bregman(const Regularizer& reg, VecRef x, VecRef y) {
  if (x.size() != y.size()) throw std::invalid_argument("bregman: dimension mismatch");
  check_domain(reg, x);
  check_domain(reg, y);
  switch (reg.kind) {
    case RegularizerKind::Euclidean:
      return 0.5 * (x - y).squaredNorm();
    case RegularizerKind::PNorm:
      return psi_value(reg, x) - psi_value(reg, y) - mirror_grad(reg, y).dot(x - y);
    case RegularizerKind::NegEntropy: {
      // Generalized KL, written directly to avoid cancellation in psi(x) - psi(y).
      const Vec yc = clamp_interior(y);
      double s = 0.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double xj = x[j] <= 0.0 ? 0.0 : x[j];
        s += (xj > 0.0 ? xj * std::log(xj / yc[j]) : 0.0) - xj + yc[j];
      }
      return s;
    }
  }
  return 0.0;
}

double compound_bregman(const Regularizer& reg, const CompoundVector& x, const CompoundVector& y) {
  if (x.n_tasks() != y.n_tasks() || x.dim() != y.dim())
    throw std::invalid_argument("compound_bregman: block dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < x.n_tasks(); ++i) s += bregman(reg, x.block(i), y.block(i));
  return s;
}

}  // namespace mtomd

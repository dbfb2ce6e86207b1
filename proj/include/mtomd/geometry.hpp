#pragma once

#include "mtomd/compound.hpp"

namespace mtomd {

/// A vector norm: l1, l2, l-infinity or a general lp with p >= 1.
struct NormTag {
  enum class Kind { L1, L2, Linf, Lp };

  Kind kind = Kind::L2;
  double p = 2.0;  // only read for Kind::Lp

  static NormTag l1() { return {Kind::L1, 1.0}; }
  static NormTag l2() { return {Kind::L2, 2.0}; }
  static NormTag linf() { return {Kind::Linf, 0.0}; }
  /// Throws std::invalid_argument for p < 1.
  static NormTag lp(double p);

  friend bool operator==(const NormTag& a, const NormTag& b);
};

double norm(VecRef x, const NormTag& tag);

/// l2 -> l2, l1 <-> linf, lp -> lq with 1/p + 1/q = 1.
NormTag dual_norm_tag(const NormTag& tag);

enum class RegularizerKind { Euclidean, PNorm, NegEntropy };
enum class Domain { AllSpace, Simplex };

/// Mirror geometry: the base function psi together with the norm it is
/// strongly convex in, its modulus lambda and the dual norm used to measure
/// gradients.
struct Regularizer {
  RegularizerKind kind = RegularizerKind::Euclidean;
  double p = 2.0;
  double lambda = 1.0;
  NormTag primal_norm = NormTag::l2();
  NormTag dual_norm = NormTag::l2();
  Domain domain = Domain::AllSpace;

  /// psi = 1/2 ||x||_2^2.
  static Regularizer euclidean();
  /// psi = 1/2 ||x||_p^2 for 1 < p <= 2, (p-1)-strongly convex in lp.
  static Regularizer pnorm(double p);
  /// psi = sum_j x_j ln x_j on the simplex, 1-strongly convex in l1.
  static Regularizer neg_entropy();
};

inline constexpr double kSimplexSumTol = 1e-9;
inline constexpr double kSimplexEntryTol = 1e-12;
inline constexpr double kEntropyFloor = 1e-300;

/// Coordinate sum within kSimplexSumTol of 1, entries >= -kSimplexEntryTol.
bool on_simplex(VecRef x, double sum_tol = kSimplexSumTol);

/// Floors entries at kEntropyFloor, then renormalizes to unit sum.
Vec clamp_interior(VecRef x);

/// Throws std::domain_error if x is outside reg.domain.
void check_domain(const Regularizer& reg, VecRef x);

double psi_value(const Regularizer& reg, VecRef x);
Vec mirror_grad(const Regularizer& reg, VecRef x);
double bregman(const Regularizer& reg, VecRef x, VecRef y);

/// Sum over blocks of B_psi(X^(i), Y^(i)).
double compound_bregman(const Regularizer& reg, const CompoundVector& x, const CompoundVector& y);

}  // namespace mtomd

#pragma once

#include "mtomd/compound.hpp"
#include "mtomd/geometry.hpp"
#include "mtomd/interaction.hpp"

namespace mtomd {

/// Which task-dispersion measure defines the comparator set, with its
/// radius sigma in [0, 1] and the diameter D of V in the chosen norm.
struct VarianceSpec {
  enum class Kind { Norm, Simplex, LocalNorm };

  Kind kind = Kind::Norm;
  NormTag norm = NormTag::l2();
  GraphSpec graph;  // LocalNorm only
  double sigma = 1.0;
  double diameter = 1.0;

  void validate() const;
};

/// 1/(N-1) sum_i ||U^(i) - mean(U)||^2; zero when N = 1.
double norm_variance(const CompoundVector& u, const NormTag& norm);

/// max_j ((max_i U^(i)_j - min_i U^(i)_j) / max_i U^(i)_j)^2 with 0/0 = 0.
/// Every block must lie on the simplex.
double simplex_variance(const CompoundVector& u);

/// Sum over unordered pairs i < j of W_ij ||U^(i) - U^(j)||^2, which is
/// u^T (L^W kron I) u for the l2 norm.
double local_norm_variance(const CompoundVector& u, const GraphSpec& graph, const NormTag& norm);

/// Neighbourhood version of simplex_variance: for each task i the max/min run
/// over i and its neighbours (W_ik > 0).
double local_simplex_variance(const CompoundVector& u, const GraphSpec& graph);

/// Largest b keeping A(b)^{1/2} u on the simplex for all u with simplex
/// variance <= sigma^2: (1 - sigma^2) / sigma^2, capped at kMaxCliqueB.
double admissible_b_simplex(double sigma);

/// Membership in the small-variance comparator set, inclusive with 1e-12 slack.
/// Norm kinds compare against sigma^2 D^2; LocalNorm against (N-1) sigma^2 D^2,
/// which coincides with the global set on the 1/N-weighted clique.
bool in_comparator_set(const CompoundVector& u, const VarianceSpec& spec);

}  // namespace mtomd

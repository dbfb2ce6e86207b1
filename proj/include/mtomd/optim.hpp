#pragma once

#include <cstddef>
#include <functional>

#include "mtomd/compound.hpp"
#include "mtomd/geometry.hpp"

namespace mtomd {

/// Euclidean projection onto the probability simplex (sort-based).
Vec project_simplex(VecRef v);

/// Euclidean projection onto {x : ||x|| <= radius} for l1, l2 and linf.
/// General lp balls have no closed form and throw std::invalid_argument.
Vec project_norm_ball(VecRef v, const NormTag& norm, double radius);

/// Euclidean projection onto the ellipsoid {x : x^T Q diag(lam) Q^T x <= r^2},
/// applied to an N x d block matrix (the quadratic form acts across rows).
CompoundVector::Blocks project_ellipsoid(const CompoundVector::Blocks& v, const Mat& eigenvectors,
                                         const Vec& eigenvalues, double radius);

struct SpgOptions {
  double tolerance = 1e-8;
  std::size_t max_iterations = 10000;
  std::size_t memory = 10;  // nonmonotone line-search window
};

struct SpgResult {
  Vec x;
  double value = 0.0;
  double residual = 0.0;  // ||P(x - grad f(x)) - x||_2 at the returned point
  std::size_t iterations = 0;
  bool converged = false;
};

/// Objective returning f(x) and writing grad f(x); +infinity marks points
/// outside the objective's domain.
using Objective = std::function<double(const Vec& x, Vec& grad)>;
using Projector = std::function<Vec(const Vec& x)>;

/// Spectral projected gradient with a nonmonotone Armijo line search
/// (Birgin, Martinez and Raydan). Stops when the unit-step gradient mapping
/// drops below the tolerance or at the iteration cap.
SpgResult minimize_spg(const Objective& f, const Projector& project, Vec x0, const SpgOptions& opts = {});

}  // namespace mtomd

#include "mtomd/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace mtomd {

Vec project_simplex(VecRef v) {
  const Eigen::Index d = v.size();
  if (d == 0) throw std::invalid_argument("project_simplex: empty vector");
  Vec u = v;
  std::sort(u.data(), u.data() + d, std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

Vec project_norm_ball(VecRef v, const NormTag& norm, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("projection radius must be positive");
  switch (norm.kind) {
    case NormTag::Kind::L2: {
      const double n = v.norm();
      return n <= radius ? Vec(v) : Vec(v * (radius / n));
    }
    case NormTag::Kind::Linf:
      return v.cwiseMax(-radius).cwiseMin(radius);
    case NormTag::Kind::L1: {
      if (v.lpNorm<1>() <= radius) return v;
      const Vec a = project_simplex(v.cwiseAbs() / radius) * radius;
      return a.cwiseProduct(v.unaryExpr([](double t) { return t < 0.0 ? -1.0 : 1.0; }));
    }
    case NormTag::Kind::Lp:
      if (norm.p == 2.0) return project_norm_ball(v, NormTag::l2(), radius);
      if (norm.p == 1.0) return project_norm_ball(v, NormTag::l1(), radius);
      break;
  }
  throw std::invalid_argument("no closed-form projection onto a general lp ball");
}

CompoundVector::Blocks project_ellipsoid(const CompoundVector::Blocks& v, const Mat& eigenvectors,
                                         const Vec& eigenvalues, double radius) {
  const Mat vh = eigenvectors.transpose() * v;  // rows in the eigenbasis
  const Vec w = vh.rowwise().squaredNorm();
  const double r2 = radius * radius;
  auto phi = [&](double mu, double* dphi) {
    double s = 0.0, ds = 0.0;
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      const double den = 1.0 + mu * eigenvalues[k];
      s += eigenvalues[k] * w[k] / (den * den);
      ds -= 2.0 * eigenvalues[k] * eigenvalues[k] * w[k] / (den * den * den);
    }
    if (dphi) *dphi = ds;
    return s;
  };
  if (phi(0.0, nullptr) <= r2) return v;

  // phi is convex and decreasing, so Newton from mu = 0 approaches the root
  // from the left without overshooting.
  double mu = 0.0;
  for (int it = 0; it < 200; ++it) {
    double dphi = 0.0;
    const double val = phi(mu, &dphi) - r2;
    if (val <= r2 * 1e-15 || dphi == 0.0) break;
    const double next = mu - val / dphi;
    if (!(next > mu)) break;
    mu = next;
  }
  Mat xh = vh;
  for (Eigen::Index k = 0; k < xh.rows(); ++k) xh.row(k) /= 1.0 + mu * eigenvalues[k];
  CompoundVector::Blocks x = eigenvectors * xh;
  // Absorb the residual of the root finding so the result is feasible.
  const double q = phi(mu, nullptr);
  if (q > r2) x *= std::sqrt(r2 / q);
  return x;
}

SpgResult minimize_spg(const Objective& f, const Projector& project, Vec x0, const SpgOptions& opts) {
  constexpr double alpha_min = 1e-30, alpha_max = 1e30, armijo = 1e-4;
  auto finite_or_inf = [](double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::infinity(); };

  SpgResult res;
  Vec x = project(x0);
  Vec g(x.size());
  double fx = finite_or_inf(f(x, g));
  if (!std::isfinite(fx)) throw std::invalid_argument("spg: starting point outside the objective's domain");

  Vec pg = project(x - g) - x;
  double alpha = std::clamp(1.0 / std::max(pg.lpNorm<Eigen::Infinity>(), 1e-300), alpha_min, alpha_max);
  std::deque<double> history{fx};
  Vec xn(x.size()), gn(x.size());

  std::size_t k = 0;
  for (; k < opts.max_iterations; ++k) {
    res.residual = pg.norm();
    if (res.residual <= opts.tolerance) {
      res.converged = true;
      break;
    }
    const Vec d = project(x - alpha * g) - x;
    const double gd = g.dot(d);
    const double fmax = *std::max_element(history.begin(), history.end());

    double lambda = 1.0, fn = 0.0;
    for (;;) {
      xn = x + lambda * d;
      fn = finite_or_inf(f(xn, gn));
      if (fn <= fmax + armijo * lambda * gd) break;
      double trial = 0.5 * lambda;
      if (std::isfinite(fn)) {
        const double denom = 2.0 * (fn - fx - lambda * gd);
        if (denom > 0.0) {
          const double q = -gd * lambda * lambda / denom;
          if (q >= 0.1 * lambda && q <= 0.9 * lambda) trial = q;
        }
      }
      lambda = trial;
      if (lambda < 1e-30) break;
    }
    if (lambda < 1e-30) break;  // no progress possible at this precision

    const Vec s = xn - x;
    const Vec y = gn - g;
    const double sy = s.dot(y);
    alpha = sy <= 0.0 ? alpha_max : std::clamp(s.squaredNorm() / sy, alpha_min, alpha_max);
    x.swap(xn);
    g.swap(gn);
    fx = fn;
    history.push_back(fx);
    if (history.size() > opts.memory) history.pop_front();
    pg = project(x - g) - x;
  }
  if (!res.converged) {
    res.residual = pg.norm();
    res.converged = res.residual <= opts.tolerance;
  }
  res.x = std::move(x);
  res.value = fx;
  res.iterations = k;
  return res;
}

}  // namespace mtomd

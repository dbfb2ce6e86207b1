#include "mtomd/selftest.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mtomd/environment.hpp"
#include "mtomd/geometry.hpp"
#include "mtomd/interaction.hpp"
#include "mtomd/learners.hpp"
#include "mtomd/variance.hpp"

namespace mtomd {

namespace {

double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

bool clique_closed_forms() {
  for (std::size_t n : {1, 2, 4, 8}) {
    for (double b : {0.0, 0.5, 1.0, static_cast<double>(n), 10.0 * n}) {
      const auto op = InteractionOperator::clique(n, b);
      Eigen::SelfAdjointEigenSolver<Mat> es(op.matrix());
      const Mat& q = es.eigenvectors();
      const Vec& l = es.eigenvalues();
      if (max_abs(op.matrix(MatrixKind::Sqrt) - q * l.cwiseSqrt().asDiagonal() * q.transpose()) > 1e-9) return false;
      if (max_abs(op.matrix(MatrixKind::Inv) - q * l.cwiseInverse().asDiagonal() * q.transpose()) > 1e-9) return false;
      const Mat inv = q * l.cwiseInverse().asDiagonal() * q.transpose();
      if (std::abs(op.max_inv_diag() - inv.diagonal().maxCoeff()) > 1e-9) return false;
    }
  }
  return true;
}

bool laplacian_stochastic() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> w(0.0, 2.0), coin(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = 2 + k % 8;
    GraphSpec g{n, Mat::Zero(n, n)};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (coin(rng) < 0.5) g.weights(i, j) = g.weights(j, i) = w(rng);
    const auto op = InteractionOperator::laplacian(g);
    if (!is_row_stochastic(op.matrix(MatrixKind::Inv)) || !is_row_stochastic(op.matrix(MatrixKind::InvSqrt)))
      return false;
  }
  return true;
}

bool bregman_identity() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> ub(0.0, 20.0);
  const Regularizer reg = Regularizer::euclidean();
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 2 + k % 6, d = 1 + k % 4;
    CompoundVector u(n, d);
    for (Eigen::Index i = 0; i < u.blocks().size(); ++i) u.blocks().data()[i] = z(rng);
    const double b = ub(rng);
    const auto op = InteractionOperator::clique(n, b);
    const double lhs = 2.0 * compound_bregman(reg, op.apply(MatrixKind::Sqrt, u), CompoundVector(n, d));
    const double rhs = u.squared_norm() + b * (n - 1.0) * norm_variance(u, NormTag::l2());
    if (std::abs(lhs - rhs) > 1e-10 * std::abs(rhs)) return false;
  }
  return true;
}

bool identity_equivalence() {
  const std::size_t n = 3, d = 4;
  const auto sched = make_schedule(ScheduleSpec::round_robin(), 300, n);
  const Stream s = make_synthetic({n, d, 0.5, 0.09, 0.1, 3, 1.0}, sched);

  LearnerConfig mt;
  mt.op = InteractionOperator::clique(n, 0.0);
  mt.feasible = FeasibleSet::norm_ball(NormTag::l2(), 1.0);
  mt.rate = RateSchedule::constant(0.1);
  Learner joint(mt, d);
  std::vector<Learner> single;
  LearnerConfig one = mt;
  one.op = InteractionOperator::identity(1);
  for (std::size_t i = 0; i < n; ++i) single.emplace_back(one, d);

  for (const auto& r : s.rounds) {
    const Vec w = joint.predict(r.active_task);
    const Vec v = single[r.active_task].predict(0);
    if ((w - v).cwiseAbs().maxCoeff() > 1e-12) return false;
    joint.update(r.active_task, loss_subgradient(r.loss, w));
    single[r.active_task].update(0, loss_subgradient(r.loss, v));
  }
  return true;
}

bool generic_agreement() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  const std::size_t n = 3, d = 3;
  for (int k = 0; k < 10; ++k) {
    LearnerConfig c;
    const double b = 0.5 + k;
    c.op = InteractionOperator::clique(n, b);
    c.feasible = FeasibleSet::mahalanobis_ball(b, 0.5, n, 1.0);
    c.rate = RateSchedule::constant(0.3);
    CompoundVector x(n, d);
    for (Eigen::Index i = 0; i < x.blocks().size(); ++i) x.blocks().data()[i] = 0.3 * z(rng) / std::sqrt(1.0 + b);
    const LearnerState s = initial_state(c, d, x);
    Vec g(d);
    for (Eigen::Index j = 0; j < g.size(); ++j) g[j] = z(rng);
    const auto a = step_ogd(s, c, k % n, g);
    const auto e = step_generic(s, c, k % n, g);
    if ((iterate(a, c.op).blocks() - iterate(e, c.op).blocks()).cwiseAbs().maxCoeff() > 1e-6) return false;
  }
  return true;
}

bool gradients() {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  const double h = 1e-6;
  auto check = [&](const std::function<double(const Vec&)>& f, const Vec& grad, const Vec& x) {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Vec a = x, b = x;
      a[j] += h;
      b[j] -= h;
      const double fd = (f(a) - f(b)) / (2.0 * h);
      if (std::abs(fd - grad[j]) > 1e-6 * std::max(1.0, std::abs(grad[j]))) return false;
    }
    return true;
  };
  for (int k = 0; k < 50; ++k) {
    Vec x(4), w(4);
    for (Eigen::Index j = 0; j < 4; ++j) {
      x[j] = u(rng);
      w[j] = u(rng);
    }
    for (LossKind kind : {LossKind::Square, LossKind::Logistic, LossKind::LogWealth, LossKind::Linear}) {
      const LossInstance inst{kind, x, kind == LossKind::Logistic ? -1.0 : 0.7};
      if (!check([&](const Vec& v) { return loss_value(inst, v); }, loss_subgradient(inst, w), w)) return false;
    }
    for (const Regularizer& reg : {Regularizer::euclidean(), Regularizer::pnorm(1.5)}) {
      if (!check([&](const Vec& v) { return psi_value(reg, v); }, mirror_grad(reg, w), w)) return false;
    }
  }
  return true;
}

}  // namespace

int run_selftest(std::ostream& out) {
  const std::vector<std::pair<std::string, std::function<bool()>>> checks = {
      {"clique closed forms match eigendecomposition", clique_closed_forms},
      {"Laplacian inverses are row-stochastic", laplacian_stochastic},
      {"Bregman identity for A(b)", bregman_identity},
      {"A = I reduces to independent learners", identity_equivalence},
      {"generic solver agrees with closed-form OGD", generic_agreement},
      {"gradients match finite differences", gradients},
  };
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    bool ok = false;
    std::string detail;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      detail = std::string(" (") + e.what() + ")";
    }
    out << (ok ? "PASS " : "FAIL ") << name << detail << '\n';
    failed += ok ? 0 : 1;
  }
  return failed;
}

}  // namespace mtomd

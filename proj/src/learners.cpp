#include "mtomd/learners.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mtomd/errors.hpp"

namespace mtomd {

FeasibleSet FeasibleSet::norm_ball(const NormTag& norm, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("norm ball radius must be positive");
  return {Kind::NormBall, norm, radius};
}

FeasibleSet FeasibleSet::simplex() { return {Kind::Simplex, NormTag::l1(), 1.0}; }

FeasibleSet FeasibleSet::mahalanobis_ball(double b, double sigma, std::size_t n_tasks, double diameter) {
  if (!(diameter > 0.0) || n_tasks == 0 || !(b >= 0.0) || !(sigma >= 0.0))
    throw std::invalid_argument("Mahalanobis ball needs D > 0, N >= 1, b >= 0, sigma >= 0");
  const double r2 = (1.0 + b * sigma * sigma) * static_cast<double>(n_tasks) * diameter * diameter;
  return {Kind::MahalanobisBall, NormTag::l2(), std::sqrt(r2)};
}

RateSchedule RateSchedule::constant(double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("learning rate must be positive");
  RateSchedule s;
  s.kind = Kind::Constant;
  s.eta = eta;
  return s;
}

RateSchedule RateSchedule::adaptive(double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("adaptive scale must be positive");
  RateSchedule s;
  s.kind = Kind::Adaptive;
  s.scale = scale;
  return s;
}

std::optional<double> RateSchedule::observe(double dual_grad_sq) {
  if (kind == Kind::Adaptive) {
    accumulated_sq_dual_grad += dual_grad_sq;
    if (accumulated_sq_dual_grad <= 0.0) return std::nullopt;
    return scale / std::sqrt(accumulated_sq_dual_grad);
  }
  if (running_lipschitz) {
    lipschitz_seen = std::max(lipschitz_seen, std::sqrt(dual_grad_sq));
    if (lipschitz_seen <= 0.0) return std::nullopt;
    return eta / lipschitz_seen;
  }
  return eta;
}

void LearnerConfig::validate() const {
  if (regularizer.kind == RegularizerKind::NegEntropy && feasible.kind != FeasibleSet::Kind::Simplex)
    throw std::invalid_argument("negative entropy needs the simplex as feasible set");
  if (feasible.kind == FeasibleSet::Kind::MahalanobisBall && regularizer.kind == RegularizerKind::NegEntropy)
    throw std::invalid_argument("Mahalanobis ball is incompatible with the simplex geometry");
  if (!(lipschitz > 0.0)) throw std::invalid_argument("Lipschitz constant must be positive");
  if (rate.kind != RateSchedule::Kind::Adaptive && !(rate.eta > 0.0))
    throw std::invalid_argument("learning rate must be positive");
}

namespace {

bool in_feasible(const FeasibleSet& f, const InteractionOperator& op, const CompoundVector& x) {
  constexpr double tol = 1e-9;
  switch (f.kind) {
    case FeasibleSet::Kind::NormBall:
      for (std::size_t i = 0; i < x.n_tasks(); ++i)
        if (norm(x.block(i), f.norm) > f.radius + tol) return false;
      return true;
    case FeasibleSet::Kind::Simplex:
      for (std::size_t i = 0; i < x.n_tasks(); ++i)
        if (!on_simplex(x.block(i))) return false;
      return true;
    case FeasibleSet::Kind::MahalanobisBall:
      return op.apply(MatrixKind::Sqrt, x).blocks().norm() <= f.radius + tol;
  }
  return false;
}

double dual_sq(const Regularizer& reg, VecRef g) {
  const double n = norm(g, reg.dual_norm);
  return n * n;
}

void check_task(const LearnerState& state, std::size_t task, VecRef g) {
  if (task >= state.y.n_tasks())
    throw std::out_of_range("task index " + std::to_string(task) + " out of range for " +
                            std::to_string(state.y.n_tasks()) + " tasks");
  if (static_cast<std::size_t>(g.size()) != state.y.dim()) throw std::invalid_argument("gradient dimension mismatch");
}

}  // namespace

LearnerState initial_state(const LearnerConfig& config, std::size_t dim, const std::optional<CompoundVector>& x1) {
  const std::size_t n = config.op.n_tasks();
  if (dim == 0) throw std::invalid_argument("learner dimension must be positive");
  CompoundVector x(n, dim);
  if (x1) {
    if (x1->n_tasks() != n || x1->dim() != dim)
      throw std::invalid_argument("initial iterate has the wrong shape");
    x = *x1;
  } else if (config.feasible.kind == FeasibleSet::Kind::Simplex) {
    x.blocks().setConstant(1.0 / static_cast<double>(dim));
  }
  if (!in_feasible(config.feasible, config.op, x)) throw std::invalid_argument("initial iterate is infeasible");
  LearnerState s;
  s.y = config.op.apply(MatrixKind::Sqrt, x);
  if (config.regularizer.kind == RegularizerKind::NegEntropy)
    for (std::size_t i = 0; i < n; ++i) s.y.set_block(i, clamp_interior(s.y.block(i)));
  s.rate = config.rate;
  return s;
}

Vec predict(const LearnerState& state, const InteractionOperator& op, std::size_t task) {
  if (task >= op.n_tasks()) throw std::out_of_range("task index " + std::to_string(task) + " out of range");
  return (op.matrix(MatrixKind::InvSqrt).row(static_cast<Eigen::Index>(task)) * state.y.blocks()).transpose();
}

CompoundVector iterate(const LearnerState& state, const InteractionOperator& op) {
  return op.apply(MatrixKind::InvSqrt, state.y);
}

LearnerState step_ogd(LearnerState state, const LearnerConfig& config, std::size_t task, VecRef g) {
  check_task(state, task, g);
  if (config.regularizer.kind != RegularizerKind::Euclidean)
    throw std::invalid_argument("step_ogd needs the Euclidean regularizer");
  const bool blockwise = config.feasible.kind == FeasibleSet::Kind::NormBall;
  if (blockwise && !(config.feasible.norm == NormTag::l2() && config.op.is_identity()))
    throw std::invalid_argument("step_ogd projects blockwise only onto l2 balls with A = I");
  if (config.feasible.kind == FeasibleSet::Kind::Simplex)
    throw std::invalid_argument("step_ogd does not project onto the simplex; use step_generic");

  ++state.t;
  const auto eta = state.rate.observe(g.squaredNorm());
  if (!eta) return state;

  auto& y = state.y.blocks();
  y.noalias() -= *eta * config.op.matrix(MatrixKind::InvSqrt).col(static_cast<Eigen::Index>(task)) * g.transpose();

  if (blockwise) {
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double n = y.row(i).norm();
      if (n > config.feasible.radius) y.row(i) *= config.feasible.radius / n;
    }
  } else {
    const double n = y.norm();
    if (n > config.feasible.radius) y *= config.feasible.radius / n;
  }
  return state;
}

LearnerState step_eg(LearnerState state, const LearnerConfig& config, std::size_t task, VecRef g) {
  check_task(state, task, g);
  if (config.regularizer.kind != RegularizerKind::NegEntropy)
    throw std::invalid_argument("step_eg needs the negative entropy regularizer");
  if (config.feasible.kind != FeasibleSet::Kind::Simplex) throw std::invalid_argument("step_eg needs the simplex");
  if (!config.op.inv_sqrt_stochastic()) throw std::invalid_argument("step_eg needs a stochastic A^{-1/2}");

  ++state.t;
  const auto eta = state.rate.observe(dual_sq(config.regularizer, g));
  if (!eta) return state;

  const Mat& s = config.op.matrix(MatrixKind::InvSqrt);
  auto& y = state.y.blocks();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double c = *eta * s(i, static_cast<Eigen::Index>(task));
    if (c == 0.0 || g.isZero(0.0)) continue;
    // Log-domain update; the max shift keeps exp() in range.
    Eigen::RowVectorXd w = y.row(i).array().max(kEntropyFloor).log().matrix() - c * g.transpose();
    w.array() = (w.array() - w.maxCoeff()).exp();
    w /= w.sum();
    y.row(i) = w.cwiseMax(kEntropyFloor);
    y.row(i) /= y.row(i).sum();
  }
  return state;
}

namespace {

using Blocks = CompoundVector::Blocks;

Projector make_projector(const FeasibleSet& f, const InteractionOperator& op, std::size_t n, std::size_t d) {
  const auto rows = static_cast<Eigen::Index>(n), cols = static_cast<Eigen::Index>(d);
  switch (f.kind) {
    case FeasibleSet::Kind::NormBall:
      return [=](const Vec& x) {
        Vec out(x.size());
        for (Eigen::Index i = 0; i < rows; ++i)
          out.segment(i * cols, cols) = project_norm_ball(x.segment(i * cols, cols), f.norm, f.radius);
        return out;
      };
    case FeasibleSet::Kind::Simplex:
      return [=](const Vec& x) {
        Vec out(x.size());
        for (Eigen::Index i = 0; i < rows; ++i) out.segment(i * cols, cols) = project_simplex(x.segment(i * cols, cols));
        return out;
      };
    case FeasibleSet::Kind::MahalanobisBall:
      return [=, &op](const Vec& x) {
        const Eigen::Map<const Blocks> xb(x.data(), rows, cols);
        const Blocks p = project_ellipsoid(xb, op.eigenvectors(), op.eigenvalues(), f.radius);
        return Vec(Eigen::Map<const Vec>(p.data(), p.size()));
      };
  }
  throw std::invalid_argument("unknown feasible set");
}

void record_solve(LearnerState& state, const SpgResult& res) {
  if (!res.x.allFinite())
    throw solver_error("generic mirror-descent step produced a non-finite iterate", res.residual);
  if (!res.converged) {
    ++state.unconverged_steps;
    state.max_solver_residual = std::max(state.max_solver_residual, res.residual);
  }
}

/// Gradient of the conjugate 1/2 ||w||_q^2.
Vec conjugate_pnorm_grad(double q, const Vec& w, double& value) {
  const double n = norm(w, NormTag::lp(q));
  value = 0.5 * n * n;
  if (n == 0.0) return Vec::Zero(w.size());
  const double scale = std::pow(n, 2.0 - q);
  Vec g(w.size());
  for (Eigen::Index j = 0; j < w.size(); ++j) g[j] = std::copysign(std::pow(std::abs(w[j]), q - 1.0), w[j]) * scale;
  return g;
}

/// p-norm step on the simplex, solved through its dual: multipliers mu >= 0
/// for x >= 0 and nu for the block sums. With w = theta - A^{-1/2}(c - mu + nu 1^T)
/// the dual objective sum_i psi*(w_i) + sum_i nu_i is smooth, and its gradient
/// is (x, 1 - row sums of x) with x = A^{-1/2} grad psi*(w).
CompoundVector::Blocks pnorm_simplex_step(const Regularizer& reg, const InteractionOperator& op,
                                          const CompoundVector::Blocks& theta, const CompoundVector::Blocks& cost,
                                          const SpgOptions& opts, LearnerState& state) {
  using Blocks = CompoundVector::Blocks;
  const Eigen::Index rows = theta.rows(), cols = theta.cols(), m = rows * cols;
  const double q = reg.dual_norm.p;
  const Mat& inv_root = op.matrix(MatrixKind::InvSqrt);

  auto primal = [&](const Vec& v, double* value) {
    const Eigen::Map<const Blocks> mu(v.data(), rows, cols);
    Blocks r = cost - mu;
    r.colwise() += v.tail(rows);
    const Blocks w = theta - inv_root * r;
    Blocks z(rows, cols);
    double total = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      double vi = 0.0;
      z.row(i) = conjugate_pnorm_grad(q, w.row(i).transpose(), vi).transpose();
      total += vi;
    }
    if (value) *value = total + v.tail(rows).sum();
    return Blocks(inv_root * z);
  };
  Objective dual = [&](const Vec& v, Vec& grad) {
    double value = 0.0;
    const Blocks x = primal(v, &value);
    grad.resize(v.size());
    grad.head(m) = Eigen::Map<const Vec>(x.data(), m);
    grad.tail(rows) = Vec::Ones(rows) - x.rowwise().sum();
    return value;
  };
  const Projector nonneg = [m](const Vec& v) {
    Vec out = v;
    out.head(m) = out.head(m).cwiseMax(0.0);
    return out;
  };
  const SpgResult res = minimize_spg(dual, nonneg, Vec::Zero(m + rows), opts);
  record_solve(state, res);
  Blocks x = primal(res.x, nullptr);
  for (Eigen::Index i = 0; i < rows; ++i) x.row(i) = project_simplex(x.row(i).transpose()).transpose();
  return x;
}

}  // namespace

LearnerState step_generic(LearnerState state, const LearnerConfig& config, std::size_t task, VecRef g,
                          const SpgOptions& opts) {
  check_task(state, task, g);
  config.validate();
  ++state.t;
  const auto eta = state.rate.observe(dual_sq(config.regularizer, g));
  if (!eta) return state;

  const std::size_t n = state.y.n_tasks(), d = state.y.dim();
  const auto rows = static_cast<Eigen::Index>(n), cols = static_cast<Eigen::Index>(d);
  const Mat& root = config.op.matrix(MatrixKind::Sqrt);
  const Blocks y_prev = state.y.blocks();
  const Regularizer& reg = config.regularizer;

  // Mirror image of the previous iterate, fixed for the whole solve.
  Blocks grad_prev(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (reg.kind == RegularizerKind::NegEntropy)
      grad_prev.row(i) = y_prev.row(i).array().max(kEntropyFloor).log().matrix();
    else
      grad_prev.row(i) = mirror_grad(reg, y_prev.row(i).transpose()).transpose();
  }

  const Vec step = *eta * g;
  const auto t_row = static_cast<Eigen::Index>(task);

  if (reg.kind == RegularizerKind::PNorm && config.feasible.kind == FeasibleSet::Kind::Simplex) {
    Blocks cost = Blocks::Zero(rows, cols);
    cost.row(t_row) = step.transpose();
    state.y.blocks() = root * pnorm_simplex_step(reg, config.op, grad_prev, cost, opts, state);
    return state;
  }

  Objective objective = [&](const Vec& xflat, Vec& grad) -> double {
    const Eigen::Map<const Blocks> x(xflat.data(), rows, cols);
    const Blocks z = root * x;
    Blocks dz(rows, cols);
    double value = x.row(t_row).dot(step.transpose());
    for (Eigen::Index i = 0; i < rows; ++i) {
      switch (reg.kind) {
        case RegularizerKind::Euclidean:
          dz.row(i) = z.row(i) - y_prev.row(i);
          value += 0.5 * dz.row(i).squaredNorm();
          break;
        case RegularizerKind::PNorm: {
          const Vec zi = z.row(i).transpose();
          const Vec gi = mirror_grad(reg, zi);
          const Vec yi = y_prev.row(i).transpose();
          value += psi_value(reg, zi) - psi_value(reg, yi) - grad_prev.row(i).dot((zi - yi).transpose());
          dz.row(i) = gi.transpose() - grad_prev.row(i);
          break;
        }
        case RegularizerKind::NegEntropy: {
          if (z.row(i).minCoeff() <= 0.0) return std::numeric_limits<double>::infinity();
          const Eigen::RowVectorXd lz = z.row(i).array().log().matrix();
          dz.row(i) = lz - grad_prev.row(i);
          value += (z.row(i).array() * dz.row(i).array() - z.row(i).array() + y_prev.row(i).array()).sum();
          break;
        }
      }
    }
    Blocks gb = root * dz;  // A^{1/2} is symmetric
    gb.row(t_row) += step.transpose();
    grad = Eigen::Map<const Vec>(gb.data(), gb.size());
    return value;
  };

  const Blocks x_prev = config.op.matrix(MatrixKind::InvSqrt) * y_prev;
  const Projector project = make_projector(config.feasible, config.op, n, d);
  const Vec x0 = Eigen::Map<const Vec>(x_prev.data(), x_prev.size());
  SpgResult res = minimize_spg(objective, project, x0, opts);
  record_solve(state, res);

  const Eigen::Map<const Blocks> x_new(res.x.data(), rows, cols);
  state.y.blocks() = root * x_new;
  if (reg.kind == RegularizerKind::NegEntropy)
    for (std::size_t i = 0; i < n; ++i) state.y.set_block(i, clamp_interior(state.y.block(i)));
  return state;
}

UpdateRule select_update_rule(const LearnerConfig& config) {
  const auto& f = config.feasible;
  if (config.regularizer.kind == RegularizerKind::Euclidean) {
    if (f.kind == FeasibleSet::Kind::MahalanobisBall) return UpdateRule::ClosedFormOGD;
    if (f.kind == FeasibleSet::Kind::NormBall && f.norm == NormTag::l2() && config.op.is_identity())
      return UpdateRule::ClosedFormOGD;
  }
  if (config.regularizer.kind == RegularizerKind::NegEntropy && f.kind == FeasibleSet::Kind::Simplex &&
      config.op.inv_sqrt_stochastic())
    return UpdateRule::ClosedFormEG;
  return UpdateRule::Generic;
}

LearnerState step(LearnerState state, const LearnerConfig& config, UpdateRule rule, std::size_t task, VecRef g) {
  switch (rule) {
    case UpdateRule::ClosedFormOGD:
      return step_ogd(std::move(state), config, task, g);
    case UpdateRule::ClosedFormEG:
      return step_eg(std::move(state), config, task, g);
    case UpdateRule::Generic:
      return step_generic(std::move(state), config, task, g);
  }
  return state;
}

Learner::Learner(LearnerConfig config, std::size_t dim, const std::optional<CompoundVector>& x1,
                 std::optional<UpdateRule> rule)
    : config_(std::move(config)) {
  config_.validate();
  state_ = initial_state(config_, dim, x1);
  rule_ = rule ? *rule : select_update_rule(config_);
}

// ---------------------------------------------------------------------------

double theory_rate_ogd(double diameter, double lipschitz, std::size_t n_tasks, double sigma, double horizon, double b) {
  if (!(diameter > 0.0 && lipschitz > 0.0 && horizon > 0.0 && n_tasks > 0 && b >= 0.0 && sigma >= 0.0))
    throw std::invalid_argument("theory_rate_ogd: parameters must be positive");
  const double n = static_cast<double>(n_tasks);
  const double spread = 1.0 + b * (n - 1.0) / n * sigma * sigma;
  return n * diameter / lipschitz * std::sqrt(spread * (1.0 + b) / ((b + n) * horizon));
}

double theory_rate_pnorm(double diameter, double lipschitz, std::size_t n_tasks, double sigma, double horizon,
                         double b, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("theory_rate_pnorm: lambda must be positive");
  return 2.0 * std::sqrt(lambda) * theory_rate_ogd(diameter, lipschitz, n_tasks, sigma, horizon, b);
}

double theory_rate_eg(std::size_t n_tasks, double lipschitz, double bregman_diameter, double lambda, double b,
                      double horizon) {
  if (!(lipschitz > 0.0 && bregman_diameter > 0.0 && lambda > 0.0 && horizon > 0.0 && n_tasks > 0 && b >= 0.0))
    throw std::invalid_argument("theory_rate_eg: parameters must be positive");
  const double n = static_cast<double>(n_tasks);
  return n * std::sqrt(2.0 * lambda * (1.0 + b) * bregman_diameter) / (lipschitz * std::sqrt((b + n) * horizon));
}

double adaptive_scale(double diameter, std::size_t n_tasks, double sigma, double b) {
  if (!(diameter > 0.0 && n_tasks > 0 && b >= 0.0)) throw std::invalid_argument("adaptive_scale: bad parameters");
  const double n = static_cast<double>(n_tasks);
  const double spread = 1.0 + b * (n - 1.0) / n * sigma * sigma;
  return n * diameter * std::sqrt(2.0 * (1.0 + b) * spread / (b + n));
}

double adaptive_rate(RateSchedule& schedule, double new_dual_grad_sq, double diameter, std::size_t n_tasks,
                     double sigma) {
  const double n = static_cast<double>(n_tasks);
  schedule.kind = RateSchedule::Kind::Adaptive;
  schedule.scale = diameter * std::sqrt(n * (n + 1.0) * (1.0 + (n - 1.0) * sigma * sigma));
  const auto eta = schedule.observe(new_dual_grad_sq);
  return eta ? *eta : std::numeric_limits<double>::max();
}

double p_star_norm_choice(std::size_t d) {
  if (d < 3) throw std::invalid_argument("p* needs d >= 3");
  const double l = 2.0 * std::log(static_cast<double>(d));
  return l / (l - 1.0);
}

double theory_bound(BoundKind kind, const BoundParams& p) {
  const double accel = std::sqrt(1.0 + p.sigma * p.sigma * (static_cast<double>(p.n_tasks) - 1.0));
  switch (kind) {
    case BoundKind::OGD:
      return p.diameter * p.lipschitz * accel * std::sqrt(2.0 * p.horizon);
    case BoundKind::Norm:
      return p.diameter * p.lipschitz * accel * std::sqrt(8.0 * p.horizon);
    case BoundKind::Adaptive:
      return 8.0 * p.diameter * accel * std::sqrt(p.sum_sq_dual_grad);
    case BoundKind::Smooth:
      return 16.0 * p.diameter * accel *
             (2.0 * p.smoothness * p.diameter * accel + std::sqrt(p.smoothness * p.comparator_loss));
    case BoundKind::EG:
      return p.lipschitz * accel * std::sqrt(2.0 * p.bregman_diameter * p.horizon / p.lambda);
  }
  return 0.0;
}

double pnorm_simplex_bound(double lipschitz, std::size_t n_tasks, double sigma, double horizon, std::size_t d) {
  const double accel = std::sqrt(1.0 + sigma * sigma * (static_cast<double>(n_tasks) - 1.0));
  return lipschitz * accel * std::sqrt(16.0 * std::numbers::e * horizon * std::log(static_cast<double>(d)));
}

double constant_rate_bound(const Regularizer& reg, const InteractionOperator& op, const CompoundVector& u,
                           const CompoundVector& x1, double eta, double sum_sq_dual_grad) {
  const CompoundVector ru = op.apply(MatrixKind::Sqrt, u);
  const CompoundVector rx = op.apply(MatrixKind::Sqrt, x1);
  double b = 0.0;
  try {
    b = compound_bregman(reg, ru, rx);
  } catch (const std::domain_error&) {
    return std::numeric_limits<double>::infinity();
  }
  return b / eta + op.max_inv_diag() * eta / (2.0 * reg.lambda) * sum_sq_dual_grad;
}

double varying_rate_bound(const Regularizer& reg, const InteractionOperator& op, double max_bregman, double last_eta,
                          double sum_eta_sq_dual_grad) {
  return max_bregman / last_eta + op.max_inv_diag() / (2.0 * reg.lambda) * sum_eta_sq_dual_grad;
}

}  // namespace mtomd

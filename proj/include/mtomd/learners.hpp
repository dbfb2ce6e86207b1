#pragma once

#include <cstddef>
#include <optional>

#include "mtomd/compound.hpp"
#include "mtomd/geometry.hpp"
#include "mtomd/interaction.hpp"
#include "mtomd/optim.hpp"
#include "mtomd/variance.hpp"

namespace mtomd {

/// Where the iterates live.
///
/// NormBall and Simplex are per-task sets applied to every block. The
/// Mahalanobis ball {x : ||x||_A^2 <= (1 + b sigma^2) N D^2} is a compound set;
/// it contains every comparator of variance at most sigma^2 D^2 and turns the
/// multitask gradient step into a plain radial projection of y = A^{1/2} x.
struct FeasibleSet {
  enum class Kind { NormBall, Simplex, MahalanobisBall };

  Kind kind = Kind::NormBall;
  NormTag norm = NormTag::l2();
  double radius = 1.0;  // NormBall: per-block D. MahalanobisBall: sqrt((1 + b sigma^2) N) D.

  static FeasibleSet norm_ball(const NormTag& norm, double radius);
  static FeasibleSet simplex();
  static FeasibleSet mahalanobis_ball(double b, double sigma, std::size_t n_tasks, double diameter);
};

/// Learning-rate schedule and its running state.
struct RateSchedule {
  enum class Kind { Constant, Adaptive, TheoryOGD, TheoryPNorm, TheoryEG };

  Kind kind = Kind::Constant;
  double eta = 1.0;    // Constant and Theory* kinds
  double scale = 1.0;  // Adaptive: eta_t = scale / sqrt(sum_{s<=t} ||g_s||_*^2)
  double accumulated_sq_dual_grad = 0.0;

  // Theory rates are proportional to 1/L. With running_lipschitz set, `eta`
  // holds the rate at L = 1 and is divided by the running max of ||g_t||_*.
  bool running_lipschitz = false;
  double lipschitz_seen = 0.0;

  static RateSchedule constant(double eta);
  static RateSchedule adaptive(double scale);

  /// Records ||g_t||_*^2 for the current round and returns eta_t, or nullopt
  /// when the rate is undefined (all gradients so far are zero) and the step
  /// should be skipped.
  std::optional<double> observe(double dual_grad_sq);
};

struct LearnerConfig {
  Regularizer regularizer = Regularizer::euclidean();
  InteractionOperator op = InteractionOperator::identity(1);
  FeasibleSet feasible;
  RateSchedule rate;
  VarianceSpec variance;
  double lipschitz = 1.0;

  /// Throws std::invalid_argument on incompatible pieces.
  void validate() const;
};

/// Transformed iterate y_t = A^{1/2} x_t, the round counter and the rate state.
struct LearnerState {
  CompoundVector y;
  std::size_t t = 0;
  RateSchedule rate;
  // Generic steps that hit the iteration cap before the tolerance.
  std::size_t unconverged_steps = 0;
  double max_solver_residual = 0.0;
};

/// x_1 = 0 on norm geometries, uniform blocks on the simplex, unless given.
LearnerState initial_state(const LearnerConfig& config, std::size_t dim,
                           const std::optional<CompoundVector>& x1 = std::nullopt);

/// Block `task` of A^{-1/2} y.
Vec predict(const LearnerState& state, const InteractionOperator& op, std::size_t task);

/// Recovers x = A^{-1/2} y.
CompoundVector iterate(const LearnerState& state, const InteractionOperator& op);

/// Closed-form multitask OGD step: y <- Proj(y - eta A^{-1/2} g_bar, radius).
LearnerState step_ogd(LearnerState state, const LearnerConfig& config, std::size_t task, VecRef g);

/// Closed-form multitask EG step: each block runs an EG update with gradient
/// A^{-1/2}_{i,task} g and renormalizes.
LearnerState step_eg(LearnerState state, const LearnerConfig& config, std::size_t task, VecRef g);

/// Solves argmin_{x in feasible} <eta g_bar, x> + B_psi(A^{1/2} x, A^{1/2} x_t)
/// with projected gradient in x; the p-norm on the simplex is solved through
/// its smooth dual instead. A step that reaches the iteration cap keeps its
/// last iterate and is counted in the state; a non-finite iterate throws
/// solver_error.
LearnerState step_generic(LearnerState state, const LearnerConfig& config, std::size_t task, VecRef g,
                          const SpgOptions& opts = {});

enum class UpdateRule { ClosedFormOGD, ClosedFormEG, Generic };

/// Closed forms when the geometry allows them, the generic solver otherwise.
UpdateRule select_update_rule(const LearnerConfig& config);

LearnerState step(LearnerState state, const LearnerConfig& config, UpdateRule rule, std::size_t task, VecRef g);

/// Owns a config and its state; one step at a time.
class Learner {
 public:
  Learner(LearnerConfig config, std::size_t dim, const std::optional<CompoundVector>& x1 = std::nullopt,
          std::optional<UpdateRule> rule = std::nullopt);

  Vec predict(std::size_t task) const { return mtomd::predict(state_, config_.op, task); }
  void update(std::size_t task, VecRef g) { state_ = step(std::move(state_), config_, rule_, task, g); }

  const LearnerConfig& config() const { return config_; }
  const LearnerState& state() const { return state_; }
  UpdateRule rule() const { return rule_; }

 private:
  LearnerConfig config_;
  LearnerState state_;
  UpdateRule rule_;
};

// ---------------------------------------------------------------------------
// Tuning

/// (N D / L) sqrt((1 + b (N-1)/N sigma^2)(1 + b) / ((b + N) T)).
double theory_rate_ogd(double diameter, double lipschitz, std::size_t n_tasks, double sigma, double horizon, double b);

/// Rate for psi = 1/2 ||.||^2 in a general norm: the Euclidean rate times
/// 2 sqrt(lambda), matching the fourfold Bregman bound.
double theory_rate_pnorm(double diameter, double lipschitz, std::size_t n_tasks, double sigma, double horizon,
                         double b, double lambda);

/// N sqrt(2 lambda (1 + b) C) / (L sqrt((b + N) T)).
double theory_rate_eg(std::size_t n_tasks, double lipschitz, double bregman_diameter, double lambda, double b,
                      double horizon);

/// Numerator of the adaptive rate, N D sqrt(2 (1+b)(1 + b (N-1)/N sigma^2) / (b+N)),
/// equal to D sqrt(N (N+1)(1 + (N-1) sigma^2)) at b = N.
double adaptive_scale(double diameter, std::size_t n_tasks, double sigma, double b);

/// Adaptive rate at b = N after observing ||g_t||_*^2. Returns a huge
/// sentinel while every gradient so far is zero.
double adaptive_rate(RateSchedule& schedule, double new_dual_grad_sq, double diameter, std::size_t n_tasks,
                     double sigma);

/// p = 2 ln d / (2 ln d - 1), the p-norm exponent for the simplex; d >= 3.
double p_star_norm_choice(std::size_t d);

// ---------------------------------------------------------------------------
// Regret bounds

enum class BoundKind { OGD, Norm, Adaptive, Smooth, EG };

struct BoundParams {
  double diameter = 1.0;
  double lipschitz = 1.0;
  std::size_t n_tasks = 1;
  double sigma = 0.0;
  double horizon = 0.0;
  double bregman_diameter = 0.0;  // C, EG only
  double lambda = 1.0;            // EG only
  double sum_sq_dual_grad = 0.0;  // Adaptive
  double smoothness = 0.0;        // Smooth: M
  double comparator_loss = 0.0;   // Smooth: sum_t l_t(u^(i_t))
};

double theory_bound(BoundKind kind, const BoundParams& params);

/// L sqrt(1 + sigma^2 (N-1)) sqrt(16 e T ln d): p-norm on the simplex with p = p*.
double pnorm_simplex_bound(double lipschitz, std::size_t n_tasks, double sigma, double horizon, std::size_t d);

/// Constant-rate bound for any interaction matrix:
/// B(A^{1/2} u, A^{1/2} x_1) / eta + max_i A^{-1}_ii eta / (2 lambda) sum ||g_t||_*^2.
/// Infinite when A^{1/2} u leaves the regularizer's domain.
double constant_rate_bound(const Regularizer& reg, const InteractionOperator& op, const CompoundVector& u,
                           const CompoundVector& x1, double eta, double sum_sq_dual_grad);

/// Time-varying counterpart: max_t B(A^{1/2} u, y_t) / eta_T
/// + max_i A^{-1}_ii / (2 lambda) sum eta_t ||g_t||_*^2.
double varying_rate_bound(const Regularizer& reg, const InteractionOperator& op, double max_bregman, double last_eta,
                          double sum_eta_sq_dual_grad);

}  // namespace mtomd

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mtomd/compound.hpp"
#include "mtomd/geometry.hpp"
#include "mtomd/learners.hpp"

namespace mtomd {

enum class LossKind { Square, Logistic, LogWealth, Linear };

/// One round's loss. Linear losses read `features` as the gradient g, so
/// l(w) = g^T w. LogWealth features are price relatives and the loss is
/// -ln(w^T x).
struct LossInstance {
  LossKind kind = LossKind::Square;
  Vec features;
  double label = 0.0;
};

inline constexpr double kWealthFloor = 1e-12;

struct LossEval {
  double value = 0.0;
  Vec gradient;
  bool clamped = false;  // LogWealth argument fell below kWealthFloor
};

LossEval evaluate_loss(const LossInstance& inst, VecRef w);
double loss_value(const LossInstance& inst, VecRef w);
Vec loss_subgradient(const LossInstance& inst, VecRef w);

struct Round {
  std::size_t t = 0;
  std::size_t active_task = 0;
  LossInstance loss;
};

struct ScheduleSpec {
  enum class Kind { RoundRobin, UniformRandom, Blocked, FromData };

  Kind kind = Kind::RoundRobin;
  std::uint64_t seed = 0;     // UniformRandom
  std::size_t block_len = 1;  // Blocked

  static ScheduleSpec round_robin() { return {Kind::RoundRobin, 0, 1}; }
  static ScheduleSpec uniform_random(std::uint64_t seed) { return {Kind::UniformRandom, seed, 1}; }
  static ScheduleSpec blocked(std::size_t len) { return {Kind::Blocked, 0, len}; }
};

/// Active task per round. FromData has no synthetic sequence and throws.
std::vector<std::size_t> make_schedule(const ScheduleSpec& spec, std::size_t horizon, std::size_t n_tasks);

/// Square-loss regression tasks around a shared centre.
///
/// `spread` is the requested Var_l2 of the comparator. Blocks are
/// u0 + s zeta_i with antithetic unit directions zeta_i, so their mean is u0
/// exactly and every block has norm at most center_norm + s <= diameter.
struct SyntheticTaskSpec {
  std::size_t n_tasks = 2;
  std::size_t dim = 2;
  double center_norm = 0.5;
  double spread = 0.0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  double diameter = 1.0;
};

struct Stream {
  std::vector<Round> rounds;
  CompoundVector comparator;  // ground truth (not the batch optimum when noisy)
};

Stream make_synthetic(const SyntheticTaskSpec& spec, const std::vector<std::size_t>& schedule);

/// Square-loss tasks on the simplex: u_i = normalize(u0 * exp(alpha z_i)) with
/// alpha tuned so the simplex variance lies in [0.98 sigma^2, sigma^2].
/// Features are uniform on [0,1]^d.
struct SimplexTaskSpec {
  std::size_t n_tasks = 2;
  std::size_t dim = 3;
  double sigma = 0.1;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

Stream make_simplex_synthetic(const SimplexTaskSpec& spec, const std::vector<std::size_t>& schedule);

/// N = 2d tasks with Var_l2 = sigma^2 exactly. Blocks live in R^{d+1}:
/// u0 = sqrt(1 - sigma^2) e_{d+1} and u0 +- sigma' e_j for j <= d, with
/// sigma' = sigma sqrt((N-1)/N). Requires 0 < sigma < 1/sqrt(2).
CompoundVector make_lower_bound_instance(std::size_t d, double sigma);

/// Linear losses pulling each task towards its own direction:
/// g_t = -u^(i_t) / ||u^(i_t)||_2.
Stream make_lower_bound_stream(const CompoundVector& u, const std::vector<std::size_t>& schedule);

struct CsvSchema {
  std::string task_col;
  std::string label_col;  // may be empty for LogWealth and Linear
  std::vector<std::string> feature_cols;
  LossKind loss = LossKind::Square;
};

struct Dataset {
  std::vector<Round> rounds;
  std::size_t n_tasks = 0;
  std::size_t dim = 0;
  std::vector<std::string> task_names;  // index = remapped task id
};

/// Throws config_error with the offending line number on malformed input.
Dataset load_csv(const std::string& path, const CsvSchema& schema);

struct BatchResult {
  Vec u;
  double value = 0.0;
  double residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct BatchOptions {
  double tolerance = 1e-8;
  std::size_t max_iterations = 100000;
};

/// argmin over the per-task set of the summed losses. `feasible` must be a
/// NormBall or the Simplex.
BatchResult batch_comparator(const std::vector<const LossInstance*>& losses, std::size_t dim,
                             const FeasibleSet& feasible, const BatchOptions& opts = {});

/// Upper bound on ||g_t||_* over the feasible set, computed from the data.
double data_lipschitz(const std::vector<Round>& rounds, const FeasibleSet& feasible, const NormTag& dual);

}  // namespace mtomd

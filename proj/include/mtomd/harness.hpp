#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtomd/compound.hpp"
#include "mtomd/environment.hpp"
#include "mtomd/learners.hpp"

namespace mtomd {

enum class LearnerKind { IOGD, MTOGD, IEG, MTEG, MTPNorm, Generic };
enum class EnvironmentKind { Synthetic, Simplex, LowerBound, Csv };
enum class TuningKind { Theory, Oracle, Fixed, Adaptive };
enum class LipschitzMode { Given, Data, Running };

/// A run or sweep description. Parsed from a flat JSON object; unknown keys
/// are rejected.
struct RunConfig {
  std::string name = "run";
  LearnerKind learner = LearnerKind::MTOGD;
  EnvironmentKind environment = EnvironmentKind::Synthetic;

  std::size_t n_tasks = 4;
  std::size_t dim = 5;
  std::size_t horizon = 1000;
  double diameter = 1.0;
  double sigma = 1.0;                  // comparator-set radius used for tuning
  std::optional<double> data_sigma;    // generator target; defaults to sigma
  double center_norm = 0.5;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  std::size_t repetitions = 1;

  std::string csv_path;
  std::string task_col, label_col;
  std::vector<std::string> feature_cols;
  LossKind loss = LossKind::Square;

  ScheduleSpec schedule = ScheduleSpec::round_robin();
  bool schedule_from_data = false;

  std::string graph_path;
  std::optional<double> b;  // nullopt: the learner's theory value
  std::string feasible;     // "", "mahalanobis", "ball" or "simplex"
  std::string regularizer;  // generic learner: "euclidean", "pnorm", "entropy"
  std::optional<double> p;

  TuningKind tuning = TuningKind::Theory;
  double eta = 0.0;
  std::vector<double> eta_grid;
  LipschitzMode lipschitz_mode = LipschitzMode::Data;
  double lipschitz = 1.0;

  std::vector<double> grid_b, grid_eta, grid_sigma;
  std::vector<std::size_t> grid_n_tasks;

  nlohmann::json source;  // the document as read, echoed into reports

  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;

  /// Cross-field checks; throws config_error.
  void validate() const;
};

std::string to_string(LearnerKind kind);

struct RegretReport {
  std::vector<double> cumulative_loss;
  std::vector<double> regret;
  std::vector<std::optional<double>> bound;
  std::vector<double> comparator_values;  // per task, over the full stream
  std::vector<double> task_regret;
  CompoundVector comparators;
  bool comparators_converged = true;

  double final_regret = 0.0;
  double eta = 0.0;
  double b = 0.0;
  double lipschitz = 0.0;
  double sum_sq_dual_grad = 0.0;
  std::string proposition;
  std::optional<double> proposition_bound;
  std::size_t clamped_rounds = 0;
  std::size_t unconverged_steps = 0;  // generic steps stopped by the iteration cap
  double max_solver_residual = 0.0;
  double wall_clock_seconds = 0.0;
  nlohmann::json config;
};

/// A materialized environment: the round sequence plus its shape.
struct Problem {
  std::vector<Round> rounds;
  std::size_t n_tasks = 0;
  std::size_t dim = 0;
  std::optional<CompoundVector> truth;
};

Problem build_problem(const RunConfig& config);

/// The learner a config describes, before the learning rate is chosen.
struct ResolvedLearner {
  LearnerConfig learner;
  std::optional<UpdateRule> rule;
  FeasibleSet comparator_set;  // per-task set V of the regret definition
  double b = 0.0;
};

ResolvedLearner resolve_learner(const RunConfig& config, const Problem& problem, double lipschitz);

RegretReport run_experiment(const RunConfig& config);
RegretReport run_on(const RunConfig& config, const Problem& problem);

struct SweepCell {
  std::optional<double> b, eta, sigma;
  std::optional<std::size_t> n_tasks;
  std::vector<double> finals;
  double mean = 0.0;
  double std_dev = 0.0;  // sample standard deviation; 0 for one repetition
};

std::vector<SweepCell> sweep(const RunConfig& config);

/// CSV with header t,cumulative_loss,regret,bound and a `<path>.meta.json`
/// sidecar holding the config echo, version, seed and summary values.
void emit_report(const RegretReport& report, const std::string& path);
void emit_sweep(const std::vector<SweepCell>& cells, const std::string& path);

const char* version_string();

}  // namespace mtomd

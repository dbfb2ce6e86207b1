#include "mtomd/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mtomd/errors.hpp"
#include "mtomd/interaction.hpp"
#include "mtomd/variance.hpp"

#ifndef MTOMD_VERSION
#define MTOMD_VERSION "0.1.0"
#endif

namespace mtomd {

using nlohmann::json;

const char* version_string() { return MTOMD_VERSION; }

namespace {

const std::map<std::string, LearnerKind> kLearners = {
    {"I-OGD", LearnerKind::IOGD}, {"MT-OGD", LearnerKind::MTOGD},       {"I-EG", LearnerKind::IEG},
    {"MT-EG", LearnerKind::MTEG}, {"MT-PNorm", LearnerKind::MTPNorm}, {"generic", LearnerKind::Generic}};
const std::map<std::string, EnvironmentKind> kEnvironments = {{"synthetic", EnvironmentKind::Synthetic},
                                                               {"simplex", EnvironmentKind::Simplex},
                                                               {"lower_bound", EnvironmentKind::LowerBound},
                                                               {"csv", EnvironmentKind::Csv}};
const std::map<std::string, TuningKind> kTunings = {{"theory", TuningKind::Theory},
                                                    {"oracle", TuningKind::Oracle},
                                                    {"fixed", TuningKind::Fixed},
                                                    {"adaptive", TuningKind::Adaptive}};
const std::map<std::string, LossKind> kLosses = {{"square", LossKind::Square},
                                                 {"logistic", LossKind::Logistic},
                                                 {"logwealth", LossKind::LogWealth},
                                                 {"linear", LossKind::Linear}};
const std::map<std::string, ScheduleSpec::Kind> kSchedules = {{"round_robin", ScheduleSpec::Kind::RoundRobin},
                                                              {"uniform", ScheduleSpec::Kind::UniformRandom},
                                                              {"blocked", ScheduleSpec::Kind::Blocked},
                                                              {"data", ScheduleSpec::Kind::FromData}};

template <class M>
typename M::mapped_type lookup(const M& table, const json& v, const std::string& key) {
  if (!v.is_string()) throw config_error("key '" + key + "': expected a string");
  const auto it = table.find(v.get<std::string>());
  if (it == table.end()) {
    std::string names;
    for (const auto& [name, _] : table) names += (names.empty() ? "" : ", ") + name;
    throw config_error("key '" + key + "': unknown value '" + v.get<std::string>() + "' (expected one of " + names +
                       ")");
  }
  return it->second;
}

template <class M, class V>
std::string name_of(const M& table, V value) {
  for (const auto& [name, v] : table)
    if (v == value) return name;
  return "?";
}

double as_real(const json& v, const std::string& key) {
  if (!v.is_number()) throw config_error("key '" + key + "': expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw config_error("key '" + key + "': must be finite");
  return x;
}

std::size_t as_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw config_error("key '" + key + "': expected a nonnegative integer");
  return v.get<std::size_t>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw config_error("key '" + key + "': expected a string");
  return v.get<std::string>();
}

template <class F>
auto as_array(const json& v, const std::string& key, F each) {
  if (!v.is_array()) throw config_error("key '" + key + "': expected an array");
  std::vector<decltype(each(v, key))> out;
  for (const auto& e : v) out.push_back(each(e, key));
  return out;
}

}  // namespace

std::string to_string(LearnerKind kind) { return name_of(kLearners, kind); }

RunConfig RunConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw config_error("config must be a JSON object");
  RunConfig c;
  c.source = doc;
  std::optional<std::uint64_t> schedule_seed;

  using Setter = std::function<void(const json&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"name", [&](const json& v, const std::string& k) { c.name = as_string(v, k); }},
      {"learner", [&](const json& v, const std::string& k) { c.learner = lookup(kLearners, v, k); }},
      {"environment", [&](const json& v, const std::string& k) { c.environment = lookup(kEnvironments, v, k); }},
      {"n_tasks", [&](const json& v, const std::string& k) { c.n_tasks = as_count(v, k); }},
      {"dim", [&](const json& v, const std::string& k) { c.dim = as_count(v, k); }},
      {"horizon", [&](const json& v, const std::string& k) { c.horizon = as_count(v, k); }},
      {"diameter", [&](const json& v, const std::string& k) { c.diameter = as_real(v, k); }},
      {"sigma", [&](const json& v, const std::string& k) { c.sigma = as_real(v, k); }},
      {"data_sigma", [&](const json& v, const std::string& k) { c.data_sigma = as_real(v, k); }},
      {"center_norm", [&](const json& v, const std::string& k) { c.center_norm = as_real(v, k); }},
      {"noise_std", [&](const json& v, const std::string& k) { c.noise_std = as_real(v, k); }},
      {"seed", [&](const json& v, const std::string& k) { c.seed = as_count(v, k); }},
      {"repetitions", [&](const json& v, const std::string& k) { c.repetitions = as_count(v, k); }},
      {"csv_path", [&](const json& v, const std::string& k) { c.csv_path = as_string(v, k); }},
      {"task_col", [&](const json& v, const std::string& k) { c.task_col = as_string(v, k); }},
      {"label_col", [&](const json& v, const std::string& k) { c.label_col = as_string(v, k); }},
      {"feature_cols", [&](const json& v, const std::string& k) { c.feature_cols = as_array(v, k, as_string); }},
      {"loss", [&](const json& v, const std::string& k) { c.loss = lookup(kLosses, v, k); }},
      {"schedule",
       [&](const json& v, const std::string& k) {
         c.schedule.kind = lookup(kSchedules, v, k);
         c.schedule_from_data = c.schedule.kind == ScheduleSpec::Kind::FromData;
       }},
      {"block_len", [&](const json& v, const std::string& k) { c.schedule.block_len = as_count(v, k); }},
      {"schedule_seed", [&](const json& v, const std::string& k) { schedule_seed = as_count(v, k); }},
      {"graph_path", [&](const json& v, const std::string& k) { c.graph_path = as_string(v, k); }},
      {"b",
       [&](const json& v, const std::string& k) {
         if (v.is_string() && v.get<std::string>() == "theory")
           c.b.reset();
         else
           c.b = as_real(v, k);
       }},
      {"feasible", [&](const json& v, const std::string& k) { c.feasible = as_string(v, k); }},
      {"regularizer", [&](const json& v, const std::string& k) { c.regularizer = as_string(v, k); }},
      {"p", [&](const json& v, const std::string& k) { c.p = as_real(v, k); }},
      {"tuning", [&](const json& v, const std::string& k) { c.tuning = lookup(kTunings, v, k); }},
      {"eta", [&](const json& v, const std::string& k) { c.eta = as_real(v, k); }},
      {"eta_grid", [&](const json& v, const std::string& k) { c.eta_grid = as_array(v, k, as_real); }},
      {"lipschitz",
       [&](const json& v, const std::string& k) {
         if (v.is_string()) {
           const auto s = v.get<std::string>();
           if (s == "data")
             c.lipschitz_mode = LipschitzMode::Data;
           else if (s == "running")
             c.lipschitz_mode = LipschitzMode::Running;
           else
             throw config_error("key 'lipschitz': expected a number, \"data\" or \"running\"");
         } else {
           c.lipschitz_mode = LipschitzMode::Given;
           c.lipschitz = as_real(v, k);
         }
       }},
      {"grid_b", [&](const json& v, const std::string& k) { c.grid_b = as_array(v, k, as_real); }},
      {"grid_eta", [&](const json& v, const std::string& k) { c.grid_eta = as_array(v, k, as_real); }},
      {"grid_sigma", [&](const json& v, const std::string& k) { c.grid_sigma = as_array(v, k, as_real); }},
      {"grid_n_tasks", [&](const json& v, const std::string& k) { c.grid_n_tasks = as_array(v, k, as_count); }},
  };

  for (const auto& [key, value] : doc.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw config_error("unknown config key '" + key + "'");
    it->second(value, key);
  }
  if (c.environment == EnvironmentKind::Csv && !doc.contains("schedule")) {
    c.schedule.kind = ScheduleSpec::Kind::FromData;
    c.schedule_from_data = true;
  }
  c.schedule.seed = schedule_seed ? *schedule_seed : c.seed * 2 + 1;
  if (c.environment == EnvironmentKind::Csv && !doc.contains("horizon")) c.horizon = 0;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error(path + ": " + e.what());
  }
  return from_json(doc);
}

json RunConfig::to_json() const {
  json j;
  j["name"] = name;
  j["learner"] = name_of(kLearners, learner);
  j["environment"] = name_of(kEnvironments, environment);
  j["n_tasks"] = n_tasks;
  j["dim"] = dim;
  j["horizon"] = horizon;
  j["diameter"] = diameter;
  j["sigma"] = sigma;
  if (data_sigma) j["data_sigma"] = *data_sigma;
  j["center_norm"] = center_norm;
  j["noise_std"] = noise_std;
  j["seed"] = seed;
  j["repetitions"] = repetitions;
  if (environment == EnvironmentKind::Csv) {
    j["csv_path"] = csv_path;
    j["task_col"] = task_col;
    j["label_col"] = label_col;
    j["feature_cols"] = feature_cols;
    j["loss"] = name_of(kLosses, loss);
  }
  j["schedule"] = name_of(kSchedules, schedule.kind);
  j["block_len"] = schedule.block_len;
  j["schedule_seed"] = schedule.seed;
  if (!graph_path.empty()) j["graph_path"] = graph_path;
  if (b)
    j["b"] = *b;
  else
    j["b"] = "theory";
  if (!feasible.empty()) j["feasible"] = feasible;
  if (!regularizer.empty()) j["regularizer"] = regularizer;
  if (p) j["p"] = *p;
  j["tuning"] = name_of(kTunings, tuning);
  if (tuning == TuningKind::Fixed) j["eta"] = eta;
  if (!eta_grid.empty()) j["eta_grid"] = eta_grid;
  switch (lipschitz_mode) {
    case LipschitzMode::Given:
      j["lipschitz"] = lipschitz;
      break;
    case LipschitzMode::Data:
      j["lipschitz"] = "data";
      break;
    case LipschitzMode::Running:
      j["lipschitz"] = "running";
      break;
  }
  if (!grid_b.empty()) j["grid_b"] = grid_b;
  if (!grid_eta.empty()) j["grid_eta"] = grid_eta;
  if (!grid_sigma.empty()) j["grid_sigma"] = grid_sigma;
  if (!grid_n_tasks.empty()) j["grid_n_tasks"] = grid_n_tasks;
  return j;
}

namespace {

bool entropic(const RunConfig& c) {
  return c.learner == LearnerKind::IEG || c.learner == LearnerKind::MTEG ||
         (c.learner == LearnerKind::Generic && c.regularizer == "entropy");
}

bool independent(const RunConfig& c) { return c.learner == LearnerKind::IOGD || c.learner == LearnerKind::IEG; }

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw config_error(msg); };
  if (environment != EnvironmentKind::Csv) {
    if (n_tasks == 0) fail("n_tasks must be at least 1");
    if (dim == 0) fail("dim must be at least 1");
    if (horizon == 0) fail("horizon must be at least 1");
  }
  if (!(diameter > 0.0)) fail("diameter must be positive");
  if (!(sigma >= 0.0 && sigma <= 1.0)) fail("sigma must lie in [0, 1]");
  if (data_sigma && !(*data_sigma >= 0.0 && *data_sigma <= 1.0)) fail("data_sigma must lie in [0, 1]");
  if (!(center_norm >= 0.0)) fail("center_norm must be nonnegative");
  if (!(noise_std >= 0.0)) fail("noise_std must be nonnegative");
  if (repetitions == 0) fail("repetitions must be at least 1");
  if (schedule.kind == ScheduleSpec::Kind::Blocked && schedule.block_len == 0) fail("block_len must be at least 1");
  if (schedule_from_data != (environment == EnvironmentKind::Csv))
    fail("the \"data\" schedule goes with the csv environment and only with it");

  if (!regularizer.empty() && learner != LearnerKind::Generic) fail("regularizer is only read by the generic learner");
  if (learner == LearnerKind::Generic && !regularizer.empty() && regularizer != "euclidean" &&
      regularizer != "pnorm" && regularizer != "entropy")
    fail("regularizer must be \"euclidean\", \"pnorm\" or \"entropy\"");
  if (!feasible.empty() && feasible != "mahalanobis" && feasible != "ball" && feasible != "simplex")
    fail("feasible must be \"mahalanobis\", \"ball\" or \"simplex\"");
  const bool pnorm = learner == LearnerKind::MTPNorm || (learner == LearnerKind::Generic && regularizer == "pnorm");
  if (p && !pnorm) fail("p is only read by p-norm learners");
  if (p && !(*p > 1.0 && *p <= 2.0)) fail("p must lie in (1, 2]");
  if (pnorm && !p && environment != EnvironmentKind::Csv && dim < 3) fail("p-norm learners need p or dim >= 3");

  if (entropic(*this)) {
    if (!feasible.empty() && feasible != "simplex") fail("entropic learners live on the simplex");
    if (environment == EnvironmentKind::Synthetic || environment == EnvironmentKind::LowerBound)
      fail("entropic learners need simplex or csv data");
  } else {
    if (feasible == "mahalanobis" && pnorm) fail("the Mahalanobis ball goes with the Euclidean regularizer");
    if (feasible == "ball" && pnorm) fail("no projection onto an lp ball; use the simplex");
  }
  if (feasible == "mahalanobis" && independent(*this)) fail("independent learners project per task");
  if (feasible == "simplex" && learner == LearnerKind::IOGD) fail("I-OGD runs on the l2 ball");

  if (independent(*this)) {
    if (b && *b != 0.0) fail("independent learners have b = 0");
    if (!graph_path.empty()) fail("independent learners take no graph");
  }
  if (b && !(*b >= 0.0)) fail("b must be nonnegative");
  if (!graph_path.empty() && b) fail("give either b or graph_path");

  if (environment == EnvironmentKind::LowerBound) {
    if (n_tasks != 2 * dim) fail("the lower-bound environment has n_tasks = 2 dim");
    const double s = data_sigma ? *data_sigma : sigma;
    if (!(s > 0.0 && s < 1.0 / std::sqrt(2.0))) fail("the lower-bound environment needs 0 < sigma < 1/sqrt(2)");
  }
  if (environment == EnvironmentKind::Simplex && (data_sigma ? *data_sigma : sigma) >= 1.0)
    fail("simplex streams need sigma < 1");
  if (environment == EnvironmentKind::Csv) {
    if (csv_path.empty()) fail("csv environment needs csv_path");
    if (task_col.empty()) fail("csv environment needs task_col");
    if (feature_cols.empty()) fail("csv environment needs feature_cols");
  } else if (!csv_path.empty() || source.contains("loss")) {
    fail("csv_path and loss are only read by the csv environment");
  }

  switch (tuning) {
    case TuningKind::Fixed:
      if (!(eta > 0.0)) fail("fixed tuning needs eta > 0");
      break;
    case TuningKind::Oracle:
      if (eta_grid.empty()) fail("oracle tuning needs a nonempty eta_grid");
      for (double e : eta_grid)
        if (!(e > 0.0)) fail("eta_grid values must be positive");
      break;
    case TuningKind::Adaptive:
      if (entropic(*this)) fail("adaptive rates are defined for norm geometries");
      if (!graph_path.empty()) fail("adaptive rates need a clique interaction");
      break;
    case TuningKind::Theory:
      if (learner == LearnerKind::MTEG && !graph_path.empty()) fail("theory tuning for MT-EG needs a clique");
      break;
  }
  if (lipschitz_mode == LipschitzMode::Given && !(lipschitz > 0.0)) fail("lipschitz must be positive");
  if (lipschitz_mode == LipschitzMode::Running && tuning != TuningKind::Theory)
    fail("a running Lipschitz estimate only feeds theory rates");
  for (double v : grid_b)
    if (!(v >= 0.0)) fail("grid_b values must be nonnegative");
  for (double v : grid_eta)
    if (!(v > 0.0)) fail("grid_eta values must be positive");
  for (double v : grid_sigma)
    if (!(v >= 0.0 && v <= 1.0)) fail("grid_sigma values must lie in [0, 1]");
  for (auto v : grid_n_tasks)
    if (v == 0) fail("grid_n_tasks values must be positive");
  if (!grid_b.empty() && (independent(*this) || !graph_path.empty())) fail("grid_b needs a clique multitask learner");
}

Problem build_problem(const RunConfig& c) {
  Problem pr;
  const double ds = c.data_sigma ? *c.data_sigma : c.sigma;
  switch (c.environment) {
    case EnvironmentKind::Synthetic: {
      SyntheticTaskSpec spec{c.n_tasks, c.dim, c.center_norm, ds * ds * c.diameter * c.diameter, c.noise_std, c.seed,
                             c.diameter};
      Stream s = make_synthetic(spec, make_schedule(c.schedule, c.horizon, c.n_tasks));
      pr.rounds = std::move(s.rounds);
      pr.truth = std::move(s.comparator);
      pr.n_tasks = c.n_tasks;
      pr.dim = c.dim;
      break;
    }
    case EnvironmentKind::Simplex: {
      SimplexTaskSpec spec{c.n_tasks, c.dim, ds, c.noise_std, c.seed};
      Stream s = make_simplex_synthetic(spec, make_schedule(c.schedule, c.horizon, c.n_tasks));
      pr.rounds = std::move(s.rounds);
      pr.truth = std::move(s.comparator);
      pr.n_tasks = c.n_tasks;
      pr.dim = c.dim;
      break;
    }
    case EnvironmentKind::LowerBound: {
      const CompoundVector u = make_lower_bound_instance(c.dim, ds);
      Stream s = make_lower_bound_stream(u, make_schedule(c.schedule, c.horizon, c.n_tasks));
      pr.rounds = std::move(s.rounds);
      pr.truth = std::move(s.comparator);
      pr.n_tasks = c.n_tasks;
      pr.dim = c.dim + 1;
      break;
    }
    case EnvironmentKind::Csv: {
      Dataset data = load_csv(c.csv_path, {c.task_col, c.label_col, c.feature_cols, c.loss});
      if (c.horizon > 0 && c.horizon < data.rounds.size()) data.rounds.resize(c.horizon);
      pr.rounds = std::move(data.rounds);
      pr.n_tasks = data.n_tasks;
      pr.dim = data.dim;
      if (entropic(c))
        for (std::size_t t = 0; t < pr.rounds.size(); ++t)
          if (pr.rounds[t].loss.kind == LossKind::LogWealth && !(pr.rounds[t].loss.features.minCoeff() > 0.0))
            throw config_error("round " + std::to_string(t) + ": price relatives must be positive");
      break;
    }
  }
  if ((c.learner == LearnerKind::MTPNorm || c.regularizer == "pnorm") && !c.p && pr.dim < 3)
    throw config_error("p-norm learners need p or dim >= 3");
  return pr;
}

namespace {

double theory_b(const RunConfig& c, std::size_t n) {
  if (independent(c)) return 0.0;
  if (c.b) return *c.b;
  if (entropic(c)) return admissible_b_simplex(c.sigma);
  return static_cast<double>(n);
}

}  // namespace

ResolvedLearner resolve_learner(const RunConfig& c, const Problem& pr, double lipschitz) {
  const std::size_t n = pr.n_tasks, d = pr.dim;
  ResolvedLearner r;
  LearnerConfig& lc = r.learner;

  std::string reg = c.regularizer;
  if (c.learner == LearnerKind::MTPNorm) reg = "pnorm";
  if (c.learner == LearnerKind::IEG || c.learner == LearnerKind::MTEG) reg = "entropy";
  if (reg.empty()) reg = "euclidean";
  if (reg == "pnorm")
    lc.regularizer = Regularizer::pnorm(c.p ? *c.p : p_star_norm_choice(d));
  else if (reg == "entropy")
    lc.regularizer = Regularizer::neg_entropy();
  else
    lc.regularizer = Regularizer::euclidean();

  if (!c.graph_path.empty()) {
    lc.op = InteractionOperator::laplacian(load_graph(c.graph_path, n));
    r.b = 0.0;
  } else {
    r.b = std::min(theory_b(c, n), kMaxCliqueB);
    lc.op = InteractionOperator::clique(n, r.b);
  }

  std::string feasible = c.feasible;
  if (feasible.empty()) {
    if (reg != "euclidean")
      feasible = "simplex";
    else if (c.learner == LearnerKind::IOGD)
      feasible = "ball";
    else
      feasible = "mahalanobis";
  }
  const double dd = c.diameter * c.diameter, nn = static_cast<double>(n);
  if (feasible == "simplex") {
    lc.feasible = FeasibleSet::simplex();
  } else if (feasible == "ball") {
    lc.feasible = FeasibleSet::norm_ball(NormTag::l2(), c.diameter);
  } else if (c.graph_path.empty()) {
    lc.feasible = FeasibleSet::mahalanobis_ball(r.b, c.sigma, n, c.diameter);
  } else {
    // u^T (L kron I) u <= (N-1) sigma^2 D^2 on the local comparator set.
    lc.feasible = FeasibleSet::mahalanobis_ball(0.0, 0.0, n, c.diameter);
    lc.feasible.radius = std::sqrt(nn * dd + (nn - 1.0) * c.sigma * c.sigma * dd);
  }
  r.comparator_set = feasible == "simplex" ? FeasibleSet::simplex() : FeasibleSet::norm_ball(NormTag::l2(), c.diameter);

  lc.variance.kind = feasible == "simplex" ? VarianceSpec::Kind::Simplex : VarianceSpec::Kind::Norm;
  lc.variance.sigma = c.sigma;
  lc.variance.diameter = c.diameter;
  lc.lipschitz = lipschitz;
  if (c.learner == LearnerKind::Generic) r.rule = UpdateRule::Generic;
  try {
    lc.validate();
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  return r;
}

namespace {

bool contains(const FeasibleSet& f, const InteractionOperator& op, const CompoundVector& u) {
  constexpr double tol = 1e-9;
  switch (f.kind) {
    case FeasibleSet::Kind::NormBall:
      for (std::size_t i = 0; i < u.n_tasks(); ++i)
        if (norm(u.block(i), f.norm) > f.radius + tol) return false;
      return true;
    case FeasibleSet::Kind::Simplex:
      for (std::size_t i = 0; i < u.n_tasks(); ++i)
        if (!on_simplex(u.block(i))) return false;
      return true;
    case FeasibleSet::Kind::MahalanobisBall:
      return op.apply(MatrixKind::Sqrt, u).blocks().norm() <= f.radius + tol;
  }
  return false;
}

// The theory learning rate at Lipschitz constant `lip`.
double theory_eta(const RunConfig& c, const ResolvedLearner& r, const Problem& pr, double lip) {
  const std::size_t n = pr.n_tasks, d = pr.dim;
  const double t = static_cast<double>(pr.rounds.size());
  const Regularizer& reg = r.learner.regularizer;
  if (!c.graph_path.empty()) {
    // Constant rate minimizing the Theorem-style bound with B <= radius^2 / 2.
    const double rad = r.learner.feasible.radius;
    return rad * std::sqrt(reg.lambda / (r.learner.op.max_inv_diag() * t)) / lip;
  }
  switch (reg.kind) {
    case RegularizerKind::Euclidean:
      return theory_rate_ogd(c.diameter, lip, n, c.sigma, t, r.b);
    case RegularizerKind::PNorm:
      return theory_rate_pnorm(c.diameter, lip, n, c.sigma, t, r.b, reg.lambda);
    case RegularizerKind::NegEntropy:
      return theory_rate_eg(n, lip, std::log(static_cast<double>(d)), reg.lambda, r.b, t);
  }
  return 0.0;
}

struct Trace {
  std::vector<double> losses;
  std::vector<double> dual_sq;
  double total = 0.0;
  std::size_t clamped = 0;
  std::size_t unconverged = 0;
  double max_residual = 0.0;
  CompoundVector x1;
};

Trace replay(const ResolvedLearner& r, const Problem& pr, const RateSchedule& rate) {
  LearnerConfig lc = r.learner;
  lc.rate = rate;
  Learner learner(lc, pr.dim, std::nullopt, r.rule);
  Trace tr;
  tr.x1 = iterate(learner.state(), lc.op);
  tr.losses.reserve(pr.rounds.size());
  tr.dual_sq.reserve(pr.rounds.size());
  for (const auto& round : pr.rounds) {
    const Vec w = learner.predict(round.active_task);
    const LossEval e = evaluate_loss(round.loss, w);
    tr.total += e.value;
    tr.clamped += e.clamped ? 1 : 0;
    tr.losses.push_back(e.value);
    const double g = norm(e.gradient, lc.regularizer.dual_norm);
    tr.dual_sq.push_back(g * g);
    learner.update(round.active_task, e.gradient);
  }
  tr.unconverged = learner.state().unconverged_steps;
  tr.max_residual = learner.state().max_solver_residual;
  return tr;
}

}  // namespace

RegretReport run_on(const RunConfig& c, const Problem& pr) {
  const auto start = std::chrono::steady_clock::now();
  if (pr.rounds.empty()) throw std::invalid_argument("problem has no rounds");

  const std::size_t n = pr.n_tasks;
  double lip = c.lipschitz;
  if (c.lipschitz_mode != LipschitzMode::Given) {
    // Resolve once with a placeholder to learn the geometry.
    const ResolvedLearner probe = resolve_learner(c, pr, 1.0);
    lip = c.lipschitz_mode == LipschitzMode::Data
              ? data_lipschitz(pr.rounds, probe.comparator_set, probe.learner.regularizer.dual_norm)
              : 1.0;
  }
  const ResolvedLearner r = resolve_learner(c, pr, lip);
  const Regularizer& reg = r.learner.regularizer;

  RegretReport rep;
  rep.b = r.b;
  rep.lipschitz = lip;
  RateSchedule rate;
  Trace tr;
  switch (c.tuning) {
    case TuningKind::Theory:
      rate.kind = RateSchedule::Kind::Constant;
      rate.eta = theory_eta(c, r, pr, c.lipschitz_mode == LipschitzMode::Running ? 1.0 : lip);
      rate.running_lipschitz = c.lipschitz_mode == LipschitzMode::Running;
      tr = replay(r, pr, rate);
      break;
    case TuningKind::Fixed:
      rate = RateSchedule::constant(c.eta);
      tr = replay(r, pr, rate);
      break;
    case TuningKind::Adaptive:
      rate = RateSchedule::adaptive(adaptive_scale(c.diameter, n, c.sigma, r.b));
      tr = replay(r, pr, rate);
      break;
    case TuningKind::Oracle: {
      bool first = true;
      for (double e : c.eta_grid) {
        Trace cand = replay(r, pr, RateSchedule::constant(e));
        if (first || cand.total < tr.total) {
          tr = std::move(cand);
          rate = RateSchedule::constant(e);
          first = false;
        }
      }
      break;
    }
  }
  rep.eta = c.tuning == TuningKind::Adaptive ? rate.scale : rate.eta;
  rep.clamped_rounds = tr.clamped;
  rep.unconverged_steps = tr.unconverged;
  rep.max_solver_residual = tr.max_residual;

  // Per-task comparators in hindsight.
  std::vector<std::vector<const LossInstance*>> per_task(n);
  for (const auto& round : pr.rounds) per_task[round.active_task].push_back(&round.loss);
  rep.comparators = tr.x1;
  rep.comparator_values.assign(n, 0.0);
  rep.task_regret.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (per_task[i].empty()) continue;
    const BatchResult br = batch_comparator(per_task[i], pr.dim, r.comparator_set);
    rep.comparators_converged = rep.comparators_converged && br.converged;
    rep.comparators.set_block(i, br.u);
    rep.comparator_values[i] = br.value;
  }

  // Theorem-style bounds on every prefix.
  std::optional<double> bregman_term;
  const bool constant_rate = (c.tuning == TuningKind::Theory && c.lipschitz_mode != LipschitzMode::Running) ||
                             c.tuning == TuningKind::Fixed;
  if (constant_rate && contains(r.learner.feasible, r.learner.op, rep.comparators)) {
    const double v = constant_rate_bound(reg, r.learner.op, rep.comparators, tr.x1, rate.eta, 0.0);
    if (std::isfinite(v)) bregman_term = v;
  }
  const double accel = std::sqrt(1.0 + c.sigma * c.sigma * (static_cast<double>(n) - 1.0));

  const std::size_t t_max = pr.rounds.size();
  rep.cumulative_loss.resize(t_max);
  rep.regret.resize(t_max);
  rep.bound.resize(t_max);
  double cum = 0.0, comp = 0.0, grad_sq = 0.0;
  for (std::size_t t = 0; t < t_max; ++t) {
    const Round& round = pr.rounds[t];
    cum += tr.losses[t];
    comp += loss_value(round.loss, rep.comparators.block(round.active_task));
    grad_sq += tr.dual_sq[t];
    rep.task_regret[round.active_task] += tr.losses[t];
    rep.cumulative_loss[t] = cum;
    rep.regret[t] = cum - comp;
    if (bregman_term)
      rep.bound[t] = *bregman_term + r.learner.op.max_inv_diag() * rate.eta / (2.0 * reg.lambda) * grad_sq;
    else if (c.tuning == TuningKind::Adaptive)
      rep.bound[t] = 8.0 * c.diameter * accel * std::sqrt(grad_sq);
  }
  for (std::size_t i = 0; i < n; ++i) rep.task_regret[i] -= rep.comparator_values[i];
  rep.sum_sq_dual_grad = grad_sq;
  rep.final_regret = cum - std::accumulate(rep.comparator_values.begin(), rep.comparator_values.end(), 0.0);

  BoundParams bp;
  bp.diameter = c.diameter;
  bp.lipschitz = lip;
  bp.n_tasks = n;
  bp.sigma = independent(c) ? 1.0 : c.sigma;
  bp.horizon = static_cast<double>(t_max);
  bp.sum_sq_dual_grad = grad_sq;
  bp.lambda = reg.lambda;
  bp.bregman_diameter = std::log(static_cast<double>(pr.dim));
  if (c.graph_path.empty() && c.lipschitz_mode != LipschitzMode::Running && c.tuning != TuningKind::Oracle &&
      c.tuning != TuningKind::Fixed && c.learner != LearnerKind::Generic) {
    if (c.tuning == TuningKind::Adaptive) {
      rep.proposition = "adaptive";
      rep.proposition_bound = theory_bound(BoundKind::Adaptive, bp);
    } else if (reg.kind == RegularizerKind::Euclidean) {
      rep.proposition = "ogd";
      rep.proposition_bound = theory_bound(BoundKind::OGD, bp);
    } else if (reg.kind == RegularizerKind::NegEntropy) {
      rep.proposition = "eg";
      rep.proposition_bound = theory_bound(BoundKind::EG, bp);
    } else if (pr.dim >= 3 && reg.p == p_star_norm_choice(pr.dim) &&
               r.learner.feasible.kind == FeasibleSet::Kind::Simplex) {
      rep.proposition = "pnorm_simplex";
      rep.proposition_bound = pnorm_simplex_bound(lip, n, c.sigma, bp.horizon, pr.dim);
    } else {
      rep.proposition = "norm";
      rep.proposition_bound = theory_bound(BoundKind::Norm, bp);
    }
  }

  rep.config = c.to_json();
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

RegretReport run_experiment(const RunConfig& config) {
  config.validate();
  return run_on(config, build_problem(config));
}

std::vector<SweepCell> sweep(const RunConfig& config) {
  config.validate();
  auto axis = [](const auto& grid) {
    using T = typename std::decay_t<decltype(grid)>::value_type;
    std::vector<std::optional<T>> out(grid.begin(), grid.end());
    if (out.empty()) out.push_back(std::nullopt);
    return out;
  };
  std::vector<SweepCell> cells;
  for (const auto& nt : axis(config.grid_n_tasks))
    for (const auto& s : axis(config.grid_sigma))
      for (const auto& b : axis(config.grid_b))
        for (const auto& e : axis(config.grid_eta)) {
          RunConfig c = config;
          if (nt) c.n_tasks = *nt;
          if (s) {
            c.sigma = *s;
            if (!config.source.contains("data_sigma")) c.data_sigma.reset();
          }
          if (b) c.b = *b;
          if (e) {
            c.tuning = TuningKind::Fixed;
            c.eta = *e;
          }
          c.grid_b.clear();
          c.grid_eta.clear();
          c.grid_sigma.clear();
          c.grid_n_tasks.clear();
          c.validate();

          SweepCell cell{b, e, s, nt, {}, 0.0, 0.0};
          for (std::size_t rep = 0; rep < c.repetitions; ++rep) {
            RunConfig rc = c;
            rc.seed = c.seed + rep;
            if (!config.source.contains("schedule_seed")) rc.schedule.seed = rc.seed * 2 + 1;
            cell.finals.push_back(run_experiment(rc).final_regret);
          }
          const double m = static_cast<double>(cell.finals.size());
          cell.mean = std::accumulate(cell.finals.begin(), cell.finals.end(), 0.0) / m;
          if (cell.finals.size() > 1) {
            double ss = 0.0;
            for (double f : cell.finals) ss += (f - cell.mean) * (f - cell.mean);
            cell.std_dev = std::sqrt(ss / (m - 1.0));
          }
          cells.push_back(std::move(cell));
        }
  return cells;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("error while writing '" + path + "'");
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void emit_report(const RegretReport& rep, const std::string& path) {
  std::ostringstream csv;
  csv << "t,cumulative_loss,regret,bound\n";
  for (std::size_t t = 0; t < rep.regret.size(); ++t) {
    csv << (t + 1) << ',' << fmt(rep.cumulative_loss[t]) << ',' << fmt(rep.regret[t]) << ',';
    if (rep.bound[t] && std::isfinite(*rep.bound[t])) csv << fmt(*rep.bound[t]);
    csv << '\n';
  }
  write_file(path, csv.str());

  json meta;
  meta["version"] = version_string();
  meta["config"] = rep.config;
  meta["seed"] = rep.config.value("seed", 0);
  meta["eta"] = finite_or_null(rep.eta);
  meta["b"] = finite_or_null(rep.b);
  meta["lipschitz"] = finite_or_null(rep.lipschitz);
  meta["final_regret"] = finite_or_null(rep.final_regret);
  meta["sum_sq_dual_grad"] = rep.sum_sq_dual_grad;
  meta["comparator_values"] = rep.comparator_values;
  meta["task_regret"] = rep.task_regret;
  meta["comparators_converged"] = rep.comparators_converged;
  json comps = json::array();
  for (std::size_t i = 0; i < rep.comparators.n_tasks(); ++i) {
    const Vec u = rep.comparators.block(i);
    comps.push_back(std::vector<double>(u.data(), u.data() + u.size()));
  }
  meta["comparators"] = comps;
  if (rep.proposition_bound) {
    meta["proposition"] = rep.proposition;
    meta["proposition_bound"] = finite_or_null(*rep.proposition_bound);
  }
  meta["clamped_rounds"] = rep.clamped_rounds;
  meta["unconverged_steps"] = rep.unconverged_steps;
  meta["max_solver_residual"] = rep.max_solver_residual;
  meta["wall_clock_seconds"] = rep.wall_clock_seconds;
  write_file(path + ".meta.json", meta.dump(2) + "\n");
}

void emit_sweep(const std::vector<SweepCell>& cells, const std::string& path) {
  std::ostringstream csv;
  csv << "n_tasks,sigma,b,eta,repetitions,mean_final_regret,std_final_regret\n";
  auto opt = [](const auto& v) { return v ? fmt(static_cast<double>(*v)) : std::string(); };
  for (const auto& c : cells)
    csv << opt(c.n_tasks) << ',' << opt(c.sigma) << ',' << opt(c.b) << ',' << opt(c.eta) << ',' << c.finals.size()
        << ',' << fmt(c.mean) << ',' << fmt(c.std_dev) << '\n';
  write_file(path, csv.str());
}

}  // namespace mtomd

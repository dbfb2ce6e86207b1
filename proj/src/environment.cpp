#include "mtomd/environment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "mtomd/errors.hpp"
#include "mtomd/optim.hpp"
#include "mtomd/variance.hpp"

namespace mtomd {

LossEval evaluate_loss(const LossInstance& inst, VecRef w) {
  if (w.size() != inst.features.size()) throw std::invalid_argument("loss: weight and feature dimensions differ");
  const Vec& x = inst.features;
  LossEval out;
  switch (inst.kind) {
    case LossKind::Square: {
      const double r = w.dot(x) - inst.label;
      out.value = r * r;
      out.gradient = 2.0 * r * x;
      break;
    }
    case LossKind::Logistic: {
      const double m = inst.label * w.dot(x);
      // ln(1 + e^{-m}) and 1/(1 + e^{m}) without overflow on either side.
      out.value = m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
      const double s = m > 0.0 ? std::exp(-m) / (1.0 + std::exp(-m)) : 1.0 / (1.0 + std::exp(m));
      out.gradient = -inst.label * s * x;
      break;
    }
    case LossKind::LogWealth: {
      double a = w.dot(x);
      if (a <= kWealthFloor) {
        a = kWealthFloor;
        out.clamped = true;
      }
      out.value = -std::log(a);
      out.gradient = -x / a;
      break;
    }
    case LossKind::Linear:
      out.value = x.dot(w);
      out.gradient = x;
      break;
  }
  return out;
}

double loss_value(const LossInstance& inst, VecRef w) { return evaluate_loss(inst, w).value; }

Vec loss_subgradient(const LossInstance& inst, VecRef w) { return evaluate_loss(inst, w).gradient; }

std::vector<std::size_t> make_schedule(const ScheduleSpec& spec, std::size_t horizon, std::size_t n_tasks) {
  if (horizon == 0 || n_tasks == 0) throw std::invalid_argument("schedule needs T >= 1 and N >= 1");
  std::vector<std::size_t> out(horizon);
  switch (spec.kind) {
    case ScheduleSpec::Kind::RoundRobin:
      for (std::size_t t = 0; t < horizon; ++t) out[t] = t % n_tasks;
      break;
    case ScheduleSpec::Kind::UniformRandom: {
      std::mt19937_64 rng(spec.seed);
      for (auto& i : out) i = static_cast<std::size_t>(rng() % n_tasks);
      break;
    }
    case ScheduleSpec::Kind::Blocked:
      if (spec.block_len == 0) throw std::invalid_argument("blocked schedule needs block_len >= 1");
      for (std::size_t t = 0; t < horizon; ++t) out[t] = (t / spec.block_len) % n_tasks;
      break;
    case ScheduleSpec::Kind::FromData:
      throw std::invalid_argument("a FromData schedule comes with its dataset");
  }
  return out;
}

namespace {

Vec random_unit(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> normal;
  Vec v(static_cast<Eigen::Index>(d));
  do {
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = normal(rng);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

void check_schedule(const std::vector<std::size_t>& schedule, std::size_t n) {
  if (schedule.empty()) throw std::invalid_argument("empty schedule");
  for (auto i : schedule)
    if (i >= n) throw std::invalid_argument("schedule references task " + std::to_string(i));
}

}  // namespace

Stream make_synthetic(const SyntheticTaskSpec& spec, const std::vector<std::size_t>& schedule) {
  const std::size_t n = spec.n_tasks, d = spec.dim;
  if (n == 0 || d == 0) throw std::invalid_argument("synthetic tasks need N >= 1 and d >= 1");
  if (!(spec.diameter > 0.0) || !(spec.spread >= 0.0) || !(spec.center_norm >= 0.0) || !(spec.noise_std >= 0.0))
    throw std::invalid_argument("synthetic tasks need D > 0 and nonnegative spread, centre norm and noise");
  if (spec.spread > spec.diameter * spec.diameter * (1.0 + 1e-12))
    throw std::invalid_argument("requested variance exceeds D^2");
  check_schedule(schedule, n);

  std::mt19937_64 rng(spec.seed);
  const std::size_t paired = n - n % 2;
  // Var = paired s^2 / (N - 1): every paired block sits at distance s from u0.
  const double s = n > 1 && paired > 0 ? std::sqrt(spec.spread * static_cast<double>(n - 1) / paired) : 0.0;
  const double c = std::min(spec.center_norm, std::max(0.0, spec.diameter - s));

  CompoundVector u(n, d);
  bool accepted = false;
  for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
    const Vec u0 = c * random_unit(rng, d);
    for (std::size_t i = 0; i < paired; i += 2) {
      const Vec z = random_unit(rng, d);
      u.set_block(i, u0 + s * z);
      u.set_block(i + 1, u0 - s * z);
    }
    if (paired < n) u.set_block(n - 1, u0);
    const double v = norm_variance(u, NormTag::l2());
    bool inside = true;
    for (std::size_t i = 0; i < n; ++i) inside = inside && u.block(i).norm() <= spec.diameter * (1.0 + 1e-12);
    accepted = inside && std::abs(v - spec.spread) <= 0.02 * spec.spread + 1e-15;
  }
  if (!accepted) throw std::runtime_error("synthetic generator could not hit the requested variance");

  Stream out;
  out.comparator = u;
  out.rounds.reserve(schedule.size());
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t t = 0; t < schedule.size(); ++t) {
    Round r;
    r.t = t;
    r.active_task = schedule[t];
    r.loss.kind = LossKind::Square;
    r.loss.features = random_unit(rng, d);
    r.loss.label = u.block(r.active_task).dot(r.loss.features) + spec.noise_std * noise(rng);
    out.rounds.push_back(std::move(r));
  }
  return out;
}

Stream make_simplex_synthetic(const SimplexTaskSpec& spec, const std::vector<std::size_t>& schedule) {
  const std::size_t n = spec.n_tasks, d = spec.dim;
  if (n == 0 || d < 2) throw std::invalid_argument("simplex tasks need N >= 1 and d >= 2");
  if (!(spec.sigma >= 0.0 && spec.sigma < 1.0)) throw std::invalid_argument("simplex tasks need sigma in [0, 1)");
  if (!(spec.noise_std >= 0.0)) throw std::invalid_argument("noise must be nonnegative");
  check_schedule(schedule, n);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  std::normal_distribution<double> normal;
  Vec u0(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < u0.size(); ++j) u0[j] = unif(rng);
  u0 /= u0.sum();
  Mat z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = normal(rng);

  auto build = [&](double alpha) {
    CompoundVector u(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      Vec b = u0.array() * (alpha * z.row(static_cast<Eigen::Index>(i)).transpose().array()).exp();
      u.set_block(i, b / b.sum());
    }
    return u;
  };

  const double target = spec.sigma * spec.sigma;
  CompoundVector u = build(0.0);
  if (target > 0.0 && n > 1) {
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 200 && simplex_variance(build(hi)) < target; ++k) hi *= 2.0;
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      u = build(mid);
      const double v = simplex_variance(u);
      if (v > target) {
        hi = mid;
      } else if (v < 0.98 * target) {
        lo = mid;
      } else {
        break;
      }
    }
    const double v = simplex_variance(u);
    if (v > target || v < 0.98 * target) throw std::runtime_error("simplex generator could not hit the variance");
  }

  Stream out;
  out.comparator = u;
  out.rounds.reserve(schedule.size());
  std::uniform_real_distribution<double> feat(0.0, 1.0);
  for (std::size_t t = 0; t < schedule.size(); ++t) {
    Round r;
    r.t = t;
    r.active_task = schedule[t];
    r.loss.kind = LossKind::Square;
    r.loss.features.resize(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < r.loss.features.size(); ++j) r.loss.features[j] = feat(rng);
    r.loss.label = u.block(r.active_task).dot(r.loss.features) + spec.noise_std * normal(rng);
    out.rounds.push_back(std::move(r));
  }
  return out;
}

CompoundVector make_lower_bound_instance(std::size_t d, double sigma) {
  if (d == 0) throw std::invalid_argument("lower-bound instance needs d >= 1");
  if (!(sigma > 0.0 && sigma < 1.0 / std::sqrt(2.0)))
    throw std::invalid_argument("lower-bound instance needs 0 < sigma < 1/sqrt(2)");
  const std::size_t n = 2 * d;
  const double sp = sigma * std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n));
  Vec u0 = Vec::Zero(static_cast<Eigen::Index>(d + 1));
  u0[static_cast<Eigen::Index>(d)] = std::sqrt(1.0 - sigma * sigma);

  CompoundVector u(n, d + 1);
  for (std::size_t j = 0; j < d; ++j) {
    Vec e = Vec::Zero(static_cast<Eigen::Index>(d + 1));
    e[static_cast<Eigen::Index>(j)] = sp;
    u.set_block(2 * j, u0 + e);
    u.set_block(2 * j + 1, u0 - e);
  }

  const double v = norm_variance(u, NormTag::l2());
  if (std::abs(v - sigma * sigma) > 1e-10) throw std::logic_error("lower-bound instance variance is off");
  for (std::size_t i = 0; i < n; ++i)
    if (u.block(i).squaredNorm() < 1.0 - 2.0 * sigma * sigma - 1e-12)
      throw std::logic_error("lower-bound instance block norm is too small");
  return u;
}

Stream make_lower_bound_stream(const CompoundVector& u, const std::vector<std::size_t>& schedule) {
  check_schedule(schedule, u.n_tasks());
  Stream out;
  out.comparator = u;
  out.rounds.reserve(schedule.size());
  for (std::size_t t = 0; t < schedule.size(); ++t) {
    Round r;
    r.t = t;
    r.active_task = schedule[t];
    r.loss.kind = LossKind::Linear;
    const Vec b = u.block(r.active_task);
    r.loss.features = -b / b.norm();
    out.rounds.push_back(std::move(r));
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t\r");
    const auto e = c.find_last_not_of(" \t\r");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

double parse_cell(const std::string& cell, const std::string& where) {
  if (cell.empty()) throw config_error(where + ": empty cell");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw config_error(where + ": non-numeric cell '" + cell + "'");
  }
  if (used != cell.size() || !std::isfinite(v)) throw config_error(where + ": non-numeric cell '" + cell + "'");
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open CSV file '" + path + "'");
  if (schema.feature_cols.empty()) throw config_error("CSV schema lists no feature columns");
  const bool needs_label = schema.loss == LossKind::Square || schema.loss == LossKind::Logistic;
  if (needs_label && schema.label_col.empty()) throw config_error("CSV schema needs a label column for this loss");

  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      header = split_csv(line);
      break;
    }
  }
  if (header.empty()) throw config_error(path + ": no rounds");
  if (header.front().rfind("\xEF\xBB\xBF", 0) == 0) header.front().erase(0, 3);

  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw config_error(path + ": unknown column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t task_idx = column(schema.task_col);
  const std::size_t label_idx = needs_label || !schema.label_col.empty() ? column(schema.label_col) : 0;
  std::vector<std::size_t> feat_idx;
  for (const auto& f : schema.feature_cols) feat_idx.push_back(column(f));

  Dataset ds;
  ds.dim = feat_idx.size();
  std::map<std::string, std::size_t> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw config_error(where + ": expected " + std::to_string(header.size()) + " cells, found " +
                         std::to_string(cells.size()));

    const std::string& task = cells[task_idx];
    if (task.empty()) throw config_error(where + ": empty task id");
    auto [it, inserted] = ids.emplace(task, ids.size());
    if (inserted) ds.task_names.push_back(task);

    Round r;
    r.t = ds.rounds.size();
    r.active_task = it->second;
    r.loss.kind = schema.loss;
    r.loss.features.resize(static_cast<Eigen::Index>(ds.dim));
    for (std::size_t j = 0; j < feat_idx.size(); ++j)
      r.loss.features[static_cast<Eigen::Index>(j)] = parse_cell(cells[feat_idx[j]], where);
    if (needs_label || !schema.label_col.empty()) r.loss.label = parse_cell(cells[label_idx], where);
    if (schema.loss == LossKind::Logistic && r.loss.label != 1.0 && r.loss.label != -1.0)
      throw config_error(where + ": logistic labels must be -1 or +1");
    if (schema.loss == LossKind::LogWealth && !(r.loss.features.minCoeff() > 0.0))
      throw config_error(where + ": price relatives must be positive");
    ds.rounds.push_back(std::move(r));
  }
  if (ds.rounds.empty()) throw config_error(path + ": no rounds");
  ds.n_tasks = ds.task_names.size();
  return ds;
}

BatchResult batch_comparator(const std::vector<const LossInstance*>& losses, std::size_t dim,
                             const FeasibleSet& feasible, const BatchOptions& opts) {
  if (losses.empty()) throw std::invalid_argument("batch comparator needs at least one round");
  const auto d = static_cast<Eigen::Index>(dim);
  for (const auto* l : losses)
    if (l->features.size() != d) throw std::invalid_argument("batch comparator: feature dimension mismatch");

  Projector project;
  Vec x0;
  switch (feasible.kind) {
    case FeasibleSet::Kind::NormBall:
      project = [&feasible](const Vec& x) { return project_norm_ball(x, feasible.norm, feasible.radius); };
      x0 = Vec::Zero(d);
      break;
    case FeasibleSet::Kind::Simplex:
      project = [](const Vec& x) { return project_simplex(x); };
      x0 = Vec::Constant(d, 1.0 / static_cast<double>(dim));
      break;
    case FeasibleSet::Kind::MahalanobisBall:
      throw std::invalid_argument("batch comparator works on a per-task set");
  }

  // Averaged objective: keeps the stopping tolerance independent of T_i.
  const double m = static_cast<double>(losses.size());
  const bool quadratic =
      std::all_of(losses.begin(), losses.end(), [](const LossInstance* l) { return l->kind == LossKind::Square; });
  Objective f;
  Mat h;
  Vec c;
  double c0 = 0.0;
  if (quadratic) {
    h = Mat::Zero(d, d);
    c = Vec::Zero(d);
    for (const auto* l : losses) {
      h.selfadjointView<Eigen::Lower>().rankUpdate(l->features);
      c += l->label * l->features;
      c0 += l->label * l->label;
    }
    h = h.selfadjointView<Eigen::Lower>();
    h /= m;
    c /= m;
    c0 /= m;
    f = [&](const Vec& x, Vec& g) {
      const Vec hx = h * x;
      g = 2.0 * (hx - c);
      return x.dot(hx) - 2.0 * c.dot(x) + c0;
    };
  } else {
    f = [&](const Vec& x, Vec& g) {
      g = Vec::Zero(d);
      double v = 0.0;
      for (const auto* l : losses) {
        const LossEval e = evaluate_loss(*l, x);
        v += e.value;
        g += e.gradient;
      }
      g /= m;
      return v / m;
    };
  }

  SpgOptions so;
  so.tolerance = opts.tolerance;
  so.max_iterations = opts.max_iterations;
  const SpgResult r = minimize_spg(f, project, x0, so);

  BatchResult out;
  out.u = r.x;
  out.residual = r.residual;
  out.iterations = r.iterations;
  out.converged = r.converged;
  // Exact sum at the returned point, free of the averaged model's rounding.
  for (const auto* l : losses) out.value += loss_value(*l, out.u);
  return out;
}

double data_lipschitz(const std::vector<Round>& rounds, const FeasibleSet& feasible, const NormTag& dual) {
  double best = 0.0;
  const bool simplex = feasible.kind == FeasibleSet::Kind::Simplex;
  if (feasible.kind == FeasibleSet::Kind::MahalanobisBall)
    throw std::invalid_argument("data_lipschitz needs the per-task set");
  for (const auto& r : rounds) {
    const Vec& x = r.loss.features;
    const double xs = norm(x, dual);
    double g = 0.0;
    switch (r.loss.kind) {
      case LossKind::Square:
        if (simplex) {
          g = 2.0 * std::max(std::abs(x.maxCoeff() - r.loss.label), std::abs(x.minCoeff() - r.loss.label)) * xs;
        } else {
          // |w^T x| <= ||w|| ||x||_* for every w in the ball.
          g = 2.0 * (feasible.radius * norm(x, dual_norm_tag(feasible.norm)) + std::abs(r.loss.label)) *
              norm(x, dual);
        }
        break;
      case LossKind::Logistic:
      case LossKind::Linear:
        g = xs;
        break;
      case LossKind::LogWealth:
        if (!simplex) throw std::invalid_argument("log-wealth losses need the simplex");
        g = xs / std::max(x.minCoeff(), kWealthFloor);
        break;
    }
    best = std::max(best, g);
  }
  return best > 0.0 ? best : 1.0;
}

}  // namespace mtomd

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "mtomd/environment.hpp"
#include "mtomd/errors.hpp"
#include "mtomd/variance.hpp"
#include "oracles.hpp"

using namespace mtomd;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double a : v) x[i++] = a;
  return x;
}

LossInstance make(LossKind k, Vec x, double y = 0.0) { return {k, std::move(x), y}; }

std::string write_temp(const std::string& name, const std::string& body) {
  const std::string path = "/tmp/mtomd_env_" + name + ".csv";
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST_CASE("loss values") {
  CHECK(loss_value(make(LossKind::Square, vec({1, 0}), 1.0), vec({0, 0})) == 1.0);
  CHECK(loss_value(make(LossKind::Logistic, vec({1, 2}), 1.0), vec({0, 0})) == doctest::Approx(std::log(2.0)));
  CHECK(loss_value(make(LossKind::LogWealth, vec({1, 1})), vec({0.5, 0.5})) == doctest::Approx(0.0));
  CHECK(loss_value(make(LossKind::Linear, vec({2, -1})), vec({0.5, 0.5})) == doctest::Approx(0.5));
}

TEST_CASE("logistic loss is stable at large margins") {
  const LossInstance l = make(LossKind::Logistic, vec({1.0}), -1.0);
  CHECK(loss_value(l, vec({800.0})) == doctest::Approx(800.0));
  CHECK(loss_value(l, vec({-800.0})) == doctest::Approx(0.0));
  CHECK(loss_subgradient(l, vec({800.0})).allFinite());
}

TEST_CASE("loss subgradients") {
  const Vec sq = loss_subgradient(make(LossKind::Square, vec({1, 0}), 0.5), vec({0, 0}));
  CHECK(sq[0] == doctest::Approx(-1.0));
  CHECK(sq[1] == 0.0);
  const Vec lg = loss_subgradient(make(LossKind::Logistic, vec({2, -4}), -1.0), vec({0, 0}));
  CHECK(lg[0] == doctest::Approx(1.0));
  CHECK(lg[1] == doctest::Approx(-2.0));
  const Vec lw = loss_subgradient(make(LossKind::LogWealth, vec({2, 1})), vec({0.5, 0.5}));
  CHECK(lw[0] == doctest::Approx(-2.0 / 1.5));
  const Vec li = loss_subgradient(make(LossKind::Linear, vec({3, 1})), vec({0.2, 0.8}));
  CHECK((li - vec({3, 1})).norm() == 0.0);
}

TEST_CASE("subgradients match finite differences") {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.1, 2.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Eigen::Index d = 2 + k % 5;
    Vec x(d), w(d), p(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      x[j] = z(rng);
      w[j] = z(rng);
      p[j] = u(rng);
    }
    const LossInstance cases[] = {make(LossKind::Square, x, z(rng)), make(LossKind::Logistic, x, k % 2 ? 1.0 : -1.0),
                                  make(LossKind::LogWealth, p), make(LossKind::Linear, x)};
    for (const auto& c : cases) {
      const Vec at = c.kind == LossKind::LogWealth ? Vec(w.cwiseAbs() / w.cwiseAbs().sum()) : w;
      const Vec fd = oracle::fd_gradient([&](const Vec& v) { return loss_value(c, v); }, at);
      const Vec g = loss_subgradient(c, at);
      worst = std::max(worst, (fd - g).norm() / std::max(g.norm(), 1e-8));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("log wealth clamps a vanishing argument") {
  const LossEval e = evaluate_loss(make(LossKind::LogWealth, vec({1, 1})), vec({0.0, 0.0}));
  CHECK(e.clamped);
  CHECK(e.value == doctest::Approx(-std::log(kWealthFloor)));
  CHECK(e.gradient.allFinite());
  CHECK_FALSE(evaluate_loss(make(LossKind::LogWealth, vec({1, 1})), vec({0.5, 0.5})).clamped);
}

TEST_CASE("schedules") {
  CHECK(make_schedule(ScheduleSpec::round_robin(), 5, 3) == std::vector<std::size_t>{0, 1, 2, 0, 1});
  CHECK(make_schedule(ScheduleSpec::blocked(2), 6, 2) == std::vector<std::size_t>{0, 0, 1, 1, 0, 0});
  const auto a = make_schedule(ScheduleSpec::uniform_random(9), 200, 7);
  CHECK(a == make_schedule(ScheduleSpec::uniform_random(9), 200, 7));
  CHECK(a != make_schedule(ScheduleSpec::uniform_random(10), 200, 7));
  for (auto i : a) REQUIRE(i < 7);
  ScheduleSpec data;
  data.kind = ScheduleSpec::Kind::FromData;
  CHECK_THROWS(make_schedule(data, 5, 2));
  CHECK_THROWS(make_schedule(ScheduleSpec::blocked(0), 5, 2));
}

TEST_CASE("synthetic streams") {
  const auto sched = make_schedule(ScheduleSpec::round_robin(), 300, 6);
  const Stream flat = make_synthetic({6, 4, 0.5, 0.0, 0.0, 3, 1.0}, sched);
  CHECK(norm_variance(flat.comparator, NormTag::l2()) == doctest::Approx(0.0).epsilon(1e-12));

  const Stream s = make_synthetic({6, 4, 0.5, 0.25, 0.0, 3, 1.0}, sched);
  const double v = norm_variance(s.comparator, NormTag::l2());
  CHECK(v >= 0.245);
  CHECK(v <= 0.255);
  for (std::size_t i = 0; i < 6; ++i) CHECK(s.comparator.block(i).norm() <= 1.0 + 1e-12);
  double total = 0.0;
  for (const auto& r : s.rounds) total += loss_value(r.loss, s.comparator.block(r.active_task));
  CHECK(total == doctest::Approx(0.0).epsilon(1e-20));

  const Stream again = make_synthetic({6, 4, 0.5, 0.25, 0.0, 3, 1.0}, sched);
  CHECK((again.comparator.blocks() - s.comparator.blocks()).norm() == 0.0);
  CHECK(again.rounds[17].loss.features == s.rounds[17].loss.features);
}

TEST_CASE("synthetic square gradients respect the data bound") {
  const auto sched = make_schedule(ScheduleSpec::uniform_random(4), 500, 5);
  const Stream s = make_synthetic({5, 3, 0.4, 0.3, 0.1, 4, 1.0}, sched);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  for (const auto& r : s.rounds) {
    Vec w(3);
    w << z(rng), z(rng), z(rng);
    w /= std::max(1.0, w.norm());
    const double x = r.loss.features.norm();
    const double bound = 2.0 * (x + std::abs(r.loss.label)) * x;
    REQUIRE(loss_subgradient(r.loss, w).norm() <= bound + 1e-12);
  }
}

TEST_CASE("simplex synthetic streams") {
  const auto sched = make_schedule(ScheduleSpec::round_robin(), 100, 5);
  const Stream s = make_simplex_synthetic({5, 4, 0.3, 0.0, 8}, sched);
  for (std::size_t i = 0; i < 5; ++i) CHECK(on_simplex(s.comparator.block(i)));
  const double v = simplex_variance(s.comparator);
  CHECK(v >= 0.98 * 0.09);
  CHECK(v <= 0.09 + 1e-12);
}

TEST_CASE("lower bound instance") {
  for (std::size_t d : {1u, 2u, 5u, 10u}) {
    for (double sigma : {0.01, 0.2, 0.5, 0.7}) {
      const CompoundVector u = make_lower_bound_instance(d, sigma);
      REQUIRE(u.n_tasks() == 2 * d);
      REQUIRE(norm_variance(u, NormTag::l2()) == doctest::Approx(sigma * sigma).epsilon(1e-10));
      for (std::size_t i = 0; i < u.n_tasks(); ++i) REQUIRE(u.block(i).squaredNorm() >= 1.0 - 2.0 * sigma * sigma - 1e-12);
    }
  }
  const CompoundVector tiny = make_lower_bound_instance(3, 1e-6);
  CHECK(norm_variance(tiny, NormTag::l2()) < 1e-11);
  CHECK_THROWS(make_lower_bound_instance(2, 0.0));
  CHECK_THROWS(make_lower_bound_instance(2, 0.75));
  CHECK_THROWS(make_lower_bound_instance(0, 0.2));
}

TEST_CASE("lower bound stream") {
  const CompoundVector u = make_lower_bound_instance(2, 0.2);
  const Stream s = make_lower_bound_stream(u, make_schedule(ScheduleSpec::round_robin(), 8, 4));
  REQUIRE(s.rounds.size() == 8);
  for (const auto& r : s.rounds) {
    REQUIRE(r.loss.kind == LossKind::Linear);
    REQUIRE(r.loss.features.norm() == doctest::Approx(1.0));
    const Vec own = u.block(r.active_task);
    REQUIRE(loss_value(r.loss, own) == doctest::Approx(-own.norm()));
  }
}

TEST_CASE("csv loading") {
  const std::string path = write_temp("ok", "task,y,a,b\nbeta,1.5,1,0\nalpha,0.5,0,1\nbeta,2,1,1\n");
  const Dataset ds = load_csv(path, {"task", "y", {"a", "b"}, LossKind::Square});
  CHECK(ds.n_tasks == 2);
  CHECK(ds.dim == 2);
  REQUIRE(ds.rounds.size() == 3);
  CHECK(ds.task_names == std::vector<std::string>{"beta", "alpha"});
  CHECK(ds.rounds[1].active_task == 1);
  CHECK(ds.rounds[2].active_task == 0);
  CHECK(ds.rounds[2].loss.label == 2.0);
  CHECK((ds.rounds[0].loss.features - vec({1, 0})).norm() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("csv errors") {
  auto message = [](const std::string& body, const CsvSchema& schema) -> std::string {
    const std::string path = write_temp("bad", body);
    std::string what;
    try {
      load_csv(path, schema);
    } catch (const config_error& e) {
      what = e.what();
    }
    std::remove(path.c_str());
    return what;
  };
  const CsvSchema sq{"task", "y", {"a", "b"}, LossKind::Square};
  CHECK(message("task,y,a,b\n", sq).find("no rounds") != std::string::npos);
  CHECK(message("", sq).find("no rounds") != std::string::npos);
  CHECK(message("task,y,a,b\n0,1,2,3\n0,1,2\n", sq).find(":3") != std::string::npos);
  CHECK(message("task,y,a,b\n0,1,x,3\n", sq).find(":2") != std::string::npos);
  CHECK(message("task,y,a,c\n0,1,2,3\n", sq).find("b") != std::string::npos);
  CHECK_FALSE(message("task,y,a\n0,0.5,1\n", {"task", "y", {"a"}, LossKind::Logistic}).empty());
  CHECK_FALSE(message("task,a\n0,-1\n", {"task", "", {"a"}, LossKind::LogWealth}).empty());
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", sq), config_error);
}

TEST_CASE("batch comparator on one square round") {
  const LossInstance l = make(LossKind::Square, vec({1, 0}), 0.5);
  const BatchResult r = batch_comparator({&l}, 2, FeasibleSet::norm_ball(NormTag::l2(), 1.0));
  CHECK(r.converged);
  CHECK(r.value == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(r.u[0] == doctest::Approx(0.5));
}

TEST_CASE("batch comparator for constant prices picks the best asset") {
  const LossInstance l = make(LossKind::LogWealth, vec({1.0, 1.3, 0.9}));
  std::vector<const LossInstance*> ls(7, &l);
  const BatchResult r = batch_comparator(ls, 3, FeasibleSet::simplex());
  double grid_best = 1e300;
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; i + j <= 100; ++j) {
      const Vec w = vec({i / 100.0, j / 100.0, (100 - i - j) / 100.0});
      double v = 0.0;
      for (const auto* p : ls) v += loss_value(*p, w);
      grid_best = std::min(grid_best, v);
    }
  CHECK(r.value <= grid_best + 1e-10);
  CHECK(r.value == doctest::Approx(-7.0 * std::log(1.3)).epsilon(1e-10));
  CHECK(r.u[1] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("batch comparator beats random feasible points") {
  std::mt19937_64 rng(52);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::Index d = 4;
  std::vector<LossInstance> data;
  for (int t = 0; t < 40; ++t) {
    Vec x(d);
    for (Eigen::Index j = 0; j < d; ++j) x[j] = z(rng);
    data.push_back(make(LossKind::Logistic, x, t % 3 ? 1.0 : -1.0));
  }
  std::vector<const LossInstance*> ptrs;
  for (const auto& l : data) ptrs.push_back(&l);
  auto total = [&](const Vec& w) {
    double v = 0.0;
    for (const auto* p : ptrs) v += loss_value(*p, w);
    return v;
  };
  const BatchResult ball = batch_comparator(ptrs, d, FeasibleSet::norm_ball(NormTag::l2(), 1.0));
  const BatchResult simplex = batch_comparator(ptrs, d, FeasibleSet::simplex());
  CHECK(ball.converged);
  CHECK(simplex.converged);
  CHECK(ball.value == doctest::Approx(total(ball.u)));
  for (int k = 0; k < 1000; ++k) {
    Vec w(d), s(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      w[j] = z(rng);
      s[j] = u(rng);
    }
    w *= std::pow(u(rng), 1.0 / d) / w.norm();
    REQUIRE(ball.value <= total(w) + 1e-10);
    REQUIRE(simplex.value <= total(s / s.sum()) + 1e-10);
  }
}

TEST_CASE("batch comparator of a constant loss") {
  const LossInstance l = make(LossKind::Linear, vec({0.0, 0.0}));
  std::vector<const LossInstance*> ls(5, &l);
  const BatchResult r = batch_comparator(ls, 2, FeasibleSet::norm_ball(NormTag::l2(), 1.0));
  CHECK(r.value == 0.0);
  CHECK(r.u.norm() <= 1.0 + 1e-12);
  CHECK_THROWS(batch_comparator(ls, 2, FeasibleSet::mahalanobis_ball(1.0, 1.0, 2, 1.0)));
}

TEST_CASE("data lipschitz") {
  std::vector<Round> rounds(2);
  rounds[0].loss = make(LossKind::Linear, vec({3, -4}));
  rounds[1].loss = make(LossKind::Linear, vec({1, 1}));
  CHECK(data_lipschitz(rounds, FeasibleSet::norm_ball(NormTag::l2(), 1.0), NormTag::l2()) == doctest::Approx(5.0));
  CHECK(data_lipschitz(rounds, FeasibleSet::simplex(), NormTag::linf()) == doctest::Approx(4.0));
  std::vector<Round> zero(1);
  zero[0].loss = make(LossKind::Linear, vec({0, 0}));
  CHECK(data_lipschitz(zero, FeasibleSet::simplex(), NormTag::l2()) == 1.0);
}

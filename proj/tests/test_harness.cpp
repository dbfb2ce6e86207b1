#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mtomd/errors.hpp"
#include "mtomd/harness.hpp"

using namespace mtomd;
using nlohmann::json;

namespace {

RunConfig parse(const json& doc) { return RunConfig::from_json(doc); }

json small_run() {
  return {{"learner", "MT-OGD"}, {"environment", "synthetic"}, {"n_tasks", 4}, {"dim", 3},
          {"horizon", 200},      {"sigma", 0.5},               {"seed", 7}};
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mtomd_harness_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("config parsing rejects unknown keys and bad values") {
  CHECK_THROWS_AS(parse({{"learnr", "MT-OGD"}}), config_error);
  CHECK_THROWS_AS(parse({{"learner", "MT-SGD"}}), config_error);
  CHECK_THROWS_AS(parse({{"n_tasks", -1}}), config_error);
  CHECK_THROWS_AS(parse({{"n_tasks", 2.5}}), config_error);
  CHECK_THROWS_AS(parse({{"sigma", "small"}}), config_error);
  CHECK_THROWS_AS(parse({{"lipschitz", "big"}}), config_error);
  CHECK_THROWS_AS(parse(json::array()), config_error);

  auto invalid = [](json doc) { CHECK_THROWS_AS(parse(doc).validate(), config_error); };
  invalid({{"repetitions", 0}});
  invalid({{"sigma", 1.5}});
  invalid({{"learner", "I-OGD"}, {"b", 2.0}});
  invalid({{"learner", "MT-EG"}, {"environment", "synthetic"}});
  invalid({{"tuning", "fixed"}});
  invalid({{"tuning", "oracle"}});
  invalid({{"environment", "csv"}});
  invalid({{"environment", "lower_bound"}, {"n_tasks", 3}, {"dim", 2}});
  invalid({{"learner", "MT-PNorm"}, {"feasible", "ball"}, {"p", 1.5}});

  CHECK_NOTHROW(parse(small_run()).validate());
  const RunConfig c = parse({{"b", "theory"}, {"lipschitz", 2.0}});
  CHECK_FALSE(c.b.has_value());
  CHECK(c.lipschitz_mode == LipschitzMode::Given);
  CHECK(c.lipschitz == 2.0);
}

TEST_CASE("config echo reparses to the same run") {
  json doc = small_run();
  doc["eta_grid"] = {0.1, 0.2};
  doc["tuning"] = "oracle";
  const RunConfig a = parse(doc);
  const RunConfig b = parse(a.to_json());
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("MT-OGD with b = 0 matches I-OGD on the same stream") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    json doc = small_run();
    doc["seed"] = seed;
    doc["tuning"] = "fixed";
    doc["eta"] = 0.05;
    doc["lipschitz"] = 1.0;
    json mt = doc;
    mt["b"] = 0.0;
    mt["feasible"] = "ball";
    json ind = doc;
    ind["learner"] = "I-OGD";
    const RegretReport a = run_experiment(parse(mt));
    const RegretReport b = run_experiment(parse(ind));
    REQUIRE(a.cumulative_loss.size() == b.cumulative_loss.size());
    for (std::size_t t = 0; t < a.cumulative_loss.size(); ++t)
      REQUIRE(a.cumulative_loss[t] == doctest::Approx(b.cumulative_loss[t]).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("a realizable stream with the learner at the comparator has zero regret") {
  json doc = small_run();
  doc["sigma"] = 0.0;
  doc["center_norm"] = 0.0;
  doc["noise_std"] = 0.0;
  const RegretReport rep = run_experiment(parse(doc));
  CHECK(rep.final_regret == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  for (double v : rep.cumulative_loss) REQUIRE(v == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("regret decomposes over tasks") {
  for (const char* learner : {"MT-OGD", "I-OGD"}) {
    json doc = small_run();
    doc["learner"] = learner;
    doc["schedule"] = "uniform";
    doc["noise_std"] = 0.1;
    const RegretReport rep = run_experiment(parse(doc));
    const double sum = std::accumulate(rep.task_regret.begin(), rep.task_regret.end(), 0.0);
    CHECK(sum == doctest::Approx(rep.final_regret).epsilon(1e-9).scale(1.0));
    CHECK(rep.regret.back() == doctest::Approx(rep.final_regret).epsilon(1e-9).scale(1.0));
    const double losses = rep.cumulative_loss.back();
    const double comps = std::accumulate(rep.comparator_values.begin(), rep.comparator_values.end(), 0.0);
    CHECK(rep.final_regret == doctest::Approx(losses - comps).epsilon(1e-12));
  }
}

TEST_CASE("theory-tuned runs stay below their bound") {
  json doc = small_run();
  doc["horizon"] = 2000;
  doc["sigma"] = 0.0;
  doc["noise_std"] = 0.1;
  doc["n_tasks"] = 8;
  const RegretReport rep = run_experiment(parse(doc));
  REQUIRE(rep.proposition_bound.has_value());
  CHECK(rep.final_regret <= *rep.proposition_bound);
  REQUIRE(rep.bound.back().has_value());
  CHECK(rep.final_regret <= *rep.bound.back());
}

TEST_CASE("identical configs give byte-identical reports") {
  const RunConfig c = parse(small_run());
  const auto pa = scratch("det_a.csv"), pb = scratch("det_b.csv");
  emit_report(run_experiment(c), pa.string());
  emit_report(run_experiment(c), pb.string());
  std::ifstream a(pa), b(pb);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
}

TEST_CASE("emitted report round-trips and carries the seed") {
  const RegretReport rep = run_experiment(parse(small_run()));
  const auto path = scratch("report.csv");
  emit_report(rep, path.string());
  const auto rows = read_csv(path.string());
  REQUIRE(rows.size() == rep.regret.size() + 1);
  CHECK(rows[0] == std::vector<std::string>{"t", "cumulative_loss", "regret", "bound"});
  for (std::size_t t = 0; t < rep.regret.size(); ++t) {
    const auto& r = rows[t + 1];
    REQUIRE(r.size() == 4);
    REQUIRE(std::stoul(r[0]) == t + 1);
    REQUIRE(std::stod(r[1]) == rep.cumulative_loss[t]);
    REQUIRE(std::stod(r[2]) == rep.regret[t]);
    REQUIRE(rep.bound[t].has_value());
    REQUIRE(std::stod(r[3]) == *rep.bound[t]);
  }

  std::ifstream in(path.string() + ".meta.json");
  const json meta = json::parse(in);
  CHECK(meta.at("seed") == 7);
  CHECK(meta.at("config").at("seed") == 7);
  CHECK(meta.at("version").is_string());
  CHECK(meta.contains("unconverged_steps"));
  CHECK(meta.contains("max_solver_residual"));
  CHECK(meta.at("final_regret").get<double>() == rep.final_regret);

  const RegretReport replay = run_experiment(parse(meta.at("config")));
  CHECK(replay.regret == rep.regret);
}

TEST_CASE("oracle-tuned runs leave the bound column empty") {
  json doc = small_run();
  doc["tuning"] = "oracle";
  doc["eta_grid"] = {0.01, 0.1, 1.0};
  const RegretReport rep = run_experiment(parse(doc));
  CHECK_FALSE(rep.proposition_bound.has_value());
  const auto path = scratch("oracle.csv");
  emit_report(rep, path.string());
  const auto rows = read_csv(path.string());
  REQUIRE(rows.size() == rep.regret.size() + 1);
  for (std::size_t t = 1; t < rows.size(); ++t) {
    REQUIRE(rows[t].size() == 4);
    REQUIRE(rows[t][3].empty());
  }
  bool listed = false;
  for (double e : {0.01, 0.1, 1.0}) listed = listed || rep.eta == e;
  CHECK(listed);
}

TEST_CASE("oracle tuning picks the best grid value") {
  json doc = small_run();
  doc["tuning"] = "oracle";
  doc["eta_grid"] = {0.01, 0.1, 1.0};
  const RegretReport best = run_experiment(parse(doc));
  for (double e : {0.01, 0.1, 1.0}) {
    json f = small_run();
    f["tuning"] = "fixed";
    f["eta"] = e;
    CHECK(best.cumulative_loss.back() <= run_experiment(parse(f)).cumulative_loss.back() + 1e-12);
  }
}

TEST_CASE("a single-cell sweep equals a run") {
  json doc = small_run();
  const auto cells = sweep(parse(doc));
  REQUIRE(cells.size() == 1);
  REQUIRE(cells[0].finals.size() == 1);
  RunConfig rc = parse(doc);
  rc.schedule.seed = rc.seed * 2 + 1;
  CHECK(cells[0].finals[0] == run_experiment(rc).final_regret);
  CHECK(cells[0].mean == cells[0].finals[0]);
  CHECK(cells[0].std_dev == 0.0);
}

TEST_CASE("sweep reports the sample std over repetitions") {
  json doc = small_run();
  doc["repetitions"] = 3;
  doc["schedule"] = "uniform";
  doc["grid_b"] = {0.0, 4.0};
  const auto cells = sweep(parse(doc));
  REQUIRE(cells.size() == 2);
  for (const auto& c : cells) {
    REQUIRE(c.finals.size() == 3);
    const double m = (c.finals[0] + c.finals[1] + c.finals[2]) / 3.0;
    double ss = 0.0;
    for (double f : c.finals) ss += (f - m) * (f - m);
    CHECK(c.mean == doctest::Approx(m).epsilon(1e-14));
    CHECK(c.std_dev == doctest::Approx(std::sqrt(ss / 2.0)).epsilon(1e-12));
    CHECK(c.finals[0] != c.finals[1]);
  }
  const auto path = scratch("sweep.csv");
  emit_sweep(cells, path.string());
  const auto rows = read_csv(path.string());
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].front() == "n_tasks");
  CHECK(std::stod(rows[2][2]) == 4.0);
}

TEST_CASE("oracle-tuned EG against theory-tuned EG on low-variance streams") {
  const json grid = {0.01, 0.03, 0.1, 0.3, 1.0, 3.0};
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    json base = {{"environment", "simplex"}, {"n_tasks", 16}, {"dim", 10},  {"sigma", 0.1},
                 {"horizon", 3000},          {"seed", seed},  {"noise_std", 0.0}};
    auto loss = [&](const char* learner, bool oracle) {
      json doc = base;
      doc["learner"] = learner;
      if (oracle) {
        doc["tuning"] = "oracle";
        doc["eta_grid"] = grid;
      }
      return run_experiment(parse(doc)).cumulative_loss.back();
    };
    CHECK(loss("I-EG", true) <= loss("MT-EG", false));
    CHECK(loss("MT-EG", true) <= loss("I-EG", false));
    CHECK(loss("MT-EG", false) <= loss("I-EG", false));
  }
}

TEST_CASE("csv environment validates and builds") {
  const auto path = scratch("data.csv");
  {
    std::ofstream out(path);
    out << "task,y,f1,f2\nb,1.0,0.5,0.1\na,-1.0,0.2,0.3\nb,0.5,0.1,0.9\n";
  }
  const json doc = {{"environment", "csv"},
                    {"csv_path", path.string()},
                    {"task_col", "task"},
                    {"label_col", "y"},
                    {"feature_cols", {"f1", "f2"}}};
  const RunConfig c = parse(doc);
  CHECK_NOTHROW(c.validate());
  const Problem pr = build_problem(c);
  CHECK(pr.n_tasks == 2);
  CHECK(pr.dim == 2);
  REQUIRE(pr.rounds.size() == 3);
  CHECK(pr.rounds[0].active_task == 0);
  CHECK(pr.rounds[1].active_task == 1);
  const RegretReport rep = run_experiment(c);
  CHECK(rep.regret.size() == 3);

  json missing = doc;
  missing["feature_cols"] = {"f3"};
  CHECK_THROWS(run_experiment(parse(missing)));
  json mixed = doc;
  mixed["schedule"] = "round_robin";
  CHECK_THROWS_AS(parse(mixed).validate(), config_error);
}

TEST_CASE("generic p-norm runs report solver counters") {
  json doc = {{"learner", "generic"}, {"regularizer", "pnorm"}, {"environment", "simplex"}, {"feasible", "simplex"},
              {"n_tasks", 3},         {"dim", 4},               {"horizon", 30},            {"sigma", 0.3}};
  const RegretReport rep = run_experiment(parse(doc));
  CHECK(rep.unconverged_steps <= 30);
  CHECK(std::isfinite(rep.max_solver_residual));
  CHECK(std::isfinite(rep.final_regret));
}

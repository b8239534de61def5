#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result lupa_main(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = lupa::cli::main(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto path = dir / "experiment.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("run is byte-deterministic and thread-count independent") {
  const auto dir = test::temp_dir("cli_run");
  const std::vector<std::string> base{"run", "--objective", "quadratic", "--p", "4",
                                      "--tau", "16", "--T", "64", "--seed", "1"};
  auto a = base, b = base, c = base;
  a.insert(a.end(), {"--out", (dir / "a").string()});
  b.insert(b.end(), {"--out", (dir / "b").string()});
  c.insert(c.end(), {"--out", (dir / "c").string(), "--threads", "4"});
  REQUIRE(lupa_main(a).code == 0);
  REQUIRE(lupa_main(b).code == 0);
  REQUIRE(lupa_main(c).code == 0);
  const auto csv = slurp(dir / "a" / "trace.csv");
  CHECK(csv.rfind("t,comm_rounds,F_gap,grad_norm_sq,divergence,deviation_sq\n", 0) == 0);
  CHECK(csv == slurp(dir / "b" / "trace.csv"));
  CHECK(csv == slurp(dir / "c" / "trace.csv"));
  for (const char* f : {"config.json", "summary.json", "trace.json"}) {
    CHECK(fs::exists(dir / "a" / f));
  }
  const auto summary = json::parse(slurp(dir / "a" / "summary.json"));
  CHECK(summary["total_comm_rounds"] == 4);
  CHECK(summary["status"] == "completed");
  const auto cfg = json::parse(slurp(dir / "a" / "config.json"));
  CHECK(cfg["resolved"]["sync"]["tau"] == 16);
  CHECK(cfg["experiment"]["run"]["p"] == 4);
}

TEST_CASE("run summaries") {
  const auto dir = test::temp_dir("cli_summary");
  auto r = lupa_main({"run", "--sync", "one-shot", "--T", "50", "--out", (dir / "o").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("comm_rounds = 1,") != std::string::npos);

  r = lupa_main({"run", "--p", "5", "--B", "128", "--T", "21875", "--tau", "auto",
                 "--out", (dir / "t").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("tau = 91") != std::string::npos);

  r = lupa_main({"run", "--p", "5", "--B", "128", "--T", "21875", "--tau", "stich",
                 "--out", (dir / "s").string()});
  CHECK(r.out.find("tau = 5") != std::string::npos);

  r = lupa_main({"run", "--objective", "ensemble", "--epochs", "2", "--B", "8",
                 "--out", (dir / "e").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("T = 50,") != std::string::npos);
}

TEST_CASE("configuration errors exit 1") {
  const auto dir = test::temp_dir("cli_errors");
  const auto out = (dir / "x").string();
  CHECK(lupa_main({}).code == 1);
  CHECK(lupa_main({"run", "--p", "0", "--out", out}).code == 1);
  CHECK(lupa_main({"run", "--eta", "0", "--out", out}).code == 1);
  CHECK(lupa_main({"run", "--frobnicate", "--out", out}).code == 1);
  CHECK(lupa_main({"run", "--sync", "sometimes", "--out", out}).code == 1);
  CHECK(lupa_main({"run", "--tau", "-4", "--out", out}).code == 1);
  CHECK(lupa_main({"run", "--config", (dir / "missing.json").string()}).code == 1);
  const auto bad = write_config(dir, json{{"run", {{"colour", "blue"}}}});
  const auto r = lupa_main({"run", "--config", bad.string(), "--out", out});
  CHECK(r.code == 1);
  CHECK(r.err.find("unknown key 'colour'") != std::string::npos);
  CHECK(lupa_main({"run", "--help"}).code == 0);
}

TEST_CASE("divergence exits 2 and keeps the partial trace") {
  const auto dir = test::temp_dir("cli_diverge");
  const auto r = lupa_main({"run", "--objective", "quadratic", "--eta", "0.5", "--T", "500",
                            "--tau", "5", "--out", dir.string()});
  CHECK(r.code == 2);
  const auto summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary["status"] == "diverged");
  CHECK(summary["t"].get<int>() < 500);
  CHECK(count_lines(slurp(dir / "trace.csv")) >= 2);
}

TEST_CASE("theory-check default suite and negative controls") {
  const auto dir = test::temp_dir("cli_theory");
  auto r = lupa_main({"theory-check", "--out", (dir / "a").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("all checks as expected") != std::string::npos);
  auto report = json::parse(slurp(dir / "a" / "report.json"));
  CHECK(report["all_as_expected"] == true);
  CHECK(report["reports"].size() == 6);

  r = lupa_main({"theory-check", "--negative-controls", "--out", (dir / "b").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("(expected fail)") != std::string::npos);
  report = json::parse(slurp(dir / "b" / "report.json"));
  CHECK(report["reports"].size() == 10);
  for (const auto& rep : report["reports"]) CHECK(rep["as_expected"] == true);
}

TEST_CASE("theory-check failures exit 3, infeasible alpha exits 1") {
  const auto dir = test::temp_dir("cli_theory_fail");
  json doc{{"kind", "theory-check"},
           {"run", {{"objective", {{"kind", "quadratic"}, {"dim", 3}, {"mu", 1.0}, {"L", 2.0}}},
                    {"p", 2}, {"T", 100}, {"sync", {{"kind", "Fixed"}, {"tau", 5}}},
                    {"lr", {{"kind", "Theorem1"}}}, {"x0", "optimum_offset"},
                    {"eval_every", 1}}},
           {"params", {{"checks", {{{"check", "theorem1_bound"}, {"n_seeds", 1},
                                    {"bound_scale", 0.01}}}}}}};
  auto r = lupa_main({"theory-check", "--config", write_config(dir, doc).string(),
                      "--out", (dir / "o").string()});
  CHECK(r.code == 3);
  CHECK(r.out.find("first failing record: t = 5,") != std::string::npos);

  doc["params"]["checks"] = {{{"check", "alpha"}, {"kappa", 10.0}, {"C", 1.0}, {"p", 1},
                              {"tau", 5}, {"D", 1e-6}}};
  r = lupa_main({"theory-check", "--config", write_config(dir, doc).string(),
                 "--out", (dir / "o").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("Infeasible") != std::string::npos);
}

TEST_CASE("adaptive-compare") {
  const auto dir = test::temp_dir("cli_adaptive");
  json doc{{"kind", "adaptive-compare"},
           {"run", {{"objective", {{"kind", "ensemble"}, {"n", 100}, {"dim", 3}}},
                    {"p", 2}, {"T", 400}, {"lr", {{"kind", "Constant"}, {"eta", 0.05}}}}},
           {"params", {{"n_seeds", 3},
                       {"schedules", {{{"kind", "Fixed"}, {"tau", 20}},
                                      {{"kind", "Fixed"}, {"tau", 20}},
                                      {{"kind", "LinearGrowth"}, {"tau0", 20},
                                       {"alpha_growth", 1.09}}}}}}};
  const auto r = lupa_main({"adaptive-compare", "--config", write_config(dir, doc).string(),
                            "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto rows = json::parse(slurp(dir / "compare.json"))["rows"];
  REQUIRE(rows.size() == 3);
  CHECK(rows[0]["final_F_gap"] == rows[1]["final_F_gap"]);
  CHECK(rows[0]["comm_rounds"] == rows[1]["comm_rounds"]);
  CHECK(rows[2]["comm_rounds"].get<double>() < rows[0]["comm_rounds"].get<double>());
  CHECK(count_lines(slurp(dir / "compare.csv")) == 4);
}

TEST_CASE("minibatch-divergence flags unstable runs without failing") {
  const auto dir = test::temp_dir("cli_minibatch");
  json doc{{"kind", "minibatch-divergence"},
           {"run", {{"objective", {{"kind", "ensemble"}, {"n", 16}, {"dim", 2}}},
                    {"T", 200}, {"lr", {{"kind", "Constant"}, {"eta", 2.5}}}}},
           {"params", {{"batch_sizes", {1, 16}}}}};
  auto r = lupa_main({"minibatch-divergence", "--config", write_config(dir, doc).string(),
                      "--out", dir.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("[flagged") != std::string::npos);
  const auto summary = json::parse(slurp(dir / "B_16" / "summary.json"));
  CHECK(summary["status"] == "diverged");

  doc["run"]["lr"]["eta"] = 0.5;
  r = lupa_main({"minibatch-divergence", "--config", write_config(dir, doc).string(),
                 "--out", (dir / "stable").string()});
  CHECK(r.code == 0);
  CHECK(json::parse(slurp(dir / "stable" / "B_16" / "summary.json"))["status"] == "completed");

  doc["run"]["lr"] = {{"kind", "Theorem1"}};
  CHECK(lupa_main({"minibatch-divergence", "--config", write_config(dir, doc).string(),
                   "--out", dir.string()}).code == 1);
}

TEST_CASE("sweep and speedup write their tables") {
  const auto dir = test::temp_dir("cli_tables");
  json sweep{{"kind", "sweep"},
             {"run", {{"objective", "ensemble"}, {"T", 60}, {"sync", {{"kind", "Fixed"}, {"tau", 4}}}}},
             {"params", {{"param", "p"}, {"values", {1, 2}}, {"n_seeds", 2}}}};
  auto r = lupa_main({"sweep", "--config", write_config(dir, sweep).string(),
                      "--out", (dir / "s").string()});
  CHECK(r.code == 0);
  CHECK(count_lines(slurp(dir / "s" / "sweep.csv")) == 5);
  CHECK(fs::exists(dir / "s" / "p_2_seed1" / "trace.csv"));

  json sp{{"kind", "speedup"},
          {"run", {{"objective", "ensemble"}, {"T", 200}, {"x0", "optimum_offset"},
                   {"eval_every", 1}}},
          {"params", {{"p_values", {1, 2}}, {"target_gap", 0.5}, {"n_seeds", 2}}}};
  r = lupa_main({"speedup", "--config", write_config(dir, sp).string(),
                 "--out", (dir / "p").string()});
  CHECK(r.code == 0);
  CHECK(count_lines(slurp(dir / "p" / "speedup.csv")) == 3);
  sp["params"]["target_gap"] = 0.0;
  CHECK(lupa_main({"speedup", "--config", write_config(dir, sp).string(),
                   "--out", (dir / "p").string()}).code == 1);
}

#include <doctest.h>

#include <fstream>

#include "lupa/analysis.hpp"
#include "lupa/data.hpp"
#include "lupa/experiment.hpp"
#include "support.hpp"

using namespace lupa;
using nlohmann::json;

namespace {

json full_document() {
  return json::parse(R"({
    "kind": "theory-check",
    "run": {
      "objective": {"kind": "ensemble", "n": 50, "dim": 3, "spread": 0.5, "seed": 9},
      "p": 4, "B": 2, "T": 120,
      "lr": {"kind": "Theorem1", "mu": "auto", "a": "auto"},
      "sync": {"kind": "Fixed", "tau": "auto"},
      "seed": 42,
      "x0": {"kind": "optimum_offset", "offset": 2.0},
      "eval_every": 3,
      "sampling": "without_replacement",
      "sharded": true,
      "record_deviation": true,
      "divergence_factor": 1000.0
    },
    "params": {"checks": [
      {"check": "lemma3", "n_seeds": 20, "form": "stated", "expect": "pass"},
      {"check": "appendix_d_rate", "a": 2, "b": 3, "T_max": 100, "slope_from": 10,
       "max_slope": -2.9}
    ]}
  })");
}

}  // namespace

TEST_CASE("experiment files round-trip") {
  const auto e = parse_experiment(full_document());
  CHECK(e.kind == ExperimentKind::TheoryCheck);
  CHECK(e.run.p == 4);
  CHECK(e.run.sync.tau.mode == TauSpec::Mode::Auto);
  CHECK_FALSE(e.run.lr.a.has_value());
  const json once = to_json(e);
  const auto again = parse_experiment(once);
  CHECK(again == e);
  CHECK(to_json(again) == once);
  CHECK(parse_experiment_text(once.dump(2)) == e);

  // Defaults round-trip as well.
  const auto empty = parse_experiment(json::object());
  CHECK(empty.kind == ExperimentKind::Single);
  CHECK(parse_experiment(to_json(empty)) == empty);

  for (const char* text : {
           R"({"run": {"objective": "pl_sine", "lr": {"kind": "Constant", "eta": 0.05}}})",
           R"({"run": {"objective": {"kind": "quadratic", "spectrum": [1, 2], "b": [0, 1]},
                       "x0": [1.0, 2.0], "sync": {"kind": "OneShot"}}})",
           R"({"run": {"objective": {"kind": "logistic", "lambda": 0.1,
                        "dataset": {"n": 30, "dim": 4, "seed": 2, "label_noise": 0.1}},
                       "epochs": 2.5, "sync": {"kind": "LinearGrowth", "tau0": 5,
                       "alpha_growth": 1.09}}})",
           R"({"kind": "adaptive-compare", "run": {"sync": {"kind": "AdaOracle", "tau0": "stich"},
               "lr": {"kind": "AppendixD", "a": 2, "b": 3}},
               "params": {"schedules": [{"kind": "Fixed", "tau": 3}], "n_seeds": 2}})",
       }) {
    const auto x = parse_experiment_text(text);
    CHECK(parse_experiment(to_json(x)) == x);
  }
}

TEST_CASE("unknown keys are rejected at every level") {
  auto with = [](const char* path, const char* key) {
    json j = full_document();
    j[json::json_pointer(path)][key] = 1;
    return j;
  };
  CHECK_THROWS_WITH_AS(parse_experiment(with("", "extra")), doctest::Contains("unknown key"),
                       ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("/run", "taus")), ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("/run/objective", "spectrum_")), ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("/run/lr", "eta")), ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("/run/sync", "tau0")), ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("/run/x0", "scale")), ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("/params", "n_seeds")), ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("/params/checks/0", "trials")), ConfigError);
}

TEST_CASE("malformed documents") {
  CHECK_THROWS_AS(parse_experiment_text("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(R"({"kind": "benchmark"})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(R"({"run": {"p": "four"}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(R"({"run": {"p": -1}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(R"({"run": {"T": 10, "epochs": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(R"({"run": {"sampling": "random"}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(R"({"run": {"lr": {"kind": "Cosine"}}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(R"({"run": {"lr": {"kind": "AppendixD", "a": 2}}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(R"({"run": {"sync": {"kind": "Fixed", "tau": 0}}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(R"({"run": {"sync": {"kind": "Fixed", "tau": "big"}}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(
                      R"({"run": {"sync": {"kind": "LinearGrowth", "alpha_growth": -1}}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(R"({"run": {"objective": "cubic"}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(
                      R"({"kind": "theory-check", "params": {"checks": [{"check": "lemma9"}]}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(
                      R"({"kind": "theory-check", "params": {"checks": [{"check": "lemma1", "expect": "maybe"}]}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_text(R"({"kind": "sweep", "params": {"values": [1, 2.5]}})"),
                  ConfigError);
  CHECK_THROWS_AS(load_experiment("/nonexistent/lupa.json"), ConfigError);
}

TEST_CASE("load_experiment reads files") {
  const auto dir = test::temp_dir("experiment");
  const auto path = dir / "e.json";
  std::ofstream(path) << full_document().dump();
  CHECK(load_experiment(path.string()) == parse_experiment(full_document()));
}

TEST_CASE("tau specs resolve") {
  CHECK(resolve_tau(parse_tau_spec("auto"), 21875, 5, 128) == 91);
  CHECK(resolve_tau(parse_tau_spec("stich"), 21875, 5, 128) == 5);
  CHECK(resolve_tau(parse_tau_spec(7), 21875, 5, 128) == 7);
  CHECK(to_json(parse_tau_spec("auto")) == "auto");
  CHECK(to_json(parse_tau_spec(12)) == 12);
  CHECK_THROWS_AS(parse_tau_spec(2.5), ConfigError);
  CHECK_THROWS_AS(parse_tau_spec(-3), ConfigError);

  const auto lg = resolve_sync(parse_sync_spec(json{{"kind", "LinearGrowth"},
                                                     {"tau0", "auto"},
                                                     {"alpha_growth", 1.09}}),
                               21875, 5, 128);
  CHECK(lg.kind() == SyncKind::LinearGrowth);
  CHECK(lg.tau() == 91);
}

TEST_CASE("resolve_run") {
  auto e = parse_experiment(full_document());
  const RunConfig c = resolve_run(e.run);
  CHECK(c.p == 4);
  CHECK(c.T == 120);
  CHECK(c.sync.kind() == SyncKind::Fixed);
  CHECK(c.sync.tau() == tau_star(120, 4, 2));
  CHECK(c.lr.kind() == LrKind::Theorem1);
  const auto& k = c.objective->constants();
  CHECK(c.lr.offset() == doctest::Approx(theorem1_schedule(k, 4, c.sync.tau()).offset()));
  CHECK(c.sampling.mode == SamplingMode::WithoutReplacement);
  CHECK(c.sampling.sharded);
  CHECK(c.eval_every == 3);
  CHECK(c.divergence_factor == 1000.0);
  // x0 = x* + 2/sqrt(3) (1, 1, 1)
  const Vec xs = *c.objective->minimizer();
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(c.x0[i] == doctest::Approx(xs[i] + 2.0 / std::sqrt(3.0)));
  }
  const json d = describe(c);
  CHECK(d["objective"] == "ensemble");
  CHECK(d["sync"]["tau"] == c.sync.tau());

  // Defaults: gaussian start, T = 1000, records at syncs only.
  const RunConfig def = resolve_run(RunSpec{});
  CHECK(def.T == 1000);
  CHECK(def.eval_every == 1000);
  CHECK(def.x0.size() == 10);
  CHECK(def.x0 == resolve_run(RunSpec{}).x0);
  CHECK(norm_sq(def.x0) > 0.0);
}

TEST_CASE("epochs resolve against the data size") {
  auto e = parse_experiment_text(R"({"run": {
      "objective": {"kind": "logistic", "dataset": {"n": 100, "dim": 3, "seed": 1}},
      "B": 8, "epochs": 2.0}})");
  CHECK(resolve_run(e.run).T == 25);
  e.run.objective = ObjectiveSpec{};
  CHECK_THROWS_AS(resolve_run(e.run), ConfigError);
}

TEST_CASE("learning-rate resolution") {
  RunSpec r;
  r.objective.kind = "ensemble";
  r.T = 200;
  r.p = 2;
  r.lr.kind = "Theorem1";
  r.sync.kind = "OneShot";
  CHECK_THROWS_AS(resolve_run(r), ConfigError);
  r.lr.a = 50.0;
  CHECK(resolve_run(r).lr.offset() == 50.0);

  r.lr = LrSpec{};
  r.lr.kind = "Theorem2";
  r.sync.kind = "LinearGrowth";
  r.sync.tau0.value = 5;
  r.sync.alpha_growth = 1.0;
  const RunConfig c = resolve_run(r);
  const auto taus = periods(c.sync, 200);
  const auto& k = c.objective->constants();
  const auto ch = choose_alpha(AlphaInputs{k.kappa(), k.C, k.L, k.mu, 2, taus.front()}, taus);
  const auto mx = *std::max_element(taus.begin(), taus.end());
  CHECK(c.lr.offset() == doctest::Approx(ch.alpha * double(mx) + 4.0));

  r.sync.kind = "AdaOracle";
  r.sync.tau0.value = 5;
  CHECK_THROWS_AS(resolve_run(r), ConfigError);

  r.lr = LrSpec{};
  r.lr.eta = 0.0;
  r.sync = SyncSpec{};
  CHECK_THROWS_AS(resolve_run(r), ConfigError);
}

TEST_CASE("objective construction") {
  ObjectiveSpec q;
  q.dim = 4;
  q.mu = 0.5;
  q.L = 8.0;
  auto obj = build_objective(q);
  CHECK(obj->constants().L == doctest::Approx(8.0));
  CHECK(obj->constants().mu == doctest::Approx(0.5));
  q.b = {1.0};
  CHECK_THROWS_AS(build_objective(q), ConfigError);

  ObjectiveSpec lib;
  lib.kind = "logistic";
  const auto dir = test::temp_dir("experiment_libsvm");
  save_libsvm(dir / "d.txt", generate_synthetic_logistic(20, 3, 4, 0.0));
  lib.dataset.source = "libsvm";
  lib.dataset.path = (dir / "d.txt").string();
  CHECK(build_objective(lib)->n_points() == 20);
  lib.dataset.path = (dir / "missing.txt").string();
  CHECK_THROWS(build_objective(lib));
}

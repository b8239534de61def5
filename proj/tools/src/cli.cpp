#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lupa/analysis.hpp"
#include "lupa/experiment.hpp"
#include "lupa/trace_io.hpp"

namespace lupa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> objective;
  std::optional<std::int64_t> p, B, T, eval_every;
  std::optional<std::string> tau, sync, tau0, lr;
  std::optional<double> growth, eta, epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_seeds;
  unsigned threads = 1;
  std::string out = "lupa_out";
  bool negative_controls = false;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string squash(std::string s) {
  std::string r;
  for (char c : s) {
    if (c == '-' || c == '_') continue;
    r.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return r;
}

std::string canonical_sync(const std::string& name) {
  for (const char* k : {"Fixed", "OneShot", "FullySync", "AdaOracle", "LinearGrowth"}) {
    if (squash(name) == squash(k)) return k;
  }
  throw ConfigError("unknown sync schedule '" + name + "'");
}

std::string canonical_lr(const std::string& name) {
  for (const char* k : {"Constant", "Theorem1", "Theorem2", "AppendixD"}) {
    if (squash(name) == squash(k)) return k;
  }
  throw ConfigError("unknown learning-rate schedule '" + name + "'");
}

TauSpec tau_from_flag(const std::string& v) {
  const bool digits = !v.empty() && std::all_of(v.begin(), v.end(), [](unsigned char c) {
    return std::isdigit(c) != 0;
  });
  if (!digits) return parse_tau_spec(json(v));
  try {
    return parse_tau_spec(json(std::stoll(v)));
  } catch (const std::out_of_range&) {
    throw ConfigError("tau out of range: " + v);
  }
}

ExperimentFile load(const Flags& f, ExperimentKind kind) {
  ExperimentFile e;
  if (!f.config.empty()) {
    e = load_experiment(f.config);
    if (e.kind != kind && !e.params.empty()) {
      throw ConfigError("experiment file is of kind '" + to_string(e.kind) +
                        "', not '" + to_string(kind) + "'");
    }
  }
  e.kind = kind;
  RunSpec& r = e.run;
  if (f.objective && *f.objective != r.objective.kind) {
    r.objective = ObjectiveSpec{};
    r.objective.kind = *f.objective;
  }
  if (f.p) {
    if (*f.p < 1) throw ConfigError("--p must be >= 1");
    r.p = static_cast<std::uint32_t>(*f.p);
  }
  if (f.B) {
    if (*f.B < 1) throw ConfigError("--B must be >= 1");
    r.B = static_cast<std::size_t>(*f.B);
  }
  if (f.T) {
    r.T = *f.T;
    r.epochs.reset();
  }
  if (f.epochs) {
    r.epochs = *f.epochs;
    r.T.reset();
  }
  if (f.seed) r.seed = *f.seed;
  if (f.eval_every) r.eval_every = *f.eval_every;
  if (f.sync) {
    r.sync.kind = canonical_sync(*f.sync);
  } else if (f.tau && r.sync.kind != "Fixed") {
    r.sync.kind = "Fixed";
  }
  if (f.tau) r.sync.tau = tau_from_flag(*f.tau);
  if (f.tau0) r.sync.tau0 = tau_from_flag(*f.tau0);
  if (f.growth) r.sync.alpha_growth = *f.growth;
  if (f.lr) r.lr.kind = canonical_lr(*f.lr);
  if (f.eta) r.lr.eta = *f.eta;
  // Round trip through the file format so flag overrides get the same
  // validation as file contents.
  return parse_experiment(to_json(e));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

json run_summary(const Trace& trace) {
  const auto& last = trace.final_record();
  return {{"status", to_string(trace.status)},
          {"diagnostic", trace.diagnostic},
          {"t", last.t},
          {"final_F_gap", last.f_gap},
          {"final_grad_norm_sq", last.grad_norm_sq},
          {"total_comm_rounds", trace.total_comm_rounds},
          {"periods", trace.periods.size()},
          {"f_star_known", trace.f_star_known},
          {"schedule_fallbacks", trace.schedule_fallbacks}};
}

/// config.json, trace.csv, summary.json (and trace.json) for one run.
void write_run_dir(const fs::path& dir, const json& experiment,
                   const RunConfig& config, const Trace& trace) {
  fs::create_directories(dir);
  const json cfg{{"experiment", experiment}, {"resolved", describe(config)}};
  write_text(dir / "config.json", cfg.dump(2) + "\n");
  write_text(dir / "trace.csv", trace_to_csv(trace));
  write_text(dir / "trace.json", trace_to_json(trace, cfg).dump(2) + "\n");
  write_text(dir / "summary.json", run_summary(trace).dump(2) + "\n");
}

void print_resolved(std::ostream& out, const RunConfig& c) {
  out << "T = " << c.T << ", p = " << c.p << ", B = " << c.B << ", sync = "
      << to_string(c.sync.kind());
  if (c.sync.kind() == SyncKind::Fixed) out << ", tau = " << c.sync.tau();
  if (c.sync.kind() == SyncKind::AdaOracle || c.sync.kind() == SyncKind::LinearGrowth) {
    out << ", tau0 = " << c.sync.tau();
  }
  out << ", lr = " << to_string(c.lr.kind()) << "\n";
}

// ---- run ---------------------------------------------------------------------

int cmd_run(const Flags& f, std::ostream& out) {
  const ExperimentFile e = load(f, ExperimentKind::Single);
  const RunConfig cfg = resolve_run(e.run, f.threads);
  print_resolved(out, cfg);
  const Trace trace = run(cfg);
  write_run_dir(f.out, to_json(e), cfg, trace);
  const auto& last = trace.final_record();
  out << "final F_gap = " << short_fmt(last.f_gap)
      << ", comm_rounds = " << trace.total_comm_rounds << ", t = " << last.t
      << ", status = " << to_string(trace.status) << "\n";
  if (trace.status == RunStatus::Diverged) {
    out << "diverged: " << trace.diagnostic << "\n";
    return kDiverged;
  }
  return kOk;
}

// ---- sweep ---------------------------------------------------------------------

int cmd_sweep(const Flags& f, std::ostream& out) {
  const ExperimentFile e = load(f, ExperimentKind::Sweep);
  const std::string param = e.params.value("param", "p");
  if (param != "p" && param != "B" && param != "tau" && param != "T" && param != "seed") {
    throw ConfigError("sweep: param must be one of p, B, tau, T, seed");
  }
  if (!e.params.contains("values") || e.params["values"].empty()) {
    throw ConfigError("sweep: 'values' must list at least one value");
  }
  const auto values = e.params["values"].get<std::vector<std::int64_t>>();
  const std::size_t n_seeds = f.n_seeds.value_or(e.params.value("n_seeds", std::size_t{1}));
  if (n_seeds < 1) throw ConfigError("sweep: n_seeds must be >= 1");

  const ObjectivePtr obj = build_objective(e.run.objective);
  fs::create_directories(f.out);
  std::string csv = param + ",seed,T,comm_rounds,final_F_gap,status\n";
  bool diverged = false;
  for (const auto v : values) {
    if (v < 1 && param != "seed") throw ConfigError("sweep: values must be >= 1");
    RunSpec spec = e.run;
    if (param == "p") spec.p = static_cast<std::uint32_t>(v);
    if (param == "B") spec.B = static_cast<std::size_t>(v);
    if (param == "T") {
      spec.T = v;
      spec.epochs.reset();
    }
    if (param == "seed") spec.seed = static_cast<std::uint64_t>(v);
    if (param == "tau") {
      spec.sync.kind = "Fixed";
      spec.sync.tau = TauSpec{TauSpec::Mode::Value, v};
    }
    const RunConfig cfg = resolve_run(spec, obj, 1);
    const auto traces = replicate(cfg, n_seeds, f.threads);
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const Trace& tr = traces[s];
      RunConfig seeded = cfg;
      seeded.master_seed = cfg.master_seed + s;
      ExperimentFile one = e;
      one.kind = ExperimentKind::Single;
      one.params = json::object();
      one.run = spec;
      one.run.seed = seeded.master_seed;
      write_run_dir(fs::path(f.out) / (param + "_" + std::to_string(v) + "_seed" +
                                       std::to_string(seeded.master_seed)),
                    to_json(one), seeded, tr);
      csv += std::to_string(v) + "," + std::to_string(seeded.master_seed) + "," +
             std::to_string(cfg.T) + "," + std::to_string(tr.total_comm_rounds) + "," +
             fmt(tr.final_record().f_gap) + "," + to_string(tr.status) + "\n";
      diverged = diverged || tr.status == RunStatus::Diverged;
    }
    out << param << " = " << v << ": T = " << cfg.T << ", mean final F_gap over "
        << n_seeds << " seed(s) = ";
    double m = 0.0;
    for (const auto& tr : traces) m += tr.final_record().f_gap;
    out << short_fmt(m / static_cast<double>(n_seeds)) << "\n";
  }
  write_text(fs::path(f.out) / "sweep.csv", csv);
  write_text(fs::path(f.out) / "config.json", to_json(e).dump(2) + "\n");
  return diverged ? kDiverged : kOk;
}

// ---- speedup -------------------------------------------------------------------

int cmd_speedup(const Flags& f, std::ostream& out) {
  const ExperimentFile e = load(f, ExperimentKind::Speedup);
  const auto p_values = e.params.value("p_values", std::vector<std::int64_t>{1, 2, 4, 8});
  const double target = e.params.value("target_gap", 0.0);
  const std::size_t n_seeds = f.n_seeds.value_or(e.params.value("n_seeds", std::size_t{20}));
  SpeedupOptions opts;
  opts.theorem1_lr = e.params.value("theorem1_lr", true);
  opts.threads = f.threads;
  if (!(target > 0.0)) throw ConfigError("speedup: target_gap must be positive");

  const RunConfig base = resolve_run(e.run, 1);
  const auto rows = speedup_table(base, p_values, target, n_seeds, opts);

  fs::create_directories(f.out);
  std::string csv =
      "p,tau,iterations_to_target,comm_rounds_to_target,reached,final_F_gap_mean,final_F_gap_se\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.p) + "," + std::to_string(r.tau) + "," +
           (r.iterations_to_target ? fmt(*r.iterations_to_target) : "unreached") + "," +
           (r.comm_rounds_to_target ? fmt(*r.comm_rounds_to_target) : "unreached") + "," +
           std::to_string(r.reached) + "," + fmt(r.final_gap_mean) + "," +
           fmt(r.final_gap_se) + "\n";
    out << "p = " << r.p << ", tau = " << r.tau << ", iterations to target = "
        << (r.iterations_to_target ? short_fmt(*r.iterations_to_target) : "unreached")
        << ", comm rounds = "
        << (r.comm_rounds_to_target ? short_fmt(*r.comm_rounds_to_target) : "unreached")
        << ", final F_gap = " << short_fmt(r.final_gap_mean) << "\n";
  }
  write_text(fs::path(f.out) / "speedup.csv", csv);
  const json doc{{"experiment", to_json(e)}, {"resolved", describe(base)},
                 {"rows", to_json(rows)}};
  write_text(fs::path(f.out) / "speedup.json", doc.dump(2) + "\n");
  return kOk;
}

// ---- theory-check ----------------------------------------------------------------

json default_suite(bool negative_controls) {
  json checks = json::array({
      {{"check", "alpha"}},
      {{"check", "speedup_conditions"}, {"taus", std::vector<int>(16, 4)}, {"T", 64},
       {"p", 1}, {"B", 1}, {"c", 1.0}},
      {{"check", "appendix_d_rate"}, {"a", 2.0}, {"b", 3.0}, {"T_max", 10000},
       {"slope_from", 100}, {"max_slope", -2.9}},
      {{"check", "lemma1"}, {"trials", 10000}},
      {{"check", "lemma3"}, {"n_seeds", 20}},
      {{"check", "theorem1_bound"}, {"n_seeds", 1}},
  });
  if (negative_controls) {
    checks.push_back({{"check", "theorem1_bound"}, {"n_seeds", 1},
                      {"bound_scale", 0.01}, {"expect", "fail"}});
    checks.push_back({{"check", "speedup_conditions"},
                      {"taus", {2, 4, 8, 16, 32}}, {"T", 62}, {"p", 1}, {"B", 1},
                      {"expect", "fail"}});
    checks.push_back({{"check", "speedup_conditions"}, {"taus", {64}}, {"T", 64},
                      {"p", 1}, {"B", 1}, {"expect", "fail"}});
    checks.push_back({{"check", "appendix_d_rate"}, {"a", 2.0}, {"b", 3.0},
                      {"T_max", 10000}, {"slope_from", 100}, {"max_slope", -4.5},
                      {"expect", "fail"}});
  }
  return checks;
}

RunSpec default_suite_run() {
  RunSpec r;
  r.objective.kind = "quadratic";
  r.objective.dim = 4;
  r.objective.mu = 1.0;
  r.objective.L = 1.0;
  r.p = 4;
  r.B = 1;
  r.T = 200;
  r.sync.kind = "Fixed";
  r.sync.tau = TauSpec{TauSpec::Mode::Auto, 1};
  r.lr.kind = "Theorem1";
  r.x0.kind = "optimum_offset";
  r.x0.offset = 1.0;
  r.eval_every = 1;
  return r;
}

template <class T>
T get_or(const json& j, const char* key, T def) {
  return j.contains(key) ? j[key].get<T>() : def;
}

Report run_check(const json& c, const RunConfig& base, unsigned threads) {
  const std::string name = c["check"];
  const auto& k = base.objective->constants();
  const auto p = static_cast<std::int64_t>(base.p);
  const auto B = static_cast<std::int64_t>(base.B);

  if (name == "lemma1") {
    return check_lemma1(*base.objective, base.x0, get_or(c, "p", p), get_or(c, "B", B),
                        get_or<std::size_t>(c, "trials", 20000),
                        get_or<std::uint64_t>(c, "seed", base.master_seed),
                        get_or(c, "safety", 1.0));
  }
  if (name == "lemma3") {
    const std::string form = get_or<std::string>(c, "form", "stated");
    if (form != "stated" && form != "worker_summed") {
      throw ConfigError("lemma3: form must be stated or worker_summed");
    }
    return check_lemma3(base, get_or<std::size_t>(c, "n_seeds", 50),
                        form == "stated" ? Lemma3Form::Stated : Lemma3Form::WorkerSummed,
                        get_or(c, "safety", 1.0), threads);
  }
  if (name == "theorem1_bound" || name == "theorem2_bound") {
    if (!k.f_star) throw ConfigError(name + ": objective has no known F*");
    const double zeta0 = base.objective->value(base.x0) - *k.f_star;
    RunConfig cfg = base;
    BoundParams bp;
    if (name == "theorem1_bound") {
      if (cfg.sync.kind() != SyncKind::Fixed) {
        throw ConfigError("theorem1_bound needs a Fixed sync schedule");
      }
      const std::int64_t tau = cfg.sync.tau();
      const double alpha = c.contains("alpha")
                               ? c["alpha"].get<double>()
                               : choose_alpha(AlphaInputs{k.kappa(), k.C, k.L, k.mu, p, tau}).alpha;
      bp = BoundParams::theorem1(zeta0, k, p, B, tau, alpha);
      cfg.lr = LrSchedule::theorem1(k.mu, bp.a);
    } else {
      if (cfg.sync.needs_objective()) {
        throw ConfigError("theorem2_bound needs a predetermined period sequence");
      }
      auto taus = periods(cfg.sync, cfg.T);
      const double alpha =
          c.contains("alpha")
              ? c["alpha"].get<double>()
              : choose_alpha(AlphaInputs{k.kappa(), k.C, k.L, k.mu, p, taus.front()}, taus).alpha;
      bp = BoundParams::theorem2(zeta0, k, p, B, std::move(taus), alpha);
      cfg.lr = LrSchedule::theorem2(k.mu, bp.a);
    }
    return empirical_bound_check(cfg, bp, get_or<std::size_t>(c, "n_seeds", 20),
                                 get_or(c, "bound_scale", 1.0), threads);
  }
  if (name == "appendix_d_rate") {
    return check_gd_rate(base.objective, base.x0, get_or(c, "a", 2.0), get_or(c, "b", 3.0),
                         get_or<std::int64_t>(c, "T_max", 10000),
                         get_or<std::int64_t>(c, "slope_from", 100),
                         get_or(c, "max_slope", -2.9));
  }
  if (name == "speedup_conditions") {
    const auto taus = c.at("taus").get<std::vector<std::int64_t>>();
    const std::int64_t T = get_or<std::int64_t>(c, "T", base.T);
    const std::int64_t cp = get_or(c, "p", p);
    const std::int64_t cB = get_or(c, "B", B);
    const double cc = get_or(c, "c", 1.0);
    const SpeedupVerdict v = check_speedup_conditions(taus, T, cp, cB, cc);
    Report r;
    r.check_name = name;
    r.band = 0.0;
    r.params = {{"taus", taus}, {"T", T}, {"p", cp}, {"B", cB}, {"c", cc},
                {"holds_i", v.holds_i}, {"holds_ii", v.holds_ii},
                {"holds_iii", v.holds_iii}};
    r.verdict = v.all();
    return r;
  }
  if (name == "alpha") {
    const double mu = get_or(c, "mu", k.mu);
    const double kappa = get_or(c, "kappa", c.contains("L") ? c["L"].get<double>() / mu : k.kappa());
    const double L = get_or(c, "L", kappa * mu);
    const AlphaInputs in{kappa, get_or(c, "C", k.C), L, mu, get_or(c, "p", p),
                         get_or<std::int64_t>(c, "tau", base.sync.tau())};
    Report r;
    r.check_name = name;
    r.band = 0.0;
    AlphaChoice ch;
    if (c.contains("D")) {
      ch.D = c["D"].get<double>();
      const auto a = alpha_lower_bound(in, ch.D);
      if (!a) {
        throw ConfigError("alpha: Infeasible for kappa = " + short_fmt(in.kappa) +
                          ", C = " + short_fmt(in.C) + ", p = " + std::to_string(in.p) +
                          ", tau = " + std::to_string(in.tau) + ", D = " + short_fmt(ch.D) +
                          " (Q D (B0 + D) <= 1)");
      }
      ch.alpha = *a;
    } else {
      ch = choose_alpha(in);
    }
    const double eta0 = 4.0 / (in.mu * (ch.alpha * static_cast<double>(in.tau) + 4.0));
    const double cap = 1.0 / (in.L * (in.C / static_cast<double>(in.p) + 1.0));
    r.params = {{"kappa", in.kappa}, {"C", in.C}, {"L", in.L}, {"mu", in.mu},
                {"p", in.p}, {"tau", in.tau}, {"alpha", ch.alpha}, {"D", ch.D},
                {"eta0", eta0}, {"eta_cap", cap}};
    r.per_t.push_back(CheckPoint{0, eta0, cap, 0.0, eta0 <= cap});
    r.verdict = eta0 <= cap;
    return r;
  }
  throw ConfigError("unknown check '" + name + "'");
}

int cmd_theory_check(const Flags& f, std::ostream& out) {
  ExperimentFile e = load(f, ExperimentKind::TheoryCheck);
  if (!e.params.contains("checks")) {
    if (f.config.empty()) e.run = default_suite_run();
    e.params["checks"] = default_suite(f.negative_controls);
  } else if (f.negative_controls) {
    for (auto& c : default_suite(true)) {
      if (c.value("expect", "pass") == "fail") e.params["checks"].push_back(c);
    }
  }
  e = parse_experiment(to_json(e));
  const RunConfig base = resolve_run(e.run, 1);

  json reports = json::array();
  bool all_ok = true;
  for (const auto& c : e.params["checks"]) {
    const bool expect_pass = c.value("expect", "pass") == "pass";
    const Report r = run_check(c, base, f.threads);
    const bool ok = r.verdict == expect_pass;
    all_ok = all_ok && ok;
    out << r.check_name << ": " << (r.verdict ? "pass" : "fail")
        << (expect_pass ? "" : " (expected fail)")
        << ", max_ratio = " << short_fmt(r.max_ratio)
        << (ok ? "" : "  <-- UNEXPECTED") << "\n";
    if (!ok && !r.verdict) {
      for (const auto& cp : r.per_t) {
        if (!cp.pass) {
          out << "  first failing record: t = " << cp.t << ", lhs = " << short_fmt(cp.lhs)
              << ", rhs = " << short_fmt(cp.rhs) << ", se = " << short_fmt(cp.se) << "\n";
          break;
        }
      }
      if (!r.note.empty()) out << "  " << r.note << "\n";
    }
    json jr = r.to_json();
    jr["expect"] = expect_pass ? "pass" : "fail";
    jr["as_expected"] = ok;
    reports.push_back(std::move(jr));
  }
  fs::create_directories(f.out);
  const json doc{{"experiment", to_json(e)}, {"resolved", describe(base)},
                 {"all_as_expected", all_ok}, {"reports", reports}};
  write_text(fs::path(f.out) / "report.json", doc.dump(2) + "\n");
  out << (all_ok ? "all checks as expected" : "check failure") << "\n";
  return all_ok ? kOk : kCheckFailed;
}

// ---- adaptive-compare ------------------------------------------------------------

int cmd_adaptive_compare(const Flags& f, std::ostream& out) {
  const ExperimentFile e = load(f, ExperimentKind::AdaptiveCompare);
  const std::size_t n_seeds = f.n_seeds.value_or(e.params.value("n_seeds", std::size_t{10}));
  if (n_seeds < 1) throw ConfigError("adaptive-compare: n_seeds must be >= 1");
  std::vector<SyncSpec> schedules;
  if (e.params.contains("schedules")) {
    for (const auto& s : e.params["schedules"]) schedules.push_back(parse_sync_spec(s));
  } else {
    const TauSpec tau0 = e.run.sync.kind == "Fixed" ? e.run.sync.tau : e.run.sync.tau0;
    schedules.push_back(SyncSpec{"Fixed", tau0, {}, 0.0});
    schedules.push_back(SyncSpec{"LinearGrowth", {}, tau0, 1.09});
    schedules.push_back(SyncSpec{"AdaOracle", {}, tau0, 0.0});
  }
  if (schedules.empty()) throw ConfigError("adaptive-compare: no schedules");

  const ObjectivePtr obj = build_objective(e.run.objective);
  fs::create_directories(f.out);
  std::string csv = "schedule,T,comm_rounds,final_F_gap,final_F_gap_se,n_seeds\n";
  json rows = json::array();
  bool diverged = false;
  for (std::size_t i = 0; i < schedules.size(); ++i) {
    RunSpec spec = e.run;
    spec.sync = schedules[i];
    const RunConfig cfg = resolve_run(spec, obj, 1);
    const auto traces = replicate(cfg, n_seeds, f.threads);
    double comm = 0.0, gap = 0.0, gap2 = 0.0;
    for (const auto& tr : traces) {
      diverged = diverged || tr.status == RunStatus::Diverged;
      comm += static_cast<double>(tr.total_comm_rounds);
      gap += tr.final_record().f_gap;
    }
    const double n = static_cast<double>(n_seeds);
    comm /= n;
    gap /= n;
    for (const auto& tr : traces) {
      gap2 += (tr.final_record().f_gap - gap) * (tr.final_record().f_gap - gap);
    }
    const double se = n_seeds > 1 ? std::sqrt(gap2 / (n - 1.0) / n) : 0.0;
    const std::string label = to_json(schedules[i]).dump();
    std::string quoted = "\"";
    for (char ch : label) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    quoted += "\"";
    csv += quoted + "," + std::to_string(cfg.T) + "," + fmt(comm) + "," + fmt(gap) + "," +
           fmt(se) + "," + std::to_string(n_seeds) + "\n";
    rows.push_back({{"schedule", to_json(schedules[i])}, {"T", cfg.T},
                    {"comm_rounds", comm}, {"final_F_gap", gap},
                    {"final_F_gap_se", se}, {"n_seeds", n_seeds}});
    out << label << ": comm_rounds = " << short_fmt(comm)
        << ", final F_gap = " << short_fmt(gap) << " (se " << short_fmt(se) << ")\n";
  }
  write_text(fs::path(f.out) / "compare.csv", csv);
  const json doc{{"experiment", to_json(e)}, {"rows", rows}};
  write_text(fs::path(f.out) / "compare.json", doc.dump(2) + "\n");
  return diverged ? kDiverged : kOk;
}

// ---- minibatch-divergence ----------------------------------------------------------

int cmd_minibatch_divergence(const Flags& f, std::ostream& out) {
  const ExperimentFile e = load(f, ExperimentKind::MinibatchDivergence);
  if (e.run.lr.kind != "Constant") {
    throw ConfigError("minibatch-divergence needs a Constant learning rate");
  }
  if (!e.params.contains("batch_sizes") || e.params["batch_sizes"].empty()) {
    throw ConfigError("minibatch-divergence: 'batch_sizes' must list at least one size");
  }
  const auto sizes = e.params["batch_sizes"].get<std::vector<std::int64_t>>();
  const ObjectivePtr obj = build_objective(e.run.objective);
  fs::create_directories(f.out);
  std::string csv = "B,status,t_reached,final_F_gap,comm_rounds\n";
  for (const auto b : sizes) {
    if (b < 1) throw ConfigError("minibatch-divergence: batch sizes must be >= 1");
    RunSpec spec = e.run;
    spec.B = static_cast<std::size_t>(b);
    spec.sync = SyncSpec{"FullySync", {}, {}, 0.0};
    const RunConfig cfg = resolve_run(spec, obj, f.threads);
    const Trace tr = run(cfg);
    ExperimentFile one = e;
    one.kind = ExperimentKind::Single;
    one.params = json::object();
    one.run = spec;
    write_run_dir(fs::path(f.out) / ("B_" + std::to_string(b)), to_json(one), cfg, tr);
    const auto& last = tr.final_record();
    csv += std::to_string(b) + "," + to_string(tr.status) + "," + std::to_string(last.t) +
           "," + fmt(last.f_gap) + "," + std::to_string(tr.total_comm_rounds) + "\n";
    out << "B = " << b << ": " << to_string(tr.status) << " at t = " << last.t
        << ", F_gap = " << short_fmt(last.f_gap);
    if (tr.status == RunStatus::Diverged) out << " [flagged: " << tr.diagnostic << "]";
    out << "\n";
  }
  write_text(fs::path(f.out) / "minibatch.csv", csv);
  return kOk;
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "Experiment file (JSON)");
  sub->add_option("--objective", f.objective, "quadratic | pl_sine | ensemble | logistic");
  sub->add_option("--p", f.p, "Number of workers");
  sub->add_option("--B", f.B, "Mini-batch size per worker");
  sub->add_option("--T", f.T, "Iterations per worker");
  sub->add_option("--epochs", f.epochs, "Run length in epochs: T = epochs * n / B");
  sub->add_option("--tau", f.tau, "Fixed period: integer, auto or stich");
  sub->add_option("--sync", f.sync,
                  "fixed | one-shot | fully-sync | ada-oracle | linear-growth");
  sub->add_option("--tau0", f.tau0, "Initial period for adaptive schedules");
  sub->add_option("--growth", f.growth, "LinearGrowth alpha");
  sub->add_option("--lr", f.lr, "constant | theorem1 | theorem2 | appendix-d");
  sub->add_option("--eta", f.eta, "Constant learning rate");
  sub->add_option("--seed", f.seed, "Master seed");
  sub->add_option("--eval-every", f.eval_every, "Record every k iterations");
  sub->add_option("--threads", f.threads, "Worker threads (does not change output)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--out", f.out, "Output directory");
}

}  // namespace

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local SGD with periodic averaging: simulate, sweep and check"};
  app.require_subcommand(1);
  Flags f;
  using Cmd = int (*)(const Flags&, std::ostream&);
  struct Command {
    std::string name, help;
    Cmd fn;
  };
  const std::vector<Command> commands{
      {"run", "Single run: trace.csv, trace.json, summary.json", cmd_run},
      {"sweep", "Grid over parameter lists, one row per cell", cmd_sweep},
      {"speedup", "Iterations and rounds to a target gap per p", cmd_speedup},
      {"theory-check", "Bound and lemma checks; exit 3 on a failed check", cmd_theory_check},
      {"adaptive-compare", "Fixed vs LinearGrowth vs AdaOracle at equal T", cmd_adaptive_compare},
      {"minibatch-divergence", "Fully synchronous runs over batch sizes",
       cmd_minibatch_divergence},
  };
  std::map<CLI::App*, Cmd> dispatch;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, f);
    if (name != "run" && name != "minibatch-divergence") {
      sub->add_option("--n-seeds", f.n_seeds, "Replications");
    }
    if (name == "theory-check") {
      sub->add_flag("--negative-controls", f.negative_controls,
                    "Append checks that are expected to fail");
    }
    dispatch[sub] = fn;
  }

  std::vector<std::string> argv_s{"lupa"};
  argv_s.insert(argv_s.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_s) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    for (const auto& [sub, fn] : dispatch) {
      if (sub->parsed()) return fn(f, out);
    }
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace lupa::cli

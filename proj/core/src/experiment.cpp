#include "lupa/experiment.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lupa/analysis.hpp"
#include "lupa/rng.hpp"

namespace lupa {

using nlohmann::json;

namespace {

// Reads an object's fields and rejects anything left unread.
class Fields {
 public:
  Fields(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
    if (!j_.is_object()) fail("expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void opt(const std::string& key, T& out) {
    if (!has(key)) return;
    out = as<T>(raw(key), key);
  }

  template <class T>
  void opt(const std::string& key, std::optional<T>& out) {
    if (!has(key)) return;
    out = as<T>(raw(key), key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail("unknown key '" + k + "'");
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(ctx_ + ": " + msg);
  }

 private:
  template <class T>
  T as(const json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail("'" + key + "' must be a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail("'" + key + "' must be a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) fail("'" + key + "' must be a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, Vec>) {
      if (!v.is_array()) fail("'" + key + "' must be an array of numbers");
      Vec out;
      for (const auto& e : v) {
        if (!e.is_number()) fail("'" + key + "' must be an array of numbers");
        out.push_back(e.get<double>());
      }
      return out;
    } else {
      static_assert(std::is_integral_v<T>);
      if (!v.is_number_integer()) fail("'" + key + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
        if (v.get<std::int64_t>() < 0) fail("'" + key + "' must be non-negative");
      }
      return static_cast<T>(v.get<std::int64_t>());
    }
  }

  const json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

DatasetSpec parse_dataset(const json& j) {
  DatasetSpec d;
  Fields f(j, "dataset");
  f.opt("source", d.source);
  if (d.source == "synthetic") {
    f.opt("n", d.n);
    f.opt("dim", d.dim);
    f.opt("seed", d.seed);
    f.opt("label_noise", d.label_noise);
  } else if (d.source == "libsvm") {
    f.opt("path", d.path);
    if (d.path.empty()) f.fail("libsvm source needs 'path'");
  } else {
    f.fail("unknown source '" + d.source + "'");
  }
  f.finish();
  return d;
}

json dataset_json(const DatasetSpec& d) {
  if (d.source == "libsvm") return {{"source", d.source}, {"path", d.path}};
  return {{"source", d.source}, {"n", d.n}, {"dim", d.dim}, {"seed", d.seed},
          {"label_noise", d.label_noise}};
}

ObjectiveSpec parse_objective(const json& j) {
  ObjectiveSpec o;
  if (j.is_string()) {
    o.kind = j.get<std::string>();
    return parse_objective(json{{"kind", o.kind}});
  }
  Fields f(j, "objective");
  f.opt("kind", o.kind);
  if (o.kind == "quadratic") {
    f.opt("dim", o.dim);
    f.opt("mu", o.mu);
    f.opt("L", o.L);
    f.opt("spectrum", o.spectrum);
    f.opt("b", o.b);
  } else if (o.kind == "pl_sine") {
    f.opt("grid_radius", o.grid_radius);
    f.opt("grid_step", o.grid_step);
  } else if (o.kind == "ensemble") {
    f.opt("n", o.n);
    f.opt("dim", o.dim);
    f.opt("spread", o.spread);
    f.opt("seed", o.seed);
  } else if (o.kind == "logistic") {
    if (f.has("dataset")) o.dataset = parse_dataset(f.raw("dataset"));
    f.opt("lambda", o.lambda);
  } else {
    f.fail("unknown objective '" + o.kind + "'");
  }
  f.finish();
  return o;
}

json objective_json(const ObjectiveSpec& o) {
  json j{{"kind", o.kind}};
  if (o.kind == "quadratic") {
    j["dim"] = o.dim;
    j["mu"] = o.mu;
    j["L"] = o.L;
    if (!o.spectrum.empty()) j["spectrum"] = o.spectrum;
    if (!o.b.empty()) j["b"] = o.b;
  } else if (o.kind == "pl_sine") {
    j["grid_radius"] = o.grid_radius;
    j["grid_step"] = o.grid_step;
  } else if (o.kind == "ensemble") {
    j["n"] = o.n;
    j["dim"] = o.dim;
    j["spread"] = o.spread;
    j["seed"] = o.seed;
  } else if (o.kind == "logistic") {
    j["dataset"] = dataset_json(o.dataset);
    j["lambda"] = o.lambda;
  }
  return j;
}

std::optional<double> number_or_auto(Fields& f, const std::string& key) {
  if (!f.has(key)) return std::nullopt;
  const json& v = f.raw(key);
  if (v.is_string() && v.get<std::string>() == "auto") return std::nullopt;
  if (!v.is_number()) f.fail("'" + key + "' must be a number or \"auto\"");
  return v.get<double>();
}

json number_or_auto_json(const std::optional<double>& v) {
  return v ? json(*v) : json("auto");
}

LrSpec parse_lr(const json& j) {
  LrSpec l;
  Fields f(j, "lr");
  f.opt("kind", l.kind);
  try {
    lr_kind_from_string(l.kind);
  } catch (const ConfigError& e) {
    f.fail(e.what());
  }
  if (l.kind == "Constant") {
    f.opt("eta", l.eta);
  } else if (l.kind == "Theorem1") {
    l.mu = number_or_auto(f, "mu");
    l.a = number_or_auto(f, "a");
  } else if (l.kind == "Theorem2") {
    l.mu = number_or_auto(f, "mu");
    l.c = number_or_auto(f, "c");
  } else {
    l.mu = number_or_auto(f, "mu");
    if (!f.has("a") || !f.has("b")) f.fail("AppendixD needs 'a' and 'b'");
    double a = 0.0;
    f.opt("a", a);
    l.a = a;
    f.opt("b", l.b);
  }
  f.finish();
  return l;
}

json lr_json(const LrSpec& l) {
  json j{{"kind", l.kind}};
  if (l.kind == "Constant") {
    j["eta"] = l.eta;
  } else if (l.kind == "Theorem1") {
    j["mu"] = number_or_auto_json(l.mu);
    j["a"] = number_or_auto_json(l.a);
  } else if (l.kind == "Theorem2") {
    j["mu"] = number_or_auto_json(l.mu);
    j["c"] = number_or_auto_json(l.c);
  } else {
    j["mu"] = number_or_auto_json(l.mu);
    j["a"] = l.a.value_or(0.0);
    j["b"] = l.b;
  }
  return j;
}

X0Spec parse_x0(const json& j) {
  X0Spec x;
  if (j.is_array()) {
    x.kind = "list";
    for (const auto& e : j) {
      if (!e.is_number()) throw ConfigError("x0: list entries must be numbers");
      x.values.push_back(e.get<double>());
    }
    return x;
  }
  if (j.is_string()) return parse_x0(json{{"kind", j.get<std::string>()}});
  Fields f(j, "x0");
  f.opt("kind", x.kind);
  if (x.kind == "zeros") {
  } else if (x.kind == "list") {
    f.opt("values", x.values);
  } else if (x.kind == "gaussian") {
    f.opt("scale", x.scale);
    f.opt("seed", x.seed);
  } else if (x.kind == "optimum_offset") {
    f.opt("offset", x.offset);
  } else {
    f.fail("unknown kind '" + x.kind + "'");
  }
  f.finish();
  return x;
}

json x0_json(const X0Spec& x) {
  json j{{"kind", x.kind}};
  if (x.kind == "list") j["values"] = x.values;
  if (x.kind == "gaussian") {
    j["scale"] = x.scale;
    j["seed"] = x.seed;
  }
  if (x.kind == "optimum_offset") j["offset"] = x.offset;
  return j;
}

// ---- kind-specific parameters -------------------------------------------

enum class Ty { Int, Num, Str, Bool, IntArr, NumArr, SyncArr, Checks };

using Schema = std::map<std::string, Ty>;

void validate_value(const json& v, Ty ty, const std::string& ctx);

void validate_object(const json& j, const Schema& schema, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    auto it = schema.find(k);
    if (it == schema.end()) throw ConfigError(ctx + ": unknown key '" + k + "'");
    validate_value(v, it->second, ctx + "." + k);
  }
}

const std::map<std::string, Schema>& check_schemas() {
  static const std::map<std::string, Schema> s{
      {"lemma1", {{"trials", Ty::Int}, {"seed", Ty::Int}, {"safety", Ty::Num},
                  {"p", Ty::Int}, {"B", Ty::Int}}},
      {"lemma3", {{"n_seeds", Ty::Int}, {"form", Ty::Str}, {"safety", Ty::Num}}},
      {"theorem1_bound", {{"n_seeds", Ty::Int}, {"bound_scale", Ty::Num},
                          {"alpha", Ty::Num}}},
      {"theorem2_bound", {{"n_seeds", Ty::Int}, {"bound_scale", Ty::Num},
                          {"alpha", Ty::Num}}},
      {"appendix_d_rate", {{"a", Ty::Num}, {"b", Ty::Num}, {"T_max", Ty::Int},
                           {"slope_from", Ty::Int}, {"max_slope", Ty::Num}}},
      {"speedup_conditions", {{"taus", Ty::IntArr}, {"T", Ty::Int}, {"p", Ty::Int},
                              {"B", Ty::Int}, {"c", Ty::Num}}},
      {"alpha", {{"kappa", Ty::Num}, {"C", Ty::Num}, {"L", Ty::Num}, {"mu", Ty::Num},
                 {"p", Ty::Int}, {"tau", Ty::Int}, {"D", Ty::Num}}},
  };
  return s;
}

void validate_value(const json& v, Ty ty, const std::string& ctx) {
  auto bad = [&](const char* what) { throw ConfigError(ctx + ": must be " + what); };
  switch (ty) {
    case Ty::Int:
      if (!v.is_number_integer()) bad("an integer");
      break;
    case Ty::Num:
      if (!v.is_number()) bad("a number");
      break;
    case Ty::Str:
      if (!v.is_string()) bad("a string");
      break;
    case Ty::Bool:
      if (!v.is_boolean()) bad("a boolean");
      break;
    case Ty::IntArr:
      if (!v.is_array()) bad("an array of integers");
      for (const auto& e : v) {
        if (!e.is_number_integer()) bad("an array of integers");
      }
      break;
    case Ty::NumArr:
      if (!v.is_array()) bad("an array of numbers");
      for (const auto& e : v) {
        if (!e.is_number()) bad("an array of numbers");
      }
      break;
    case Ty::SyncArr:
      if (!v.is_array()) bad("an array of sync schedules");
      for (const auto& e : v) parse_sync_spec(e);
      break;
    case Ty::Checks:
      if (!v.is_array()) bad("an array of checks");
      for (const auto& c : v) {
        if (!c.is_object() || !c.contains("check") || !c["check"].is_string()) {
          throw ConfigError(ctx + ": every check needs a 'check' name");
        }
        const auto name = c["check"].get<std::string>();
        auto it = check_schemas().find(name);
        if (it == check_schemas().end()) {
          throw ConfigError(ctx + ": unknown check '" + name + "'");
        }
        Schema schema = it->second;
        schema["check"] = Ty::Str;
        schema["expect"] = Ty::Str;
        validate_object(c, schema, ctx + "." + name);
        if (c.contains("expect")) {
          const auto e = c["expect"].get<std::string>();
          if (e != "pass" && e != "fail") {
            throw ConfigError(ctx + "." + name + ": expect must be pass or fail");
          }
        }
      }
      break;
  }
}

const Schema& params_schema(ExperimentKind kind) {
  static const std::map<ExperimentKind, Schema> s{
      {ExperimentKind::Single, {}},
      {ExperimentKind::Sweep,
       {{"param", Ty::Str}, {"values", Ty::IntArr}, {"n_seeds", Ty::Int}}},
      {ExperimentKind::Speedup,
       {{"p_values", Ty::IntArr}, {"target_gap", Ty::Num}, {"n_seeds", Ty::Int},
        {"theorem1_lr", Ty::Bool}}},
      {ExperimentKind::TheoryCheck, {{"checks", Ty::Checks}}},
      {ExperimentKind::AdaptiveCompare,
       {{"schedules", Ty::SyncArr}, {"n_seeds", Ty::Int}}},
      {ExperimentKind::MinibatchDivergence,
       {{"batch_sizes", Ty::IntArr}}},
  };
  return s.at(kind);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Single: return "single";
    case ExperimentKind::Sweep: return "sweep";
    case ExperimentKind::Speedup: return "speedup";
    case ExperimentKind::TheoryCheck: return "theory-check";
    case ExperimentKind::AdaptiveCompare: return "adaptive-compare";
    case ExperimentKind::MinibatchDivergence: return "minibatch-divergence";
  }
  return "single";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (auto k : {ExperimentKind::Single, ExperimentKind::Sweep,
                 ExperimentKind::Speedup, ExperimentKind::TheoryCheck,
                 ExperimentKind::AdaptiveCompare,
                 ExperimentKind::MinibatchDivergence}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown experiment kind '" + name + "'");
}

TauSpec parse_tau_spec(const json& j) {
  TauSpec t;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "auto") {
      t.mode = TauSpec::Mode::Auto;
    } else if (s == "stich") {
      t.mode = TauSpec::Mode::Stich;
    } else {
      throw ConfigError("tau: expected an integer, \"auto\" or \"stich\", got '" + s + "'");
    }
    return t;
  }
  if (!j.is_number_integer()) {
    throw ConfigError("tau: expected an integer, \"auto\" or \"stich\"");
  }
  t.value = j.get<std::int64_t>();
  if (t.value < 1) throw ConfigError("tau must be >= 1");
  return t;
}

json to_json(const TauSpec& t) {
  switch (t.mode) {
    case TauSpec::Mode::Auto: return "auto";
    case TauSpec::Mode::Stich: return "stich";
    case TauSpec::Mode::Value: break;
  }
  return t.value;
}

SyncSpec parse_sync_spec(const json& j) {
  SyncSpec s;
  Fields f(j, "sync");
  f.opt("kind", s.kind);
  try {
    sync_kind_from_string(s.kind);
  } catch (const ConfigError& e) {
    f.fail(e.what());
  }
  if (s.kind == "Fixed") {
    if (f.has("tau")) s.tau = parse_tau_spec(f.raw("tau"));
  } else if (s.kind == "AdaOracle" || s.kind == "LinearGrowth") {
    if (f.has("tau0")) s.tau0 = parse_tau_spec(f.raw("tau0"));
    if (s.kind == "LinearGrowth") {
      f.opt("alpha_growth", s.alpha_growth);
      if (s.alpha_growth < 0.0) f.fail("alpha_growth must be >= 0");
    }
  }
  f.finish();
  return s;
}

json to_json(const SyncSpec& s) {
  json j{{"kind", s.kind}};
  if (s.kind == "Fixed") j["tau"] = to_json(s.tau);
  if (s.kind == "AdaOracle" || s.kind == "LinearGrowth") j["tau0"] = to_json(s.tau0);
  if (s.kind == "LinearGrowth") j["alpha_growth"] = s.alpha_growth;
  return j;
}

RunSpec parse_run_spec(const json& j) {
  RunSpec r;
  Fields f(j, "run");
  if (f.has("objective")) r.objective = parse_objective(f.raw("objective"));
  f.opt("p", r.p);
  f.opt("B", r.B);
  f.opt("T", r.T);
  f.opt("epochs", r.epochs);
  if (r.T && r.epochs) f.fail("give either 'T' or 'epochs', not both");
  if (f.has("lr")) r.lr = parse_lr(f.raw("lr"));
  if (f.has("sync")) r.sync = parse_sync_spec(f.raw("sync"));
  f.opt("seed", r.seed);
  if (f.has("x0")) r.x0 = parse_x0(f.raw("x0"));
  f.opt("eval_every", r.eval_every);
  f.opt("sampling", r.sampling);
  if (r.sampling != "with_replacement" && r.sampling != "without_replacement") {
    f.fail("sampling must be with_replacement or without_replacement");
  }
  f.opt("sharded", r.sharded);
  f.opt("full_batch", r.full_batch);
  f.opt("record_deviation", r.record_deviation);
  f.opt("divergence_factor", r.divergence_factor);
  f.finish();
  return r;
}

json to_json(const RunSpec& r) {
  json j{{"objective", objective_json(r.objective)},
         {"p", r.p},
         {"B", r.B},
         {"lr", lr_json(r.lr)},
         {"sync", to_json(r.sync)},
         {"seed", r.seed},
         {"x0", x0_json(r.x0)},
         {"sampling", r.sampling},
         {"sharded", r.sharded},
         {"full_batch", r.full_batch},
         {"record_deviation", r.record_deviation},
         {"divergence_factor", r.divergence_factor}};
  if (r.T) j["T"] = *r.T;
  if (r.epochs) j["epochs"] = *r.epochs;
  if (r.eval_every) j["eval_every"] = *r.eval_every;
  return j;
}

ExperimentFile parse_experiment(const json& j) {
  ExperimentFile e;
  Fields f(j, "experiment");
  std::string kind = "single";
  f.opt("kind", kind);
  e.kind = experiment_kind_from_string(kind);
  if (f.has("run")) e.run = parse_run_spec(f.raw("run"));
  if (f.has("params")) {
    const json& p = f.raw("params");
    validate_object(p, params_schema(e.kind), "params");
    e.params = p;
  }
  f.finish();
  return e;
}

ExperimentFile parse_experiment_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& err) {
    throw ConfigError(std::string("experiment file is not valid JSON: ") + err.what());
  }
  return parse_experiment(j);
}

ExperimentFile load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_text(ss.str());
}

json to_json(const ExperimentFile& e) {
  return {{"kind", to_string(e.kind)}, {"run", to_json(e.run)}, {"params", e.params}};
}

// ---------------------------------------------------------------------------

ObjectivePtr build_objective(const ObjectiveSpec& o) {
  if (o.kind == "quadratic") {
    if (!o.spectrum.empty()) {
      Vec b = o.b.empty() ? Vec(o.spectrum.size(), 0.0) : o.b;
      return std::make_shared<QuadraticObjective>(o.spectrum, std::move(b));
    }
    if (!o.b.empty()) throw ConfigError("quadratic: 'b' requires 'spectrum'");
    return std::make_shared<QuadraticObjective>(
        QuadraticObjective::with_range(o.dim, o.mu, o.L));
  }
  if (o.kind == "pl_sine") {
    return std::make_shared<PlSineObjective>(o.grid_radius, o.grid_step);
  }
  if (o.kind == "ensemble") {
    return std::make_shared<PerPointQuadratics>(
        PerPointQuadratics::gaussian(o.n, o.dim, o.spread, o.seed));
  }
  if (o.kind == "logistic") {
    std::shared_ptr<const Dataset> data;
    if (o.dataset.source == "libsvm") {
      data = std::make_shared<Dataset>(load_libsvm(o.dataset.path));
    } else {
      data = std::make_shared<Dataset>(generate_synthetic_logistic(
          o.dataset.n, o.dataset.dim, o.dataset.seed, o.dataset.label_noise));
    }
    return std::make_shared<LogisticObjective>(std::move(data), o.lambda);
  }
  throw ConfigError("unknown objective '" + o.kind + "'");
}

std::int64_t resolve_tau(const TauSpec& spec, std::int64_t T, std::int64_t p,
                         std::int64_t B) {
  switch (spec.mode) {
    case TauSpec::Mode::Auto: return tau_star(T, p, B);
    case TauSpec::Mode::Stich: return tau_stich(T, p, B);
    case TauSpec::Mode::Value: break;
  }
  return spec.value;
}

SyncSchedule resolve_sync(const SyncSpec& s, std::int64_t T, std::int64_t p,
                          std::int64_t B) {
  switch (sync_kind_from_string(s.kind)) {
    case SyncKind::Fixed: return SyncSchedule::fixed(resolve_tau(s.tau, T, p, B));
    case SyncKind::OneShot: return SyncSchedule::one_shot();
    case SyncKind::FullySync: return SyncSchedule::fully_sync();
    case SyncKind::AdaOracle:
      return SyncSchedule::ada_oracle(resolve_tau(s.tau0, T, p, B));
    case SyncKind::LinearGrowth:
      return SyncSchedule::linear_growth(resolve_tau(s.tau0, T, p, B), s.alpha_growth);
  }
  throw ConfigError("unknown sync kind");
}

namespace {

Vec build_x0(const X0Spec& x, const Objective& obj) {
  const std::size_t d = obj.dim();
  if (x.kind == "zeros") return Vec(d, 0.0);
  if (x.kind == "list") {
    require_dim(x.values, d, "x0");
    return x.values;
  }
  if (x.kind == "gaussian") {
    SplitMix64 rng(derive_seed(x.seed, 0x3030));
    Vec v(d);
    for (auto& e : v) e = x.scale * rng.normal();
    return v;
  }
  const auto opt = obj.minimizer();
  if (!opt) throw ConfigError("x0: optimum_offset needs an objective with a known minimizer");
  Vec v = *opt;
  const double step = x.offset / std::sqrt(static_cast<double>(d));
  for (auto& e : v) e += step;
  return v;
}

}  // namespace

RunConfig resolve_run(const RunSpec& spec, ObjectivePtr objective,
                      unsigned threads) {
  if (!objective) throw ConfigError("run: no objective");
  RunConfig c;
  c.objective = objective;
  c.p = spec.p;
  c.B = spec.B;
  if (spec.p < 1) throw ConfigError("p must be >= 1");
  if (spec.B < 1) throw ConfigError("B must be >= 1");
  if (spec.epochs) {
    const std::size_t n = objective->n_points();
    if (n == 0) throw ConfigError("epochs need a dataset-backed objective");
    if (!(*spec.epochs > 0.0)) throw ConfigError("epochs must be positive");
    c.T = std::llround(*spec.epochs * static_cast<double>(n) /
                       static_cast<double>(spec.B));
  } else {
    c.T = spec.T.value_or(1000);
  }
  if (c.T < 1) throw ConfigError("T must be >= 1");
  const auto p = static_cast<std::int64_t>(spec.p);
  const auto B = static_cast<std::int64_t>(spec.B);
  c.sync = resolve_sync(spec.sync, c.T, p, B);

  const auto& k = objective->constants();
  const double mu = spec.lr.mu.value_or(k.mu);
  switch (lr_kind_from_string(spec.lr.kind)) {
    case LrKind::Constant:
      c.lr = LrSchedule::constant(spec.lr.eta);
      break;
    case LrKind::Theorem1: {
      double a = 0.0;
      if (spec.lr.a) {
        a = *spec.lr.a;
      } else {
        if (c.sync.kind() != SyncKind::Fixed) {
          throw ConfigError("Theorem1 lr with a = auto needs a Fixed sync schedule");
        }
        a = theorem1_schedule(k, p, c.sync.tau()).offset();
      }
      c.lr = LrSchedule::theorem1(mu, a);
      break;
    }
    case LrKind::Theorem2: {
      double cc = 0.0;
      if (spec.lr.c) {
        cc = *spec.lr.c;
      } else {
        if (c.sync.needs_objective()) {
          throw ConfigError("Theorem2 lr with c = auto cannot use AdaOracle periods");
        }
        const auto taus = periods(c.sync, c.T);
        const AlphaChoice ch = choose_alpha(
            AlphaInputs{k.kappa(), k.C, k.L, k.mu, p, taus.front()}, taus);
        const auto mx = *std::max_element(taus.begin(), taus.end());
        cc = ch.alpha * static_cast<double>(mx) + 4.0;
      }
      c.lr = LrSchedule::theorem2(mu, cc);
      break;
    }
    case LrKind::AppendixD:
      c.lr = LrSchedule::appendix_d(spec.lr.a.value_or(0.0), spec.lr.b, mu);
      break;
  }
  c.master_seed = spec.seed;
  c.x0 = build_x0(spec.x0, *objective);
  c.eval_every = spec.eval_every.value_or(c.T);
  c.sampling.mode = spec.sampling == "without_replacement"
                        ? SamplingMode::WithoutReplacement
                        : SamplingMode::WithReplacement;
  c.sampling.sharded = spec.sharded;
  c.full_batch = spec.full_batch;
  c.record_deviation = spec.record_deviation;
  c.divergence_factor = spec.divergence_factor;
  c.threads = threads;
  c.validate();
  return c;
}

RunConfig resolve_run(const RunSpec& spec, unsigned threads) {
  return resolve_run(spec, build_objective(spec.objective), threads);
}

json describe(const RunConfig& c) {
  const auto& k = c.objective->constants();
  json lr{{"kind", to_string(c.lr.kind())}};
  switch (c.lr.kind()) {
    case LrKind::Constant: lr["eta"] = c.lr.eta(); break;
    case LrKind::Theorem1: lr["mu"] = c.lr.mu(); lr["a"] = c.lr.offset(); break;
    case LrKind::Theorem2: lr["mu"] = c.lr.mu(); lr["c"] = c.lr.offset(); break;
    case LrKind::AppendixD:
      lr["a"] = c.lr.offset();
      lr["b"] = c.lr.shift();
      lr["mu"] = c.lr.mu();
      break;
  }
  json sync{{"kind", to_string(c.sync.kind())}};
  if (c.sync.kind() == SyncKind::Fixed) sync["tau"] = c.sync.tau();
  if (c.sync.kind() == SyncKind::AdaOracle || c.sync.kind() == SyncKind::LinearGrowth) {
    sync["tau0"] = c.sync.tau();
  }
  if (c.sync.kind() == SyncKind::LinearGrowth) sync["alpha_growth"] = c.sync.alpha_growth();
  json consts{{"L", k.L}, {"mu", k.mu}, {"C", k.C}, {"sigma_sq", k.sigma_sq}};
  consts["f_star"] = k.f_star ? json(*k.f_star) : json(nullptr);
  return {{"objective", c.objective->name()},
          {"dim", c.objective->dim()},
          {"n_points", c.objective->n_points()},
          {"constants", consts},
          {"p", c.p},
          {"B", c.B},
          {"T", c.T},
          {"lr", lr},
          {"sync", sync},
          {"master_seed", c.master_seed},
          {"eval_every", c.eval_every},
          {"x0", c.x0}};
}

}  // namespace lupa

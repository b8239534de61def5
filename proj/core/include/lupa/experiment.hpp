#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lupa/engine.hpp"

namespace lupa {

/// Source of the examples for dataset-backed objectives.
struct DatasetSpec {
  std::string source = "synthetic";  // synthetic | libsvm
  std::size_t n = 1000;
  std::size_t dim = 10;
  std::uint64_t seed = 0;
  double label_noise = 0.0;
  std::string path;  // libsvm only

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct ObjectiveSpec {
  std::string kind = "quadratic";  // quadratic | pl_sine | ensemble | logistic
  // quadratic: evenly spaced spectrum in [mu, L], or an explicit spectrum/b.
  std::size_t dim = 10;
  double mu = 1.0;
  double L = 10.0;
  Vec spectrum;
  Vec b;
  // pl_sine
  double grid_radius = 10.0;
  double grid_step = 1e-3;
  // ensemble
  std::size_t n = 200;
  double spread = 1.0;
  std::uint64_t seed = 0;
  // logistic
  DatasetSpec dataset;
  double lambda = 1e-2;

  friend bool operator==(const ObjectiveSpec&, const ObjectiveSpec&) = default;
};

/// A period length: an explicit integer, or "auto" (tau_star) / "stich"
/// (tau_stich) resolved from T, p and B.
struct TauSpec {
  enum class Mode { Value, Auto, Stich };
  Mode mode = Mode::Value;
  std::int64_t value = 1;

  friend bool operator==(const TauSpec&, const TauSpec&) = default;
};

struct LrSpec {
  std::string kind = "Constant";  // Constant | Theorem1 | Theorem2 | AppendixD
  double eta = 0.01;
  std::optional<double> mu;  // empty: the objective's mu
  std::optional<double> a;   // Theorem1: empty means alpha tau + 4 from choose_alpha
  std::optional<double> c;   // Theorem2: empty means alpha max tau_i + 4
  double b = 0.0;

  friend bool operator==(const LrSpec&, const LrSpec&) = default;
};

struct SyncSpec {
  std::string kind = "Fixed";  // Fixed | OneShot | FullySync | AdaOracle | LinearGrowth
  TauSpec tau;
  TauSpec tau0;
  double alpha_growth = 0.0;

  friend bool operator==(const SyncSpec&, const SyncSpec&) = default;
};

struct X0Spec {
  std::string kind = "gaussian";  // zeros | list | gaussian | optimum_offset
  Vec values;
  double scale = 1.0;
  std::uint64_t seed = 0;
  /// optimum_offset: x* + offset / sqrt(d) (1, ..., 1).
  double offset = 1.0;

  friend bool operator==(const X0Spec&, const X0Spec&) = default;
};

struct RunSpec {
  ObjectiveSpec objective;
  std::uint32_t p = 1;
  std::size_t B = 1;
  std::optional<std::int64_t> T;
  /// T = round(epochs n / B); mutually exclusive with T.
  std::optional<double> epochs;
  LrSpec lr;
  SyncSpec sync;
  std::uint64_t seed = 0;
  X0Spec x0;
  /// Empty: record at synchronisation points only.
  std::optional<std::int64_t> eval_every;
  std::string sampling = "with_replacement";  // or without_replacement
  bool sharded = false;
  bool full_batch = false;
  bool record_deviation = false;
  double divergence_factor = 1e6;

  friend bool operator==(const RunSpec&, const RunSpec&) = default;
};

enum class ExperimentKind {
  Single,
  Sweep,
  Speedup,
  TheoryCheck,
  AdaptiveCompare,
  MinibatchDivergence,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

/// Declarative experiment: a run description plus kind-specific parameters.
///
///   {"kind": "single", "run": {...}, "params": {...}}
///
/// Unknown keys anywhere are rejected with ConfigError.
struct ExperimentFile {
  ExperimentKind kind = ExperimentKind::Single;
  RunSpec run;
  nlohmann::json params = nlohmann::json::object();

  friend bool operator==(const ExperimentFile&, const ExperimentFile&) = default;
};

ExperimentFile parse_experiment(const nlohmann::json& j);
ExperimentFile parse_experiment_text(const std::string& text);
ExperimentFile load_experiment(const std::string& path);
nlohmann::json to_json(const ExperimentFile& e);

RunSpec parse_run_spec(const nlohmann::json& j);
nlohmann::json to_json(const RunSpec& r);
SyncSpec parse_sync_spec(const nlohmann::json& j);
nlohmann::json to_json(const SyncSpec& s);
TauSpec parse_tau_spec(const nlohmann::json& j);
nlohmann::json to_json(const TauSpec& t);

ObjectivePtr build_objective(const ObjectiveSpec& spec);

std::int64_t resolve_tau(const TauSpec& spec, std::int64_t T, std::int64_t p,
                         std::int64_t B);
SyncSchedule resolve_sync(const SyncSpec& spec, std::int64_t T, std::int64_t p,
                          std::int64_t B);

/// RunConfig for `spec` on an already built objective. `threads` does not
/// affect any output.
RunConfig resolve_run(const RunSpec& spec, ObjectivePtr objective,
                      unsigned threads = 1);
RunConfig resolve_run(const RunSpec& spec, unsigned threads = 1);

/// Numeric description of a resolved run (T, periods kind and length, lr
/// parameters, objective constants).
nlohmann::json describe(const RunConfig& config);

}  // namespace lupa

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lupa/data.hpp"
#include "lupa/objectives.hpp"
#include "lupa/schedules.hpp"
#include "lupa/types.hpp"

namespace lupa {

/// One worker's local model.
struct WorkerState {
  std::uint32_t worker_id = 0;
  Vec x;
};

/// Thrown by local_step when the gradient or the updated model is not finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// x <- x - eta * grad, with grad the mini-batch gradient over `batch`, or
/// the exact gradient when `batch` is empty.
void local_step(WorkerState& w, const Objective& obj,
                std::span<const Index> batch, double eta,
                std::span<double> scratch);
void local_step(WorkerState& w, const Objective& obj,
                std::span<const Index> batch, double eta);

/// Coordinate-wise mean in ascending worker order, written to `out`.
///
/// Computed as x_0 + (sum_{j>0} (x_j - x_0)) / p, which is exact whenever
/// the models already agree.
void mean_model(std::span<const WorkerState> workers, std::span<double> out);

/// Replaces every worker's model by the mean and returns it.
Vec average_models(std::span<WorkerState> workers);

/// Complete description of one simulated run.
struct RunConfig {
  ObjectivePtr objective;
  std::uint32_t p = 1;
  std::size_t B = 1;
  std::int64_t T = 1;
  LrSchedule lr;
  SyncSchedule sync;
  std::uint64_t master_seed = 0;
  Vec x0;
  std::int64_t eval_every = 1;

  SamplerOptions sampling;
  /// Every worker uses the exact gradient (analytic objectives always do).
  bool full_batch = false;
  /// Record ||grad F(x_bar) - mean_j g~_j||^2 of the step ending at each
  /// record.
  bool record_deviation = false;
  /// Record per step k: eta_k and sum_j ||grad F(x_j^(k))||^2.
  bool instrument = false;
  /// Abort once F - F* exceeds this multiple of its initial scale.
  double divergence_factor = 1e6;
  /// 1 runs workers inline; more uses a thread pool. Output is identical.
  unsigned threads = 1;

  void validate() const;
};

struct TraceRecord {
  std::int64_t t = 0;
  std::int64_t comm_rounds = 0;
  /// F(x_bar) - F*, or F(x_bar) when F* is unknown.
  double f_gap = 0.0;
  double grad_norm_sq = 0.0;
  /// sum_j ||x_bar - x_j||^2
  double divergence = 0.0;
  std::optional<double> deviation_sq;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

enum class RunStatus { Completed, Diverged };

struct Trace {
  std::vector<TraceRecord> records;
  Vec final_x;
  std::int64_t total_comm_rounds = 0;
  std::vector<std::int64_t> periods;
  RunStatus status = RunStatus::Completed;
  std::string diagnostic;
  bool f_star_known = false;
  std::size_t schedule_fallbacks = 0;

  // Filled when RunConfig::instrument is set; index k is the local step
  // taking x^(k) to x^(k+1).
  Vec step_eta;
  Vec step_worker_grad_norm_sq;

  const TraceRecord& final_record() const { return records.back(); }
  /// Iteration indices at which averaging happened.
  std::vector<std::int64_t> sync_times() const;

  friend bool operator==(const Trace&, const Trace&) = default;
};

/// Local SGD with periodic averaging. A pure function of `config`.
Trace run(const RunConfig& config);

/// Single-node full-batch gradient descent.
struct GdConfig {
  ObjectivePtr objective;
  std::int64_t T = 1;
  LrSchedule lr;
  Vec x0;
  std::int64_t eval_every = 1;
};

/// Throws ConfigError when an AppendixD schedule violates 2a > 3 or the
/// lower bound on b.
Trace run_gd(const GdConfig& config);

}  // namespace lupa

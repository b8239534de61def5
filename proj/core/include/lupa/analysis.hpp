#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lupa/engine.hpp"
#include "lupa/objectives.hpp"
#include "lupa/schedules.hpp"

namespace lupa {

/// Constants feeding the closed-form error bounds.
struct BoundParams {
  double zeta0 = 0.0;  // F(x_bar^0) - F*
  double kappa = 1.0;
  double mu = 1.0;
  double sigma_sq = 0.0;
  double C = 0.0;
  std::int64_t p = 1;
  std::int64_t B = 1;
  std::int64_t tau = 1;             // fixed-period bound
  std::vector<std::int64_t> taus;   // adaptive bound
  double a = 4.0;                   // a = alpha tau + 4, or c = alpha max tau_i + 4

  /// a = alpha tau + 4 after checking alpha against the feasibility
  /// condition (throws ConfigError naming Infeasible otherwise).
  static BoundParams theorem1(double zeta0, const SmoothnessConstants& c,
                              std::int64_t p, std::int64_t B,
                              std::int64_t tau, double alpha);
  /// c = alpha max tau_i + 4, alpha checked against every tau_i.
  static BoundParams theorem2(double zeta0, const SmoothnessConstants& c,
                              std::int64_t p, std::int64_t B,
                              std::vector<std::int64_t> taus, double alpha);

  nlohmann::json to_json() const;
};

/// Fixed-tau bound on E[F(x_bar^(t)) - F*] after t iterations.
double bound_theorem1(const BoundParams& bp, std::int64_t t);

/// Bound for the period sequence bp.taus with offset c = bp.a.
double bound_theorem2(const BoundParams& bp, std::int64_t t);

/// One comparison of an empirical mean against a bound.
struct CheckPoint {
  std::int64_t t = 0;
  double lhs = 0.0;  // empirical mean
  double rhs = 0.0;  // bound
  double se = 0.0;   // standard error of lhs (or of lhs - rhs)
  bool pass = true;
};

struct Report {
  std::string check_name;
  nlohmann::json params = nlohmann::json::object();
  std::vector<CheckPoint> per_t;
  /// Width of the acceptance band in standard errors.
  double band = 4.0;
  bool verdict = true;
  /// max lhs / rhs over points with rhs > 0.
  double max_ratio = 0.0;
  std::string note;

  nlohmann::json to_json() const;
};

/// Monte-Carlo estimate of E||(1/p) sum_j g~_j||^2 with all workers at x,
/// against (C/p + 1)||grad F(x)||^2 + sigma^2 / (pB) scaled by `safety`.
Report check_lemma1(const Objective& obj, std::span<const double> x,
                    std::int64_t p, std::int64_t B, std::size_t trials,
                    std::uint64_t seed, double safety = 1.0);

enum class Lemma3Form {
  /// 2((p+1)/p)[(C+tau) sum eta_k^2 sum_j ||grad F(x_j^(k))||^2
  ///            + sum eta_k^2 sigma^2 / B]
  Stated,
  /// Same with the variance sum multiplied by p, as obtained when the
  /// per-worker bound is summed over all p workers.
  WorkerSummed,
};

/// Seed-averaged worker divergence against the local-drift bound, summing
/// over the local steps since the most recent averaging.
Report check_lemma3(const RunConfig& base, std::size_t n_seeds,
                    Lemma3Form form = Lemma3Form::Stated, double safety = 1.0,
                    unsigned threads = 1);

/// Seed-averaged F_gap(t) against bound_theorem1 times `bound_scale` at every
/// recorded t >= tau, or, when bp.taus is set, against bound_theorem2 on the
/// completed periods at every recorded sync point.
Report empirical_bound_check(const RunConfig& config, const BoundParams& bp,
                             std::size_t n_seeds, double bound_scale = 1.0,
                             unsigned threads = 1);

/// Cubic rate for full-batch GD with eta_t = a / (mu (t + b)):
/// F_gap(T) <= (b-1)^3 / T^3 F_gap(0) for every T in [1, T_max], plus the
/// log-log slope over [slope_from, T_max].
Report check_gd_rate(ObjectivePtr objective, Vec x0, double a, double b,
                     std::int64_t T_max, std::int64_t slope_from,
                     double max_slope);

/// Least-squares slope of log(y) on log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

struct SpeedupRow {
  std::int64_t p = 1;
  std::int64_t tau = 1;
  /// Seed-averaged first recorded t with F_gap <= target; empty if some seed
  /// never reached it.
  std::optional<double> iterations_to_target;
  std::optional<double> comm_rounds_to_target;
  std::size_t reached = 0;
  double final_gap_mean = 0.0;
  double final_gap_se = 0.0;
};

struct SpeedupOptions {
  /// Recompute a = alpha tau + 4 for every p (fixed-period learning rate);
  /// otherwise the base learning rate is kept.
  bool theorem1_lr = true;
  unsigned threads = 1;
};

/// For each p, tau = tau_star(T, p, B); runs n_seeds replications.
std::vector<SpeedupRow> speedup_table(const RunConfig& base,
                                      std::span<const std::int64_t> p_values,
                                      double target_gap, std::size_t n_seeds,
                                      const SpeedupOptions& options = {});

nlohmann::json to_json(const std::vector<SpeedupRow>& rows);

/// Fixed-period learning rate for the given run shape: a = alpha tau + 4 with
/// alpha from choose_alpha on the objective's declared constants.
LrSchedule theorem1_schedule(const SmoothnessConstants& c, std::int64_t p,
                             std::int64_t tau);

/// Runs `n_seeds` replications with master seeds base.master_seed + s.
std::vector<Trace> replicate(const RunConfig& base, std::size_t n_seeds,
                             unsigned threads = 1);

}  // namespace lupa

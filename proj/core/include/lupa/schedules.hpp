#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lupa/types.hpp"

namespace lupa {

enum class LrKind { Constant, Theorem1, Theorem2, AppendixD };

/// Learning-rate sequence eta_t, t = 0, 1, ...
///
///   Constant  eta_t = eta
///   Theorem1  eta_t = 4 / (mu (t + a)),  a = alpha tau + 4
///   Theorem2  eta_t = 4 / (mu (t + c)),  c = alpha max_i tau_i + 4
///   AppendixD eta_t = a / (mu (t + b))
class LrSchedule {
 public:
  static LrSchedule constant(double eta);
  static LrSchedule theorem1(double mu, double a);
  static LrSchedule theorem2(double mu, double c);
  static LrSchedule appendix_d(double a, double b, double mu);

  LrKind kind() const noexcept { return kind_; }
  double eta() const noexcept { return eta_; }
  double mu() const noexcept { return mu_; }
  /// a for Theorem1/AppendixD, c for Theorem2.
  double offset() const noexcept { return a_; }
  /// b for AppendixD.
  double shift() const noexcept { return b_; }

  double at(std::int64_t t) const noexcept;

  friend bool operator==(const LrSchedule&, const LrSchedule&) = default;

 private:
  LrKind kind_ = LrKind::Constant;
  double eta_ = 0.0;
  double mu_ = 1.0;
  double a_ = 0.0;
  double b_ = 0.0;
};

inline double lr_at(const LrSchedule& s, std::int64_t t) { return s.at(t); }

std::string to_string(LrKind kind);
LrKind lr_kind_from_string(const std::string& name);

enum class SyncKind { Fixed, OneShot, FullySync, AdaOracle, LinearGrowth };

/// Synchronisation periods tau_1, ..., tau_E.
class SyncSchedule {
 public:
  static SyncSchedule fixed(std::int64_t tau);
  static SyncSchedule one_shot();
  static SyncSchedule fully_sync();
  /// tau_i = ceil((F(x0) / F(x_current))^(1/3)) tau0, F* dropped.
  static SyncSchedule ada_oracle(std::int64_t tau0);
  /// tau_i = round((1 + i alpha_growth) tau0), i = 0, 1, ...
  static SyncSchedule linear_growth(std::int64_t tau0, double alpha_growth);

  SyncKind kind() const noexcept { return kind_; }
  std::int64_t tau() const noexcept { return tau_; }
  double alpha_growth() const noexcept { return growth_; }
  bool needs_objective() const noexcept { return kind_ == SyncKind::AdaOracle; }

  friend bool operator==(const SyncSchedule&, const SyncSchedule&) = default;

 private:
  SyncKind kind_ = SyncKind::Fixed;
  std::int64_t tau_ = 1;
  double growth_ = 0.0;
};

std::string to_string(SyncKind kind);
SyncKind sync_kind_from_string(const std::string& name);

/// Produces periods lazily, one per synchronisation point, truncating the
/// last period so that the periods sum to T.
class PeriodGenerator {
 public:
  PeriodGenerator(SyncSchedule schedule, std::int64_t T);

  bool done() const noexcept { return elapsed_ >= T_; }
  std::int64_t elapsed() const noexcept { return elapsed_; }
  std::size_t index() const noexcept { return index_; }
  /// Number of AdaOracle evaluations that fell back to tau0 because the
  /// objective value was not positive.
  std::size_t fallbacks() const noexcept { return fallbacks_; }

  /// Length of the next period. `objective_now` is F at the current sync
  /// point (the first call sees F(x0)); only AdaOracle reads it.
  std::int64_t next(double objective_now = 0.0);

 private:
  SyncSchedule schedule_;
  std::int64_t T_;
  std::int64_t elapsed_ = 0;
  std::size_t index_ = 0;
  std::size_t fallbacks_ = 0;
  std::optional<double> reference_;
};

/// All periods for horizon T. AdaOracle requires `objective_at`, called with
/// the iteration index of each synchronisation point (0 first).
std::vector<std::int64_t> periods(
    const SyncSchedule& schedule, std::int64_t T,
    const std::function<double(std::int64_t)>& objective_at = {});

/// Inputs to the fixed-period step-size condition.
struct AlphaInputs {
  double kappa = 1.0;
  double C = 0.0;
  double L = 1.0;
  double mu = 1.0;
  std::int64_t p = 1;
  std::int64_t tau = 1;
};

/// Smallest admissible alpha for a given D, or nullopt (Infeasible) when the
/// logarithm's argument Q D (B0 + D) is <= 1.
std::optional<double> alpha_lower_bound(const AlphaInputs& in, double D);

struct AlphaChoice {
  double alpha = 0.0;
  double D = 0.0;
};

/// Minimises alpha_lower_bound over D > 0 (log grid, then golden section).
AlphaChoice choose_alpha(const AlphaInputs& in);

/// Same for a period list: minimises max_i alpha_lower_bound(tau_i, D).
AlphaChoice choose_alpha(const AlphaInputs& in,
                         std::span<const std::int64_t> taus);

/// round_half_up(T^(2/3) / (pB)^(1/3)), at least 1.
std::int64_t tau_star(std::int64_t T, std::int64_t p, std::int64_t B);

/// truncate(sqrt(T / (pB))), at least 1.
std::int64_t tau_stich(std::int64_t T, std::int64_t p, std::int64_t B);

struct SpeedupVerdict {
  bool holds_i = false;    // sum tau_i == T
  bool holds_ii = false;   // sum tau_i (tau_i - 1) <= c T^2
  bool holds_iii = false;  // (max tau_i)^3 <= c T^2 / (p B)
  bool all() const noexcept { return holds_i && holds_ii && holds_iii; }
};

SpeedupVerdict check_speedup_conditions(std::span<const std::int64_t> taus,
                                        std::int64_t T, std::int64_t p,
                                        std::int64_t B, double c = 1.0);

/// Lower bound on b for the full-batch GD schedule a / (mu (t + b)); the
/// caller must pick b strictly greater. nullopt when 2a <= 3.
std::optional<double> appendix_d_params(double a, double L, double mu);

}  // namespace lupa

#include "lupa/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lupa {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string(what) + " must be positive and finite");
  }
}

}  // namespace

LrSchedule LrSchedule::constant(double eta) {
  require_positive(eta, "lr Constant: eta");
  LrSchedule s;
  s.kind_ = LrKind::Constant;
  s.eta_ = eta;
  return s;
}

LrSchedule LrSchedule::theorem1(double mu, double a) {
  require_positive(mu, "lr Theorem1: mu");
  require_positive(a, "lr Theorem1: a");
  LrSchedule s;
  s.kind_ = LrKind::Theorem1;
  s.mu_ = mu;
  s.a_ = a;
  return s;
}

LrSchedule LrSchedule::theorem2(double mu, double c) {
  require_positive(mu, "lr Theorem2: mu");
  require_positive(c, "lr Theorem2: c");
  LrSchedule s;
  s.kind_ = LrKind::Theorem2;
  s.mu_ = mu;
  s.a_ = c;
  return s;
}

LrSchedule LrSchedule::appendix_d(double a, double b, double mu) {
  require_positive(a, "lr AppendixD: a");
  require_positive(b, "lr AppendixD: b");
  require_positive(mu, "lr AppendixD: mu");
  LrSchedule s;
  s.kind_ = LrKind::AppendixD;
  s.a_ = a;
  s.b_ = b;
  s.mu_ = mu;
  return s;
}

double LrSchedule::at(std::int64_t t) const noexcept {
  const auto td = static_cast<double>(t);
  switch (kind_) {
    case LrKind::Constant:
      return eta_;
    case LrKind::Theorem1:
    case LrKind::Theorem2:
      return 4.0 / (mu_ * (td + a_));
    case LrKind::AppendixD:
      return a_ / (mu_ * (td + b_));
  }
  return eta_;
}

std::string to_string(LrKind kind) {
  switch (kind) {
    case LrKind::Constant: return "Constant";
    case LrKind::Theorem1: return "Theorem1";
    case LrKind::Theorem2: return "Theorem2";
    case LrKind::AppendixD: return "AppendixD";
  }
  return "?";
}

LrKind lr_kind_from_string(const std::string& name) {
  for (auto k : {LrKind::Constant, LrKind::Theorem1, LrKind::Theorem2,
                 LrKind::AppendixD}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown learning-rate kind '" + name + "'");
}

// ---------------------------------------------------------------------------

SyncSchedule SyncSchedule::fixed(std::int64_t tau) {
  if (tau < 1) throw ConfigError("sync Fixed: tau must be >= 1");
  SyncSchedule s;
  s.kind_ = SyncKind::Fixed;
  s.tau_ = tau;
  return s;
}

SyncSchedule SyncSchedule::one_shot() {
  SyncSchedule s;
  s.kind_ = SyncKind::OneShot;
  return s;
}

SyncSchedule SyncSchedule::fully_sync() {
  SyncSchedule s;
  s.kind_ = SyncKind::FullySync;
  return s;
}

SyncSchedule SyncSchedule::ada_oracle(std::int64_t tau0) {
  if (tau0 < 1) throw ConfigError("sync AdaOracle: tau0 must be >= 1");
  SyncSchedule s;
  s.kind_ = SyncKind::AdaOracle;
  s.tau_ = tau0;
  return s;
}

SyncSchedule SyncSchedule::linear_growth(std::int64_t tau0,
                                         double alpha_growth) {
  if (tau0 < 1) throw ConfigError("sync LinearGrowth: tau0 must be >= 1");
  if (!(alpha_growth >= 0.0) || !std::isfinite(alpha_growth)) {
    throw ConfigError("sync LinearGrowth: alpha_growth must be >= 0");
  }
  SyncSchedule s;
  s.kind_ = SyncKind::LinearGrowth;
  s.tau_ = tau0;
  s.growth_ = alpha_growth;
  return s;
}

std::string to_string(SyncKind kind) {
  switch (kind) {
    case SyncKind::Fixed: return "Fixed";
    case SyncKind::OneShot: return "OneShot";
    case SyncKind::FullySync: return "FullySync";
    case SyncKind::AdaOracle: return "AdaOracle";
    case SyncKind::LinearGrowth: return "LinearGrowth";
  }
  return "?";
}

SyncKind sync_kind_from_string(const std::string& name) {
  for (auto k : {SyncKind::Fixed, SyncKind::OneShot, SyncKind::FullySync,
                 SyncKind::AdaOracle, SyncKind::LinearGrowth}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown sync kind '" + name + "'");
}

// ---------------------------------------------------------------------------

PeriodGenerator::PeriodGenerator(SyncSchedule schedule, std::int64_t T)
    : schedule_(schedule), T_(T) {
  if (T < 1) throw ConfigError("periods: T must be >= 1");
}

std::int64_t PeriodGenerator::next(double objective_now) {
  if (done()) throw ConfigError("periods: horizon already exhausted");
  std::int64_t tau = 1;
  switch (schedule_.kind()) {
    case SyncKind::Fixed:
      tau = schedule_.tau();
      break;
    case SyncKind::OneShot:
      tau = T_;
      break;
    case SyncKind::FullySync:
      tau = 1;
      break;
    case SyncKind::AdaOracle: {
      if (!reference_) reference_ = objective_now;
      const double f0 = *reference_;
      if (!(f0 > 0.0) || !(objective_now > 0.0) ||
          !std::isfinite(objective_now)) {
        ++fallbacks_;
        tau = schedule_.tau();
      } else {
        // Ratios like 8 / (8/27) land a few ulps above an integer cube.
        const double root = std::cbrt(f0 / objective_now);
        const double factor = std::max(1.0, std::ceil(root * (1.0 - 1e-12)));
        const double raw = factor * static_cast<double>(schedule_.tau());
        tau = raw >= static_cast<double>(T_) ? T_
                                              : static_cast<std::int64_t>(raw);
      }
      break;
    }
    case SyncKind::LinearGrowth: {
      const double raw = (1.0 + static_cast<double>(index_) *
                                    schedule_.alpha_growth()) *
                         static_cast<double>(schedule_.tau());
      tau = raw >= static_cast<double>(T_) ? T_ : std::llround(raw);
      break;
    }
  }
  tau = std::clamp<std::int64_t>(tau, 1, T_ - elapsed_);
  elapsed_ += tau;
  ++index_;
  return tau;
}

std::vector<std::int64_t> periods(
    const SyncSchedule& schedule, std::int64_t T,
    const std::function<double(std::int64_t)>& objective_at) {
  if (schedule.needs_objective() && !objective_at) {
    throw ConfigError("periods: AdaOracle requires an objective callback");
  }
  PeriodGenerator gen(schedule, T);
  std::vector<std::int64_t> out;
  while (!gen.done()) {
    const double f = objective_at ? objective_at(gen.elapsed()) : 0.0;
    out.push_back(gen.next(f));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void validate(const AlphaInputs& in) {
  if (in.p < 1 || in.tau < 1) throw ConfigError("alpha: need p, tau >= 1");
  if (!(in.kappa >= 1.0)) throw ConfigError("alpha: kappa must be >= 1");
  if (!(in.C >= 0.0)) throw ConfigError("alpha: C must be >= 0");
  if (!(in.mu > 0.0) || !(in.L >= in.mu)) {
    throw ConfigError("alpha: need 0 < mu <= L");
  }
}

double alpha_objective(const AlphaInputs& in,
                       std::span<const std::int64_t> taus, double D) {
  double worst = 0.0;
  for (auto tau : taus) {
    AlphaInputs one = in;
    one.tau = tau;
    const auto a = alpha_lower_bound(one, D);
    if (!a) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, *a);
  }
  return worst;
}

}  // namespace

std::optional<double> alpha_lower_bound(const AlphaInputs& in, double D) {
  validate(in);
  if (!(D > 0.0)) throw ConfigError("alpha: D must be positive");
  const auto p = static_cast<double>(in.p);
  const auto tau = static_cast<double>(in.tau);
  const double b0 = 4.0 * (in.L * (in.C / p + 1.0) - in.mu) / (in.mu * tau);
  const double q =
      p * tau / (32.0 * (p + 1.0) * in.kappa * in.kappa * (in.C + tau));
  const double arg = q * D * (b0 + D);
  if (!(arg > 1.0)) return std::nullopt;
  return std::max(4.0 / std::log(arg), b0 + D);
}

AlphaChoice choose_alpha(const AlphaInputs& in) {
  const std::int64_t taus[] = {in.tau};
  return choose_alpha(in, taus);
}

AlphaChoice choose_alpha(const AlphaInputs& in,
                         std::span<const std::int64_t> taus) {
  validate(in);
  if (taus.empty()) throw ConfigError("alpha: empty period list");

  constexpr int kGrid = 600;
  const double lo = std::log(1e-6);
  const double hi = std::log(1e9);
  auto grid_d = [&](int k) {
    return std::exp(lo + (hi - lo) * static_cast<double>(k) / (kGrid - 1));
  };

  int best = -1;
  double best_val = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kGrid; ++k) {
    const double v = alpha_objective(in, taus, grid_d(k));
    if (v < best_val) {
      best_val = v;
      best = k;
    }
  }
  if (best < 0) throw ConfigError("alpha: no feasible D on search grid");

  // The objective is quasi-convex in D on the feasible set (a decreasing
  // logarithmic branch against an increasing linear one).
  double a = grid_d(std::max(best - 1, 0));
  double b = grid_d(std::min(best + 1, kGrid - 1));
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = alpha_objective(in, taus, c);
  double fd = alpha_objective(in, taus, d);
  for (int it = 0; it < 200 && (b - a) > 1e-14 * b; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = alpha_objective(in, taus, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = alpha_objective(in, taus, d);
    }
  }
  AlphaChoice out{best_val, grid_d(best)};
  for (double D : {a, b, c, d}) {
    const double v = alpha_objective(in, taus, D);
    if (v < out.alpha) out = {v, D};
  }
  return out;
}

namespace {

__extension__ using i128 = __int128;

}  // namespace

std::int64_t tau_star(std::int64_t T, std::int64_t p, std::int64_t B) {
  if (T < 1 || p < 1 || B < 1) throw ConfigError("tau_star: need T, p, B >= 1");
  const double Td = static_cast<double>(T);
  const double ratio = std::cbrt(Td * Td) /
                       std::cbrt(static_cast<double>(p) * static_cast<double>(B));
  auto n = static_cast<std::int64_t>(std::floor(ratio + 0.5));
  // round_half_up(x) >= n  <=>  x >= n - 1/2  <=>  8 T^2 >= p B (2n - 1)^3.
  // Correct the floating estimate exactly at the half-integer boundary.
  auto at_least = [&](std::int64_t m) {
    if (m <= 1) return true;
    const i128 odd = 2 * static_cast<i128>(m) - 1;
    return 8 * static_cast<i128>(T) * T >= static_cast<i128>(p) * B * odd * odd * odd;
  };
  while (n > 1 && !at_least(n)) --n;
  while (at_least(n + 1)) ++n;
  return std::max<std::int64_t>(1, n);
}

std::int64_t tau_stich(std::int64_t T, std::int64_t p, std::int64_t B) {
  if (T < 1 || p < 1 || B < 1) throw ConfigError("tau_stich: need T, p, B >= 1");
  const double r = std::sqrt(static_cast<double>(T) /
                             (static_cast<double>(p) * static_cast<double>(B)));
  auto n = static_cast<std::int64_t>(r);
  // trunc(sqrt(T / (pB))) >= n  <=>  n^2 p B <= T.
  auto at_least = [&](std::int64_t m) {
    return static_cast<i128>(m) * m * p * B <= static_cast<i128>(T);
  };
  while (n > 1 && !at_least(n)) --n;
  while (at_least(n + 1)) ++n;
  return std::max<std::int64_t>(1, n);
}

SpeedupVerdict check_speedup_conditions(std::span<const std::int64_t> taus,
                                        std::int64_t T, std::int64_t p,
                                        std::int64_t B, double c) {
  if (taus.empty()) throw ConfigError("speedup conditions: empty period list");
  if (!(c > 0.0)) throw ConfigError("speedup conditions: c must be positive");
  // Long double keeps the integer arithmetic exact for realistic horizons.
  long double sum = 0, pair_sum = 0;
  std::int64_t max_tau = 0;
  for (auto t : taus) {
    sum += t;
    pair_sum += static_cast<long double>(t) * static_cast<long double>(t - 1);
    max_tau = std::max(max_tau, t);
  }
  const long double T2 = static_cast<long double>(T) * T;
  const long double m = max_tau;
  SpeedupVerdict v;
  v.holds_i = sum == static_cast<long double>(T);
  v.holds_ii = pair_sum <= c * T2;
  v.holds_iii = m * m * m <= c * T2 / (static_cast<long double>(p) * B);
  return v;
}

std::optional<double> appendix_d_params(double a, double L, double mu) {
  if (!(L > 0.0) || !(mu > 0.0)) {
    throw ConfigError("appendix_d_params: L and mu must be positive");
  }
  if (!(2.0 * a > 3.0)) return std::nullopt;
  const double x = a * a * L * L / mu;
  const double bracket =
      (-(3.0 - x) + std::fabs(3.0 - x)) / (2.0 * (2.0 * a - 3.0)) +
      1.0 / std::sqrt(2.0 * a - 3.0);
  return std::max(bracket, 1.0);
}

}  // namespace lupa

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lupa/schedules.hpp"
#include "lupa/types.hpp"

using namespace lupa;

namespace {

std::int64_t sum(const std::vector<std::int64_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::int64_t{0});
}

// Brute force: largest n >= 1 with n - 1/2 <= T^(2/3) / (pB)^(1/3), i.e.
// (2n - 1)^3 p B <= 8 T^2, found by counting up.
std::int64_t tau_star_oracle(std::int64_t T, std::int64_t p, std::int64_t B) {
  std::int64_t n = 1;
  auto ok = [&](std::int64_t m) {
    const long double odd = 2.0L * m - 1.0L;
    return odd * odd * odd * p * B <= 8.0L * T * T;
  };
  while (ok(n + 1)) ++n;
  return n;
}

std::int64_t tau_stich_oracle(std::int64_t T, std::int64_t p, std::int64_t B) {
  std::int64_t n = 1;
  while ((n + 1) * (n + 1) * p * B <= T) ++n;
  return n;
}

AlphaInputs inputs(double kappa, double C, std::int64_t p, std::int64_t tau) {
  return AlphaInputs{kappa, C, kappa, 1.0, p, tau};
}

}  // namespace

TEST_CASE("learning-rate examples") {
  const auto t1 = LrSchedule::theorem1(1.0, 8.0);
  CHECK(lr_at(t1, 0) == 0.5);
  for (std::int64_t t = 1; t <= 1000; ++t) CHECK(t1.at(t - 1) > t1.at(t));
  CHECK(LrSchedule::appendix_d(2.0, 3.0, 1.0).at(0) == doctest::Approx(2.0 / 3.0));
  CHECK(LrSchedule::theorem2(2.0, 10.0).at(6) == doctest::Approx(4.0 / (2.0 * 16.0)));
  CHECK(LrSchedule::constant(0.1).at(12345) == 0.1);
}

TEST_CASE("learning-rate validation") {
  CHECK_THROWS_AS(LrSchedule::constant(0.0), ConfigError);
  CHECK_THROWS_AS(LrSchedule::constant(-1.0), ConfigError);
  CHECK_THROWS_AS(LrSchedule::theorem1(0.0, 8.0), ConfigError);
  CHECK_THROWS_AS(LrSchedule::theorem1(1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(LrSchedule::appendix_d(2.0, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(lr_kind_from_string("Cosine"), ConfigError);
  for (auto k : {LrKind::Constant, LrKind::Theorem1, LrKind::Theorem2, LrKind::AppendixD}) {
    CHECK(lr_kind_from_string(to_string(k)) == k);
  }
}

TEST_CASE("decreasing schedules stay positive and decrease") {
  for (const auto& s : {LrSchedule::theorem1(0.3, 5.0), LrSchedule::theorem2(2.0, 40.0),
                        LrSchedule::appendix_d(2.0, 3.0, 1.0)}) {
    for (std::int64_t t = 1; t <= 10000; ++t) {
      REQUIRE(s.at(t) > 0.0);
      REQUIRE(s.at(t) < s.at(t - 1));
    }
  }
}

TEST_CASE("fixed-period step sizes satisfy the telescoping decrease") {
  // Delta_t z_t / eta_t <= z_{t-1} / eta_{t-1}, z_t = (t + a)^2,
  // Delta_t = 1 - mu eta_t.
  for (double mu : {0.1, 1.0, 3.0}) {
    for (double a : {4.5, 8.0, 60.0, 1000.0}) {
      const auto s = LrSchedule::theorem1(mu, a);
      for (std::int64_t t = 1; t <= 10000; ++t) {
        const double zt = (t + a) * (t + a);
        const double zp = (t - 1 + a) * (t - 1 + a);
        const double lhs = (1.0 - mu * s.at(t)) * zt / s.at(t);
        const double rhs = zp / s.at(t - 1);
        REQUIRE(lhs <= rhs * (1.0 + 1e-12));
      }
    }
  }
}

TEST_CASE("alpha_lower_bound examples") {
  const auto in = inputs(1.0, 0.0, 1, 10);
  CHECK_FALSE(alpha_lower_bound(in, 1.0).has_value());
  const auto a40 = alpha_lower_bound(in, 40.0);
  REQUIRE(a40);
  CHECK(*a40 == 40.0);
  CHECK(4.0 / std::log(25.0) == doctest::Approx(1.2426).epsilon(1e-3));
  CHECK_THROWS_AS(alpha_lower_bound(in, 0.0), ConfigError);
  CHECK_THROWS_AS(alpha_lower_bound(inputs(0.5, 0.0, 1, 10), 1.0), ConfigError);
  CHECK_THROWS_AS(alpha_lower_bound(inputs(1.0, 0.0, 0, 10), 1.0), ConfigError);
}

TEST_CASE("choose_alpha against a dense grid") {
  const auto in = inputs(2.0, 1.0, 4, 50);
  const auto ch = choose_alpha(in);
  REQUIRE(alpha_lower_bound(in, ch.D));
  CHECK(*alpha_lower_bound(in, ch.D) == doctest::Approx(ch.alpha).epsilon(1e-12));
  for (double D : {1.0, 10.0, 100.0}) {
    const auto a = alpha_lower_bound(in, D);
    if (a) CHECK(ch.alpha <= *a);
  }
  // Independent oracle: 200k log-spaced points over [1e-3, 1e6].
  double best = INFINITY;
  for (int k = 0; k < 200000; ++k) {
    const double D = std::pow(10.0, -3.0 + 9.0 * k / 199999.0);
    if (auto a = alpha_lower_bound(in, D)) best = std::min(best, *a);
  }
  CHECK(ch.alpha <= best * (1.0 + 1e-9));
  CHECK(ch.alpha >= best * (1.0 - 1e-4));

  CHECK(choose_alpha(inputs(1.0, 0.0, 1, 10)).alpha <= 40.0);
}

TEST_CASE("choose_alpha keeps the first step size admissible") {
  for (double kappa : {1.0, 3.0, 10.0, 100.0}) {
    for (double C : {0.0, 0.5, 4.0}) {
      for (std::int64_t p : {1, 4, 16}) {
        for (std::int64_t tau : {1, 5, 40, 300}) {
          const AlphaInputs in{kappa, C, kappa * 0.5, 0.5, p, tau};
          const auto ch = choose_alpha(in);
          REQUIRE(alpha_lower_bound(in, ch.D));
          const double eta0 = 4.0 / (in.mu * (ch.alpha * double(tau) + 4.0));
          CHECK(eta0 <= 1.0 / (in.L * (C / double(p) + 1.0)));
        }
      }
    }
  }
}

TEST_CASE("choose_alpha over a period list takes the worst period") {
  const auto in = inputs(2.0, 0.5, 4, 1);
  const std::vector<std::int64_t> taus{5, 10, 80};
  const auto ch = choose_alpha(in, taus);
  for (auto t : taus) {
    AlphaInputs one = in;
    one.tau = t;
    const auto a = alpha_lower_bound(one, ch.D);
    REQUIRE(a);
    CHECK(*a <= ch.alpha * (1.0 + 1e-12));
  }
  CHECK_THROWS_AS(choose_alpha(in, std::vector<std::int64_t>{}), ConfigError);
}

TEST_CASE("tau formulas") {
  CHECK(tau_star(21875, 5, 128) == 91);
  CHECK(tau_star(1, 1, 1) == 1);
  // 1000^(2/3) / 32^(1/3) = 31.498..., below the half-way point.
  CHECK(tau_star(1000, 4, 8) == 31);
  CHECK(tau_star(1000, 4, 8) == tau_star_oracle(1000, 4, 8));
  // An exact tie: 27^(2/3) / 8^(1/3) = 4.5 rounds up.
  CHECK(tau_star(27, 1, 8) == 5);
  CHECK(tau_stich(21875, 5, 128) == 5);
  CHECK(tau_stich(1, 1, 1) == 1);
  CHECK(tau_stich(400, 1, 1) == 20);
  CHECK(tau_stich(399, 1, 1) == 19);
  CHECK_THROWS_AS(tau_star(0, 1, 1), ConfigError);
  CHECK_THROWS_AS(tau_stich(1, 0, 1), ConfigError);
}

TEST_CASE("tau formulas agree with integer oracles") {
  for (std::int64_t T = 1; T <= 3000; T += 7) {
    for (std::int64_t p : {1, 2, 3, 5, 8}) {
      for (std::int64_t B : {1, 4, 16, 128}) {
        REQUIRE(tau_star(T, p, B) == tau_star_oracle(T, p, B));
        REQUIRE(tau_stich(T, p, B) == tau_stich_oracle(T, p, B));
      }
    }
  }
  for (std::int64_t k = 1; k <= 41; k += 2) {
    // T = k^3, pB = 8: ratio k^2 / 2 sits exactly on a tie.
    CHECK(tau_star(k * k * k, 2, 4) == (k * k + 1) / 2);
  }
}

TEST_CASE("period examples") {
  CHECK(periods(SyncSchedule::fixed(5), 12) == std::vector<std::int64_t>{5, 5, 2});
  CHECK(periods(SyncSchedule::one_shot(), 9) == std::vector<std::int64_t>{9});
  CHECK(periods(SyncSchedule::fully_sync(), 4) == std::vector<std::int64_t>{1, 1, 1, 1});
  const auto lg = periods(SyncSchedule::linear_growth(91, 1.09), 1000);
  CHECK(lg[0] == 91);
  CHECK(lg[1] == 190);
  CHECK(lg[2] == 289);

  PeriodGenerator ada(SyncSchedule::ada_oracle(5), 100);
  CHECK(ada.next(8.0) == 5);
  CHECK(ada.next(1.0) == 10);
  CHECK(ada.next(8.0 / 27.0) == 15);
  CHECK(ada.fallbacks() == 0);
}

TEST_CASE("AdaOracle falls back on non-positive objective values") {
  PeriodGenerator ada(SyncSchedule::ada_oracle(4), 100);
  CHECK(ada.next(2.0) == 4);
  CHECK(ada.next(0.0) == 4);
  CHECK(ada.next(-1.0) == 4);
  CHECK(ada.next(NAN) == 4);
  CHECK(ada.fallbacks() == 3);
  CHECK_THROWS_AS(periods(SyncSchedule::ada_oracle(4), 10), ConfigError);
}

TEST_CASE("periods partition T for every schedule kind") {
  for (std::int64_t T : {1, 2, 7, 64, 1000, 4097}) {
    CHECK(sum(periods(SyncSchedule::fixed(3), T)) == T);
    CHECK(sum(periods(SyncSchedule::fixed(5000), T)) == T);
    CHECK(sum(periods(SyncSchedule::one_shot(), T)) == T);
    CHECK(sum(periods(SyncSchedule::fully_sync(), T)) == T);
    CHECK(sum(periods(SyncSchedule::linear_growth(7, 0.5), T)) == T);
    CHECK(sum(periods(SyncSchedule::linear_growth(1, 0.0), T)) == T);
    const auto ada = periods(SyncSchedule::ada_oracle(3), T,
                             [](std::int64_t t) { return 100.0 / (1.0 + t); });
    CHECK(sum(ada) == T);
    for (std::size_t i = 0; i + 1 < ada.size(); ++i) CHECK(ada[i] >= 3);
  }
}

TEST_CASE("AdaOracle periods never shrink below tau0 while F decreases") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    // A decreasing sequence of objective values with varying rates.
    const double rate = 0.001 * double(seed);
    const auto taus = periods(SyncSchedule::ada_oracle(6), 5000, [&](std::int64_t t) {
      return 10.0 * std::exp(-rate * double(t)) + 1e-3;
    });
    for (std::size_t i = 0; i + 1 < taus.size(); ++i) REQUIRE(taus[i] >= 6);
    for (std::size_t i = 1; i + 1 < taus.size(); ++i) REQUIRE(taus[i] >= taus[i - 1]);
  }
}

TEST_CASE("sync validation and names") {
  CHECK_THROWS_AS(SyncSchedule::fixed(0), ConfigError);
  CHECK_THROWS_AS(SyncSchedule::ada_oracle(0), ConfigError);
  CHECK_THROWS_AS(SyncSchedule::linear_growth(3, -0.1), ConfigError);
  CHECK_THROWS_AS(periods(SyncSchedule::fixed(2), 0), ConfigError);
  CHECK_THROWS_AS(sync_kind_from_string("Random"), ConfigError);
  for (auto k : {SyncKind::Fixed, SyncKind::OneShot, SyncKind::FullySync,
                 SyncKind::AdaOracle, SyncKind::LinearGrowth}) {
    CHECK(sync_kind_from_string(to_string(k)) == k);
  }
}

TEST_CASE("speedup conditions") {
  const std::vector<std::int64_t> flat{16, 16, 16, 16};
  auto v = check_speedup_conditions(flat, 64, 1, 1, 1.0);
  CHECK(v.holds_i);
  CHECK(v.holds_ii);
  CHECK(v.holds_iii);
  CHECK(v.all());

  v = check_speedup_conditions(std::vector<std::int64_t>{2, 4, 8, 16, 32}, 62, 1, 1, 1.0);
  CHECK(v.holds_i);
  CHECK_FALSE(v.holds_iii);

  for (std::int64_t T : {2, 10, 1000}) {
    v = check_speedup_conditions(std::vector<std::int64_t>{T}, T, 1, 1, 1.0);
    CHECK(v.holds_i);
    CHECK_FALSE(v.holds_iii);
  }
  CHECK(check_speedup_conditions(std::vector<std::int64_t>{1}, 1, 1, 1, 1.0).all());
  CHECK_FALSE(check_speedup_conditions(flat, 65, 1, 1, 1.0).holds_i);
  CHECK_THROWS_AS(check_speedup_conditions(std::vector<std::int64_t>{}, 1, 1, 1, 1.0),
                  ConfigError);
  CHECK_THROWS_AS(check_speedup_conditions(flat, 64, 1, 1, 0.0), ConfigError);
}

TEST_CASE("appendix_d_params") {
  CHECK(appendix_d_params(2.0, 1.0, 1.0).value() == doctest::Approx(2.0));
  CHECK_FALSE(appendix_d_params(1.0, 1.0, 1.0).has_value());
  CHECK_FALSE(appendix_d_params(1.5, 1.0, 1.0).has_value());
  const double x = 16.0;
  const double oracle = (-(3.0 - x) + std::fabs(3.0 - x)) / 10.0 + 1.0 / std::sqrt(5.0);
  CHECK(appendix_d_params(4.0, 1.0, 1.0).value() == doctest::Approx(oracle));
  CHECK(appendix_d_params(4.0, 1.0, 1.0).value() == doctest::Approx(3.047).epsilon(1e-3));
  // X < 3 leaves only the square-root term, floored at 1.
  CHECK(appendix_d_params(1.6, 0.5, 1.0).value() == doctest::Approx(1.0 / std::sqrt(0.2)));
  CHECK(appendix_d_params(100.0, 1e-3, 1.0).value() == 1.0);
  CHECK_THROWS_AS(appendix_d_params(2.0, 0.0, 1.0), ConfigError);
}

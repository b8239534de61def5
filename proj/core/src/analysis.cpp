#include "lupa/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "lupa/detail/thread_pool.hpp"

namespace lupa {

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(std::span<const double> v) {
  MeanSe r;
  if (v.empty()) return r;
  double s = 0.0;
  for (double x : v) s += x;
  r.mean = s / static_cast<double>(v.size());
  if (v.size() < 2) return r;
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  const double var = ss / static_cast<double>(v.size() - 1);
  r.se = std::sqrt(var / static_cast<double>(v.size()));
  return r;
}

void check_alpha(const SmoothnessConstants& c, std::int64_t p,
                 std::span<const std::int64_t> taus, double alpha) {
  AlphaInputs in{c.kappa(), c.C, c.L, c.mu, p, taus.front()};
  const AlphaChoice best = choose_alpha(in, taus);
  if (!(alpha >= best.alpha * (1.0 - 1e-9))) {
    throw ConfigError("Infeasible alpha " + std::to_string(alpha) +
                      ": the smallest admissible value is " +
                      std::to_string(best.alpha));
  }
}

}  // namespace

BoundParams BoundParams::theorem1(double zeta0, const SmoothnessConstants& c,
                                  std::int64_t p, std::int64_t B,
                                  std::int64_t tau, double alpha) {
  c.validate();
  if (p < 1 || B < 1 || tau < 1) throw ConfigError("bound: need p, B, tau >= 1");
  const std::int64_t taus[] = {tau};
  check_alpha(c, p, taus, alpha);
  BoundParams bp;
  bp.zeta0 = zeta0;
  bp.kappa = c.kappa();
  bp.mu = c.mu;
  bp.sigma_sq = c.sigma_sq;
  bp.C = c.C;
  bp.p = p;
  bp.B = B;
  bp.tau = tau;
  bp.a = alpha * static_cast<double>(tau) + 4.0;
  return bp;
}

BoundParams BoundParams::theorem2(double zeta0, const SmoothnessConstants& c,
                                  std::int64_t p, std::int64_t B,
                                  std::vector<std::int64_t> taus, double alpha) {
  c.validate();
  if (taus.empty()) throw ConfigError("bound: empty period list");
  if (p < 1 || B < 1) throw ConfigError("bound: need p, B >= 1");
  check_alpha(c, p, taus, alpha);
  BoundParams bp;
  bp.zeta0 = zeta0;
  bp.kappa = c.kappa();
  bp.mu = c.mu;
  bp.sigma_sq = c.sigma_sq;
  bp.C = c.C;
  bp.p = p;
  bp.B = B;
  const auto max_tau = *std::max_element(taus.begin(), taus.end());
  bp.tau = max_tau;
  bp.a = alpha * static_cast<double>(max_tau) + 4.0;
  bp.taus = std::move(taus);
  return bp;
}

nlohmann::json BoundParams::to_json() const {
  nlohmann::json j{{"zeta0", zeta0}, {"kappa", kappa}, {"mu", mu},
                   {"sigma_sq", sigma_sq}, {"C", C}, {"p", p},
                   {"B", B}, {"tau", tau}, {"a", a}};
  if (!taus.empty()) j["taus"] = taus;
  return j;
}

double bound_theorem1(const BoundParams& bp, std::int64_t t) {
  const double T = static_cast<double>(t);
  const double a = bp.a;
  const double p = static_cast<double>(bp.p);
  const double B = static_cast<double>(bp.B);
  const double tau = static_cast<double>(bp.tau);
  const double Ta3 = (T + a) * (T + a) * (T + a);

  const double decay = a * a * a / Ta3 * bp.zeta0;
  const double variance =
      4.0 * bp.kappa * bp.sigma_sq * T * (T + 2.0 * a) / (bp.mu * p * B * Ta3);
  const double drift_coeff = 64.0 * bp.kappa * bp.kappa * bp.sigma_sq *
                             (p + 1.0) * (tau - 1.0) /
                             (bp.mu * p * p * B * Ta3);
  const double bracket = tau * (tau - 1.0) * (2.0 * tau - 1.0) / (6.0 * a * a) +
                         4.0 * (T - 1.0) - 3.0 * tau;
  return decay + variance + drift_coeff * bracket;
}

double bound_theorem2(const BoundParams& bp, std::int64_t t) {
  const double T = static_cast<double>(t);
  const double c = bp.a;
  const double p = static_cast<double>(bp.p);
  const double B = static_cast<double>(bp.B);
  const double Tc3 = (T + c) * (T + c) * (T + c);

  const double decay = c * c * c / Tc3 * bp.zeta0;
  const double variance =
      4.0 * bp.kappa * bp.sigma_sq * T * (T + 2.0 * c) / (bp.mu * B * p * Tc3);
  double sum = 0.0;
  for (const auto ti : bp.taus) {
    const double tau = static_cast<double>(ti);
    sum += (tau - 1.0) *
           (tau * (tau - 1.0) * (2.0 * tau - 1.0) / (6.0 * c * c) + tau);
  }
  // The displayed adaptive bound carries no 1/B in its drift term.
  const double drift = 64.0 * bp.sigma_sq * (p + 1.0) * bp.kappa * bp.kappa /
                       (bp.mu * p * p * Tc3) * sum;
  return decay + variance + drift;
}

nlohmann::json Report::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& c : per_t) {
    per.push_back({{"t", c.t}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"se", c.se},
                   {"pass", c.pass}});
  }
  return {{"check_name", check_name}, {"params", params},
          {"per_t", std::move(per)}, {"band", band},
          {"verdict", verdict ? "pass" : "fail"}, {"max_ratio", max_ratio},
          {"note", note}};
}

// ---------------------------------------------------------------------------

std::vector<Trace> replicate(const RunConfig& base, std::size_t n_seeds,
                             unsigned threads) {
  std::vector<Trace> out(n_seeds);
  auto body = [&](std::size_t s) {
    RunConfig cfg = base;
    cfg.master_seed = base.master_seed + s;
    cfg.threads = 1;
    out[s] = run(cfg);
  };
  if (threads > 1 && n_seeds > 1) {
    detail::ThreadPool pool(static_cast<unsigned>(std::min<std::size_t>(threads, n_seeds)));
    pool.parallel_for(n_seeds, body);
  } else {
    for (std::size_t s = 0; s < n_seeds; ++s) body(s);
  }
  return out;
}

LrSchedule theorem1_schedule(const SmoothnessConstants& c, std::int64_t p,
                             std::int64_t tau) {
  const AlphaChoice choice =
      choose_alpha(AlphaInputs{c.kappa(), c.C, c.L, c.mu, p, tau});
  return LrSchedule::theorem1(c.mu, choice.alpha * static_cast<double>(tau) + 4.0);
}

Report check_lemma1(const Objective& obj, std::span<const double> x,
                    std::int64_t p, std::int64_t B, std::size_t trials,
                    std::uint64_t seed, double safety) {
  if (p < 1 || B < 1) throw ConfigError("lemma1: need p, B >= 1");
  if (trials < 10'000) throw ConfigError("lemma1: trials must be >= 10000");
  require_dim(x, obj.dim(), "lemma1");
  const auto& c = obj.constants();
  const Vec g = obj.full_gradient(x);
  const double pd = static_cast<double>(p);
  const double rhs = safety * ((c.C / pd + 1.0) * norm_sq(g) +
                               c.sigma_sq / (pd * static_cast<double>(B)));

  Vec samples(trials);
  Vec mean(obj.dim());
  Vec gj(obj.dim());
  std::vector<Index> batch(static_cast<std::size_t>(B));
  for (std::size_t tr = 0; tr < trials; ++tr) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::int64_t j = 0; j < p; ++j) {
      if (obj.n_points() == 0) {
        obj.full_gradient(x, gj);
      } else {
        draw_batch(SamplerStream{seed, static_cast<std::uint32_t>(j), tr}, 0,
                   obj.n_points(), batch);
        obj.stochastic_gradient(x, batch, gj);
      }
      for (std::size_t k = 0; k < gj.size(); ++k) mean[k] += gj[k];
    }
    for (auto& v : mean) v /= pd;
    samples[tr] = norm_sq(mean);
  }
  const MeanSe est = mean_se(samples);

  Report r;
  r.check_name = "lemma1";
  r.params = {{"p", p}, {"B", B}, {"trials", trials}, {"seed", seed},
              {"safety", safety}, {"C", c.C}, {"sigma_sq", c.sigma_sq},
              {"grad_norm_sq", norm_sq(g)}};
  CheckPoint cp{0, est.mean, rhs, est.se, est.mean <= rhs + r.band * est.se};
  r.per_t.push_back(cp);
  r.verdict = cp.pass;
  r.max_ratio = rhs > 0.0 ? est.mean / rhs : 0.0;
  return r;
}

Report check_lemma3(const RunConfig& base, std::size_t n_seeds,
                    Lemma3Form form, double safety, unsigned threads) {
  if (n_seeds < 20) throw ConfigError("lemma3: insufficient seeds (need >= 20)");
  RunConfig cfg = base;
  cfg.instrument = true;
  const auto traces = replicate(cfg, n_seeds, threads);

  const auto& c = cfg.objective->constants();
  const double p = static_cast<double>(cfg.p);
  const double B = static_cast<double>(cfg.B);
  const double noise_mult = form == Lemma3Form::Stated ? 1.0 : p;
  const double lead = safety * 2.0 * (p + 1.0) / p;

  std::map<std::int64_t, std::pair<Vec, Vec>> by_t;
  bool consensus_exact = true;
  Report r;
  r.check_name = "lemma3";

  for (const auto& tr : traces) {
    if (tr.status != RunStatus::Completed) {
      r.verdict = false;
      r.note = "a replication diverged: " + tr.diagnostic;
      return r;
    }
    const std::size_t T = tr.step_eta.size();
    Vec pre_g(T + 1, 0.0);
    Vec pre_e(T + 1, 0.0);
    for (std::size_t k = 0; k < T; ++k) {
      const double e2 = tr.step_eta[k] * tr.step_eta[k];
      pre_g[k + 1] = pre_g[k] + e2 * tr.step_worker_grad_norm_sq[k];
      pre_e[k + 1] = pre_e[k] + e2;
    }
    // Period i covers (starts[i], starts[i] + periods[i]].
    std::vector<std::int64_t> starts{0};
    for (auto tau : tr.periods) starts.push_back(starts.back() + tau);

    std::size_t i = 0;
    for (const auto& rec : tr.records) {
      while (i + 1 < starts.size() && starts[i + 1] < rec.t) ++i;
      const bool at_sync = std::binary_search(starts.begin(), starts.end(), rec.t);
      double rhs = 0.0;
      if (at_sync) {
        if (rec.divergence != 0.0) consensus_exact = false;
      } else {
        const auto s = static_cast<std::size_t>(starts[i]);
        const auto t = static_cast<std::size_t>(rec.t);
        const double tau_cur = static_cast<double>(tr.periods[i]);
        rhs = lead * ((c.C + tau_cur) * (pre_g[t] - pre_g[s]) +
                      noise_mult * (pre_e[t] - pre_e[s]) * c.sigma_sq / B);
      }
      auto& slot = by_t[rec.t];
      slot.first.push_back(rec.divergence);
      slot.second.push_back(rhs);
    }
  }

  r.params = {{"p", cfg.p}, {"B", cfg.B}, {"T", cfg.T}, {"n_seeds", n_seeds},
              {"form", form == Lemma3Form::Stated ? "stated" : "worker_summed"},
              {"safety", safety}, {"C", c.C}, {"sigma_sq", c.sigma_sq},
              {"consensus_exact", consensus_exact}};
  for (const auto& [t, lr] : by_t) {
    if (lr.first.size() != n_seeds) continue;
    Vec diff(n_seeds);
    for (std::size_t s = 0; s < n_seeds; ++s) diff[s] = lr.first[s] - lr.second[s];
    const MeanSe d = mean_se(diff);
    const MeanSe lhs = mean_se(lr.first);
    const MeanSe rhs = mean_se(lr.second);
    CheckPoint cp{t, lhs.mean, rhs.mean, d.se, d.mean <= r.band * d.se};
    r.verdict = r.verdict && cp.pass;
    if (rhs.mean > 0.0) r.max_ratio = std::max(r.max_ratio, lhs.mean / rhs.mean);
    r.per_t.push_back(cp);
  }
  if (!consensus_exact) {
    r.verdict = false;
    r.note = "non-zero divergence at a synchronisation record";
  }
  return r;
}

Report empirical_bound_check(const RunConfig& config, const BoundParams& bp,
                             std::size_t n_seeds, double bound_scale,
                             unsigned threads) {
  if (n_seeds < 1) throw ConfigError("bound check: need at least one seed");
  const auto traces = replicate(config, n_seeds, threads);
  const bool adaptive = !bp.taus.empty();

  Report r;
  r.check_name = adaptive ? "theorem2_bound" : "theorem1_bound";
  r.params = {{"bound", bp.to_json()}, {"n_seeds", n_seeds},
              {"bound_scale", bound_scale}, {"T", config.T}, {"p", config.p},
              {"B", config.B}};

  std::map<std::int64_t, Vec> by_t;
  for (const auto& tr : traces) {
    if (tr.status != RunStatus::Completed) {
      r.verdict = false;
      r.note = "a replication diverged: " + tr.diagnostic;
      return r;
    }
    for (const auto& rec : tr.records) by_t[rec.t].push_back(rec.f_gap);
  }
  // The fixed-period bound splits its drift sum at k = tau and is only
  // derived for t >= tau; below that its last bracket is negative. The
  // adaptive bound holds after whole periods, so it is compared at sync
  // points against the completed prefix of the period list.
  std::map<std::int64_t, std::size_t> prefix_end;
  if (adaptive) {
    std::int64_t acc = 0;
    for (std::size_t i = 0; i < bp.taus.size(); ++i) prefix_end[acc += bp.taus[i]] = i + 1;
  }
  std::size_t skipped = 0;
  for (const auto& [t, gaps] : by_t) {
    if (gaps.size() != n_seeds || t < 1) continue;
    double rhs = 0.0;
    if (adaptive) {
      const auto it = prefix_end.find(t);
      if (it == prefix_end.end()) {
        ++skipped;
        continue;
      }
      BoundParams prefix = bp;
      prefix.taus.resize(it->second);
      rhs = bound_scale * bound_theorem2(prefix, t);
    } else {
      if (t < bp.tau) {
        ++skipped;
        continue;
      }
      rhs = bound_scale * bound_theorem1(bp, t);
    }
    const MeanSe m = mean_se(gaps);
    CheckPoint cp{t, m.mean, rhs, m.se, m.mean <= rhs + r.band * m.se};
    r.verdict = r.verdict && cp.pass;
    if (rhs > 0.0) r.max_ratio = std::max(r.max_ratio, m.mean / rhs);
    r.per_t.push_back(cp);
  }
  r.params["records_outside_bound_domain"] = skipped;
  if (r.per_t.empty()) {
    r.verdict = false;
    r.note = "no recorded t inside the bound's domain";
  }
  return r;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ConfigError("loglog_slope: need at least two matching points");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Report check_gd_rate(ObjectivePtr objective, Vec x0, double a, double b,
                     std::int64_t T_max, std::int64_t slope_from,
                     double max_slope) {
  if (!objective) throw ConfigError("gd rate: no objective");
  if (slope_from < 1 || slope_from >= T_max) {
    throw ConfigError("gd rate: need 1 <= slope_from < T_max");
  }
  GdConfig cfg;
  cfg.objective = objective;
  cfg.T = T_max;
  cfg.lr = LrSchedule::appendix_d(a, b, objective->constants().mu);
  cfg.x0 = std::move(x0);
  cfg.eval_every = 1;
  const Trace tr = run_gd(cfg);

  Report r;
  r.check_name = "appendix_d_rate";
  r.band = 0.0;
  const double gap0 = tr.records.front().f_gap;
  const double b1 = b - 1.0;
  Vec xs, ys;
  bool positive = true;
  for (const auto& rec : tr.records) {
    if (rec.t < 1) continue;
    const double T = static_cast<double>(rec.t);
    const double rhs = b1 * b1 * b1 / (T * T * T) * gap0;
    CheckPoint cp{rec.t, rec.f_gap, rhs, 0.0, rec.f_gap <= rhs};
    r.verdict = r.verdict && cp.pass;
    if (rhs > 0.0) r.max_ratio = std::max(r.max_ratio, rec.f_gap / rhs);
    r.per_t.push_back(cp);
    if (rec.t >= slope_from) {
      positive = positive && rec.f_gap > 0.0;
      xs.push_back(T);
      ys.push_back(rec.f_gap);
    }
  }
  const double slope = positive ? loglog_slope(xs, ys) : -INFINITY;
  const bool slope_ok = slope <= max_slope;
  r.verdict = r.verdict && slope_ok && tr.status == RunStatus::Completed;
  r.params = {{"a", a}, {"b", b}, {"T_max", T_max}, {"slope_from", slope_from},
              {"slope", positive ? nlohmann::json(slope) : nlohmann::json("-inf")},
              {"max_slope", max_slope}, {"slope_ok", slope_ok},
              {"gap0", gap0}};
  return r;
}

std::vector<SpeedupRow> speedup_table(const RunConfig& base,
                                      std::span<const std::int64_t> p_values,
                                      double target_gap, std::size_t n_seeds,
                                      const SpeedupOptions& options) {
  if (n_seeds < 1) throw ConfigError("speedup: need at least one seed");
  std::vector<SpeedupRow> rows;
  for (const auto p : p_values) {
    if (p < 1) throw ConfigError("speedup: p must be >= 1");
    RunConfig cfg = base;
    cfg.p = static_cast<std::uint32_t>(p);
    const std::int64_t tau =
        tau_star(cfg.T, p, static_cast<std::int64_t>(cfg.B));
    cfg.sync = SyncSchedule::fixed(tau);
    if (options.theorem1_lr) {
      cfg.lr = theorem1_schedule(cfg.objective->constants(), p, tau);
    }
    const auto traces = replicate(cfg, n_seeds, options.threads);

    SpeedupRow row;
    row.p = p;
    row.tau = tau;
    Vec finals, iters, comms;
    for (const auto& tr : traces) {
      finals.push_back(tr.final_record().f_gap);
      for (const auto& rec : tr.records) {
        if (rec.f_gap <= target_gap) {
          iters.push_back(static_cast<double>(rec.t));
          comms.push_back(static_cast<double>(rec.comm_rounds));
          break;
        }
      }
    }
    row.reached = iters.size();
    if (row.reached == n_seeds) {
      row.iterations_to_target = mean_se(iters).mean;
      row.comm_rounds_to_target = mean_se(comms).mean;
    }
    const MeanSe f = mean_se(finals);
    row.final_gap_mean = f.mean;
    row.final_gap_se = f.se;
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json to_json(const std::vector<SpeedupRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back(
        {{"p", r.p}, {"tau", r.tau},
         {"iterations_to_target", r.iterations_to_target
                                      ? nlohmann::json(*r.iterations_to_target)
                                      : nlohmann::json("unreached")},
         {"comm_rounds_to_target", r.comm_rounds_to_target
                                       ? nlohmann::json(*r.comm_rounds_to_target)
                                       : nlohmann::json("unreached")},
         {"reached", r.reached}, {"final_gap_mean", r.final_gap_mean},
         {"final_gap_se", r.final_gap_se}});
  }
  return out;
}

}  // namespace lupa

#include "lupa/engine.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "lupa/detail/thread_pool.hpp"

namespace lupa {

void local_step(WorkerState& w, const Objective& obj,
                std::span<const Index> batch, double eta,
                std::span<double> scratch) {
  if (!(eta > 0.0)) throw ConfigError("local_step: eta must be positive");
  if (batch.empty()) {
    obj.full_gradient(w.x, scratch);
  } else {
    obj.stochastic_gradient(w.x, batch, scratch);
  }
  for (std::size_t k = 0; k < w.x.size(); ++k) {
    if (!std::isfinite(scratch[k])) {
      throw DivergenceError("non-finite gradient at worker " +
                            std::to_string(w.worker_id));
    }
    w.x[k] -= eta * scratch[k];
  }
}

void local_step(WorkerState& w, const Objective& obj,
                std::span<const Index> batch, double eta) {
  Vec scratch(obj.dim());
  local_step(w, obj, batch, eta, scratch);
}

void mean_model(std::span<const WorkerState> workers, std::span<double> out) {
  if (workers.empty()) throw ConfigError("average: no workers");
  const auto& x0 = workers.front().x;
  require_dim(out, x0.size(), "average");
  for (const auto& w : workers) require_dim(w.x, x0.size(), "average");
  const auto p = static_cast<double>(workers.size());
  for (std::size_t k = 0; k < x0.size(); ++k) {
    double acc = 0.0;
    for (std::size_t j = 1; j < workers.size(); ++j) {
      acc += workers[j].x[k] - x0[k];
    }
    out[k] = x0[k] + acc / p;
  }
}

Vec average_models(std::span<WorkerState> workers) {
  if (workers.empty()) throw ConfigError("average: no workers");
  Vec mean(workers.front().x.size());
  mean_model(workers, mean);
  for (auto& w : workers) w.x = mean;
  return mean;
}

void RunConfig::validate() const {
  if (!objective) throw ConfigError("run: no objective");
  if (p < 1) throw ConfigError("run: p must be >= 1");
  if (B < 1) throw ConfigError("run: B must be >= 1");
  if (T < 1) throw ConfigError("run: T must be >= 1");
  if (eval_every < 1 || eval_every > T) {
    throw ConfigError("run: eval_every must lie in [1, T]");
  }
  if (!(lr.at(0) > 0.0)) throw ConfigError("run: learning rate must be positive");
  if (x0.size() != objective->dim()) {
    throw DimensionError("run: x0 has dimension " + std::to_string(x0.size()) +
                         ", objective has " +
                         std::to_string(objective->dim()));
  }
  if (!(divergence_factor > 0.0)) {
    throw ConfigError("run: divergence_factor must be positive");
  }
  if (!full_batch && objective->n_points() > 0) {
    if (sampling.mode == SamplingMode::WithoutReplacement) {
      const std::size_t pool_size =
          sampling.sharded ? objective->n_points() / p : objective->n_points();
      if (B > pool_size) {
        throw ConfigError("run: B exceeds the sampling population");
      }
    }
    if (sampling.sharded && objective->n_points() < p) {
      throw ConfigError("run: fewer data points than shards");
    }
  }
}

std::vector<std::int64_t> Trace::sync_times() const {
  std::vector<std::int64_t> out;
  std::int64_t t = 0;
  for (std::size_t i = 0; i < periods.size() &&
                          out.size() < static_cast<std::size_t>(total_comm_rounds);
       ++i) {
    t += periods[i];
    out.push_back(t);
  }
  return out;
}

namespace {

struct Scratch {
  Vec grad;
  Vec full;
  std::vector<Index> batch;
  Vec step_norms;
  std::optional<std::int64_t> failed_at;
};

struct Measurement {
  TraceRecord record;
  double value = 0.0;
};

}  // namespace

Trace run(const RunConfig& cfg) {
  cfg.validate();
  const Objective& obj = *cfg.objective;
  const std::size_t d = obj.dim();
  const std::size_t p = cfg.p;
  const bool exact = cfg.full_batch || obj.n_points() == 0;
  const auto f_star = obj.constants().f_star;

  SamplerOptions sampling = cfg.sampling;
  if (sampling.sharded) sampling.num_shards = cfg.p;

  std::vector<WorkerState> states(p);
  std::vector<Scratch> scratch(p);
  for (std::size_t j = 0; j < p; ++j) {
    states[j].worker_id = static_cast<std::uint32_t>(j);
    states[j].x = cfg.x0;
    scratch[j].grad.assign(d, 0.0);
    scratch[j].full.assign(d, 0.0);
    scratch[j].batch.assign(cfg.B, 0);
  }

  std::optional<detail::ThreadPool> pool;
  if (cfg.threads > 1 && p > 1) {
    pool.emplace(static_cast<unsigned>(std::min<std::size_t>(cfg.threads, p)));
  }

  Trace trace;
  trace.f_star_known = f_star.has_value();
  if (cfg.instrument) {
    trace.step_eta.assign(static_cast<std::size_t>(cfg.T), 0.0);
    trace.step_worker_grad_norm_sq.assign(static_cast<std::size_t>(cfg.T), 0.0);
  }

  Vec xbar(d);
  Vec gbar(d);
  auto measure = [&](std::int64_t t, std::int64_t comm) {
    Measurement m;
    mean_model(states, xbar);
    m.value = obj.value(xbar);
    obj.full_gradient(xbar, gbar);
    m.record.t = t;
    m.record.comm_rounds = comm;
    m.record.f_gap = f_star ? m.value - *f_star : m.value;
    m.record.grad_norm_sq = norm_sq(gbar);
    double div = 0.0;
    for (const auto& w : states) div += dist_sq(xbar, w.x);
    m.record.divergence = div;
    return m;
  };

  const Measurement first = measure(0, 0);
  trace.records.push_back(first.record);
  Vec last_good = xbar;
  const double scale = std::max({std::fabs(first.value),
                                 std::fabs(first.record.f_gap), 1e-12});
  const double threshold = cfg.divergence_factor * scale;

  std::uint64_t round = 0;
  bool aborted = false;

  // Advances every worker through local steps [from, to) of the current
  // round. Returns false if any worker produced a non-finite model.
  auto run_steps = [&](std::int64_t from, std::int64_t to,
                       std::int64_t period_start) {
    const auto count = static_cast<std::size_t>(to - from);
    auto body = [&](std::size_t j) {
      auto& w = states[j];
      auto& s = scratch[j];
      s.failed_at.reset();
      if (cfg.instrument) s.step_norms.assign(count, 0.0);
      const SamplerStream stream{cfg.master_seed, static_cast<std::uint32_t>(j),
                                 round};
      for (std::int64_t k = from; k < to; ++k) {
        const double eta = cfg.lr.at(k);
        if (exact) {
          obj.full_gradient(w.x, s.grad);
        } else {
          draw_batch(stream, static_cast<std::uint64_t>(k - period_start),
                     obj.n_points(), s.batch, sampling);
          obj.stochastic_gradient(w.x, s.batch, s.grad);
        }
        if (cfg.instrument) {
          if (exact) {
            s.step_norms[static_cast<std::size_t>(k - from)] = norm_sq(s.grad);
          } else {
            obj.full_gradient(w.x, s.full);
            s.step_norms[static_cast<std::size_t>(k - from)] = norm_sq(s.full);
          }
        }
        bool finite = true;
        for (std::size_t c = 0; c < d; ++c) {
          w.x[c] -= eta * s.grad[c];
          finite = finite && std::isfinite(w.x[c]);
        }
        if (!finite) {
          s.failed_at = k;
          return;
        }
      }
    };
    if (pool) {
      pool->parallel_for(p, body);
    } else {
      for (std::size_t j = 0; j < p; ++j) body(j);
    }
    for (std::size_t j = 0; j < p; ++j) {
      if (scratch[j].failed_at) {
        std::ostringstream msg;
        msg << "non-finite model at step " << *scratch[j].failed_at
            << " (worker " << j << ")";
        trace.diagnostic = msg.str();
        return false;
      }
    }
    if (cfg.instrument) {
      for (std::size_t i = 0; i < count; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < p; ++j) acc += scratch[j].step_norms[i];
        const auto k = static_cast<std::size_t>(from) + i;
        trace.step_worker_grad_norm_sq[k] = acc;
        trace.step_eta[k] = cfg.lr.at(static_cast<std::int64_t>(k));
      }
    }
    return true;
  };

  PeriodGenerator gen(cfg.sync, cfg.T);
  std::int64_t t = 0;
  std::int64_t comm = 0;
  double f_now = first.value;
  while (t < cfg.T && !aborted) {
    const std::int64_t tau = gen.next(f_now);
    trace.periods.push_back(tau);
    const std::int64_t period_start = t;
    const std::int64_t period_end = t + tau;

    while (t < period_end) {
      const std::int64_t next_eval = (t / cfg.eval_every + 1) * cfg.eval_every;
      const std::int64_t seg_end = std::min(period_end, next_eval);

      std::optional<double> deviation;
      if (cfg.record_deviation) {
        if (seg_end - 1 > t && !run_steps(t, seg_end - 1, period_start)) {
          aborted = true;
          break;
        }
        mean_model(states, xbar);
        Vec grad_at_mean(d);
        obj.full_gradient(xbar, grad_at_mean);
        if (!run_steps(seg_end - 1, seg_end, period_start)) {
          aborted = true;
          break;
        }
        Vec mean_grad(d, 0.0);
        for (std::size_t j = 0; j < p; ++j) {
          for (std::size_t c = 0; c < d; ++c) mean_grad[c] += scratch[j].grad[c];
        }
        for (auto& v : mean_grad) v /= static_cast<double>(p);
        deviation = dist_sq(grad_at_mean, mean_grad);
      } else if (!run_steps(t, seg_end, period_start)) {
        aborted = true;
        break;
      }
      t = seg_end;

      if (t == period_end) {
        average_models(states);
        ++comm;
      }
      Measurement m = measure(t, comm);
      m.record.deviation_sq = deviation;
      if (!std::isfinite(m.value) || !std::isfinite(m.record.grad_norm_sq) ||
          m.record.f_gap > threshold) {
        std::ostringstream msg;
        msg << "divergence at t=" << t << ": F - F* = " << m.record.f_gap
            << " exceeds threshold " << threshold;
        trace.diagnostic = msg.str();
        aborted = true;
        break;
      }
      trace.records.push_back(m.record);
      last_good = xbar;
      f_now = m.value;
    }
    ++round;
  }

  trace.status = aborted ? RunStatus::Diverged : RunStatus::Completed;
  // An aborted run reports only what its kept records saw.
  if (aborted) comm = trace.records.back().comm_rounds;
  trace.total_comm_rounds = comm;
  trace.final_x = std::move(last_good);
  trace.schedule_fallbacks = gen.fallbacks();
  if (aborted) {
    // Drop the partially executed period from the period list.
    while (!trace.periods.empty() &&
           static_cast<std::int64_t>(trace.periods.size()) > comm) {
      trace.periods.pop_back();
    }
  }
  return trace;
}

Trace run_gd(const GdConfig& cfg) {
  if (!cfg.objective) throw ConfigError("run_gd: no objective");
  const Objective& obj = *cfg.objective;
  if (cfg.T < 1) throw ConfigError("run_gd: T must be >= 1");
  if (cfg.eval_every < 1 || cfg.eval_every > cfg.T) {
    throw ConfigError("run_gd: eval_every must lie in [1, T]");
  }
  if (!(cfg.lr.at(0) > 0.0)) throw ConfigError("run_gd: learning rate must be positive");
  require_dim(cfg.x0, obj.dim(), "run_gd x0");
  if (cfg.lr.kind() == LrKind::AppendixD) {
    const auto& c = obj.constants();
    const auto b_min = appendix_d_params(cfg.lr.offset(), c.L, c.mu);
    if (!b_min) {
      throw ConfigError("run_gd: Infeasible AppendixD schedule (need 2a > 3)");
    }
    if (!(cfg.lr.shift() > *b_min)) {
      throw ConfigError("run_gd: AppendixD b must exceed " +
                        std::to_string(*b_min));
    }
  }

  const auto f_star = obj.constants().f_star;
  Trace trace;
  trace.f_star_known = f_star.has_value();
  Vec x = cfg.x0;
  Vec g(obj.dim());

  auto record = [&](std::int64_t t) {
    TraceRecord r;
    r.t = t;
    const double f = obj.value(x);
    r.f_gap = f_star ? f - *f_star : f;
    obj.full_gradient(x, g);
    r.grad_norm_sq = norm_sq(g);
    r.divergence = 0.0;
    return r;
  };

  trace.records.push_back(record(0));
  Vec last_good = x;
  for (std::int64_t t = 0; t < cfg.T; ++t) {
    const double eta = cfg.lr.at(t);
    obj.full_gradient(x, g);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] -= eta * g[k];
    if ((t + 1) % cfg.eval_every == 0 || t + 1 == cfg.T) {
      TraceRecord r = record(t + 1);
      if (!std::isfinite(r.f_gap) || !std::isfinite(r.grad_norm_sq)) {
        trace.status = RunStatus::Diverged;
        trace.diagnostic = "non-finite objective at t=" + std::to_string(t + 1);
        break;
      }
      trace.records.push_back(r);
      last_good = x;
    }
  }
  trace.final_x = std::move(last_good);
  return trace;
}

}  // namespace lupa

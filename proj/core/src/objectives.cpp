#include "lupa/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lupa/rng.hpp"

namespace lupa {

void SmoothnessConstants::validate() const {
  if (!(mu > 0.0)) throw ConfigError("constants: mu must be positive");
  if (!(L >= mu)) throw ConfigError("constants: L must be >= mu");
  if (!(C >= 0.0) || !(sigma_sq >= 0.0)) {
    throw ConfigError("constants: C and sigma_sq must be non-negative");
  }
}

double Objective::value(std::span<const double> x) const {
  require_dim(x, dim(), "value");
  return value_impl(x);
}

Vec Objective::full_gradient(std::span<const double> x) const {
  Vec g(dim());
  full_gradient(x, g);
  return g;
}

void Objective::full_gradient(std::span<const double> x,
                              std::span<double> out) const {
  require_dim(x, dim(), "full_gradient");
  require_dim(out, dim(), "full_gradient");
  gradient_impl(x, out);
}

Vec Objective::stochastic_gradient(std::span<const double> x,
                                   std::span<const Index> batch) const {
  Vec g(dim());
  stochastic_gradient(x, batch, g);
  return g;
}

void Objective::stochastic_gradient(std::span<const double> x,
                                    std::span<const Index> batch,
                                    std::span<double> out) const {
  require_dim(x, dim(), "stochastic_gradient");
  require_dim(out, dim(), "stochastic_gradient");
  if (batch.empty()) throw ConfigError("stochastic_gradient: empty batch");
  const std::size_t n = n_points();
  for (const Index i : batch) {
    if (i >= n) {
      throw ConfigError("stochastic_gradient: index " + std::to_string(i) +
                        " out of range for " + std::to_string(n) + " points");
    }
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (const Index i : batch) add_point_gradient(i, x, out);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (auto& v : out) v *= inv_b;
}

void Objective::add_point_gradient(Index, std::span<const double>,
                                   std::span<double>) const {
  throw ConfigError(name() + ": analytic objective has no data points");
}

// ---------------------------------------------------------------------------

QuadraticObjective::QuadraticObjective(Vec spectrum, Vec b)
    : spectrum_(std::move(spectrum)), b_(std::move(b)) {
  if (spectrum_.empty()) throw ConfigError("quadratic: empty spectrum");
  if (b_.empty()) b_.assign(spectrum_.size(), 0.0);
  if (b_.size() != spectrum_.size()) {
    throw DimensionError("quadratic: b and spectrum differ in length");
  }
  for (double l : spectrum_) {
    if (!(l > 0.0)) throw ConfigError("quadratic: spectrum must be positive");
  }
  constants_.L = *std::max_element(spectrum_.begin(), spectrum_.end());
  constants_.mu = *std::min_element(spectrum_.begin(), spectrum_.end());
  constants_.C = 0.0;
  constants_.sigma_sq = 0.0;
  constants_.f_star = value_impl(*minimizer());
}

QuadraticObjective QuadraticObjective::with_range(std::size_t dim, double mu,
                                                  double L) {
  if (dim == 0) throw ConfigError("quadratic: dim must be >= 1");
  if (!(mu > 0.0) || !(L >= mu)) {
    throw ConfigError("quadratic: need 0 < mu <= L");
  }
  Vec spec(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    spec[k] = dim == 1 ? mu
                       : mu + (L - mu) * static_cast<double>(k) /
                                  static_cast<double>(dim - 1);
  }
  return QuadraticObjective(std::move(spec), Vec(dim, 0.0));
}

std::optional<Vec> QuadraticObjective::minimizer() const {
  Vec x(spectrum_.size());
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = b_[k] / spectrum_[k];
  return x;
}

double QuadraticObjective::value_impl(std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    s += 0.5 * spectrum_[k] * x[k] * x[k] - b_[k] * x[k];
  }
  return s;
}

void QuadraticObjective::gradient_impl(std::span<const double> x,
                                       std::span<double> out) const {
  for (std::size_t k = 0; k < x.size(); ++k) {
    out[k] = spectrum_[k] * x[k] - b_[k];
  }
}

// ---------------------------------------------------------------------------

PlSineObjective::PlSineObjective(double grid_radius, double grid_step) {
  if (!(grid_radius > 0.0) || !(grid_step > 0.0)) {
    throw ConfigError("pl_sine: grid radius and step must be positive");
  }
  // f'' = 1/2 + 8 cos(4x)
  constants_.L = 8.5;
  constants_.C = 0.0;
  constants_.sigma_sq = 0.0;
  constants_.f_star = 0.0;

  double mu = std::numeric_limits<double>::infinity();
  const auto steps = static_cast<long>(std::floor(grid_radius / grid_step));
  for (long k = -steps; k <= steps; ++k) {
    if (k == 0) continue;
    const double x = static_cast<double>(k) * grid_step;
    const double f = value_impl(std::span<const double>(&x, 1));
    double g = 0.0;
    gradient_impl(std::span<const double>(&x, 1), std::span<double>(&g, 1));
    mu = std::min(mu, 0.5 * g * g / f);
  }
  constants_.mu = mu;
}

double PlSineObjective::value_impl(std::span<const double> x) const {
  const double s = std::sin(2.0 * x[0]);
  return 0.25 * x[0] * x[0] + s * s;
}

void PlSineObjective::gradient_impl(std::span<const double> x,
                                    std::span<double> out) const {
  out[0] = 0.5 * x[0] + 2.0 * std::sin(4.0 * x[0]);
}

// ---------------------------------------------------------------------------

PerPointQuadratics::PerPointQuadratics(std::size_t n, std::size_t dim,
                                       Vec centers)
    : n_(n), dim_(dim), centers_(std::move(centers)), mean_(dim, 0.0) {
  if (n_ == 0 || dim_ == 0) throw ConfigError("ensemble: n and dim must be >= 1");
  if (centers_.size() != n_ * dim_) {
    throw DimensionError("ensemble: centers must be n x dim");
  }
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t k = 0; k < dim_; ++k) mean_[k] += centers_[i * dim_ + k];
  }
  for (auto& m : mean_) m /= static_cast<double>(n_);

  double spread = 0.0;
  for (std::size_t i = 0; i < n_; ++i) spread += dist_sq(center(i), mean_);
  constants_.L = 1.0;
  constants_.mu = 1.0;
  constants_.C = 0.0;
  constants_.sigma_sq = spread / static_cast<double>(n_);
  constants_.f_star = value_impl(mean_);
}

PerPointQuadratics PerPointQuadratics::gaussian(std::size_t n, std::size_t dim,
                                                double spread,
                                                std::uint64_t seed) {
  if (!(spread >= 0.0)) throw ConfigError("ensemble: spread must be >= 0");
  SplitMix64 rng(derive_seed(seed, 0x656e73));
  Vec c(n * dim);
  for (auto& v : c) v = spread * rng.normal();
  return PerPointQuadratics(n, dim, std::move(c));
}

double PerPointQuadratics::value_impl(std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < n_; ++i) s += 0.5 * dist_sq(x, center(i));
  return s / static_cast<double>(n_);
}

void PerPointQuadratics::gradient_impl(std::span<const double> x,
                                       std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < n_; ++i) add_point_gradient(i, x, out);
  const double inv_n = 1.0 / static_cast<double>(n_);
  for (auto& v : out) v *= inv_n;
}

void PerPointQuadratics::add_point_gradient(Index i, std::span<const double> x,
                                            std::span<double> out) const {
  const double* c = centers_.data() + i * dim_;
  for (std::size_t k = 0; k < dim_; ++k) out[k] += x[k] - c[k];
}

// ---------------------------------------------------------------------------

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

LogisticObjective::LogisticObjective(std::shared_ptr<const Dataset> data,
                                     double lambda, bool compute_f_star,
                                     double f_star_tol)
    : data_(std::move(data)), lambda_(lambda) {
  if (!data_) throw ConfigError("logistic: null dataset");
  if (!(lambda_ > 0.0)) throw ConfigError("logistic: lambda must be positive");

  double max_row = 0.0;
  double mean_row = 0.0;
  for (std::size_t i = 0; i < data_->size(); ++i) {
    const double r = data_->row_norm_sq(i);
    max_row = std::max(max_row, r);
    mean_row += r;
  }
  constants_.L = 0.25 * max_row + lambda_;
  constants_.mu = lambda_;
  constants_.C = 0.0;
  constants_.sigma_sq = mean_row / static_cast<double>(data_->size());

  if (!compute_f_star) return;
  Vec x(dim(), 0.0);
  Vec g(dim());
  const double step = 1.0 / constants_.L;
  const std::size_t max_iters = 50'000'000 / std::max<std::size_t>(1, data_->size());
  for (std::size_t it = 0;; ++it) {
    gradient_impl(x, g);
    if (std::sqrt(norm_sq(g)) < f_star_tol) break;
    if (it >= std::max<std::size_t>(max_iters, 100'000)) {
      throw ConfigError("logistic: gradient descent for F* did not reach "
                        "tolerance; increase lambda");
    }
    for (std::size_t k = 0; k < x.size(); ++k) x[k] -= step * g[k];
  }
  constants_.f_star = value_impl(x);
  x_star_ = std::move(x);
}

double LogisticObjective::value_impl(std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < data_->size(); ++i) {
    s += softplus(-data_->label(i) * data_->row_dot(i, x));
  }
  return s / static_cast<double>(data_->size()) + 0.5 * lambda_ * norm_sq(x);
}

void LogisticObjective::gradient_impl(std::span<const double> x,
                                      std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < data_->size(); ++i) add_point_gradient(i, x, out);
  const double inv_n = 1.0 / static_cast<double>(data_->size());
  for (auto& v : out) v *= inv_n;
}

void LogisticObjective::add_point_gradient(Index i, std::span<const double> x,
                                           std::span<double> out) const {
  const double y = data_->label(i);
  const double m = y * data_->row_dot(i, x);
  data_->row_axpy(i, -y * sigmoid(-m), out);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += lambda_ * x[k];
}

// ---------------------------------------------------------------------------

SmoothnessConstants estimate_constants(const Objective& obj,
                                       std::span<const Vec> probes,
                                       std::size_t trials, std::uint64_t seed,
                                       const EstimateOptions& options) {
  if (probes.size() < 2) {
    throw ConfigError("estimate_constants: need at least 2 probe points");
  }
  if (trials < 100) throw ConfigError("estimate_constants: trials must be >= 100");
  const auto& declared = obj.constants();
  if (options.estimate_mu && !declared.f_star) {
    throw ConfigError("estimate_constants: F* unknown, cannot estimate mu");
  }

  std::vector<Vec> grads;
  grads.reserve(probes.size());
  for (const auto& x : probes) grads.push_back(obj.full_gradient(x));

  SmoothnessConstants est;
  est.f_star = declared.f_star;

  double L = 0.0;
  for (std::size_t a = 0; a < probes.size(); ++a) {
    for (std::size_t b = a + 1; b < probes.size(); ++b) {
      const double dx = dist_sq(probes[a], probes[b]);
      if (dx <= 0.0) continue;
      L = std::max(L, std::sqrt(dist_sq(grads[a], grads[b]) / dx));
    }
  }
  est.L = L;

  if (options.estimate_mu) {
    double mu = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < probes.size(); ++a) {
      const double gap = obj.value(probes[a]) - *declared.f_star;
      if (gap <= 1e-14) continue;
      mu = std::min(mu, 0.5 * norm_sq(grads[a]) / gap);
    }
    est.mu = mu;
  } else {
    est.mu = declared.mu;
  }

  est.C = 0.0;
  est.sigma_sq = 0.0;
  if (obj.n_points() == 0) return est;

  // Rows (||g||^2, 1/B) -> target E||g~ - g||^2; 2x2 normal equations.
  double s11 = 0, s12 = 0, s22 = 0, t1 = 0, t2 = 0;
  std::vector<Index> batch;
  Vec sg(obj.dim());
  for (std::size_t a = 0; a < probes.size(); ++a) {
    const double gn = norm_sq(grads[a]);
    for (std::size_t bi = 0; bi < options.batch_sizes.size(); ++bi) {
      const std::size_t B = options.batch_sizes[bi];
      batch.assign(B, 0);
      double acc = 0.0;
      for (std::size_t tr = 0; tr < trials; ++tr) {
        SamplerStream stream{seed, static_cast<std::uint32_t>(a), bi};
        draw_batch(stream, tr, obj.n_points(), batch);
        obj.stochastic_gradient(probes[a], batch, sg);
        acc += dist_sq(sg, grads[a]);
      }
      const double v = acc / static_cast<double>(trials);
      const double inv_b = 1.0 / static_cast<double>(B);
      s11 += gn * gn;
      s12 += gn * inv_b;
      s22 += inv_b * inv_b;
      t1 += gn * v;
      t2 += inv_b * v;
    }
  }
  const double det = s11 * s22 - s12 * s12;
  double C = det > 1e-12 * s11 * s22 ? (t1 * s22 - t2 * s12) / det : 0.0;
  double sig = det > 1e-12 * s11 * s22 ? (s11 * t2 - s12 * t1) / det
                                       : (s22 > 0 ? t2 / s22 : 0.0);
  // Project onto the non-negative orthant.
  if (C < 0.0) {
    C = 0.0;
    sig = s22 > 0 ? t2 / s22 : 0.0;
  }
  if (sig < 0.0) {
    sig = 0.0;
    C = s11 > 0 ? t1 / s11 : 0.0;
  }
  est.C = std::max(C, 0.0);
  est.sigma_sq = std::max(sig, 0.0);
  return est;
}

}  // namespace lupa

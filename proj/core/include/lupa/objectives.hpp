#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lupa/data.hpp"
#include "lupa/types.hpp"

namespace lupa {

/// Declared regularity constants of an objective.
///
/// L is the gradient Lipschitz constant, mu the Polyak-Lojasiewicz constant,
/// and (C, sigma_sq) bound the mini-batch gradient noise as
/// E||g~ - g||^2 <= C ||g||^2 + sigma_sq / B.
struct SmoothnessConstants {
  double L = 1.0;
  double mu = 1.0;
  double C = 0.0;
  double sigma_sq = 0.0;
  std::optional<double> f_star;

  double kappa() const noexcept { return L / mu; }
  void validate() const;
};

/// A differentiable loss F(x) = (1/n) sum_i f_i(x), or an analytic function
/// when n_points() == 0. All methods are const and thread-safe.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const noexcept = 0;
  /// Number of data points; 0 for analytic objectives, whose gradient
  /// oracle is exact.
  virtual std::size_t n_points() const noexcept = 0;
  const SmoothnessConstants& constants() const noexcept { return constants_; }
  /// Known global minimiser, when analytically available.
  virtual std::optional<Vec> minimizer() const { return std::nullopt; }

  double value(std::span<const double> x) const;
  Vec full_gradient(std::span<const double> x) const;
  void full_gradient(std::span<const double> x, std::span<double> out) const;

  /// (1/B) sum_{i in batch} grad f_i(x), accumulated in batch order.
  Vec stochastic_gradient(std::span<const double> x,
                          std::span<const Index> batch) const;
  void stochastic_gradient(std::span<const double> x,
                           std::span<const Index> batch,
                           std::span<double> out) const;

 protected:
  virtual double value_impl(std::span<const double> x) const = 0;
  virtual void gradient_impl(std::span<const double> x,
                             std::span<double> out) const = 0;
  /// out += grad f_i(x). Only called when n_points() > 0.
  virtual void add_point_gradient(Index i, std::span<const double> x,
                                  std::span<double> out) const;

  SmoothnessConstants constants_;
};

using ObjectivePtr = std::shared_ptr<const Objective>;

/// F(x) = 1/2 sum_k lambda_k x_k^2 - <b, x> with a diagonal spectrum.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(Vec spectrum, Vec b);
  /// Spectrum evenly spaced in [mu, L] over `dim` coordinates, b = 0.
  static QuadraticObjective with_range(std::size_t dim, double mu, double L);

  std::string name() const override { return "quadratic"; }
  std::size_t dim() const noexcept override { return spectrum_.size(); }
  std::size_t n_points() const noexcept override { return 0; }
  std::optional<Vec> minimizer() const override;
  std::span<const double> spectrum() const noexcept { return spectrum_; }

 protected:
  double value_impl(std::span<const double> x) const override;
  void gradient_impl(std::span<const double> x,
                     std::span<double> out) const override;

 private:
  Vec spectrum_;
  Vec b_;
};

/// One-dimensional F(x) = x^2/4 + sin^2(2x). Non-convex. Its PL constant is
/// estimated on a grid at construction; the function has stationary points
/// other than x = 0, so the estimate is close to zero.
class PlSineObjective final : public Objective {
 public:
  explicit PlSineObjective(double grid_radius = 10.0, double grid_step = 1e-3);

  std::string name() const override { return "pl_sine"; }
  std::size_t dim() const noexcept override { return 1; }
  std::size_t n_points() const noexcept override { return 0; }
  std::optional<Vec> minimizer() const override { return Vec{0.0}; }

 protected:
  double value_impl(std::span<const double> x) const override;
  void gradient_impl(std::span<const double> x,
                     std::span<double> out) const override;
};

/// f_i(x) = 1/2 ||x - c_i||^2. L = mu = 1, C = 0 and
/// sigma^2 = (1/n) sum_i ||c_i - c_bar||^2 exactly.
class PerPointQuadratics final : public Objective {
 public:
  /// `centers` is row-major n x dim.
  PerPointQuadratics(std::size_t n, std::size_t dim, Vec centers);
  /// Centers drawn i.i.d. N(0, spread^2 I) from `seed`.
  static PerPointQuadratics gaussian(std::size_t n, std::size_t dim,
                                     double spread, std::uint64_t seed);

  std::string name() const override { return "ensemble"; }
  std::size_t dim() const noexcept override { return dim_; }
  std::size_t n_points() const noexcept override { return n_; }
  std::optional<Vec> minimizer() const override { return mean_; }
  std::span<const double> center(Index i) const noexcept {
    return {centers_.data() + i * dim_, dim_};
  }

 protected:
  double value_impl(std::span<const double> x) const override;
  void gradient_impl(std::span<const double> x,
                     std::span<double> out) const override;
  void add_point_gradient(Index i, std::span<const double> x,
                          std::span<double> out) const override;

 private:
  std::size_t n_;
  std::size_t dim_;
  Vec centers_;
  Vec mean_;
};

/// l2-regularised logistic loss
/// f_i(x) = log(1 + exp(-y_i <a_i, x>)) + (lambda/2) ||x||^2.
///
/// L = max_i ||a_i||^2 / 4 + lambda, mu = lambda (strong convexity), C = 0 and
/// sigma^2 = (1/n) sum_i ||a_i||^2, which dominates the per-sample gradient
/// variance since |dloss/dmargin| <= 1.
class LogisticObjective final : public Objective {
 public:
  /// F* is found by full-batch gradient descent (step 1/L) run until
  /// ||grad F|| < f_star_tol, when `compute_f_star` is set.
  LogisticObjective(std::shared_ptr<const Dataset> data, double lambda,
                    bool compute_f_star = true, double f_star_tol = 1e-10);

  std::string name() const override { return "logistic"; }
  std::size_t dim() const noexcept override { return data_->dim(); }
  std::size_t n_points() const noexcept override { return data_->size(); }
  std::optional<Vec> minimizer() const override { return x_star_; }
  double lambda() const noexcept { return lambda_; }
  const Dataset& dataset() const noexcept { return *data_; }

 protected:
  double value_impl(std::span<const double> x) const override;
  void gradient_impl(std::span<const double> x,
                     std::span<double> out) const override;
  void add_point_gradient(Index i, std::span<const double> x,
                          std::span<double> out) const override;

 private:
  std::shared_ptr<const Dataset> data_;
  double lambda_;
  std::optional<Vec> x_star_;
};

struct EstimateOptions {
  std::vector<std::size_t> batch_sizes{1, 2, 4, 8};
  bool estimate_mu = true;
};

/// Empirical (L, mu, C, sigma^2) from probe points.
///
/// L from the largest gradient-difference ratio over probe pairs, mu from
/// the smallest 1/2||g||^2 / (F - F*) over probes (needs a declared F*), and
/// (C, sigma^2) from a non-negative least-squares fit of the Monte-Carlo
/// E||g~ - g||^2 against ||g||^2 and 1/B.
SmoothnessConstants estimate_constants(const Objective& obj,
                                       std::span<const Vec> probes,
                                       std::size_t trials, std::uint64_t seed,
                                       const EstimateOptions& options = {});

}  // namespace lupa

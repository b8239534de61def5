#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "lupa/types.hpp"

namespace lupa {

/// Labelled examples with either dense (row-major) or CSR sparse features.
///
/// Immutable once built. Row kernels (`row_dot`, `row_axpy`) visit the
/// stored entries of a row in ascending feature order.
class Dataset {
 public:
  static Dataset dense(std::size_t n, std::size_t dim, Vec features,
                       Vec labels);
  static Dataset sparse(std::size_t dim, std::vector<std::size_t> row_ptr,
                        std::vector<std::uint32_t> col_idx, Vec values,
                        Vec labels);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool is_sparse() const noexcept { return sparse_; }
  std::span<const double> labels() const noexcept { return labels_; }
  double label(std::size_t i) const noexcept { return labels_[i]; }

  double row_dot(std::size_t i, std::span<const double> x) const noexcept;
  /// out += alpha * a_i
  void row_axpy(std::size_t i, double alpha,
                std::span<double> out) const noexcept;
  double row_norm_sq(std::size_t i) const noexcept;

  /// Stored (index, value) pairs of row i; dense rows skip exact zeros.
  std::vector<std::pair<std::uint32_t, double>> row_entries(
      std::size_t i) const;

  /// Logical equality: same shape, labels and non-zero entries.
  friend bool same_content(const Dataset& a, const Dataset& b);

 private:
  Dataset() = default;

  bool sparse_ = false;
  std::size_t dim_ = 0;
  Vec labels_;
  Vec dense_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> col_idx_;
  Vec values_;
};

/// Gaussian features, labels sign(<w*, a>) for a hidden seeded w*, each
/// flipped independently with probability `label_noise`.
Dataset generate_synthetic_logistic(std::size_t n, std::size_t dim,
                                    std::uint64_t seed, double label_noise);

/// Parses LIBSVM text (`label idx:val ...`, 1-based indices). Blank lines
/// are skipped. Throws ParseError with the offending line number.
Dataset parse_libsvm(std::istream& in);
Dataset load_libsvm(const std::filesystem::path& path);

/// Writes LIBSVM text with round-trip exact (%.17g) values.
void write_libsvm(std::ostream& out, const Dataset& data);
void save_libsvm(const std::filesystem::path& path, const Dataset& data);

/// Identifies one worker's randomness for one communication round.
struct SamplerStream {
  std::uint64_t master_seed = 0;
  std::uint32_t worker_id = 0;
  std::uint64_t round_index = 0;
};

enum class SamplingMode { WithReplacement, WithoutReplacement };

struct SamplerOptions {
  SamplingMode mode = SamplingMode::WithReplacement;
  /// Worker j samples only from shard j of `num_shards` contiguous shards.
  /// Breaks the i.i.d. sampling the convergence analysis assumes.
  bool sharded = false;
  std::uint32_t num_shards = 1;
};

/// Contiguous shard [begin, end) of worker j among p over n points.
std::pair<std::size_t, std::size_t> shard_range(std::size_t n,
                                                 std::uint32_t p,
                                                 std::uint32_t j);

/// Fills `out` (size B) with indices in [0, n). Fully determined by
/// (stream, step_in_round, n, B, options).
void draw_batch(const SamplerStream& stream, std::uint64_t step_in_round,
                std::size_t n, std::span<Index> out,
                const SamplerOptions& options = {});

std::vector<Index> draw_batch(const SamplerStream& stream,
                              std::uint64_t step_in_round, std::size_t n,
                              std::size_t batch_size,
                              const SamplerOptions& options = {});

}  // namespace lupa

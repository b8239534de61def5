#include "lupa/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include "lupa/rng.hpp"

namespace lupa {

Dataset Dataset::dense(std::size_t n, std::size_t dim, Vec features,
                       Vec labels) {
  if (n == 0 || dim == 0) throw ConfigError("dataset: n and dim must be >= 1");
  if (features.size() != n * dim || labels.size() != n) {
    throw DimensionError("dataset: feature/label sizes do not match n x dim");
  }
  Dataset d;
  d.dim_ = dim;
  d.dense_ = std::move(features);
  d.labels_ = std::move(labels);
  return d;
}

Dataset Dataset::sparse(std::size_t dim, std::vector<std::size_t> row_ptr,
                        std::vector<std::uint32_t> col_idx, Vec values,
                        Vec labels) {
  const std::size_t n = labels.size();
  if (n == 0) throw ConfigError("dataset: no examples");
  if (dim == 0) throw ConfigError("dataset: dim must be >= 1");
  if (row_ptr.size() != n + 1 || row_ptr.front() != 0 ||
      row_ptr.back() != col_idx.size() || col_idx.size() != values.size()) {
    throw DimensionError("dataset: malformed CSR arrays");
  }
  for (auto c : col_idx) {
    if (c >= dim) throw DimensionError("dataset: sparse index >= dim");
  }
  Dataset d;
  d.sparse_ = true;
  d.dim_ = dim;
  d.row_ptr_ = std::move(row_ptr);
  d.col_idx_ = std::move(col_idx);
  d.values_ = std::move(values);
  d.labels_ = std::move(labels);
  return d;
}

double Dataset::row_dot(std::size_t i, std::span<const double> x) const noexcept {
  double s = 0.0;
  if (sparse_) {
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      s += values_[k] * x[col_idx_[k]];
    }
  } else {
    const double* row = dense_.data() + i * dim_;
    for (std::size_t c = 0; c < dim_; ++c) s += row[c] * x[c];
  }
  return s;
}

void Dataset::row_axpy(std::size_t i, double alpha,
                       std::span<double> out) const noexcept {
  if (sparse_) {
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      out[col_idx_[k]] += alpha * values_[k];
    }
  } else {
    const double* row = dense_.data() + i * dim_;
    for (std::size_t c = 0; c < dim_; ++c) out[c] += alpha * row[c];
  }
}

double Dataset::row_norm_sq(std::size_t i) const noexcept {
  double s = 0.0;
  if (sparse_) {
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      s += values_[k] * values_[k];
    }
  } else {
    const double* row = dense_.data() + i * dim_;
    for (std::size_t c = 0; c < dim_; ++c) s += row[c] * row[c];
  }
  return s;
}

std::vector<std::pair<std::uint32_t, double>> Dataset::row_entries(
    std::size_t i) const {
  std::vector<std::pair<std::uint32_t, double>> out;
  if (sparse_) {
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      if (values_[k] != 0.0) out.emplace_back(col_idx_[k], values_[k]);
    }
  } else {
    const double* row = dense_.data() + i * dim_;
    for (std::size_t c = 0; c < dim_; ++c) {
      if (row[c] != 0.0) out.emplace_back(static_cast<std::uint32_t>(c), row[c]);
    }
  }
  return out;
}

bool same_content(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size() || a.dim() != b.dim()) return false;
  if (!std::equal(a.labels_.begin(), a.labels_.end(), b.labels_.begin())) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.row_entries(i) != b.row_entries(i)) return false;
  }
  return true;
}

Dataset generate_synthetic_logistic(std::size_t n, std::size_t dim,
                                    std::uint64_t seed, double label_noise) {
  if (n == 0 || dim == 0) {
    throw ConfigError("synthetic dataset: n and dim must be >= 1");
  }
  if (!(label_noise >= 0.0 && label_noise < 1.0)) {
    throw ConfigError("synthetic dataset: label_noise must lie in [0, 1)");
  }
  SplitMix64 w_rng(derive_seed(seed, 0));
  Vec w_star(dim);
  for (auto& w : w_star) w = w_rng.normal();

  SplitMix64 x_rng(derive_seed(seed, 1));
  SplitMix64 flip_rng(derive_seed(seed, 2));
  Vec features(n * dim);
  Vec labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    double margin = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double v = x_rng.normal();
      features[i * dim + c] = v;
      margin += v * w_star[c];
    }
    double y = margin >= 0.0 ? 1.0 : -1.0;
    if (flip_rng.uniform() < label_noise) y = -y;
    labels[i] = y;
  }
  return Dataset::dense(n, dim, std::move(features), std::move(labels));
}

namespace {

double parse_number(std::string_view tok, std::size_t line) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) {
    throw ParseError("non-numeric token '" + std::string(tok) + "'", line);
  }
  return v;
}

}  // namespace

Dataset parse_libsvm(std::istream& in) {
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> cols;
  Vec vals;
  Vec labels;
  std::size_t dim = 0;
  std::string text;
  std::size_t line_no = 0;
  std::vector<std::pair<std::uint32_t, double>> row;

  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    std::istringstream tokens(text);
    std::string tok;
    if (!(tokens >> tok)) continue;  // blank line

    if (tok.find(':') != std::string::npos) {
      throw ParseError("malformed line: missing label", line_no);
    }
    const double label = parse_number(tok, line_no);
    row.clear();
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size()) {
        throw ParseError("malformed feature '" + tok + "'", line_no);
      }
      std::string_view idx_str(tok.data(), colon);
      unsigned long long idx = 0;
      auto [p, ec] = std::from_chars(idx_str.data(),
                                     idx_str.data() + idx_str.size(), idx);
      if (ec != std::errc() || p != idx_str.data() + idx_str.size()) {
        throw ParseError("non-numeric index '" + std::string(idx_str) + "'",
                         line_no);
      }
      if (idx == 0 || idx > 0xffffffffULL) {
        throw ParseError("feature index out of range in '" + tok + "'",
                         line_no);
      }
      const double v = parse_number(std::string_view(tok).substr(colon + 1),
                                    line_no);
      row.emplace_back(static_cast<std::uint32_t>(idx - 1), v);
    }
    std::sort(row.begin(), row.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k].first == row[k - 1].first) {
        throw ParseError("duplicate feature index " +
                             std::to_string(row[k].first + 1),
                         line_no);
      }
    }
    for (const auto& [c, v] : row) {
      cols.push_back(c);
      vals.push_back(v);
      dim = std::max<std::size_t>(dim, std::size_t{c} + 1);
    }
    row_ptr.push_back(cols.size());
    labels.push_back(label);
  }
  if (labels.empty()) throw ParseError("no examples", 0);
  return Dataset::sparse(std::max<std::size_t>(dim, 1), std::move(row_ptr),
                         std::move(cols), std::move(vals), std::move(labels));
}

Dataset load_libsvm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return parse_libsvm(in);
}

void write_libsvm(std::ostream& out, const Dataset& data) {
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", data.label(i));
    out << buf;
    for (const auto& [c, v] : data.row_entries(i)) {
      std::snprintf(buf, sizeof buf, " %u:%.17g", c + 1, v);
      out << buf;
    }
    out << '\n';
  }
}

void save_libsvm(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_libsvm(out, data);
}

std::pair<std::size_t, std::size_t> shard_range(std::size_t n, std::uint32_t p,
                                                std::uint32_t j) {
  if (p == 0 || j >= p) throw ConfigError("shard_range: worker out of range");
  return {n * j / p, n * (std::size_t{j} + 1) / p};
}

void draw_batch(const SamplerStream& stream, std::uint64_t step_in_round,
                std::size_t n, std::span<Index> out,
                const SamplerOptions& options) {
  if (n == 0) throw ConfigError("draw_batch: n must be >= 1");
  if (out.empty()) throw ConfigError("draw_batch: batch size must be >= 1");

  std::size_t lo = 0;
  std::size_t hi = n;
  if (options.sharded) {
    std::tie(lo, hi) = shard_range(n, options.num_shards, stream.worker_id);
    if (hi == lo) throw ConfigError("draw_batch: empty shard");
  }
  const std::size_t span_n = hi - lo;

  SplitMix64 rng(derive_seed(stream.master_seed, stream.worker_id,
                             stream.round_index, step_in_round));
  if (options.mode == SamplingMode::WithReplacement) {
    for (auto& idx : out) idx = lo + rng.below(span_n);
    return;
  }

  // Floyd's algorithm; output sorted so accumulation order is canonical.
  if (out.size() > span_n) {
    throw ConfigError("draw_batch: batch larger than population without "
                      "replacement");
  }
  std::vector<Index> chosen;
  chosen.reserve(out.size());
  for (std::size_t j = span_n - out.size(); j < span_n; ++j) {
    const Index t = rng.below(j + 1);
    if (std::find(chosen.begin(), chosen.end(), t) == chosen.end()) {
      chosen.push_back(t);
    } else {
      chosen.push_back(j);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = lo + chosen[k];
}

std::vector<Index> draw_batch(const SamplerStream& stream,
                              std::uint64_t step_in_round, std::size_t n,
                              std::size_t batch_size,
                              const SamplerOptions& options) {
  std::vector<Index> out(batch_size);
  draw_batch(stream, step_in_round, n, out, options);
  return out;
}

}  // namespace lupa

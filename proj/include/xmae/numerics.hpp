#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "xmae/errors.hpp"

namespace xmae {

/// Dense real vector of one modality (or one latent code).
class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  Vec(std::initializer_list<double> values) : values_(values) {}
  explicit Vec(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t dim() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  Vec& operator+=(const Vec& other);
  Vec& operator-=(const Vec& other);
  Vec& operator*=(double s);

  friend bool operator==(const Vec&, const Vec&) = default;

 private:
  std::vector<double> values_;
};

Vec operator+(Vec a, const Vec& b);
Vec operator-(Vec a, const Vec& b);
Vec operator*(double s, Vec a);

/// Row-major dense matrix.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// y = M x
Vec matvec(const Mat& m, const Vec& x);
// y = Mᵀ x
Vec matvec_transposed(const Mat& m, const Vec& x);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(const Vec& a);
double l2_distance(const Vec& a, const Vec& b);

struct CosineResult {
  double value = 0.0;
  bool degenerate = false;  // both inputs had zero norm
};

/// a·b / (‖a‖‖b‖). Returns 0 when either norm is zero; `degenerate` is set
/// only when both are.
CosineResult cosine(const Vec& a, const Vec& b);
inline double cosine_similarity(const Vec& a, const Vec& b) { return cosine(a, b).value; }

/// Indices of the k candidates most cosine-similar to `query`, best first.
/// Exact ties keep ascending candidate index.
std::vector<std::size_t> top_k_indices(const Vec& query, std::span<const Vec> candidates,
                                       std::size_t k);

/// Keyed form of top_k_indices.
template <typename Key>
std::vector<Key> top_k_by_similarity(const Vec& query,
                                     std::span<const std::pair<Key, Vec>> candidates,
                                     std::size_t k) {
  std::vector<Vec> vectors;
  vectors.reserve(candidates.size());
  for (const auto& [key, v] : candidates) vectors.push_back(v);
  std::vector<Key> keys;
  for (std::size_t i : top_k_indices(query, vectors, k)) keys.push_back(candidates[i].first);
  return keys;
}

void require_same_dim(const Vec& a, const Vec& b, std::string_view what);
void require_finite(std::span<const double> values, std::string_view what);
bool all_finite(std::span<const double> values);

/// Counter-based generator: draw i of a stream is a pure function of
/// (key, i). Sub-streams derived with split() are independent of how many
/// draws the parent has made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, two draws per sample).
  double normal() noexcept;
  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) noexcept { return uniform() < p; }

  Rng split(std::string_view purpose) const noexcept;
  Rng split(std::uint64_t index) const noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_;
};

/// Fisher-Yates with Rng::below, so results do not depend on the standard
/// library's distribution implementations.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

/// Thread count for evaluation work, from XMAE_THREADS (default 1).
std::size_t eval_threads();

/// Runs fn(i) for i in [0, n) across `threads` workers. Each index is
/// handled exactly once; callers write results into per-index slots.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace xmae

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace echo::core {

inline constexpr std::size_t kDefaultFeatureDim = 4096;

/// 64-bit FNV-1a over raw bytes.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Lowercased word tokens. Any byte that is not ASCII alphanumeric, '$' or
/// part of a multibyte UTF-8 sequence separates tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Sparse vector over a fixed dimension, indices sorted ascending and unique.
struct SparseVector {
  std::size_t dim = kDefaultFeatureDim;
  std::vector<std::uint32_t> index;
  std::vector<double> value;
  /// Set when the source text had no tokens; the vector is then all-zero.
  bool empty = false;

  std::size_t nnz() const noexcept { return index.size(); }
  double norm() const noexcept;
  bool operator==(const SparseVector&) const = default;
};

/// Word unigrams plus character 3-grams of each boundary-marked word,
/// hashed with FNV-1a into `dim` buckets and L2-normalized.
SparseVector featurize(std::string_view text, std::size_t dim = kDefaultFeatureDim);

/// Dense form of featurize(); used for free-text label embeddings.
std::vector<double> embed(std::string_view text, std::size_t dim);

double dot(const SparseVector& a, const SparseVector& b) noexcept;
double dot(const SparseVector& a, std::span<const double> dense) noexcept;
double dot(std::span<const double> a, std::span<const double> b) noexcept;

std::vector<double> to_dense(const SparseVector& v);

/// Normalizes in place; returns false (leaving zeros) for a zero vector.
bool normalize(std::span<double> v) noexcept;

/// 1 - dot(a, b) clamped to [0, 1]. A zero (flagged) input yields 1.
double cosine_distance(std::span<const double> a, std::span<const double> b) noexcept;
double cosine_distance(const SparseVector& a, const SparseVector& b) noexcept;

/// Cosine similarity of arbitrary (not necessarily unit) vectors; 0 if either is zero.
double cosine_similarity(const SparseVector& a, const SparseVector& b) noexcept;

std::string trim(std::string_view s);

}  // namespace echo::core

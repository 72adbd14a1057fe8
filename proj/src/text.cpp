#include "echo/core/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace echo::core {

namespace {

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c == '$' || c >= 0x80;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

double SparseVector::norm() const noexcept {
  double s = 0.0;
  for (double v : value) s += v * v;
  return std::sqrt(s);
}

SparseVector featurize(std::string_view text, std::size_t dim) {
  SparseVector out;
  out.dim = dim;
  auto tokens = tokenize(text);
  if (tokens.empty()) {
    out.empty = true;
    return out;
  }
  // std::map keeps the indices sorted without a separate pass.
  std::map<std::uint32_t, double> counts;
  for (const auto& tok : tokens) {
    counts[static_cast<std::uint32_t>(fnv1a(tok, fnv1a("w:")) % dim)] += 1.0;
    const std::string marked = "^" + tok + "$";
    for (std::size_t i = 0; i + 3 <= marked.size(); ++i) {
      std::string_view gram(marked.data() + i, 3);
      counts[static_cast<std::uint32_t>(fnv1a(gram, fnv1a("c:")) % dim)] += 1.0;
    }
  }
  double sq = 0.0;
  for (const auto& [_, c] : counts) sq += c * c;
  const double inv = 1.0 / std::sqrt(sq);
  out.index.reserve(counts.size());
  out.value.reserve(counts.size());
  for (const auto& [i, c] : counts) {
    out.index.push_back(i);
    out.value.push_back(c * inv);
  }
  return out;
}

std::vector<double> to_dense(const SparseVector& v) {
  std::vector<double> d(v.dim, 0.0);
  for (std::size_t k = 0; k < v.nnz(); ++k) d[v.index[k]] = v.value[k];
  return d;
}

std::vector<double> embed(std::string_view text, std::size_t dim) {
  return to_dense(featurize(text, dim));
}

double dot(const SparseVector& a, const SparseVector& b) noexcept {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.nnz() && j < b.nnz()) {
    if (a.index[i] == b.index[j]) {
      s += a.value[i++] * b.value[j++];
    } else if (a.index[i] < b.index[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return s;
}

double dot(const SparseVector& a, std::span<const double> dense) noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < a.nnz(); ++k) s += a.value[k] * dense[a.index[k]];
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

bool normalize(std::span<double> v) noexcept {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq == 0.0 || !std::isfinite(sq)) {
    std::fill(v.begin(), v.end(), 0.0);
    return false;
  }
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
  return true;
}

namespace {

bool is_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

double clamp_distance(double d) { return std::clamp(d, 0.0, 1.0); }

}  // namespace

double cosine_distance(std::span<const double> a, std::span<const double> b) noexcept {
  if (a.empty() || b.empty() || is_zero(a) || is_zero(b)) return 1.0;
  return clamp_distance(1.0 - dot(a, b));
}

double cosine_distance(const SparseVector& a, const SparseVector& b) noexcept {
  if (a.empty || b.empty || a.nnz() == 0 || b.nnz() == 0) return 1.0;
  return clamp_distance(1.0 - dot(a, b));
}

double cosine_similarity(const SparseVector& a, const SparseVector& b) noexcept {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

}  // namespace echo::core

// Small dense helpers over contiguous spans. The models here are tiny, so a
// flat std::vector per parameter set with hand-written loops is all we need.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metasel/dual.hpp"

namespace metasel {

template <class T>
using Vec = std::vector<T>;

template <class A, class B>
auto dot(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  decltype(A{} * B{}) acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
T dot(const Vec<T>& a, const Vec<T>& b) {
  return dot(std::span<const T>(a), std::span<const T>(b));
}

// y += a * x
template <class T, class S>
void axpy(S a, std::span<const T> x, std::span<T> y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline double l2_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

template <class T>
bool all_finite(std::span<const T> x) {
  using std::isfinite;
  for (const auto& v : x) {
    if (!isfinite(v)) return false;
  }
  return true;
}

/// Numerically stable log(sum(exp(z))).
template <class T>
T log_sum_exp(std::span<const T> z) {
  using std::exp;
  using std::log;
  if (z.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  T m = z[0];
  for (const auto& v : z) {
    if (v > m) m = v;
  }
  T s{};
  for (const auto& v : z) s += exp(v - m);
  return m + log(s);
}

template <class T>
Vec<T> softmax(std::span<const T> z) {
  using std::exp;
  const T lse = log_sum_exp(z);
  Vec<T> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = exp(z[i] - lse);
  return p;
}

/// Index of the largest entry; ties resolve to the lowest index.
template <class T>
std::size_t argmax(std::span<const T> z) {
  if (z.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (z[i] > z[best]) best = i;
  }
  return best;
}

inline void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (got " +
                                std::to_string(got) + ", expected " + std::to_string(want) + ")");
  }
}

}  // namespace metasel

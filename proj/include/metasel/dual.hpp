// Forward-mode dual numbers: value plus one tangent.
//
// Every numeric routine in metasel is templated on its scalar, so instantiating
// it with Dual<double> yields a directional derivative of the whole computation.
// This is how the selector's "differentiate through the virtual step" path is
// built; it shares no hand-derived derivative with the explicit meta-gradient.
#pragma once

#include <cmath>
#include <ostream>
#include <type_traits>

namespace metasel {

template <class T>
struct Dual {
  T value{};
  T tangent{};

  constexpr Dual() = default;
  constexpr Dual(T v) : value(v) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual(T v, T t) : value(v), tangent(t) {}

  Dual& operator+=(const Dual& o) {
    value += o.value;
    tangent += o.tangent;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    value -= o.value;
    tangent -= o.tangent;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    tangent = tangent * o.value + value * o.tangent;
    value *= o.value;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    tangent = (tangent * o.value - value * o.tangent) / (o.value * o.value);
    value /= o.value;
    return *this;
  }
};

template <class T> Dual<T> operator-(const Dual<T>& a) { return {-a.value, -a.tangent}; }
template <class T> Dual<T> operator+(Dual<T> a, const Dual<T>& b) { return a += b; }
template <class T> Dual<T> operator-(Dual<T> a, const Dual<T>& b) { return a -= b; }
template <class T> Dual<T> operator*(Dual<T> a, const Dual<T>& b) { return a *= b; }
template <class T> Dual<T> operator/(Dual<T> a, const Dual<T>& b) { return a /= b; }

template <class T, class S, class = std::enable_if_t<std::is_arithmetic_v<S>>>
Dual<T> operator+(Dual<T> a, S b) { return a += Dual<T>(T(b)); }
template <class T, class S, class = std::enable_if_t<std::is_arithmetic_v<S>>>
Dual<T> operator+(S a, Dual<T> b) { return b += Dual<T>(T(a)); }
template <class T, class S, class = std::enable_if_t<std::is_arithmetic_v<S>>>
Dual<T> operator-(Dual<T> a, S b) { return a -= Dual<T>(T(b)); }
template <class T, class S, class = std::enable_if_t<std::is_arithmetic_v<S>>>
Dual<T> operator-(S a, const Dual<T>& b) { return Dual<T>(T(a)) - b; }
template <class T, class S, class = std::enable_if_t<std::is_arithmetic_v<S>>>
Dual<T> operator*(Dual<T> a, S b) { return {a.value * T(b), a.tangent * T(b)}; }
template <class T, class S, class = std::enable_if_t<std::is_arithmetic_v<S>>>
Dual<T> operator*(S a, Dual<T> b) { return {T(a) * b.value, T(a) * b.tangent}; }
template <class T, class S, class = std::enable_if_t<std::is_arithmetic_v<S>>>
Dual<T> operator/(Dual<T> a, S b) { return {a.value / T(b), a.tangent / T(b)}; }
template <class T, class S, class = std::enable_if_t<std::is_arithmetic_v<S>>>
Dual<T> operator/(S a, const Dual<T>& b) { return Dual<T>(T(a)) / b; }

// Comparisons look at the value only; branches are taken on the primal.
template <class T> bool operator<(const Dual<T>& a, const Dual<T>& b) { return a.value < b.value; }
template <class T> bool operator>(const Dual<T>& a, const Dual<T>& b) { return a.value > b.value; }
template <class T> bool operator<=(const Dual<T>& a, const Dual<T>& b) { return a.value <= b.value; }
template <class T> bool operator>=(const Dual<T>& a, const Dual<T>& b) { return a.value >= b.value; }

template <class T>
Dual<T> exp(const Dual<T>& a) {
  using std::exp;
  const T e = exp(a.value);
  return {e, e * a.tangent};
}

template <class T>
Dual<T> log(const Dual<T>& a) {
  using std::log;
  return {log(a.value), a.tangent / a.value};
}

template <class T>
Dual<T> tanh(const Dual<T>& a) {
  using std::tanh;
  const T t = tanh(a.value);
  return {t, (T(1) - t * t) * a.tangent};
}

template <class T>
Dual<T> sqrt(const Dual<T>& a) {
  using std::sqrt;
  const T s = sqrt(a.value);
  return {s, a.tangent / (T(2) * s)};
}

template <class T>
bool isfinite(const Dual<T>& a) {
  using std::isfinite;
  return isfinite(a.value) && isfinite(a.tangent);
}

template <class T>
std::ostream& operator<<(std::ostream& os, const Dual<T>& a) {
  return os << a.value << "+" << a.tangent << "e";
}

/// Primal value of a scalar; identity for plain arithmetic types.
template <class T>
constexpr auto primal(const T& x) {
  if constexpr (std::is_arithmetic_v<T>) {
    return x;
  } else {
    return primal(x.value);
  }
}

}  // namespace metasel

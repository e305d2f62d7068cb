#pragma once

#include "qml/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace qml {

/// Truncated Taylor series c0 + c1 t + ... + cn t^n, used to get exact derivatives of closed-form graphs.
class Jet {
 public:
  static constexpr int kMaxOrder = 23;

  Jet(double constant, int order) : n_(order + 1) {
    if (order < 0 || order > kMaxOrder) throw InvalidInput("jet order must lie in [0, 23]");
    std::fill_n(c_.begin(), n_, 0.0);
    c_[0] = constant;
  }
  static Jet variable(double at, int order) {
    Jet j(at, order);
    if (order >= 1) j.c_[1] = 1.0;
    return j;
  }

  int order() const { return n_ - 1; }
  double operator[](int i) const { return i < n_ ? c_[i] : 0.0; }
  double& operator[](int i) { return c_[i]; }
  double value() const { return c_[0]; }

  /// r-th derivative at t = 0.
  double derivative(int r) const {
    if (r >= n_) return 0.0;
    double f = 1;
    for (int i = 2; i <= r; ++i) f *= i;
    return f * c_[r];
  }

  Jet& operator+=(const Jet& o) {
    for (int i = 0; i < n_; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (int i = 0; i < n_; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Jet& operator+=(double s) {
    c_[0] += s;
    return *this;
  }
  Jet& operator*=(double s) {
    for (int i = 0; i < n_; ++i) c_[i] *= s;
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator+(Jet a, double s) { return a += s; }
  friend Jet operator+(double s, Jet a) { return a += s; }
  friend Jet operator-(Jet a, double s) { return a += -s; }
  friend Jet operator-(double s, const Jet& a) { return -a + s; }
  friend Jet operator-(Jet a) { return a *= -1.0; }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator/(Jet a, double s) { return a *= 1.0 / s; }

  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r(0.0, a.order());
    for (int i = 0; i <= a.order(); ++i)
      for (int j = 0; i + j <= a.order(); ++j) r.c_[i + j] += a.c_[i] * b.c_[j];
    return r;
  }

  friend Jet operator/(const Jet& a, const Jet& b) {
    if (b.c_[0] == 0) throw DomainError("jet division by a series with zero constant term");
    Jet r(0.0, a.order());
    for (int k = 0; k <= a.order(); ++k) {
      double s = a.c_[k];
      for (int j = 1; j <= k; ++j) s -= b.c_[j] * r.c_[k - j];
      r.c_[k] = s / b.c_[0];
    }
    return r;
  }

  friend Jet sqrt(const Jet& a) {
    if (!(a.c_[0] > 0)) throw DomainError("jet square root outside the open domain");
    Jet r(0.0, a.order());
    r.c_[0] = std::sqrt(a.c_[0]);
    for (int k = 1; k <= a.order(); ++k) {
      double s = a.c_[k];
      for (int j = 1; j < k; ++j) s -= r.c_[j] * r.c_[k - j];
      r.c_[k] = s / (2 * r.c_[0]);
    }
    return r;
  }

  friend Jet exp(const Jet& a) {
    Jet r(0.0, a.order());
    r.c_[0] = std::exp(a.c_[0]);
    for (int k = 1; k <= a.order(); ++k) {
      double s = 0;
      for (int j = 1; j <= k; ++j) s += j * a.c_[j] * r.c_[k - j];
      r.c_[k] = s / k;
    }
    return r;
  }

 private:
  int n_;
  std::array<double, kMaxOrder + 1> c_;
};

/// Value, gradient and Hessian in two variables (x2, xi2), propagated through arithmetic.
class Hessian2 {
 public:
  Hessian2(double constant = 0.0) : v_(constant) {}
  static Hessian2 variable(double at, int which) {
    Hessian2 r(at);
    r.g_[which] = 1.0;
    return r;
  }

  double value() const { return v_; }
  /// d/dx2 (0) or d/dxi2 (1).
  double gradient(int i) const { return g_[i]; }
  /// Entries (0,0), (0,1), (1,1).
  double hessian(int i, int j) const { return h_[i + j]; }

  friend Hessian2 operator+(Hessian2 a, const Hessian2& b) {
    a.v_ += b.v_;
    for (int i = 0; i < 2; ++i) a.g_[i] += b.g_[i];
    for (int i = 0; i < 3; ++i) a.h_[i] += b.h_[i];
    return a;
  }
  friend Hessian2 operator-(const Hessian2& a) { return a * -1.0; }
  friend Hessian2 operator-(const Hessian2& a, const Hessian2& b) { return a + (-b); }
  friend Hessian2 operator+(Hessian2 a, double s) {
    a.v_ += s;
    return a;
  }
  friend Hessian2 operator+(double s, Hessian2 a) { return a + s; }
  friend Hessian2 operator-(Hessian2 a, double s) { return a + -s; }
  friend Hessian2 operator-(double s, const Hessian2& a) { return -a + s; }
  friend Hessian2 operator*(Hessian2 a, double s) {
    a.v_ *= s;
    for (double& g : a.g_) g *= s;
    for (double& h : a.h_) h *= s;
    return a;
  }
  friend Hessian2 operator*(double s, const Hessian2& a) { return a * s; }
  friend Hessian2 operator/(const Hessian2& a, double s) { return a * (1.0 / s); }

  friend Hessian2 operator*(const Hessian2& a, const Hessian2& b) {
    Hessian2 r(a.v_ * b.v_);
    for (int i = 0; i < 2; ++i) r.g_[i] = a.v_ * b.g_[i] + b.v_ * a.g_[i];
    r.h_[0] = a.v_ * b.h_[0] + b.v_ * a.h_[0] + 2 * a.g_[0] * b.g_[0];
    r.h_[1] = a.v_ * b.h_[1] + b.v_ * a.h_[1] + a.g_[0] * b.g_[1] + a.g_[1] * b.g_[0];
    r.h_[2] = a.v_ * b.h_[2] + b.v_ * a.h_[2] + 2 * a.g_[1] * b.g_[1];
    return r;
  }
  friend Hessian2 operator/(const Hessian2& a, const Hessian2& b) {
    if (b.v_ == 0) throw DomainError("division by a function vanishing at the point");
    const double i = 1.0 / b.v_;
    return a * b.compose(i, -i * i, 2 * i * i * i);
  }

  friend Hessian2 sqrt(const Hessian2& a) {
    if (!(a.v_ > 0)) throw DomainError("square root outside the open domain");
    const double r = std::sqrt(a.v_);
    return a.compose(r, 0.5 / r, -0.25 / (r * a.v_));
  }
  friend Hessian2 exp(const Hessian2& a) {
    const double e = std::exp(a.v_);
    return a.compose(e, e, e);
  }

 private:
  // phi(this) given phi, phi' and phi'' at the value.
  Hessian2 compose(double f0, double f1, double f2) const {
    Hessian2 r(f0);
    for (int i = 0; i < 2; ++i) r.g_[i] = f1 * g_[i];
    r.h_[0] = f1 * h_[0] + f2 * g_[0] * g_[0];
    r.h_[1] = f1 * h_[1] + f2 * g_[0] * g_[1];
    r.h_[2] = f1 * h_[2] + f2 * g_[1] * g_[1];
    return r;
  }

  double v_;
  std::array<double, 2> g_{};
  std::array<double, 3> h_{};
};

/// Integer power shared by doubles and jets.
template <typename T>
T ipow(const T& base, int n) {
  T result = base * 0.0 + 1.0;
  for (int i = 0; i < n; ++i) result = result * base;
  return result;
}

/// sqrt clamped at zero for plain values; jets require the open domain.
inline double clamped_sqrt(double v) { return std::sqrt(std::max(0.0, v)); }
inline Jet clamped_sqrt(const Jet& v) { return sqrt(v); }
inline Hessian2 clamped_sqrt(const Hessian2& v) { return sqrt(v); }

}  // namespace qml

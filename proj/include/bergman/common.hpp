#pragma once

/**
 * @file common.hpp
 * @brief Points, seeded streams, deterministic parallel map, small regressions.
 */

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace bergman {

using cplx = std::complex<double>;

/// A point of C^n, n <= 2. Unused coordinates are zero.
using Point = std::array<cplx, 2>;

inline constexpr double pi = 3.14159265358979323846;

inline Point pt(cplx a, cplx b = 0.0) { return Point{a, b}; }

inline double norm2(const Point& z) { return std::norm(z[0]) + std::norm(z[1]); }
inline double abs(const Point& z) { return std::sqrt(norm2(z)); }

/// <z, w> = sum z_i conj(w_i)
inline cplx inner(const Point& z, const Point& w) { return z[0] * std::conj(w[0]) + z[1] * std::conj(w[1]); }

inline Point operator+(const Point& a, const Point& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Point operator-(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Point operator*(cplx s, const Point& a) { return {s * a[0], s * a[1]}; }
inline Point operator*(double s, const Point& a) { return {s * a[0], s * a[1]}; }

/// Error raised when an operation's precondition or numerical guard fails.
struct BergmanError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Seeds

/// FNV-1a over bytes; stable across platforms and runs.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Child seed of `root` for a named task and index.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0) {
  return splitmix64(fnv1a(tag, splitmix64(root)) ^ splitmix64(index + 0x632be59bd9b4e019ull));
}

using Rng = std::mt19937_64;

inline cplx complex_gaussian(Rng& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  double re = n(rng);
  double im = n(rng);
  return {re, im};
}

// ---------------------------------------------------------------------------
// Parallel map

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> t{1};
  return t;
}
}  // namespace detail

inline void set_threads(int t) { detail::thread_setting() = std::max(1, t); }
inline int threads() { return detail::thread_setting(); }

/**
 * @brief Run fn(i) for i in [0, n). Each index is independent and writes its own
 * output slot, so results do not depend on the thread count.
 */
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(threads()), n);
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t k = 0; k < t; ++k) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n || failed) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

template <class T, class Fn>
std::vector<T> parallel_map(std::size_t n, Fn&& fn) {
  std::vector<T> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

// ---------------------------------------------------------------------------
// Regression

struct LinearFit {
  double slope = 0, intercept = 0, r2 = 0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw BergmanError("linear_fit: need at least two paired samples");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  f.r2 = (sxx > 0 && syy > 0) ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

/// Percentile by linear interpolation on a sorted copy.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, v.size() - 1);
  double t = pos - static_cast<double>(lo);
  return v[lo] * (1 - t) + v[hi] * t;
}

/// Smooth step with vanishing first and second derivatives at 0 and 1.
inline double smootherstep(double t) {
  if (t <= 0) return 0.0;
  if (t >= 1) return 1.0;
  return t * t * t * (t * (6 * t - 15) + 10);
}

}  // namespace bergman

#pragma once

/**
 * @file quadrature.hpp
 * @brief Gauss-Legendre rules, composite panels, and node/weight lists in R^{2n}.
 */

#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

#include "bergman/common.hpp"

namespace bergman {

struct Rule1D {
  std::vector<double> x, w;
};

/// n-point Gauss-Legendre rule on [-1, 1]; cached per n.
inline const Rule1D& gauss_legendre(int n) {
  static std::map<int, Rule1D> cache;
  static std::mutex m;
  std::lock_guard<std::mutex> lock(m);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  if (n < 1) throw BergmanError("gauss_legendre: n must be positive");
  Rule1D r;
  auto zeros = boost::math::legendre_p_zeros<double>(n);
  std::vector<double> x;
  for (double z : zeros) {
    x.push_back(z);
    if (z != 0.0) x.push_back(-z);
  }
  std::sort(x.begin(), x.end());
  for (double xi : x) {
    double dp = boost::math::legendre_p_prime<double>(n, xi);
    r.x.push_back(xi);
    r.w.push_back(2.0 / ((1.0 - xi * xi) * dp * dp));
  }
  return cache.emplace(n, std::move(r)).first->second;
}

/// Gauss-Legendre on [a, b].
inline Rule1D gauss_on(double a, double b, int n) {
  const auto& g = gauss_legendre(n);
  Rule1D r;
  const double h = 0.5 * (b - a), c = 0.5 * (a + b);
  for (std::size_t i = 0; i < g.x.size(); ++i) {
    r.x.push_back(c + h * g.x[i]);
    r.w.push_back(h * g.w[i]);
  }
  return r;
}

inline void append(Rule1D& dst, const Rule1D& src) {
  dst.x.insert(dst.x.end(), src.x.begin(), src.x.end());
  dst.w.insert(dst.w.end(), src.w.begin(), src.w.end());
}

/// Panel boundaries a = c_0 < ... < c_panels = b with widths shrinking geometrically toward b.
inline std::vector<double> graded_cuts(double a, double b, int panels, double ratio = 0.5) {
  std::vector<double> cuts{a};
  double total = 0;
  for (int k = 0; k < panels; ++k) total += std::pow(ratio, k);
  double x = a;
  for (int k = 0; k < panels - 1; ++k) {
    x += (b - a) * std::pow(ratio, k) / total;
    cuts.push_back(x);
  }
  cuts.push_back(b);
  return cuts;
}

/// Uniform panel boundaries on [a, b].
inline std::vector<double> uniform_cuts(double a, double b, int panels) {
  std::vector<double> cuts;
  for (int k = 0; k <= panels; ++k) cuts.push_back(a + (b - a) * k / panels);
  cuts.back() = b;
  return cuts;
}

/**
 * @brief Composite Gauss on [a, b] with panels shrinking geometrically toward b.
 * Panel k (counted from a) has width proportional to ratio^k; `panels` panels of `n` nodes.
 */
inline Rule1D graded_gauss(double a, double b, int panels, int n, double ratio = 0.5) {
  if (panels <= 1) return gauss_on(a, b, n);
  Rule1D r;
  auto cuts = graded_cuts(a, b, panels, ratio);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) append(r, gauss_on(cuts[k], cuts[k + 1], n));
  return r;
}

/// Uniform periodic (trapezoid/midpoint) rule on [t0, t0 + 2 pi).
inline Rule1D periodic_rule(int n, double t0 = 0.0) {
  Rule1D r;
  for (int k = 0; k < n; ++k) {
    r.x.push_back(t0 + 2 * pi * (k + 0.5) / n);
    r.w.push_back(2 * pi / n);
  }
  return r;
}

/// Composite Gauss on an interval with uniform panels.
inline Rule1D composite_gauss(double a, double b, int panels, int n) {
  Rule1D r;
  for (int k = 0; k < panels; ++k) append(r, gauss_on(a + (b - a) * k / panels, a + (b - a) * (k + 1) / panels, n));
  return r;
}

enum class QuadScheme { TensorGrid, MonteCarlo, Pullback, Polar };

/**
 * @brief Node list in R^{2n} with positive weights (Lebesgue measure).
 */
struct Quadrature {
  int n = 1;
  QuadScheme scheme = QuadScheme::TensorGrid;
  std::vector<Point> nodes;
  std::vector<double> weights;
  int resolution = 0;
  std::uint64_t seed = 0;
  double rel_error = 0.0;  ///< estimated relative error on the constant function

  std::size_t size() const { return nodes.size(); }
  double total() const {
    double s = 0;
    for (double w : weights) s += w;
    return s;
  }
  void add(const Point& p, double w) {
    nodes.push_back(p);
    weights.push_back(w);
  }

  /// CSV with columns x1,y1[,x2,y2],weight.
  void write_csv(std::ostream& os) const {
    os << (n == 1 ? "x1,y1,weight\n" : "x1,y1,x2,y2,weight\n");
    os.precision(17);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      os << nodes[i][0].real() << ',' << nodes[i][0].imag() << ',';
      if (n == 2) os << nodes[i][1].real() << ',' << nodes[i][1].imag() << ',';
      os << weights[i] << '\n';
    }
  }
};

}  // namespace bergman

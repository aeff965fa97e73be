#pragma once

/**
 * @file kernels.hpp
 * @brief Weighted Bergman kernels (closed form and orthonormal series), L^p_alpha norms,
 * normalized kernels, Bergman projection, Toeplitz forms and test-function ensembles.
 */

#include <limits>
#include <memory>
#include <sstream>

#include <Eigen/Dense>

#include "bergman/geometry.hpp"

namespace bergman {

struct SpaceParams {
  double p = 2.0;  ///< +inf encodes p = infinity
  double alpha = 0.0;
  bool infinite() const { return std::isinf(p); }
  void validate() const {
    if (!(alpha > -1.0)) throw BergmanError("SpaceParams: alpha must exceed -1");
    if (!(p >= 1.0)) throw BergmanError("SpaceParams: p must be at least 1");
  }
};

/// Hoelder conjugate of p.
inline double conjugate_exponent(double p) { return std::isinf(p) ? 1.0 : (p == 1.0 ? std::numeric_limits<double>::infinity() : p / (p - 1.0)); }

/// Weight |rho(w)|^alpha.
inline double weight(const Domain& d, const Point& w, double alpha) {
  if (alpha == 0.0) return 1.0;
  return std::pow(std::max(0.0, -d.rho(w)), alpha);
}

using Exponent = std::array<int, 2>;

/// Monomials of degree <= D (n = 1) or total degree <= D (n = 2), by degree then first exponent descending.
inline std::vector<Exponent> monomials(int n, int D) {
  std::vector<Exponent> m;
  for (int k = 0; k <= D; ++k) {
    if (n == 1)
      m.push_back({k, 0});
    else
      for (int a = k; a >= 0; --a) m.push_back({a, k - a});
  }
  return m;
}

inline cplx monomial(const Point& z, const Exponent& e) {
  cplx v = 1.0;
  if (e[0]) v *= std::pow(z[0], e[0]);
  if (e[1]) v *= std::pow(z[1], e[1]);
  return v;
}

/// Monomial values with repeated multiplication (stable for |z| <= 1).
inline Eigen::VectorXcd monomial_vector(const Point& z, const std::vector<Exponent>& exps, int maxdeg) {
  std::vector<cplx> p0(maxdeg + 1), p1(maxdeg + 1);
  p0[0] = p1[0] = 1.0;
  for (int k = 1; k <= maxdeg; ++k) {
    p0[k] = p0[k - 1] * z[0];
    p1[k] = p1[k - 1] * z[1];
  }
  Eigen::VectorXcd v(exps.size());
  for (std::size_t i = 0; i < exps.size(); ++i) v[i] = p0[exps[i][0]] * p1[exps[i][1]];
  return v;
}

/// ||z^m||^2 in L^2(|rho|^alpha dV) on the unit ball of C^n: pi^n m! Gamma(alpha+1) / Gamma(n+|m|+alpha+1).
inline double monomial_norm2_ball(int n, const Exponent& m, double alpha) {
  double lg = n * std::log(pi) + std::lgamma(m[0] + 1.0) + std::lgamma(m[1] + 1.0) + std::lgamma(alpha + 1.0) -
              std::lgamma(n + m[0] + m[1] + alpha + 1.0);
  return std::exp(lg);
}

/// Closed-form weighted kernel of the unit ball in C^n (n = 1: disc).
inline cplx ball_kernel(int n, double alpha, const Point& z, const Point& w) {
  double c = std::exp(std::lgamma(n + alpha + 1.0) - n * std::log(pi) - std::lgamma(alpha + 1.0));
  return c * std::pow(1.0 - inner(z, w), -(n + 1.0 + alpha));
}

// ---------------------------------------------------------------------------
// Kernel model

enum class KernelForm { ClosedForm, Series };

struct SeriesOptions {
  int degree = -1;              ///< -1 selects 200 (n = 1) or 40 (n = 2)
  int resolution = 0;           ///< quadrature resolution; 0 selects a default resolving degree 2D
  double max_condition = 1e12;  ///< refuse above this (Jacobi-scaled) Gram condition number
  double resolution_tol = 1e-10;
  int mc_samples = 400000;      ///< Gram sampling for Ellipsoid / GridCustom
  std::uint64_t seed = 1;
};

/**
 * @brief Weighted Bergman kernel K_alpha(z, w) = sum_j e_j(z) conj(e_j(w)).
 * Immutable after construction.
 */
struct KernelModel {
  Domain domain;
  double alpha = 0.0;
  KernelForm form = KernelForm::ClosedForm;
  int degree = 0;
  std::vector<Exponent> exps;
  Eigen::MatrixXcd Q;     ///< column j holds the monomial coefficients of e_j
  Eigen::MatrixXcd gram;  ///< gram(i, j) = <z^{m_j}, z^{m_i}>
  double gram_condition = 1.0;
  double gram_rel_error = 0.0;  ///< re-integration difference or Monte Carlo standard error (scaled)

  /// Orthonormal basis values e_j(z).
  Eigen::VectorXcd basis(const Point& z) const { return Q.transpose() * monomial_vector(z, exps, degree); }

  cplx operator()(const Point& z, const Point& w) const {
    if (form == KernelForm::ClosedForm) {
      if (domain.kind == DomainKind::GridCustom) throw BergmanError("KernelModel: no closed form for GridCustom");
      return domain.to_ball_jacobian() * ball_kernel(domain.n, alpha, domain.to_ball(z), domain.to_ball(w));
    }
    Eigen::VectorXcd ez = basis(z), ew = basis(w);
    return (ez.array() * ew.conjugate().array()).sum();
  }

  double diag(const Point& z) const { return std::real((*this)(z, z)); }

  /// Monomial coefficients of K(., z) as a function of its first argument.
  Eigen::VectorXcd kernel_coefficients(const Point& z) const {
    if (form != KernelForm::Series) throw BergmanError("kernel_coefficients: series model required");
    return Q * basis(z).conjugate();
  }

  /// Structured-text serialization (basis coefficients, alpha, degree, domain hash).
  std::string serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "kernel-model\nform " << (form == KernelForm::Series ? "series" : "closed") << "\ndomain " << to_string(domain.kind)
       << " n=" << domain.n << " axes=" << domain.axes[0] << "," << domain.axes[1] << " hash=" << domain_hash() << "\nalpha "
       << alpha << "\ndegree " << degree << "\ncondition " << gram_condition << "\n";
    if (form == KernelForm::Series) {
      os << "basis " << Q.rows() << "\n";
      for (Eigen::Index j = 0; j < Q.cols(); ++j)
        for (Eigen::Index i = 0; i <= j; ++i)
          if (Q(i, j) != cplx(0)) os << i << ' ' << j << ' ' << Q(i, j).real() << ' ' << Q(i, j).imag() << '\n';
    }
    return os.str();
  }

  std::uint64_t domain_hash() const {
    std::ostringstream os;
    os.precision(17);
    os << to_string(domain.kind) << domain.n << ':' << domain.axes[0] << ':' << domain.axes[1] << ':' << domain.label;
    return fnv1a(os.str());
  }
};

inline KernelModel closed_form_kernel(const Domain& d, double alpha) {
  SpaceParams{2, alpha}.validate();
  if (!d.linear_image_of_ball()) throw BergmanError("closed_form_kernel: no closed form for GridCustom");
  KernelModel m;
  m.domain = d;
  m.alpha = alpha;
  m.form = KernelForm::ClosedForm;
  return m;
}

namespace detail {

/// Gram matrix on the disc or ball by a separable polar rule with `res` radial nodes.
inline Eigen::MatrixXcd polar_gram(const Domain& d, double alpha, const std::vector<Exponent>& exps, int D, int res) {
  const std::size_t N = exps.size();
  Eigen::MatrixXcd G(N, N);
  const int nang = 2 * D + 8 + res / 4;
  // angular sums A[k] = sum_theta w e^{i k theta} for k in [-2D, 2D]
  Rule1D th = periodic_rule(nang, 0.0);
  std::vector<cplx> A(4 * D + 1);
  for (int k = -2 * D; k <= 2 * D; ++k) {
    cplx s = 0;
    for (std::size_t i = 0; i < th.x.size(); ++i) s += th.w[i] * std::polar(1.0, k * th.x[i]);
    A[k + 2 * D] = s;
  }
  // radial variable x = |z|^2 on [0, 1], graded toward 1 for non-integer alpha
  const bool integer_alpha = std::abs(alpha - std::round(alpha)) < 1e-14;
  Rule1D rx = integer_alpha ? composite_gauss(0.0, 1.0, 2, res / 2 + 1) : graded_gauss(0.0, 1.0, 8, res / 4 + 4, 0.4);
  std::vector<double> X(2 * D + 1, 0.0);
  for (int k = 0; k <= 2 * D; ++k) {
    double s = 0;
    for (std::size_t i = 0; i < rx.x.size(); ++i) {
      double x = rx.x[i];
      double wx = d.n == 1 ? 0.5 * rx.w[i] : 0.5 * x * rx.w[i];
      s += wx * std::pow(x, 0.5 * k) * std::pow(1.0 - x, alpha);
    }
    X[k] = s;
  }
  if (d.n == 1) {
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        int a = exps[j][0], b = exps[i][0];
        G(i, j) = X[a + b] * A[a - b + 2 * D];
      }
    return G;
  }
  Rule1D rs = gauss_on(0.0, 1.0, res / 2 + 2);
  // S[a][b] = sum_s (1/2) w s^{a/2} (1-s)^{b/2}, a + b <= 2D
  std::vector<std::vector<double>> S(2 * D + 1, std::vector<double>(2 * D + 1, 0.0));
  for (int a = 0; a <= 2 * D; ++a)
    for (int b = 0; a + b <= 2 * D; ++b) {
      double s = 0;
      for (std::size_t i = 0; i < rs.x.size(); ++i) s += 0.5 * rs.w[i] * std::pow(rs.x[i], 0.5 * a) * std::pow(1.0 - rs.x[i], 0.5 * b);
      S[a][b] = s;
    }
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      const auto& m = exps[j];
      const auto& q = exps[i];
      int deg = m[0] + m[1] + q[0] + q[1];
      G(i, j) = X[deg] * S[m[0] + q[0]][m[1] + q[1]] * A[m[0] - q[0] + 2 * D] * A[m[1] - q[1] + 2 * D];
    }
  return G;
}

/// Gram matrix by seeded uniform sampling of the bounding box; also returns the largest scaled standard error.
inline Eigen::MatrixXcd sampled_gram(const Domain& d, double alpha, const std::vector<Exponent>& exps, int D, int samples,
                                     std::uint64_t seed, double& max_scaled_err) {
  const std::size_t N = exps.size();
  Eigen::MatrixXcd S1 = Eigen::MatrixXcd::Zero(N, N);
  Eigen::MatrixXd S2 = Eigen::MatrixXd::Zero(N, N);
  Rng rng(derive_seed(seed, "sampled-gram"));
  std::uniform_real_distribution<double> U(0, 1);
  double box = 1;
  for (int i = 0; i < d.real_dim(); ++i) box *= d.box_hi[i] - d.box_lo[i];
  for (int k = 0; k < samples; ++k) {
    RealVec x{0, 0, 0, 0};
    for (int i = 0; i < d.real_dim(); ++i) x[i] = d.box_lo[i] + (d.box_hi[i] - d.box_lo[i]) * U(rng);
    Point z = from_real(x);
    if (!d.contains(z)) continue;
    double wt = weight(d, z, alpha);
    Eigen::VectorXcd v = monomial_vector(z, exps, D);
    Eigen::MatrixXcd outer = v.conjugate() * v.transpose() * wt;
    S1 += outer;
    S2 += outer.cwiseAbs2();
  }
  Eigen::MatrixXcd G = S1 * (box / samples);
  max_scaled_err = 0;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      double mean2 = std::norm(S1(i, j) / double(samples));
      double var = std::max(0.0, S2(i, j) / samples - mean2);
      double se = box * std::sqrt(var / samples);
      max_scaled_err = std::max(max_scaled_err, se / std::sqrt(std::real(G(i, i)) * std::real(G(j, j))));
    }
  return G;
}

/// Gram-Schmidt (two passes) in the metric <c, d> = d* G c on Jacobi-scaled monomials.
inline Eigen::MatrixXcd orthonormalize(const Eigen::MatrixXcd& G) {
  const Eigen::Index N = G.rows();
  Eigen::VectorXd s(N);
  for (Eigen::Index i = 0; i < N; ++i) s[i] = 1.0 / std::sqrt(std::real(G(i, i)));
  Eigen::MatrixXcd Gs = s.asDiagonal() * G * s.asDiagonal();
  Eigen::MatrixXcd Q = Eigen::MatrixXcd::Zero(N, N);
  Eigen::MatrixXcd GQ = Eigen::MatrixXcd::Zero(N, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    Eigen::VectorXcd c = Eigen::VectorXcd::Zero(N);
    c[j] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      if (j == 0) break;
      Eigen::VectorXcd r = GQ.leftCols(j).adjoint() * c;
      c.noalias() -= Q.leftCols(j) * r;
    }
    Eigen::VectorXcd gc = Gs * c;
    double nrm = std::sqrt(std::max(0.0, std::real(c.dot(gc))));
    if (!(nrm > 0)) throw BergmanError("orthonormalize: Gram matrix not positive definite");
    Q.col(j) = c / nrm;
    GQ.col(j) = gc / nrm;
  }
  return s.asDiagonal() * Q;
}

inline double scaled_condition(const Eigen::MatrixXcd& G) {
  const Eigen::Index N = G.rows();
  Eigen::VectorXd s(N);
  for (Eigen::Index i = 0; i < N; ++i) s[i] = 1.0 / std::sqrt(std::real(G(i, i)));
  Eigen::MatrixXcd Gs = s.asDiagonal() * G * s.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Gs, Eigen::EigenvaluesOnly);
  double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  return lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/**
 * @brief Orthonormalize monomials under <f, g> = int f conj(g) |rho|^alpha dA.
 * Throws when the scaled Gram condition number exceeds the threshold or when re-integration at
 * doubled resolution moves the Gram matrix by more than the tolerance.
 */
inline KernelModel build_series_kernel(const Domain& d, double alpha, SeriesOptions opt = {}) {
  SpaceParams{2, alpha}.validate();
  KernelModel m;
  m.domain = d;
  m.alpha = alpha;
  m.form = KernelForm::Series;
  m.degree = opt.degree >= 0 ? opt.degree : (d.n == 1 ? 200 : 40);
  m.exps = monomials(d.n, m.degree);
  const int D = m.degree;
  if (d.exact()) {
    int res = opt.resolution > 0 ? opt.resolution : D + 16;
    Eigen::MatrixXcd G1 = detail::polar_gram(d, alpha, m.exps, D, res);
    Eigen::MatrixXcd G2 = detail::polar_gram(d, alpha, m.exps, D, 2 * res);
    double diff = 0;
    for (Eigen::Index i = 0; i < G1.rows(); ++i)
      for (Eigen::Index j = 0; j < G1.cols(); ++j)
        diff = std::max(diff, std::abs(G1(i, j) - G2(i, j)) / std::sqrt(std::real(G2(i, i)) * std::real(G2(j, j))));
    m.gram_rel_error = diff;
    if (diff > opt.resolution_tol)
      throw BergmanError("build_series_kernel: quadrature under-resolved (doubled-resolution Gram change " + std::to_string(diff) + ")");
    m.gram = G2;
  } else {
    m.gram = detail::sampled_gram(d, alpha, m.exps, D, opt.mc_samples, opt.seed, m.gram_rel_error);
  }
  m.gram_condition = detail::scaled_condition(m.gram);
  if (!(m.gram_condition <= opt.max_condition))
    throw BergmanError("build_series_kernel: Gram matrix ill-conditioned (" + std::to_string(m.gram_condition) + ")");
  m.Q = detail::orthonormalize(m.gram);
  return m;
}

// ---------------------------------------------------------------------------
// Norms

/// Rule used for integrals concentrated near z (pullback through the automorphism at z).
inline PullbackSpec norm_rule_spec(int n = 1) { return n == 1 ? PullbackSpec{16, 10, 128, 10, 0.4} : PullbackSpec{12, 6, 32, 8, 0.4}; }

/**
 * @brief ||F||_{L^p(|rho|^alpha dA)} on the rule q, with F given on nodes.
 */
template <class Fn>
double lp_norm(const Domain& d, const Quadrature& q, double p, double alpha, Fn&& f) {
  if (std::isinf(p)) {
    double m = 0;
    for (const auto& z : q.nodes) m = std::max(m, std::abs(f(z)));
    return m;
  }
  double s = 0;
  for (std::size_t i = 0; i < q.size(); ++i) s += q.weights[i] * std::pow(std::abs(f(q.nodes[i])), p) * weight(d, q.nodes[i], alpha);
  return std::pow(s, 1.0 / p);
}

/// sup_w |K(z, w)| over a collar-refined grid of rays (geometric schedule toward the boundary).
inline double kernel_sup(const KernelModel& model, const Point& z) {
  const Domain& d = model.domain;
  std::vector<Point> dirs;
  Point zb = d.to_ball(z);
  double az = abs(zb);
  if (az > 0) dirs.push_back((1.0 / az) * zb);
  Rng rng(derive_seed(17, "sup-rays"));
  std::normal_distribution<double> nd;
  for (int k = 0; k < 64; ++k) {
    Point v{cplx(nd(rng), nd(rng)), d.n == 2 ? cplx(nd(rng), nd(rng)) : cplx(0)};
    dirs.push_back((1.0 / abs(v)) * v);
  }
  double m = 0;
  for (const auto& v : dirs)
    for (int j = 0; j <= 40; ++j) {
      double t = 1.0 - std::ldexp(1.0, -j);
      Point w = d.from_ball(t * v);
      if (!d.contains(w)) continue;
      m = std::max(m, std::abs(model(z, w)));
    }
  return m;
}

/**
 * @brief ||K_alpha(z, .)||_{L^p_alpha(Omega)} via the pullback rule centered at z
 * (sup over a collar-refined grid for p = infinity).
 */
inline double kernel_norm(const KernelModel& model, const Point& z, double p, double alpha, std::optional<PullbackSpec> spec = std::nullopt) {
  SpaceParams{p, alpha}.validate();
  if (std::isinf(p)) return kernel_sup(model, z);
  auto q = pullback_rule(model.domain, z, 0.0, 1.0, spec ? *spec : norm_rule_spec(model.domain.n));
  double v = lp_norm(model.domain, q, p, alpha, [&](const Point& w) { return model(z, w); });
  if (!std::isfinite(v) || v <= 0) throw BergmanError("kernel_norm: quadrature failure");
  return v;
}

/// k_z^{p,alpha}(w) = K(w, z) / ||K(., z)||_{L^p_alpha}, holomorphic in w.
struct NormalizedKernel {
  const KernelModel* model = nullptr;
  Point z{};
  double p = 2, alpha = 0;
  double norm = 1;
  cplx operator()(const Point& w) const { return (*model)(w, z) / norm; }
};

inline NormalizedKernel normalized_kernel(const KernelModel& model, const Point& z, double p, double alpha,
                                          std::optional<PullbackSpec> spec = std::nullopt) {
  NormalizedKernel k;
  k.model = &model;
  k.z = z;
  k.p = p;
  k.alpha = alpha;
  // p = 2 with the model's own weight: ||K_z||^2 = K(z, z)
  k.norm = (p == 2.0 && alpha == model.alpha) ? std::sqrt(model.diag(z)) : kernel_norm(model, z, p, alpha, spec);
  return k;
}

// ---------------------------------------------------------------------------
// Analytic functions

/// Polynomial sum_i c_i z^{m_i}.
struct Polynomial {
  std::vector<Exponent> exps;
  std::vector<cplx> coef;
  int degree = 0;
  cplx operator()(const Point& z) const {
    if (exps.empty()) return 0.0;
    Eigen::VectorXcd v = monomial_vector(z, exps, degree);
    cplx s = 0;
    for (std::size_t i = 0; i < coef.size(); ++i) s += coef[i] * v[i];
    return s;
  }
};

/// Coefficients of a polynomial in the model's monomial order (truncated at the model degree).
inline Eigen::VectorXcd to_model_coefficients(const KernelModel& m, const Polynomial& f) {
  Eigen::VectorXcd a = Eigen::VectorXcd::Zero(m.exps.size());
  for (std::size_t i = 0; i < f.exps.size(); ++i) {
    auto it = std::find(m.exps.begin(), m.exps.end(), f.exps[i]);
    if (it == m.exps.end()) throw BergmanError("to_model_coefficients: polynomial degree exceeds model degree");
    a[it - m.exps.begin()] += f.coef[i];
  }
  return a;
}

/// Analytic function on Omega expanded in the orthonormal basis of a series model.
struct SeriesFunction {
  const KernelModel* model = nullptr;
  Eigen::VectorXcd c;  ///< coefficients in the orthonormal basis
  cplx operator()(const Point& z) const { return model->basis(z).transpose() * c; }
  double norm() const { return c.norm(); }
};

using Function = std::function<cplx(const Point&)>;

/// Quadrature for Bergman projection: domain rule fine enough for the model's degree.
inline Quadrature projection_rule(const KernelModel& m) {
  int D = m.degree;
  if (m.domain.n == 1) return pullback_rule(m.domain, Point{}, 0.0, 1.0, PullbackSpec{D / 2 + 24, 2, 2 * D + 64, 4, 0.5});
  return pullback_rule(m.domain, Point{}, 0.0, 1.0, PullbackSpec{D / 2 + 8, 2, 2 * D + 8, D / 2 + 8, 0.5});
}

/**
 * @brief P_alpha u: coefficients <u, e_j>_alpha by quadrature, then sum_j <u, e_j> e_j.
 */
inline SeriesFunction bergman_project(const KernelModel& m, const Function& u, const Quadrature& q) {
  if (m.form != KernelForm::Series) throw BergmanError("bergman_project: series model required");
  SeriesFunction out;
  out.model = &m;
  out.c = Eigen::VectorXcd::Zero(m.Q.cols());
  std::vector<Eigen::VectorXcd> parts(q.size());
  parallel_for(q.size(), [&](std::size_t i) {
    const Point& w = q.nodes[i];
    parts[i] = u(w) * m.basis(w).conjugate() * (q.weights[i] * weight(m.domain, w, m.alpha));
  });
  for (const auto& v : parts) out.c += v;
  return out;
}

/**
 * @brief <T_sigma f, f> = int sigma |f|^2 |rho|^alpha dA.
 */
inline double toeplitz_quadratic_form(const Domain& d, double alpha, const Function& sigma, const Function& f, const Quadrature& q) {
  double s = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    double sg = std::real(sigma(q.nodes[i]));
    if (sg < 0) throw BergmanError("toeplitz_quadratic_form: symbol must be nonnegative");
    s += q.weights[i] * sg * std::norm(f(q.nodes[i])) * weight(d, q.nodes[i], alpha);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Test-function ensembles

enum class MemberKind { Constant, RandomPolynomial, TruncatedKernel, Blaschke };

inline std::string to_string(MemberKind k) {
  switch (k) {
    case MemberKind::Constant: return "constant";
    case MemberKind::RandomPolynomial: return "polynomial";
    case MemberKind::TruncatedKernel: return "kernel";
    case MemberKind::Blaschke: return "blaschke";
  }
  return "?";
}

struct EnsembleMember {
  MemberKind kind = MemberKind::Constant;
  std::string id;
  int degree = 0;
  Point center{};             ///< kernel point or first Blaschke zero
  Polynomial poly;            ///< set for polynomial-type members
  std::vector<cplx> zeros;    ///< Blaschke zeros
  cplx operator()(const Point& z) const {
    if (kind != MemberKind::Blaschke) return poly(z);
    cplx b = 1.0;
    for (const auto& a : zeros) b *= (z[0] - a) / (1.0 - std::conj(a) * z[0]);
    return b;
  }
  bool is_polynomial() const { return kind != MemberKind::Blaschke; }
};

struct EnsembleSpec {
  int degree = 20;
  int random_count = 10;
  std::vector<Point> kernel_points;  ///< truncated kernels at these points
  int blaschke_count = 0;
  int blaschke_zeros = 3;
  std::uint64_t seed = 1;
  double alpha = 0.0;
};

/// Truncated kernel sum_{|m| <= d} conj(z^m) w^m / ||w^m||^2 on the unit ball (disc for n = 1).
inline Polynomial truncated_kernel(int n, double alpha, const Point& z, int degree) {
  Polynomial p;
  p.degree = degree;
  p.exps = monomials(n, degree);
  p.coef.resize(p.exps.size());
  for (std::size_t i = 0; i < p.exps.size(); ++i) p.coef[i] = std::conj(monomial(z, p.exps[i])) / monomial_norm2_ball(n, p.exps[i], alpha);
  return p;
}

/**
 * @brief Seeded ensemble: the constant 1, random polynomials with complex Gaussian coefficients in
 * the orthonormal monomial basis, truncated kernels, and Blaschke products (disc only).
 */
inline std::vector<EnsembleMember> make_ensemble(const Domain& d, const EnsembleSpec& s) {
  std::vector<EnsembleMember> out;
  auto exps = monomials(d.n, s.degree);
  EnsembleMember one;
  one.id = "const";
  one.poly.exps = {Exponent{0, 0}};
  one.poly.coef = {1.0};
  out.push_back(one);
  for (int k = 0; k < s.random_count; ++k) {
    Rng rng(derive_seed(s.seed, "ensemble-poly", static_cast<std::uint64_t>(k) * 1000 + s.degree));
    EnsembleMember m;
    m.kind = MemberKind::RandomPolynomial;
    m.id = "poly" + std::to_string(k);
    m.degree = s.degree;
    m.poly.exps = exps;
    m.poly.degree = s.degree;
    for (const auto& e : exps) {
      // ellipsoid/custom domains use the ball normalization of their linear model
      Exponent ee = e;
      double nrm = monomial_norm2_ball(d.n, ee, s.alpha);
      m.poly.coef.push_back(complex_gaussian(rng) / std::sqrt(nrm));
    }
    out.push_back(std::move(m));
  }
  for (std::size_t k = 0; k < s.kernel_points.size(); ++k) {
    EnsembleMember m;
    m.kind = MemberKind::TruncatedKernel;
    m.id = "kernel" + std::to_string(k);
    m.degree = s.degree;
    m.center = s.kernel_points[k];
    m.poly = truncated_kernel(d.n, s.alpha, d.to_ball(m.center), s.degree);
    if (d.kind == DomainKind::Ellipsoid) {
      // compose with the linear map: w -> (L w)^m
      for (std::size_t i = 0; i < m.poly.exps.size(); ++i)
        m.poly.coef[i] *= std::pow(std::sqrt(d.axes[0]), m.poly.exps[i][0]) * std::pow(std::sqrt(d.axes[1]), m.poly.exps[i][1]);
    }
    out.push_back(std::move(m));
  }
  if (d.n == 1)
    for (int k = 0; k < s.blaschke_count; ++k) {
      Rng rng(derive_seed(s.seed, "ensemble-blaschke", k));
      std::uniform_real_distribution<double> U(0, 1);
      EnsembleMember m;
      m.kind = MemberKind::Blaschke;
      m.id = "blaschke" + std::to_string(k);
      for (int j = 0; j < s.blaschke_zeros; ++j) m.zeros.push_back(std::polar(0.9 * std::sqrt(U(rng)), 2 * pi * U(rng)));
      m.center = {m.zeros.front(), 0.0};
      out.push_back(std::move(m));
    }
  return out;
}

}  // namespace bergman

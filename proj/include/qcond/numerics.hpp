#ifndef QCOND_NUMERICS_HPP
#define QCOND_NUMERICS_HPP

#include <complex>
#include <vector>

#include <Eigen/Core>

namespace qcond {

using cplx = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using Vec2c = Eigen::Vector2cd;
using Mat2c = Eigen::Matrix2cd;

// Bilinear (non-Hermitian) dot products. Eigen's dot() conjugates its first
// argument, which is not what the divergence-form pairings use.
inline cplx bdot(const Vec2c& a, const Vec2c& b) { return a(0) * b(0) + a(1) * b(1); }
inline cplx bdot(const Vec2c& a, const Vec2& b) { return a(0) * b(0) + a(1) * b(1); }
inline cplx bdot(const Vec2& a, const Vec2c& b) { return a(0) * b(0) + a(1) * b(1); }

// Counterclockwise quarter turn.
inline Vec2 perp(const Vec2& v) { return Vec2(-v(1), v(0)); }

struct QuadratureNode {
  double x;
  double w;
};

// Gauss-Legendre nodes and weights on [a, b], computed to machine precision
// by Newton iteration on the Legendre polynomial.
std::vector<QuadratureNode> gauss_legendre(int n, double a, double b);

// Composite Simpson on uniformly spaced samples f_0..f_m (m even), spacing h.
cplx simpson_uniform(const std::vector<cplx>& f, double h);

// Cumulative integral from node 0 along a uniform grid: result[k] approximates
// the integral over [x_0, x_k]. Simpson pairs where possible, with a
// third-order correction for the odd trailing interval.
std::vector<cplx> cumulative_integral_uniform(const std::vector<cplx>& f, double h);

// Least-squares slope of log2(values) against level index; returns the decay
// rate r such that value ~ C * 2^(-r * level).
double fit_log2_rate(const std::vector<double>& values);

// Cubic Hermite interpolation on a uniform table with prescribed slopes.
struct HermiteTable {
  double x0 = 0.0;
  double dx = 1.0;
  std::vector<cplx> value;
  std::vector<cplx> slope;

  cplx eval(double x) const;
  cplx eval_derivative(double x) const;
};

// Slopes by centered differences (second-order one-sided at the ends).
std::vector<cplx> table_slopes(const std::vector<cplx>& g, double h);

// 64-bit FNV-1a, used for file checksums and config hashes.
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64(const std::string& s);

} // namespace qcond

#endif

#include "qcond/numerics.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace qcond {

std::vector<QuadratureNode> gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  std::vector<QuadratureNode> nodes(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Chebyshev guess, then Newton on P_n.
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double xm = 0.5 * (b + a), xl = 0.5 * (b - a);
    double w = 2.0 * xl / ((1.0 - x * x) * pp * pp);
    nodes[i] = {xm - xl * x, w};
    nodes[n - 1 - i] = {xm + xl * x, w};
  }
  return nodes;
}

cplx simpson_uniform(const std::vector<cplx>& f, double h) {
  const std::size_t m = f.size();
  if (m < 3 || m % 2 == 0) throw std::invalid_argument("simpson_uniform: need an odd sample count >= 3");
  cplx acc = f.front() + f.back();
  for (std::size_t i = 1; i + 1 < m; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * f[i];
  return acc * (h / 3.0);
}

std::vector<cplx> cumulative_integral_uniform(const std::vector<cplx>& f, double h) {
  const std::size_t m = f.size();
  std::vector<cplx> out(m, cplx(0.0, 0.0));
  for (std::size_t k = 2; k < m; k += 2)
    out[k] = out[k - 2] + (h / 3.0) * (f[k - 2] + 4.0 * f[k - 1] + f[k]);
  for (std::size_t k = 1; k < m; k += 2) {
    if (k + 1 < m) {
      // interior odd node: half of the Simpson pair around it
      out[k] = out[k - 1] + (h / 12.0) * (5.0 * f[k - 1] + 8.0 * f[k] - f[k + 1]);
    } else {
      out[k] = out[k - 1] + (h / 12.0) * (-f[k - 2] + 8.0 * f[k - 1] + 5.0 * f[k]);
    }
  }
  return out;
}

double fit_log2_rate(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) throw std::invalid_argument("fit_log2_rate: need at least two values");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = static_cast<double>(i);
    double y = std::log2(std::max(values[i], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return -slope;
}

cplx HermiteTable::eval(double x) const {
  const int m = static_cast<int>(value.size());
  if (m == 0) return cplx(0.0, 0.0);
  if (m == 1) return value[0];
  double t = (x - x0) / dx;
  int k = static_cast<int>(std::floor(t));
  if (k < 0) k = 0;
  if (k > m - 2) k = m - 2;
  double u = t - k;
  double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
  double h10 = u * (1 - u) * (1 - u);
  double h01 = u * u * (3 - 2 * u);
  double h11 = u * u * (u - 1);
  return h00 * value[k] + h10 * dx * slope[k] + h01 * value[k + 1] + h11 * dx * slope[k + 1];
}

cplx HermiteTable::eval_derivative(double x) const {
  const int m = static_cast<int>(value.size());
  if (m < 2) return cplx(0.0, 0.0);
  double t = (x - x0) / dx;
  int k = static_cast<int>(std::floor(t));
  if (k < 0) k = 0;
  if (k > m - 2) k = m - 2;
  double u = t - k;
  double d00 = 6 * u * (u - 1);
  double d10 = (1 - u) * (1 - 3 * u);
  double d01 = -6 * u * (u - 1);
  double d11 = u * (3 * u - 2);
  return (d00 * value[k] + d01 * value[k + 1]) / dx + d10 * slope[k] + d11 * slope[k + 1];
}

std::vector<cplx> table_slopes(const std::vector<cplx>& g, double h) {
  const int m = static_cast<int>(g.size());
  std::vector<cplx> s(m, cplx(0.0, 0.0));
  if (m < 2) return s;
  if (m == 2) {
    s[0] = s[1] = (g[1] - g[0]) / h;
    return s;
  }
  for (int i = 1; i + 1 < m; ++i) s[i] = (g[i + 1] - g[i - 1]) / (2.0 * h);
  s[0] = (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * h);
  s[m - 1] = (3.0 * g[m - 1] - 4.0 * g[m - 2] + g[m - 3]) / (2.0 * h);
  return s;
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

} // namespace qcond

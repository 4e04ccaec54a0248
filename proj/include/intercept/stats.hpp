#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "intercept/errors.hpp"

namespace intercept {

inline constexpr double kPi = 3.141592653589793238462643;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Standard normal CDF.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

/// Standard normal PDF.
inline double norm_pdf(double x) {
  return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

/// Inverse standard normal CDF. Acklam's rational approximation followed by
/// one Halley step, good to ~1e-15 over (0,1).
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw NumericFailureError("norm_quantile: p outside [0,1]");
  }
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = norm_cdf(x) - p;
  const double u = e * std::sqrt(kTwoPi) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

namespace detail {

// Regularized lower incomplete gamma P(a,x), series + continued fraction.
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw NumericFailureError("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16)
        return sum * std::exp(-x + a * std::log(x) - gln);
    }
    throw NumericFailureError("gamma_p: series did not converge");
  }
  // Lentz continued fraction for Q(a,x).
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

}  // namespace detail

/// Chi-square CDF with k degrees of freedom.
inline double chi2_cdf(double x, double k) {
  if (x <= 0.0) return 0.0;
  return detail::gamma_p(0.5 * k, 0.5 * x);
}

/// Chi-square quantile. k = 1 falls out of the normal quantile exactly;
/// larger k starts from Wilson-Hilferty and polishes with Newton.
inline double chi2_quantile(double p, double k) {
  if (!(p > 0.0 && p < 1.0)) throw NumericFailureError("chi2_quantile: p outside (0,1)");
  if (k == 1.0) {
    const double z = norm_quantile(0.5 * (1.0 + p));
    return z * z;
  }
  const double z = norm_quantile(p);
  const double f = 2.0 / (9.0 * k);
  double x = k * std::pow(1.0 - f + z * std::sqrt(f), 3);
  x = std::max(x, 1e-12);
  for (int it = 0; it < 60; ++it) {
    const double cdf = chi2_cdf(x, k);
    const double pdf = std::exp((0.5 * k - 1.0) * std::log(x) - 0.5 * x -
                                std::lgamma(0.5 * k) - 0.5 * k * std::log(2.0));
    if (pdf <= 0.0) break;
    const double step = (cdf - p) / pdf;
    x -= step;
    if (x <= 0.0) x = 1e-12;
    if (std::abs(step) < 1e-12 * (1.0 + x)) break;
  }
  return x;
}

/// Gauss-Legendre nodes/weights on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      dp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

/// Bivariate normal upper-quadrant probability P(X > dh, Y > dk) for standard
/// normals with correlation rho. Genz's adaptive Gauss-Legendre scheme,
/// absolute error below 5e-16.
inline double bvn_upper(double dh, double dk, double rho) {
  static constexpr double w6[3] = {0.1713244923791705, 0.3607615730481384,
                                   0.4679139345726904};
  static constexpr double x6[3] = {0.9324695142031522, 0.6612093864662647,
                                   0.2386191860831970};
  static constexpr double w12[6] = {0.04717533638651177, 0.1069393259953183,
                                    0.1600783285433464,  0.2031674267230659,
                                    0.2334925365383547,  0.2491470458134029};
  static constexpr double x12[6] = {0.9815606342467191, 0.9041172563704750,
                                    0.7699026741943050, 0.5873179542866171,
                                    0.3678314989981802, 0.1252334085114692};
  static constexpr double w20[10] = {0.01761400713915212, 0.04060142980038694,
                                     0.06267204833410906, 0.08327674157670475,
                                     0.1019301198172404,  0.1181945319615184,
                                     0.1316886384491766,  0.1420961093183821,
                                     0.1491729864726037,  0.1527533871307259};
  static constexpr double x20[10] = {0.9931285991850949, 0.9639719272779138,
                                     0.9122344282513259, 0.8391169718222188,
                                     0.7463319064601508, 0.6360536807265150,
                                     0.5108670019508271, 0.3737060887154196,
                                     0.2277858511416451, 0.07652652113349733};
  if (std::isinf(dh) || std::isinf(dk)) {
    if (dh == std::numeric_limits<double>::infinity() ||
        dk == std::numeric_limits<double>::infinity())
      return 0.0;
    if (dh == -std::numeric_limits<double>::infinity())
      return std::isinf(dk) ? 1.0 : norm_cdf(-dk);
    return norm_cdf(-dh);
  }
  if (rho == 0.0) return norm_cdf(-dh) * norm_cdf(-dk);
  rho = std::clamp(rho, -1.0, 1.0);

  const double* w = w20;
  const double* xg = x20;
  int ng = 10;
  if (std::abs(rho) < 0.3) {
    w = w6;
    xg = x6;
    ng = 3;
  } else if (std::abs(rho) < 0.75) {
    w = w12;
    xg = x12;
    ng = 6;
  }

  double h = dh, k = dk;
  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(rho) < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = 0.5 * std::asin(rho);
    for (int i = 0; i < ng; ++i) {
      for (int is = -1; is <= 1; is += 2) {
        const double sn = std::sin(asr * (1.0 + is * xg[i]));
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    bvn = bvn * asr / kTwoPi + norm_cdf(-h) * norm_cdf(-k);
  } else {
    if (rho < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (std::abs(rho) < 1.0) {
      const double as = (1.0 - rho) * (1.0 + rho);
      double a = std::sqrt(as);
      const double bs = (h - k) * (h - k);
      const double c = (4.0 - hk) / 8.0;
      const double d = (12.0 - hk) / 16.0;
      double asr = -0.5 * (bs / as + hk);
      if (asr > -100.0)
        bvn = a * std::exp(asr) *
              (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
      if (hk > -100.0) {
        const double b = std::sqrt(bs);
        const double sp = std::sqrt(kTwoPi) * norm_cdf(-b / a);
        bvn -= std::exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
      }
      a *= 0.5;
      for (int i = 0; i < ng; ++i) {
        for (int is = -1; is <= 1; is += 2) {
          const double xs = std::pow(a * (1.0 + is * xg[i]), 2);
          const double rs = std::sqrt(1.0 - xs);
          asr = -0.5 * (bs / xs + hk);
          if (asr > -100.0) {
            const double sp = 1.0 + c * xs * (1.0 + d * xs);
            const double ep = std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs;
            bvn += a * w[i] * std::exp(asr) * (ep - sp);
          }
        }
      }
      bvn = -bvn / kTwoPi;
    }
    if (rho > 0.0) {
      bvn += norm_cdf(-std::max(h, k));
    } else {
      bvn = -bvn;
      bvn += std::max(0.0, norm_cdf(-h) - norm_cdf(-k));
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

/// P(a1 < X < b1, a2 < Y < b2) for standard bivariate normal, correlation rho.
inline double bvn_rectangle(double a1, double b1, double a2, double b2, double rho) {
  if (a1 >= b1 || a2 >= b2) return 0.0;
  const double p = bvn_upper(a1, a2, rho) - bvn_upper(a1, b2, rho) -
                   bvn_upper(b1, a2, rho) + bvn_upper(b1, b2, rho);
  return std::clamp(p, 0.0, 1.0);
}

/// One-sided exact binomial tail P[Bin(n, 1/2) >= b].
inline double binomial_tail_geq(int b, int n) {
  if (b <= 0) return 1.0;
  if (b > n) return 0.0;
  double p = 0.0;
  const double log_half = std::log(0.5);
  for (int i = b; i <= n; ++i) {
    const double logc = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                        std::lgamma(n - i + 1.0);
    p += std::exp(logc + n * log_half);
  }
  return std::min(p, 1.0);
}

/// Wilson score interval for a binomial proportion.
inline std::pair<double, double> wilson_interval(int successes, int n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (phat + z2 / (2.0 * n)) / denom;
  const double half =
      z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
  return {std::clamp(center - half, 0.0, 1.0), std::clamp(center + half, 0.0, 1.0)};
}

}  // namespace intercept

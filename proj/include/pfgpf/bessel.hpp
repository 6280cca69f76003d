#pragma once

// log K_nu(x), the modified Bessel function of the second kind, evaluated
// without ever forming K_nu itself so that large orders and large arguments
// neither overflow nor underflow.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "pfgpf/errors.hpp"

namespace pfgpf {
namespace detail {

// Taylor coefficients of 1/Gamma(z) = sum_k c[k] z^(k+1) (Abramowitz & Stegun 6.1.34).
inline constexpr std::array<double, 26> kRecipGammaCoeffs = {
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
};

struct TemmeGammas {
  double gam1;    // (1/G(1-mu) - 1/G(1+mu)) / (2 mu)
  double gam2;    // (1/G(1-mu) + 1/G(1+mu)) / 2
  double gampl;   // 1/G(1+mu)
  double gammi;   // 1/G(1-mu)
};

// Valid for |mu| <= 1/2; the even/odd split avoids the cancellation in gam1.
inline TemmeGammas temme_gammas(double mu) {
  double odd = 0.0;   // sum of c[k] mu^(k-1) over odd k, equals -gam1
  double even = 0.0;  // sum of c[k] mu^k over even k, equals gam2
  double power = 1.0;
  for (std::size_t k = 0; k < kRecipGammaCoeffs.size(); k += 2) {
    even += kRecipGammaCoeffs[k] * power;
    if (k + 1 < kRecipGammaCoeffs.size()) odd += kRecipGammaCoeffs[k + 1] * power;
    power *= mu * mu;
  }
  TemmeGammas g{};
  g.gam1 = -odd;
  g.gam2 = even;
  g.gampl = even + odd * mu;
  g.gammi = even - odd * mu;
  return g;
}

struct LogKPair {
  double log_k_mu;  // log K_mu(x)
  double ratio;     // K_{mu+1}(x) / K_mu(x)
};

// Temme's series, x <= 2, |mu| <= 1/2.
inline LogKPair temme_series(double mu, double x) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  const double half_x = 0.5 * x;
  const double pimu = std::numbers::pi * mu;
  const double fact = std::abs(pimu) < eps ? 1.0 : pimu / std::sin(pimu);
  double d = -std::log(half_x);
  double e = mu * d;
  const double fact2 = std::abs(e) < eps ? 1.0 : std::sinh(e) / e;
  const TemmeGammas g = temme_gammas(mu);
  double ff = fact * (g.gam1 * std::cosh(e) + g.gam2 * fact2 * d);
  double sum = ff;
  e = std::exp(e);
  double p = 0.5 * e / g.gampl;
  double q = 0.5 / (e * g.gammi);
  double c = 1.0;
  d = half_x * half_x;
  double sum1 = p;
  for (int i = 1; i < 10000; ++i) {
    const double di = static_cast<double>(i);
    ff = (di * ff + p + q) / (di * di - mu * mu);
    c *= d / di;
    p /= (di - mu);
    q /= (di + mu);
    const double del = c * ff;
    sum += del;
    sum1 += c * (p - di * ff);
    if (std::abs(del) < std::abs(sum) * eps) break;
  }
  const double k_mu = sum;
  const double k_mu1 = sum1 * 2.0 / x;
  return {std::log(k_mu), k_mu1 / k_mu};
}

// Steed's continued fraction (Temme's CF2), x > 2, |mu| <= 1/2. Returns the
// exponentially scaled value analytically so K never underflows.
inline LogKPair steed_cf2(double mu, double x) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  const double a1 = 0.25 - mu * mu;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 2; i < 100000; ++i) {
    const double di = static_cast<double>(i);
    a -= 2.0 * (di - 1.0);
    c = -a * c / di;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < eps) break;
  }
  h = a1 * h;
  const double log_k_mu = 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x - std::log(s);
  const double ratio = (mu + x + 0.5 - h) / x;
  return {log_k_mu, ratio};
}

// Uniform (Debye) asymptotic expansion in the order, four correction terms.
inline double log_bessel_k_debye(double nu, double x) {
  const double z = x / nu;
  const double root = std::sqrt(1.0 + z * z);
  const double eta = root + std::log(z / (1.0 + root));
  const double p = 1.0 / root;
  const double p2 = p * p;
  const double u1 = p * (3.0 - 5.0 * p2) / 24.0;
  const double u2 = p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0;
  const double u3 = p * p2 * (30375.0 - 369603.0 * p2 + 765765.0 * p2 * p2 - 425425.0 * p2 * p2 * p2) / 414720.0;
  const double u4 = p2 * p2 *
                    (4465125.0 - 94121676.0 * p2 + 349922430.0 * p2 * p2 - 446185740.0 * p2 * p2 * p2 +
                     185910725.0 * p2 * p2 * p2 * p2) /
                    39813120.0;
  const double inv = 1.0 / nu;
  const double series = 1.0 - u1 * inv + u2 * inv * inv - u3 * inv * inv * inv + u4 * inv * inv * inv * inv;
  return 0.5 * std::log(std::numbers::pi / (2.0 * nu)) - nu * eta - 0.5 * std::log(root) + std::log(series);
}

}  // namespace detail

/// Orders above this use the uniform asymptotic expansion instead of recurrence.
inline constexpr double kBesselDebyeOrder = 1000.0;

/// log K_order(arg). K is even in its order. Throws DomainError unless arg > 0.
inline double log_bessel_k(double order, double arg) {
  if (!(arg > 0.0) || !std::isfinite(arg)) {
    throw DomainError("log_bessel_k: argument must be positive and finite");
  }
  if (!std::isfinite(order)) throw DomainError("log_bessel_k: order must be finite");
  const double nu = std::abs(order);
  if (nu > kBesselDebyeOrder) return detail::log_bessel_k_debye(nu, arg);

  const auto steps = static_cast<long>(std::floor(nu + 0.5));
  const double mu = nu - static_cast<double>(steps);
  const detail::LogKPair start = arg <= 2.0 ? detail::temme_series(mu, arg) : detail::steed_cf2(mu, arg);

  // Forward recurrence on r_k = K_{mu+k+1}/K_{mu+k}; stable for K.
  double log_k = start.log_k_mu;
  double ratio = start.ratio;
  for (long k = 0; k < steps; ++k) {
    log_k += std::log(ratio);
    ratio = 2.0 * (mu + static_cast<double>(k) + 1.0) / arg + 1.0 / ratio;
  }
  return log_k;
}

}  // namespace pfgpf

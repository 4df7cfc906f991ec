#pragma once

// Seeded generators of random plants for property and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

#include "piobs/piobs.hpp"

namespace piobs::testing {

using Rng = std::mt19937_64;

inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline RealMatrix gaussian(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  RealMatrix m(r, c);
  for (auto& x : m.data()) x = nd(rng);
  return m;
}

/// Random orthogonal matrix: Gram-Schmidt (applied twice) on a Gaussian matrix.
inline RealMatrix random_orthogonal(Rng& rng, std::size_t n) {
  RealMatrix q = gaussian(rng, n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t k = 0; k < j; ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += q(i, k) * q(i, j);
        for (std::size_t i = 0; i < n; ++i) q(i, j) -= dot * q(i, k);
      }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
  }
  return q;
}

/// Real block-diagonal matrix with the given spectrum radii and random
/// orthogonal similarity, so eigenvalues are known exactly up to rounding.
/// Conjugate pairs come from 2x2 rotation-scaling blocks.
struct KnownSpectrum {
  RealMatrix M;
  Spectrum eigen;
};

inline KnownSpectrum block_with_spectrum(Rng& rng, std::size_t size, double rmin, double rmax) {
  KnownSpectrum ks{RealMatrix(size, size), {}};
  std::size_t i = 0;
  while (i < size) {
    const double r = uniform(rng, rmin, rmax);
    if (i + 1 < size && uniform(rng, 0.0, 1.0) < 0.4) {
      const double th = uniform(rng, 0.2, std::numbers::pi - 0.2);
      const double s = uniform(rng, 0.5, 2.0);  // non-normal 2x2 block
      ks.M(i, i) = r * std::cos(th);
      ks.M(i + 1, i + 1) = r * std::cos(th);
      ks.M(i, i + 1) = r * std::sin(th) * s;
      ks.M(i + 1, i) = -r * std::sin(th) / s;
      ks.eigen.emplace_back(r * std::cos(th), r * std::sin(th));
      ks.eigen.emplace_back(r * std::cos(th), -r * std::sin(th));
      i += 2;
    } else {
      const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      ks.M(i, i) = sign * r;
      ks.eigen.emplace_back(sign * r, 0.0);
      i += 1;
    }
  }
  return ks;
}

struct RandomPlant {
  RealMatrix A, B, C;
  std::size_t q = 0;         // observable dimension by construction
  Spectrum unobservable;     // eigenvalues placed in the unobservable block
};

/// Gaussian plant: A ~ N(0, scale^2 / n), C ~ N(0, 1). Observable with probability one.
inline RandomPlant generic_plant(Rng& rng, std::size_t n, std::size_t m, std::size_t p, double scale = 1.2) {
  RandomPlant rp;
  rp.A = gaussian(rng, n, n, scale / std::sqrt(static_cast<double>(n)));
  rp.B = gaussian(rng, n, m);
  rp.C = gaussian(rng, p, n);
  rp.q = n;
  return rp;
}

/// Plant with an unobservable block of dimension n - q whose eigenvalue
/// radii lie in [rmin, rmax], hidden by a random orthogonal change of basis.
/// Requires p <= q < n.
inline RandomPlant unobservable_plant(Rng& rng, std::size_t n, std::size_t m, std::size_t p, std::size_t q, double rmin,
                                      double rmax, double scale = 1.2) {
  const std::size_t u = n - q;
  const RealMatrix a11 = gaussian(rng, q, q, scale / std::sqrt(static_cast<double>(q)));
  const RealMatrix a21 = gaussian(rng, u, q, 0.5);
  const auto a22 = block_with_spectrum(rng, u, rmin, rmax);
  const RealMatrix c1 = gaussian(rng, p, q);
  const RealMatrix z = block2x2(a11, RealMatrix(q, u), a21, a22.M);
  const RealMatrix s = random_orthogonal(rng, n);  // x = S z
  RandomPlant rp;
  rp.A = s * z * s.transpose();
  rp.C = hstack(c1, RealMatrix(p, u)) * s.transpose();
  rp.B = gaussian(rng, n, m);
  rp.q = q;
  rp.unobservable = a22.eigen;
  detail::sort_spectrum(rp.unobservable);
  return rp;
}

/// Draws from the acceptance distribution: n in [1, 8], p in [1, min(3, n)],
/// m in [1, 3]. About a third of the plants with n > p carry a stable
/// unobservable block (radii in [0.05, 0.9]); the rest are generic.
inline RandomPlant random_detectable_plant(Rng& rng) {
  const std::size_t n = uniform_index(rng, 1, 8);
  const std::size_t p = uniform_index(rng, 1, std::min<std::size_t>(3, n));
  const std::size_t m = uniform_index(rng, 1, 3);
  if (n > p && uniform(rng, 0.0, 1.0) < 1.0 / 3.0) {
    const std::size_t q = uniform_index(rng, p, n - 1);
    return unobservable_plant(rng, n, m, p, q, 0.05, 0.9);
  }
  return generic_plant(rng, n, m, p);
}

/// Plant whose unobservable block has every eigenvalue of modulus in [1, 2].
inline RandomPlant random_undetectable_plant(Rng& rng) {
  const std::size_t n = uniform_index(rng, 2, 8);
  const std::size_t p = uniform_index(rng, 1, std::min<std::size_t>(3, n - 1));
  const std::size_t m = uniform_index(rng, 1, 3);
  const std::size_t q = uniform_index(rng, std::max(p, n >= 3 ? n - 2 : p), n - 1);
  return unobservable_plant(rng, n, m, p, q, 1.0, 2.0);
}

/// n poles, conjugate-closed, with moduli in [rmin, rmax] and pairwise distance at least `gap`.
inline Spectrum separated_poles(Rng& rng, std::size_t n, double rmin, double rmax, double gap) {
  for (;;) {
    Spectrum poles;
    while (poles.size() < n) {
      const double r = uniform(rng, rmin, rmax);
      if (poles.size() + 1 < n && uniform(rng, 0.0, 1.0) < 0.5) {
        const double th = uniform(rng, 0.3, std::numbers::pi - 0.3);
        poles.emplace_back(r * std::cos(th), r * std::sin(th));
        poles.emplace_back(r * std::cos(th), -r * std::sin(th));
      } else {
        poles.emplace_back(uniform(rng, 0.0, 1.0) < 0.5 ? -r : r, 0.0);
      }
    }
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i)
      for (std::size_t j = i + 1; j < n && ok; ++j) ok = std::abs(poles[i] - poles[j]) >= gap;
    if (ok) return poles;
  }
}

}  // namespace piobs::testing

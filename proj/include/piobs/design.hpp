#pragma once

// Full-order proportional-integral observer synthesis:
//
//   xhat(k+1) = (A - L C) xhat(k) + L y(k) + B u(k) + F v(k)
//   v(k+1)    = v(k) + y(k) - C xhat(k)
//
// Pipeline: detectability check, output-injection gain K with A + K C Schur
// stable, row basis T with C = [I_p, 0] T, then
//
//   X = T^-1 [I_p - Phi; Lambda],  L = X - K,  F = -(A - L C) X + X (I_p - C X).
//
// With M = [[I, X], [0, I]] the augmented error matrix [[A - L C, F], [-C, I]]
// is similar to [[A + K C, 0], [-C, Phi]], so its spectrum is
// sigma(A + K C) together with sigma(Phi).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "piobs/analysis.hpp"
#include "piobs/errors.hpp"
#include "piobs/linalg.hpp"

namespace piobs {

struct Tolerances {
  double rank = kDefaultTolRank;
  double boundary = 1e-9;
  double cluster = 1e-7;
  double singular = kDefaultTolSingular;
  double pairing = 1e-6;          // spectrum split check
  double output_identity = 1e-10; // || -C X + I - Phi ||
  double similarity = 1e-9;       // relative to the scale of M^-1 Aug M

  AnalysisOptions analysis() const { return {rank, boundary, cluster}; }
};

struct DesignConfig {
  /// Desired sigma(A + K C) (or of the observable block). Empty selects defaults.
  std::vector<Complex> target_poles;
  /// p x p, Schur stable, nonzero. Defaults to 0.5 I_p.
  std::optional<RealMatrix> phi;
  /// (n - p) x p free block. Defaults to zero.
  std::optional<RealMatrix> lambda_block;
  double margin = 1e-6;
  Tolerances tol;
  std::uint64_t seed = 20240601;
};

/// A design step failed numerically. Step numbering follows the pipeline:
/// 1 detectability, 2 gain K, 3 basis T, 4 X / L / F and final check.
class DesignFailure : public NumericalFailure {
 public:
  DesignFailure(int step, const std::string& what) : NumericalFailure(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

struct PiObserver {
  SystemRealization system;
  RealMatrix L, F;
  RealMatrix K, T, X;
  RealMatrix phi, lambda_block;
  std::size_t q = 0;         // observable subspace dimension used for K
  Spectrum assigned_poles;   // placed on the observable block
  Spectrum inherited_poles;  // sigma(A22), carried over unchanged
};

// ---------------------------------------------------------------------------
// Helpers

/// n real poles at the midpoints of n equal sub-intervals of [0.1, 0.5].
inline std::vector<Complex> default_target_poles(std::size_t count) {
  std::vector<Complex> poles(count);
  for (std::size_t i = 0; i < count; ++i)
    poles[i] = 0.1 + 0.4 * (static_cast<double>(i) + 0.5) / static_cast<double>(count);
  return poles;
}

inline RealMatrix default_phi(std::size_t p) { return 0.5 * RealMatrix::identity(p); }

/// Max coefficient error of char_poly(M) against prod (z - target), relative
/// to max(1, largest target coefficient).
inline double coefficient_error(const RealMatrix& m, std::span<const Complex> targets) {
  const auto got = char_poly(m);
  const auto want = poly_from_roots(targets);
  if (got.size() != want.size()) return std::numeric_limits<double>::infinity();
  double err = 0.0;
  for (std::size_t k = 0; k < got.size(); ++k) err = std::max(err, std::abs(got[k] - want[k]));
  return err / std::max(1.0, max_abs(std::span<const double>(want)));
}

namespace detail {

struct PoleFactors {
  std::vector<double> real_roots;
  std::vector<Complex> pairs;  // upper half-plane representatives
};

inline PoleFactors split_conjugate_pairs(std::span<const Complex> poles, double tol = 1e-9) {
  PoleFactors f;
  std::vector<bool> used(poles.size(), false);
  for (std::size_t i = 0; i < poles.size(); ++i) {
    if (used[i]) continue;
    const auto& z = poles[i];
    const double scale = std::max(1.0, std::abs(z));
    if (std::abs(z.imag()) <= tol * scale) {
      f.real_roots.push_back(z.real());
      used[i] = true;
      continue;
    }
    std::size_t best = poles.size();
    double dist = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < poles.size(); ++j) {
      if (used[j] || j == i) continue;
      const double d = std::abs(poles[j] - std::conj(z));
      if (d < dist) {
        dist = d;
        best = j;
      }
    }
    if (best == poles.size() || dist > tol * scale) {
      std::ostringstream os;
      os << "target poles are not closed under conjugation: no partner for " << z;
      throw InputError(os.str());
    }
    used[i] = used[best] = true;
    f.pairs.push_back(z.imag() > 0 ? z : std::conj(z));
  }
  return f;
}

/// Single-input eigenvalue assignment for (Ad + b f) via the controller
/// Hessenberg form. Returns f as a row, or nothing if b is zero.
inline std::optional<RealVector> assign_single_input(const RealMatrix& ad, const RealVector& b, const PoleFactors& poles) {
  const std::size_t n = ad.rows();
  const auto p0 = make_reflector(b);
  if (p0.alpha == 0.0) return std::nullopt;
  RealMatrix a1 = ad;
  reflect_rows(a1, p0, 0);
  reflect_cols(a1, p0, 0);
  const auto hf = hessenberg(a1);
  RealMatrix q = RealMatrix::identity(n);
  reflect_rows(q, p0, 0);  // P0 (symmetric)
  q = q * hf.Q;
  const auto& h = hf.H;

  double d = p0.alpha;
  for (std::size_t i = 1; i < n; ++i) d *= h(i, i - 1);
  if (d == 0.0 || !std::isfinite(d)) return std::nullopt;

  // e_n^T prod (H - lambda_i I)
  RealVector row(n, 0.0);
  row[n - 1] = 1.0;
  auto times_h = [&](const RealVector& r) {
    RealVector out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (r[i] == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[j] += r[i] * h(i, j);
    }
    return out;
  };
  for (double lam : poles.real_roots) {
    auto rh = times_h(row);
    for (std::size_t j = 0; j < n; ++j) rh[j] -= lam * row[j];
    row = std::move(rh);
  }
  for (const auto& z : poles.pairs) {
    const auto rh = times_h(row);
    auto rhh = times_h(rh);
    for (std::size_t j = 0; j < n; ++j) rhh[j] += -2.0 * z.real() * rh[j] + std::norm(z) * row[j];
    row = std::move(rhh);
  }

  RealVector f(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += row[i] * q(j, i);
    f[j] = -s / d;
  }
  if (!std::all_of(f.begin(), f.end(), [](double x) { return std::isfinite(x); })) return std::nullopt;
  return f;
}

inline void validate_targets(std::span<const Complex> targets) {
  for (const auto& z : targets) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) throw InputError("target pole is not finite");
    if (!(std::abs(z) < 1.0)) {
      std::ostringstream os;
      os << "target pole " << z << " is not strictly inside the unit disk";
      throw InputError(os.str());
    }
  }
  split_conjugate_pairs(targets);
}

/// Orthonormal basis (columns) of the null space of m, dimension `dim`,
/// taken from the smallest right singular vectors.
template <typename T>
Matrix<T> null_basis(const Matrix<T>& m, std::size_t dim) {
  const auto svd = jacobi_svd(m);
  const std::size_t n = m.cols();
  return svd.V.block(0, n - dim, n, dim);
}

/// Robust eigenstructure assignment on the dual problem (Kautsky, Nichols
/// and Van Dooren, method 0, with complex pairs held as real/imaginary
/// column pairs). Eigenvectors are constrained to the admissible subspaces
/// and rotated, one column at a time, towards the orthogonal complement of
/// the others, which keeps the closed-loop eigenvector matrix well
/// conditioned. Returns nothing when the eigenvector matrix ends up
/// singular (e.g. a pole repeated more than p times).
inline std::optional<RealMatrix> robust_placement(const RealMatrix& a, const RealMatrix& c, const PoleFactors& poles,
                                                  int sweeps = 30) {
  const std::size_t n = a.rows();
  const std::size_t p = c.rows();
  const RealMatrix ad = a.transpose();
  const RealMatrix bd = c.transpose();
  const RealMatrix u = orthonormal_completion(bd);
  const RealMatrix u0 = u.block(0, 0, n, p);
  const RealMatrix u1t = u.block(0, p, n, n - p).transpose();
  const RealMatrix z = u0.transpose() * bd;

  // Column layout: real poles, then (Re, Im) pairs.
  struct Slot {
    Complex pole;
    bool pair;
    ComplexMatrix basis;  // admissible eigenvector subspace, n x p
  };
  std::vector<Slot> slots;
  auto admissible = [&](Complex lambda) {
    if (n == p) return ComplexMatrix::identity(n);
    ComplexMatrix shifted = to_complex(ad);
    for (std::size_t i = 0; i < n; ++i) shifted(i, i) -= lambda;
    return null_basis(to_complex(u1t) * shifted, p);
  };
  for (double r : poles.real_roots) slots.push_back({Complex(r, 0.0), false, admissible(Complex(r, 0.0))});
  for (const auto& z2 : poles.pairs) slots.push_back({z2, true, admissible(z2)});

  RealMatrix x(n, n);
  std::vector<std::size_t> first_col;
  {
    std::size_t col = 0;
    std::vector<std::pair<Complex, std::size_t>> seen;  // repeated poles take successive basis vectors
    for (const auto& s : slots) {
      std::size_t k = 0;
      for (auto& [pole, count] : seen)
        if (std::abs(pole - s.pole) <= 1e-12 * std::max(1.0, std::abs(pole))) k = count++;
      if (k == 0) seen.emplace_back(s.pole, 1);
      const std::size_t pick = k % p;
      first_col.push_back(col);
      for (std::size_t i = 0; i < n; ++i) {
        x(i, col) = s.basis(i, pick).real();
        if (s.pair) x(i, col + 1) = s.basis(i, pick).imag();
      }
      col += s.pair ? 2 : 1;
    }
  }

  auto normalize = [&](std::size_t col, bool pair) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x(i, col) * x(i, col) + (pair ? x(i, col + 1) * x(i, col + 1) : 0.0);
    s = std::sqrt(s);
    if (s == 0.0) return false;
    for (std::size_t i = 0; i < n; ++i) {
      x(i, col) /= s;
      if (pair) x(i, col + 1) /= s;
    }
    return true;
  };
  for (std::size_t k = 0; k < slots.size(); ++k)
    if (!normalize(first_col[k], slots[k].pair)) return std::nullopt;

  if (n > 1) {
    for (int sweep = 0; sweep < sweeps; ++sweep) {
      for (std::size_t k = 0; k < slots.size(); ++k) {
        const auto& s = slots[k];
        const std::size_t col = first_col[k];
        const std::size_t width = s.pair ? 2 : 1;
        if (width >= n) continue;
        // Orthogonal complement of the other columns.
        RealMatrix others(n - width, n);
        for (std::size_t j = 0, r = 0; j < n; ++j) {
          if (j >= col && j < col + width) continue;
          for (std::size_t i = 0; i < n; ++i) others(r, i) = x(i, j);
          ++r;
        }
        const RealMatrix y = null_basis(others, width);
        ComplexMatrix target(n, 1);
        for (std::size_t i = 0; i < n; ++i) target(i, 0) = s.pair ? Complex(y(i, 0), y(i, 1)) : Complex(y(i, 0), 0.0);
        const ComplexMatrix proj = s.basis * (s.basis.adjoint() * target);
        if (frobenius(proj) <= 1e-12) continue;
        RealMatrix saved = x.block(0, col, n, width);
        for (std::size_t i = 0; i < n; ++i) {
          x(i, col) = proj(i, 0).real();
          if (s.pair) x(i, col + 1) = proj(i, 0).imag();
        }
        if (!normalize(col, s.pair)) x.set_block(0, col, saved);
      }
    }
  }

  // Closed loop of the dual problem: M X = X Lambda.
  RealMatrix lam(n, n);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const std::size_t col = first_col[k];
    const Complex z2 = slots[k].pole;
    lam(col, col) = z2.real();
    if (slots[k].pair) {
      lam(col, col + 1) = z2.imag();
      lam(col + 1, col) = -z2.imag();
      lam(col + 1, col + 1) = z2.real();
    }
  }
  RealMatrix m;
  try {
    m = solve(x.transpose(), (x * lam).transpose()).transpose();
  } catch (const SingularityError&) {
    return std::nullopt;
  }
  // A_d + B_d K^T = M.
  RealMatrix kt;
  try {
    kt = solve(z, u0.transpose() * (m - ad));
  } catch (const SingularityError&) {
    return std::nullopt;
  }
  if (!all_finite(kt)) return std::nullopt;
  return kt.transpose();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Gains

struct PolePlacementOptions {
  double tol_rank = kDefaultTolRank;
  std::uint64_t seed = 20240601;
  /// Random reductions to a single output tried when p > 1.
  int random_candidates = 6;
};

/// K (n x p) with det(zI - A - K C) = prod (z - target_i), for an
/// observable pair. Works on the dual state-feedback problem (A^T, C^T).
/// With several outputs the robust eigenstructure assignment is tried
/// first. If it is inaccurate (typically a pole repeated more than p
/// times), the problem is reduced to a single output through a
/// combination w and, when needed, a preliminary random feedback that
/// makes the closed loop cyclic. Among accurate reductions the one whose
/// closed loop is closest to normal wins (Henrici departure); otherwise
/// the most accurate.
inline RealMatrix place_poles_observable(const RealMatrix& a, const RealMatrix& c, std::span<const Complex> targets,
                                         const PolePlacementOptions& opt = {}) {
  detail::require_pair(a, c, "place_poles_observable");
  require_finite(a, "place_poles_observable");
  require_finite(c, "place_poles_observable");
  const std::size_t n = a.rows();
  const std::size_t p = c.rows();
  if (targets.size() != n) {
    std::ostringstream os;
    os << "place_poles_observable: expected " << n << " target poles, got " << targets.size();
    throw InputError(os.str());
  }
  const auto factors = detail::split_conjugate_pairs(targets);
  if (kalman_decompose(a, c, opt.tol_rank).q != n)
    throw StructuralError("place_poles_observable: the pair (A, C) is not observable");

  const RealMatrix ad = a.transpose();
  const RealMatrix bd = c.transpose();
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  struct Candidate {
    RealMatrix k;
    double err;
    double departure;
  };
  std::optional<Candidate> best;
  constexpr double accurate = 1e-9;
  auto consider = [&](const RealMatrix& f0, const RealVector& w) {
    const RealMatrix ad0 = ad + bd * f0;
    const auto b = bd * w;
    const auto f = detail::assign_single_input(ad0, b, factors);
    if (!f) return;
    RealMatrix fd = f0;
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < n; ++j) fd(i, j) += w[i] * (*f)[j];
    RealMatrix k = fd.transpose();
    if (!all_finite(k)) return;
    const RealMatrix closed = a + k * c;
    const double err = coefficient_error(closed, targets);
    if (!std::isfinite(err)) return;
    double fro2 = 0.0;
    for (double x : closed.data()) fro2 += x * x;
    double eig2 = 0.0;
    for (const auto& z : targets) eig2 += std::norm(z);
    const double departure = std::sqrt(std::max(0.0, fro2 - eig2));
    const bool better =
        !best || (err <= accurate && best->err <= accurate ? departure < best->departure : err < best->err);
    if (better) best = Candidate{std::move(k), err, departure};
  };

  if (p > 1) {
    if (auto k = detail::robust_placement(a, c, factors)) {
      const double err = coefficient_error(a + *k * c, targets);
      if (err <= accurate) return *k;
    }
  }

  const RealMatrix no_feedback(p, n);
  for (std::size_t i = 0; i < p; ++i) {
    RealVector w(p, 0.0);
    w[i] = 1.0;
    consider(no_feedback, w);
  }
  if (p > 1) {
    const double scale = std::max(norm_inf(a), 1.0) / std::max(norm_inf(c), std::numeric_limits<double>::min());
    for (int t = 0; t < 2 * opt.random_candidates; ++t) {
      RealVector w(p);
      for (auto& x : w) x = normal(rng);
      RealMatrix f0(p, n);
      if (t >= opt.random_candidates)
        for (auto& x : f0.data()) x = scale * normal(rng) / static_cast<double>(n);
      consider(f0, w);
    }
  }
  if (!best) throw NumericalFailure("place_poles_observable: no usable single-output reduction");
  return best->k;
}

struct StabilizingGain {
  RealMatrix K;
  std::size_t q = 0;
  Spectrum assigned_poles;
  Spectrum inherited_poles;
};

/// Output-injection gain K with A + K C Schur stable, for a detectable
/// pair. Observable pairs get all n poles assigned; otherwise the targets
/// (q of them) go to the observable block of the Kalman decomposition and
/// the unobservable eigenvalues are inherited: K = T [K1; 0].
inline StabilizingGain place_stabilizing_gain(const RealMatrix& a, const RealMatrix& c, const DesignConfig& cfg) {
  const auto det = is_detectable(a, c, cfg.tol.analysis());
  if (!det.detectable) {
    std::ostringstream os;
    os << "the pair (A, C) is not detectable; unobservable unstable eigenvalues:";
    for (const auto& z : det.witness) os << ' ' << z;
    throw InfeasibleError(os.str(), det.witness);
  }
  const auto kd = kalman_decompose(a, c, cfg.tol.rank);
  const std::size_t n = a.rows();
  const std::size_t p = c.rows();

  StabilizingGain g;
  g.q = kd.q;
  const auto targets = cfg.target_poles.empty() ? default_target_poles(kd.q) : cfg.target_poles;
  if (targets.size() != kd.q) {
    std::ostringstream os;
    os << "expected " << kd.q << " target poles for the observable part, got " << targets.size();
    throw InputError(os.str());
  }
  detail::validate_targets(targets);
  g.assigned_poles = targets;
  detail::sort_spectrum(g.assigned_poles);

  const PolePlacementOptions ppo{cfg.tol.rank, cfg.seed};
  if (kd.observable()) {
    g.K = place_poles_observable(a, c, targets, ppo);
  } else {
    const auto a22 = is_schur_stable(kd.A22);
    if (!a22.stable) {
      // PBH and the staircase disagree on a nearly unobservable mode; report what the staircase saw.
      std::vector<Complex> witness;
      for (const auto& z : a22.spectrum)
        if (std::abs(z) >= 1.0 - cfg.tol.boundary) witness.push_back(z);
      throw InfeasibleError("unobservable block of the Kalman decomposition is not Schur stable", witness);
    }
    g.inherited_poles = a22.spectrum;
    const RealMatrix k1 = place_poles_observable(kd.A11, kd.C1, targets, ppo);
    g.K = kd.T * vstack(k1, RealMatrix(n - kd.q, p));
  }
  if (!is_schur_stable(a + g.K * c, cfg.margin).stable)
    throw NumericalFailure("stabilizing gain does not make A + K C Schur stable with the requested margin");
  return g;
}

/// X = T^-1 [I_p - Phi; Lambda]
inline RealMatrix build_X(const RealMatrix& t, const RealMatrix& phi, const RealMatrix& lambda_block,
                          double tol_singular = kDefaultTolSingular) {
  require_square(t, "build_X");
  require_square(phi, "build_X");
  const std::size_t n = t.rows();
  const std::size_t p = phi.rows();
  if (p > n || lambda_block.rows() != n - p || (n > p && lambda_block.cols() != p)) {
    std::ostringstream os;
    os << "build_X: Lambda must be " << n - p << "x" << p << ", got " << lambda_block.rows() << "x"
       << lambda_block.cols();
    throw DimensionError(os.str());
  }
  const RealMatrix top = RealMatrix::identity(p) - phi;
  const RealMatrix rhs = n > p ? vstack(top, lambda_block) : top;
  return solve(t, rhs, tol_singular);
}

inline RealMatrix augmented_matrix(const RealMatrix& a, const RealMatrix& c, const RealMatrix& l, const RealMatrix& f) {
  const std::size_t p = c.rows();
  return block2x2(a - l * c, f, -c, RealMatrix::identity(p));
}

inline RealMatrix augmented_matrix(const PiObserver& obs) {
  return augmented_matrix(obs.system.A(), obs.system.C(), obs.L, obs.F);
}

/// F = -(A - L C) X + X (I_p - C X)
inline RealMatrix integral_gain(const RealMatrix& a, const RealMatrix& c, const RealMatrix& l, const RealMatrix& x) {
  const RealMatrix ip = RealMatrix::identity(c.rows());
  return -((a - l * c) * x) + x * (ip - c * x);
}

namespace detail {

inline void validate_config(const SystemRealization& sys, const RealMatrix& phi, const RealMatrix& lambda, double margin) {
  const std::size_t n = sys.n(), p = sys.p();
  if (!(margin >= 0.0) || !(margin < 1.0)) throw InputError("margin must lie in [0, 1)");
  if (phi.rows() != p || phi.cols() != p) {
    std::ostringstream os;
    os << "Phi must be " << p << "x" << p << ", got " << phi.rows() << "x" << phi.cols();
    throw DimensionError(os.str());
  }
  require_finite(phi, "Phi");
  if (max_abs(phi) == 0.0) throw InputError("Phi must be nonzero");
  const auto v = is_schur_stable(phi);
  if (!v.stable) {
    std::ostringstream os;
    os << "Phi must be Schur stable, spectral radius is " << v.spectral_radius;
    throw InputError(os.str());
  }
  if (lambda.rows() != n - p || (n > p && lambda.cols() != p)) {
    std::ostringstream os;
    os << "Lambda must be " << n - p << "x" << p << ", got " << lambda.rows() << "x" << lambda.cols();
    throw DimensionError(os.str());
  }
  require_finite(lambda, "Lambda");
}

}  // namespace detail

inline PiObserver design_pi_observer(const SystemRealization& sys, const DesignConfig& cfg) {
  const std::size_t n = sys.n(), p = sys.p();
  const RealMatrix phi = cfg.phi.value_or(default_phi(p));
  const RealMatrix lambda = cfg.lambda_block.value_or(RealMatrix(n - p, n > p ? p : 0));
  detail::validate_config(sys, phi, lambda, cfg.margin);

  const auto& a = sys.A();
  const auto& c = sys.C();

  StabilizingGain gain;
  try {
    gain = place_stabilizing_gain(a, c, cfg);
  } catch (const NumericalFailure& e) {
    throw DesignFailure(2, std::string("step 2 (stabilizing gain K): ") + e.what());
  } catch (const StructuralError& e) {
    throw DesignFailure(2, std::string("step 2 (stabilizing gain K): ") + e.what());
  }

  RealMatrix t;
  try {
    t = complete_row_basis(c, cfg.tol.rank);
  } catch (const RankDeficiencyError& e) {
    throw DesignFailure(3, std::string("step 3 (row basis T): ") + e.what());
  }

  PiObserver obs{sys, {}, {}, gain.K, t, {}, phi, lambda, gain.q, gain.assigned_poles, gain.inherited_poles};
  try {
    obs.X = build_X(t, phi, lambda, cfg.tol.singular);
  } catch (const NumericalFailure& e) {
    throw DesignFailure(4, std::string("step 4 (X): ") + e.what());
  }
  obs.L = obs.X - obs.K;
  obs.F = integral_gain(a, c, obs.L, obs.X);

  const auto v = is_schur_stable(augmented_matrix(obs), cfg.margin);
  if (!v.stable) {
    std::ostringstream os;
    os << "step 4 (L, F): augmented matrix has spectral radius " << v.spectral_radius << ", needs < "
       << 1.0 - cfg.margin;
    throw DesignFailure(4, os.str());
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Verification

namespace detail {

/// Kuhn augmenting-path bipartite matching restricted to edges with d <= limit.
inline bool perfect_matching(const std::vector<std::vector<double>>& d, double limit) {
  const std::size_t n = d.size();
  std::vector<std::size_t> match(n, n);
  std::vector<bool> seen;
  std::function<bool(std::size_t)> augment = [&](std::size_t u) {
    for (std::size_t v = 0; v < n; ++v) {
      if (d[u][v] > limit || seen[v]) continue;
      seen[v] = true;
      if (match[v] == n || augment(match[v])) {
        match[v] = u;
        return true;
      }
    }
    return false;
  };
  for (std::size_t u = 0; u < n; ++u) {
    seen.assign(n, false);
    if (!augment(u)) return false;
  }
  return true;
}

}  // namespace detail

/// Smallest d such that the two multisets can be matched one-to-one with
/// every pair within d (bottleneck matching). Infinite for different sizes.
inline double pairing_distance(std::span<const Complex> x, std::span<const Complex> y) {
  if (x.size() != y.size()) return std::numeric_limits<double>::infinity();
  if (x.empty()) return 0.0;
  const std::size_t n = x.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n));
  std::vector<double> values;
  values.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      d[i][j] = std::abs(x[i] - y[j]);
      values.push_back(d[i][j]);
    }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::size_t lo = 0, hi = values.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (detail::perfect_matching(d, values[mid]))
      hi = mid;
    else
      lo = mid + 1;
  }
  return values[lo];
}

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
};

struct VerificationReport {
  double spectral_radius = 0.0;
  bool schur_stable = false;
  Spectrum augmented;      // sigma([[A - L C, F], [-C, I]])
  Spectrum closed_loop;    // sigma(A + K C)
  Spectrum phi_spectrum;   // sigma(Phi)
  double pairing_distance = 0.0;
  double similarity_residual = 0.0;
  double output_identity_residual = 0.0;
  std::vector<CheckResult> checks;

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
  }

  std::vector<std::string> failed() const {
    std::vector<std::string> out;
    for (const auto& c : checks)
      if (!c.pass) out.push_back(c.name);
    return out;
  }
};

inline VerificationReport verify_design(const PiObserver& obs, double margin = 1e-6, const Tolerances& tol = {}) {
  const auto& a = obs.system.A();
  const auto& c = obs.system.C();
  const std::size_t n = obs.system.n(), p = obs.system.p();
  auto shape = [](const RealMatrix& m, std::size_t r, std::size_t cc, const char* what) {
    if (m.rows() != r || m.cols() != cc) {
      std::ostringstream os;
      os << "verify_design: " << what << " must be " << r << "x" << cc << ", got " << m.rows() << "x" << m.cols();
      throw DimensionError(os.str());
    }
  };
  shape(obs.L, n, p, "L");
  shape(obs.F, n, p, "F");
  shape(obs.K, n, p, "K");
  shape(obs.X, n, p, "X");
  shape(obs.phi, p, p, "Phi");

  VerificationReport r;
  const RealMatrix aug = augmented_matrix(a, c, obs.L, obs.F);
  const auto sv = is_schur_stable(aug, margin);
  r.spectral_radius = sv.spectral_radius;
  r.schur_stable = sv.stable;
  r.augmented = sv.spectrum;
  r.closed_loop = eigenvalues(a + obs.K * c);
  r.phi_spectrum = eigenvalues(obs.phi);

  Spectrum expected = r.closed_loop;
  expected.insert(expected.end(), r.phi_spectrum.begin(), r.phi_spectrum.end());
  detail::sort_spectrum(expected);
  r.pairing_distance = pairing_distance(r.augmented, expected);

  const RealMatrix ip = RealMatrix::identity(p);
  const RealMatrix m = block2x2(RealMatrix::identity(n), obs.X, RealMatrix(p, n), ip);
  const RealMatrix m_inv = block2x2(RealMatrix::identity(n), -obs.X, RealMatrix(p, n), ip);
  const RealMatrix target = block2x2(a + obs.K * c, RealMatrix(n, p), -c, obs.phi);
  r.similarity_residual = max_abs(m_inv * aug * m - target);
  const double sim_scale = std::max(1.0, max_abs(aug)) * std::pow(std::max(1.0, max_abs(obs.X)), 2);

  r.output_identity_residual = max_abs(ip - c * obs.X - obs.phi);

  r.checks.push_back({"schur_stability", r.schur_stable, r.spectral_radius, 1.0 - margin});
  r.checks.push_back({"spectrum_split", r.pairing_distance <= tol.pairing, r.pairing_distance, tol.pairing});
  r.checks.push_back({"similarity", r.similarity_residual <= tol.similarity * sim_scale, r.similarity_residual,
                      tol.similarity * sim_scale});
  r.checks.push_back({"output_identity", r.output_identity_residual <= tol.output_identity,
                      r.output_identity_residual, tol.output_identity});
  return r;
}

}  // namespace piobs

#pragma once

// Structural analysis of an output pair (A, C): Schur stability, PBH
// eigenvalue observability, detectability and the observability staircase
// (Kalman) decomposition.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "piobs/errors.hpp"
#include "piobs/linalg.hpp"

namespace piobs {

struct AnalysisOptions {
  double tol_rank = kDefaultTolRank;
  /// Eigenvalues with |1 - |lambda|| <= tol_boundary count as unstable.
  double tol_boundary = 1e-9;
  /// Eigenvalues closer than this (relative to max(1, |lambda|)) share one PBH test.
  double tol_cluster = 1e-7;
};

/// Plant x(k+1) = A x(k) + B u(k), y(k) = C x(k), validated on construction.
class SystemRealization {
 public:
  SystemRealization(RealMatrix a, RealMatrix b, RealMatrix c, double tol_rank = kDefaultTolRank,
                    std::string name = {})
      : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), name_(std::move(name)) {
    require_finite(a_, "system A");
    require_finite(b_, "system B");
    require_finite(c_, "system C");
    if (a_.rows() == 0 || !a_.is_square()) throw DimensionError("system: A must be a non-empty square matrix");
    const std::size_t n = a_.rows();
    if (b_.rows() != n || b_.cols() == 0) {
      std::ostringstream os;
      os << "system: B must be " << n << "xm with m >= 1, got " << b_.rows() << "x" << b_.cols();
      throw DimensionError(os.str());
    }
    if (c_.cols() != n || c_.rows() == 0) {
      std::ostringstream os;
      os << "system: C must be px" << n << " with p >= 1, got " << c_.rows() << "x" << c_.cols();
      throw DimensionError(os.str());
    }
    if (c_.rows() > n) throw RankDeficiencyError("system: C has more rows than states; rank[C] = p cannot hold", n, c_.rows());
    if (max_abs(c_) == 0.0) throw RankDeficiencyError("system: C is zero; rank[C] = p is required", 0, c_.rows());
    const std::size_t r = numerical_rank(c_, tol_rank);
    if (r < c_.rows()) {
      std::ostringstream os;
      os << "system: C must have full row rank (rank[C] = p = " << c_.rows() << "), numerical rank is " << r;
      throw RankDeficiencyError(os.str(), r, c_.rows());
    }
  }

  const RealMatrix& A() const noexcept { return a_; }
  const RealMatrix& B() const noexcept { return b_; }
  const RealMatrix& C() const noexcept { return c_; }
  const std::string& name() const noexcept { return name_; }

  std::size_t n() const noexcept { return a_.rows(); }
  std::size_t m() const noexcept { return b_.cols(); }
  std::size_t p() const noexcept { return c_.rows(); }

 private:
  RealMatrix a_, b_, c_;
  std::string name_;
};

// ---------------------------------------------------------------------------
// Schur stability

struct SchurVerdict {
  bool stable = false;
  double spectral_radius = 0.0;
  Complex worst{};  // eigenvalue of largest magnitude
  Spectrum spectrum;
};

/// Stable iff every eigenvalue satisfies |lambda| < 1 - margin.
inline SchurVerdict is_schur_stable(const RealMatrix& m, double margin = 0.0) {
  if (margin < 0.0) throw InputError("is_schur_stable: margin must be non-negative");
  SchurVerdict v;
  v.spectrum = eigenvalues(m);
  for (const auto& z : v.spectrum) {
    if (std::abs(z) >= v.spectral_radius) {
      v.spectral_radius = std::abs(z);
      v.worst = z;
    }
  }
  v.stable = v.spectral_radius < 1.0 - margin;
  return v;
}

// ---------------------------------------------------------------------------
// PBH tests

namespace detail {

inline void require_pair(const RealMatrix& a, const RealMatrix& c, const char* what) {
  require_square(a, what);
  if (c.cols() != a.rows()) {
    std::ostringstream os;
    os << what << ": C has " << c.cols() << " columns, A is " << a.rows() << "x" << a.rows();
    throw DimensionError(os.str());
  }
}

}  // namespace detail

/// Numerical rank of the complex stack [C; zI - A].
inline std::size_t pbh_rank_at(const RealMatrix& a, const RealMatrix& c, Complex z,
                               double tol_rank = kDefaultTolRank) {
  detail::require_pair(a, c, "pbh_rank_at");
  const std::size_t n = a.rows();
  const std::size_t p = c.rows();
  ComplexMatrix stack(p + n, n);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < n; ++j) stack(i, j) = c(i, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) stack(p + i, j) = (i == j ? z : Complex(0.0)) - a(i, j);
  return numerical_rank(stack, tol_rank);
}

struct EigClassification {
  Complex eigenvalue{};
  double magnitude = 0.0;
  bool stable = false;      // |lambda| < 1 - tol_boundary
  bool boundary = false;    // |lambda| within tol_boundary of 1
  bool observable = false;  // PBH rank = n at lambda
  std::size_t pbh_rank = 0;
};

/// One entry per eigenvalue, with multiplicity. PBH is evaluated once per
/// cluster of (numerically) repeated eigenvalues, at the cluster mean.
inline std::vector<EigClassification> classify_eigenvalues(const RealMatrix& a, const RealMatrix& c,
                                                           const AnalysisOptions& opt = {}) {
  detail::require_pair(a, c, "classify_eigenvalues");
  if (max_abs(c) == 0.0) throw InputError("classify_eigenvalues: C must be nonzero");
  const auto ev = eigenvalues(a);
  const std::size_t n = a.rows();

  std::vector<std::size_t> cluster_of(ev.size());
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    bool placed = false;
    for (std::size_t k = 0; k < clusters.size() && !placed; ++k) {
      const auto& head = ev[clusters[k].front()];
      if (std::abs(ev[i] - head) <= opt.tol_cluster * std::max(1.0, std::abs(head))) {
        clusters[k].push_back(i);
        cluster_of[i] = k;
        placed = true;
      }
    }
    if (!placed) {
      cluster_of[i] = clusters.size();
      clusters.push_back({i});
    }
  }

  std::vector<std::size_t> rank_of(clusters.size());
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    Complex mean{};
    for (auto i : clusters[k]) mean += ev[i];
    mean /= static_cast<double>(clusters[k].size());
    rank_of[k] = pbh_rank_at(a, c, mean, opt.tol_rank);
  }

  std::vector<EigClassification> out;
  out.reserve(ev.size());
  for (std::size_t i = 0; i < ev.size(); ++i) {
    EigClassification e;
    e.eigenvalue = ev[i];
    e.magnitude = std::abs(ev[i]);
    e.boundary = std::abs(e.magnitude - 1.0) <= opt.tol_boundary;
    e.stable = e.magnitude < 1.0 - opt.tol_boundary;
    e.pbh_rank = rank_of[cluster_of[i]];
    e.observable = e.pbh_rank == n;
    out.push_back(e);
  }
  return out;
}

struct DetectabilityVerdict {
  bool detectable = false;
  /// Unstable, unobservable eigenvalues (with multiplicity). Empty iff detectable.
  std::vector<Complex> witness;
  std::vector<EigClassification> eigen;
};

inline DetectabilityVerdict is_detectable(const RealMatrix& a, const RealMatrix& c, const AnalysisOptions& opt = {}) {
  DetectabilityVerdict v;
  v.eigen = classify_eigenvalues(a, c, opt);
  for (const auto& e : v.eigen)
    if (!e.stable && !e.observable) v.witness.push_back(e.eigenvalue);
  v.detectable = v.witness.empty();
  return v;
}

/// [C; CA; ...; CA^(n-1)]
inline RealMatrix observability_matrix(const RealMatrix& a, const RealMatrix& c) {
  detail::require_pair(a, c, "observability_matrix");
  const std::size_t n = a.rows();
  const std::size_t p = c.rows();
  RealMatrix o(n * p, n);
  RealMatrix blk = c;
  for (std::size_t k = 0; k < n; ++k) {
    o.set_block(k * p, 0, blk);
    if (k + 1 < n) blk = blk * a;
  }
  return o;
}

struct ObservabilityVerdict {
  bool observable = false;  // PBH at every eigenvalue
  std::size_t stack_rank = 0;
  bool stack_agrees = false;  // (stack_rank == n) == observable
  std::vector<EigClassification> eigen;
};

inline ObservabilityVerdict is_observable(const RealMatrix& a, const RealMatrix& c, const AnalysisOptions& opt = {}) {
  ObservabilityVerdict v;
  v.eigen = classify_eigenvalues(a, c, opt);
  v.observable = std::all_of(v.eigen.begin(), v.eigen.end(), [](const auto& e) { return e.observable; });
  v.stack_rank = numerical_rank(observability_matrix(a, c), opt.tol_rank);
  v.stack_agrees = (v.stack_rank == a.rows()) == v.observable;
  return v;
}

// ---------------------------------------------------------------------------
// Kalman observability decomposition

/// T^-1 A T = [[A11, 0], [A21, A22]], C T = [C1, 0], with T orthogonal.
struct KalmanDecomposition {
  RealMatrix T;
  RealMatrix A11, A21, A22, C1;
  std::size_t q = 0;  // observable subspace dimension

  bool observable() const noexcept { return q == T.rows(); }

  /// T [[A11, 0], [A21, A22]] T^T
  RealMatrix reconstruct_A() const {
    const std::size_t n = T.rows();
    const RealMatrix blk = block2x2(A11, RealMatrix(q, n - q), A21, A22);
    return T * blk * T.transpose();
  }

  RealMatrix reconstruct_C() const {
    return hstack(C1, RealMatrix(C1.rows(), T.rows() - q)) * T.transpose();
  }
};

/// Observability staircase: the controllability staircase of the dual pair
/// (A^T, C^T), built from orthogonal transformations. Rank decisions at
/// each stage keep singular values above tol_rank * max(||A||_F, ||C||_F).
/// Observable pairs yield q = n with T = I.
inline KalmanDecomposition kalman_decompose(const RealMatrix& a, const RealMatrix& c, double tol_rank = kDefaultTolRank) {
  detail::require_pair(a, c, "kalman_decompose");
  require_finite(a, "kalman_decompose");
  require_finite(c, "kalman_decompose");
  const std::size_t n = a.rows();
  const std::size_t p = c.rows();
  const double threshold = tol_rank * std::max(frobenius(a), frobenius(c));

  RealMatrix ad = a.transpose();
  RealMatrix bd = c.transpose();
  RealMatrix q_total = RealMatrix::identity(n);

  std::size_t offset = 0;
  std::size_t prev = 0;
  bool first = true;
  while (offset < n) {
    const RealMatrix z = first ? bd.block(offset, 0, n - offset, p) : ad.block(offset, prev, n - offset, offset - prev);
    const auto svd = jacobi_svd(z);
    std::size_t r = 0;
    while (r < svd.sigma.size() && r < n - offset && svd.sigma[r] > threshold) ++r;
    if (r == 0) break;

    RealMatrix basis(n - offset, r);
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t i = 0; i < n - offset; ++i) basis(i, j) = svd.W(i, j) / svd.sigma[j];
    const RealMatrix qk = orthonormal_completion(basis);
    const RealMatrix qkt = qk.transpose();

    ad.set_block(offset, 0, qkt * ad.block(offset, 0, n - offset, n));
    ad.set_block(0, offset, ad.block(0, offset, n, n - offset) * qk);
    bd.set_block(offset, 0, qkt * bd.block(offset, 0, n - offset, p));
    q_total.set_block(0, offset, q_total.block(0, offset, n, n - offset) * qk);

    // Below the rank-r leading rows the current block is numerically zero.
    if (first) {
      for (std::size_t i = offset + r; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) bd(i, j) = 0.0;
    } else {
      for (std::size_t i = offset + r; i < n; ++i)
        for (std::size_t j = prev; j < offset; ++j) ad(i, j) = 0.0;
    }
    prev = offset;
    offset += r;
    first = false;
  }

  KalmanDecomposition kd;
  kd.q = offset;
  if (kd.q == n) {
    kd.T = RealMatrix::identity(n);
    kd.A11 = a;
    kd.A21 = RealMatrix(0, n);
    kd.A22 = RealMatrix(0, 0);
    kd.C1 = c;
    return kd;
  }
  const std::size_t q = kd.q;
  for (std::size_t i = q; i < n; ++i) {
    for (std::size_t j = 0; j < q; ++j) ad(i, j) = 0.0;
    for (std::size_t j = 0; j < p; ++j) bd(i, j) = 0.0;
  }
  kd.T = q_total;
  kd.A11 = ad.block(0, 0, q, q).transpose();
  kd.A21 = ad.block(0, q, q, n - q).transpose();
  kd.A22 = ad.block(q, q, n - q, n - q).transpose();
  kd.C1 = bd.block(0, 0, q, p).transpose();
  return kd;
}

}  // namespace piobs

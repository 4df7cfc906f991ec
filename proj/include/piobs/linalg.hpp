#pragma once

// Dense real and complex matrix numerics used throughout piobs: a small
// value-semantic matrix type, eigenvalues (balanced Hessenberg + Francis
// double-shift QR), singular values (one-sided Jacobi), LU solves with a
// condition estimate, characteristic polynomials and basis completion.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "piobs/errors.hpp"

namespace piobs {

using Complex = std::complex<double>;
using RealVector = std::vector<double>;

/// Multiset of eigenvalues. Sorted by real part, then imaginary part.
using Spectrum = std::vector<Complex>;

namespace detail {

template <typename T>
struct is_complex : std::false_type {};
template <typename T>
struct is_complex<std::complex<T>> : std::true_type {};

template <typename T>
inline constexpr bool is_complex_v = is_complex<T>::value;

inline double conj_if(double x) { return x; }
inline Complex conj_if(const Complex& x) { return std::conj(x); }

inline bool finite(double x) { return std::isfinite(x); }
inline bool finite(const Complex& x) { return std::isfinite(x.real()) && std::isfinite(x.imag()); }

}  // namespace detail

/// Row-major dense matrix. Zero extents are allowed so that empty blocks
/// (an absent unobservable part, an (n-p) x p block with n = p) compose
/// without special cases.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::initializer_list<std::initializer_list<T>> init) {
    rows_ = init.size();
    cols_ = rows_ == 0 ? 0 : init.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw DimensionError("ragged matrix initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  static Matrix diagonal(std::span<const T> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  static Matrix column(std::span<const T> v) {
    Matrix m(v.size(), 1);
    std::copy(v.begin(), v.end(), m.data_.begin());
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<T> col(std::size_t j) const {
    std::vector<T> out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }

  /// Plain transpose (no conjugation).
  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Matrix adjoint() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = detail::conj_if((*this)(i, j));
    return t;
  }

  Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    if (r0 + nr > rows_ || c0 + nc > cols_) throw DimensionError("block out of range");
    Matrix b(nr, nc);
    for (std::size_t i = 0; i < nr; ++i)
      for (std::size_t j = 0; j < nc; ++j) b(i, j) = (*this)(r0 + i, c0 + j);
    return b;
  }

  void set_block(std::size_t r0, std::size_t c0, const Matrix& b) {
    if (r0 + b.rows() > rows_ || c0 + b.cols() > cols_) throw DimensionError("set_block out of range");
    for (std::size_t i = 0; i < b.rows(); ++i)
      for (std::size_t j = 0; j < b.cols(); ++j) (*this)(r0 + i, c0 + j) = b(i, j);
  }

  Matrix& operator+=(const Matrix& o) {
    require_same_shape(o, "+");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }

  Matrix& operator-=(const Matrix& o) {
    require_same_shape(o, "-");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }

  Matrix& operator*=(T s) {
    for (auto& x : data_) x *= s;
    return *this;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  void require_same_shape(const Matrix& o, const char* op) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) {
      std::ostringstream os;
      os << "shape mismatch in '" << op << "': " << rows_ << "x" << cols_ << " vs " << o.rows_ << "x"
         << o.cols_;
      throw DimensionError(os.str());
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using RealMatrix = Matrix<double>;
using ComplexMatrix = Matrix<Complex>;

template <typename T>
Matrix<T> operator+(Matrix<T> a, const Matrix<T>& b) {
  a += b;
  return a;
}

template <typename T>
Matrix<T> operator-(Matrix<T> a, const Matrix<T>& b) {
  a -= b;
  return a;
}

template <typename T>
Matrix<T> operator-(Matrix<T> a) {
  a *= T{-1};
  return a;
}

template <typename T>
Matrix<T> operator*(T s, Matrix<T> a) {
  a *= s;
  return a;
}

template <typename T>
Matrix<T> operator*(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "shape mismatch in '*': " << a.rows() << "x" << a.cols() << " times " << b.rows() << "x"
       << b.cols();
    throw DimensionError(os.str());
  }
  Matrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      if (aik == T{}) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

template <typename T>
std::vector<T> operator*(const Matrix<T>& a, std::span<const T> x) {
  if (a.cols() != x.size()) throw DimensionError("matrix-vector shape mismatch");
  std::vector<T> y(a.rows(), T{});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) y[i] += a(i, j) * x[j];
  return y;
}

template <typename T>
std::vector<T> operator*(const Matrix<T>& a, const std::vector<T>& x) {
  return a * std::span<const T>(x);
}

inline ComplexMatrix to_complex(const RealMatrix& m) {
  ComplexMatrix c(m.rows(), m.cols());
  for (std::size_t k = 0; k < m.size(); ++k) c.data()[k] = m.data()[k];
  return c;
}

/// Largest absolute entry.
template <typename T>
double max_abs(const Matrix<T>& m) {
  double r = 0.0;
  for (const auto& x : m.data()) r = std::max(r, std::abs(x));
  return r;
}

inline double max_abs(std::span<const double> v) {
  double r = 0.0;
  for (double x : v) r = std::max(r, std::abs(x));
  return r;
}

/// Induced infinity norm (max absolute row sum).
template <typename T>
double norm_inf(const Matrix<T>& m) {
  double r = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += std::abs(m(i, j));
    r = std::max(r, s);
  }
  return r;
}

/// Induced 1-norm (max absolute column sum).
template <typename T>
double norm_one(const Matrix<T>& m) {
  double r = 0.0;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) s += std::abs(m(i, j));
    r = std::max(r, s);
  }
  return r;
}

template <typename T>
double frobenius(const Matrix<T>& m) {
  double s = 0.0;
  for (const auto& x : m.data()) s += std::norm(x);
  return std::sqrt(s);
}

template <typename T>
bool all_finite(const Matrix<T>& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](const T& x) { return detail::finite(x); });
}

template <typename T>
void require_finite(const Matrix<T>& m, const char* what) {
  if (!all_finite(m)) throw InputError(std::string(what) + ": matrix has non-finite entries");
}

template <typename T>
void require_square(const Matrix<T>& m, const char* what) {
  if (!m.is_square()) {
    std::ostringstream os;
    os << what << ": expected a square matrix, got " << m.rows() << "x" << m.cols();
    throw DimensionError(os.str());
  }
}

template <typename T>
Matrix<T> hstack(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows()) throw DimensionError("hstack: row counts differ");
  Matrix<T> m(a.rows(), a.cols() + b.cols());
  m.set_block(0, 0, a);
  m.set_block(0, a.cols(), b);
  return m;
}

template <typename T>
Matrix<T> vstack(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols()) throw DimensionError("vstack: column counts differ");
  Matrix<T> m(a.rows() + b.rows(), a.cols());
  m.set_block(0, 0, a);
  m.set_block(a.rows(), 0, b);
  return m;
}

/// [[a, b], [c, d]]
template <typename T>
Matrix<T> block2x2(const Matrix<T>& a, const Matrix<T>& b, const Matrix<T>& c, const Matrix<T>& d) {
  if (a.rows() != b.rows() || c.rows() != d.rows() || a.cols() != c.cols() || b.cols() != d.cols())
    throw DimensionError("block2x2: incompatible block shapes");
  Matrix<T> m(a.rows() + c.rows(), a.cols() + b.cols());
  m.set_block(0, 0, a);
  m.set_block(0, a.cols(), b);
  m.set_block(a.rows(), 0, c);
  m.set_block(a.rows(), a.cols(), d);
  return m;
}

// ---------------------------------------------------------------------------
// Householder reflections

namespace detail {

/// Reflector P = I - beta v v^T with P x = -sign(x0) ||x|| e1. v[0] = 1.
struct Reflector {
  RealVector v;
  double beta = 0.0;
  double alpha = 0.0;  // resulting leading entry
};

inline Reflector make_reflector(std::span<const double> x) {
  Reflector h;
  h.v.assign(x.begin(), x.end());
  if (x.empty()) return h;
  double scale = 0.0;
  for (double xi : x) scale = std::max(scale, std::abs(xi));
  if (scale == 0.0) {
    h.v[0] = 1.0;
    return h;
  }
  double sigma = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) sigma += (x[i] / scale) * (x[i] / scale);
  const double x0 = x[0] / scale;
  if (sigma == 0.0) {
    h.v.assign(x.size(), 0.0);
    h.v[0] = 1.0;
    h.alpha = x[0];
    return h;
  }
  const double mu = std::sqrt(x0 * x0 + sigma);
  const double alpha = x0 <= 0.0 ? mu : -mu;
  const double v0 = x0 - alpha;
  h.v[0] = 1.0;
  for (std::size_t i = 1; i < x.size(); ++i) h.v[i] = (x[i] / scale) / v0;
  h.beta = 2.0 * v0 * v0 / (sigma + v0 * v0);
  h.alpha = alpha * scale;
  return h;
}

/// Rows [off, off+len) of m <- P m.
inline void reflect_rows(RealMatrix& m, const Reflector& h, std::size_t off) {
  if (h.beta == 0.0) return;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < h.v.size(); ++i) s += h.v[i] * m(off + i, j);
    s *= h.beta;
    for (std::size_t i = 0; i < h.v.size(); ++i) m(off + i, j) -= s * h.v[i];
  }
}

/// Columns [off, off+len) of m <- m P.
inline void reflect_cols(RealMatrix& m, const Reflector& h, std::size_t off) {
  if (h.beta == 0.0) return;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < h.v.size(); ++j) s += m(i, off + j) * h.v[j];
    s *= h.beta;
    for (std::size_t j = 0; j < h.v.size(); ++j) m(i, off + j) -= s * h.v[j];
  }
}

}  // namespace detail

struct HessenbergForm {
  RealMatrix H;  // upper Hessenberg
  RealMatrix Q;  // orthogonal, Q^T M Q = H
};

/// Orthogonal reduction to upper Hessenberg form. Reflectors act on
/// rows/columns 1..n-1 only, so the first row and column of Q are e1.
inline HessenbergForm hessenberg(const RealMatrix& m) {
  require_square(m, "hessenberg");
  const std::size_t n = m.rows();
  HessenbergForm f{m, RealMatrix::identity(n)};
  for (std::size_t k = 0; k + 2 < n; ++k) {
    RealVector x(n - k - 1);
    for (std::size_t i = k + 1; i < n; ++i) x[i - k - 1] = f.H(i, k);
    const auto h = detail::make_reflector(x);
    detail::reflect_rows(f.H, h, k + 1);
    detail::reflect_cols(f.H, h, k + 1);
    detail::reflect_cols(f.Q, h, k + 1);
    for (std::size_t i = k + 2; i < n; ++i) f.H(i, k) = 0.0;
  }
  return f;
}

/// Full orthogonal Q (n x n) whose leading r columns span the columns of
/// `basis` (n x r, assumed full column rank).
inline RealMatrix orthonormal_completion(const RealMatrix& basis) {
  const std::size_t n = basis.rows();
  RealMatrix work = basis;
  RealMatrix q = RealMatrix::identity(n);
  for (std::size_t k = 0; k < basis.cols() && k < n; ++k) {
    RealVector x(n - k);
    for (std::size_t i = k; i < n; ++i) x[i - k] = work(i, k);
    const auto h = detail::make_reflector(x);
    detail::reflect_rows(work, h, k);
    detail::reflect_cols(q, h, k);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Eigenvalues

namespace detail {

/// Diagonal similarity scaling by powers of two (no permutations).
template <typename R>
void balance(Matrix<R>& a) {
  constexpr R radix = 2;
  constexpr R sqrdx = radix * radix;
  const std::size_t n = a.rows();
  bool done = false;
  while (!done) {
    done = true;
    for (std::size_t i = 0; i < n; ++i) {
      R r = 0, c = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(a(j, i));
        r += std::abs(a(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      R g = r / radix;
      R f = 1;
      const R s = c + r;
      while (c < g) {
        f *= radix;
        c *= sqrdx;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= sqrdx;
      }
      if ((c + r) / f < 0.95 * s) {
        done = false;
        g = 1 / f;
        for (std::size_t j = 0; j < n; ++j) a(i, j) *= g;
        for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
      }
    }
  }
}

/// Householder reduction to upper Hessenberg form, in place, no Q.
template <typename R>
void reduce_hessenberg(Matrix<R>& h) {
  const std::size_t n = h.rows();
  std::vector<R> v(n);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    R scale = 0;
    for (std::size_t i = k + 1; i < n; ++i) scale = std::max(scale, std::abs(h(i, k)));
    if (scale == 0) continue;
    R sigma = 0;
    for (std::size_t i = k + 1; i < n; ++i) {
      v[i] = h(i, k) / scale;
      sigma += v[i] * v[i];
    }
    const R alpha = v[k + 1] <= 0 ? std::sqrt(sigma) : -std::sqrt(sigma);
    v[k + 1] -= alpha;
    R vnorm2 = 0;
    for (std::size_t i = k + 1; i < n; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == 0) continue;
    const R beta = 2 / vnorm2;
    for (std::size_t j = 0; j < n; ++j) {
      R s = 0;
      for (std::size_t i = k + 1; i < n; ++i) s += v[i] * h(i, j);
      s *= beta;
      for (std::size_t i = k + 1; i < n; ++i) h(i, j) -= s * v[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      R s = 0;
      for (std::size_t j = k + 1; j < n; ++j) s += h(i, j) * v[j];
      s *= beta;
      for (std::size_t j = k + 1; j < n; ++j) h(i, j) -= s * v[j];
    }
    h(k + 1, k) = alpha * scale;
    for (std::size_t i = k + 2; i < n; ++i) h(i, k) = 0;
  }
}

/// Francis double-shift QR on an upper Hessenberg matrix (destroyed).
template <typename R>
Spectrum hessenberg_qr(Matrix<R>& a) {
  using std::abs;
  using std::sqrt;
  const int n = static_cast<int>(a.rows());
  std::vector<std::complex<R>> w(n);
  constexpr R eps = std::numeric_limits<R>::epsilon();
  constexpr int max_its = 60;

  R anorm = 0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += abs(a(i, j));

  int nn = n - 1;
  int its = 0;
  R t = 0;  // accumulated exceptional shift
  while (nn >= 0) {
    int l = nn;
    for (; l > 0; --l) {
      R s = abs(a(l - 1, l - 1)) + abs(a(l, l));
      if (s == 0) s = anorm;
      if (abs(a(l, l - 1)) <= eps * s) {
        a(l, l - 1) = 0;
        break;
      }
    }
    R x = a(nn, nn);
    if (l == nn) {
      w[nn] = x + t;
      --nn;
      its = 0;
      continue;
    }
    R y = a(nn - 1, nn - 1);
    R ww = a(nn, nn - 1) * a(nn - 1, nn);
    if (l == nn - 1) {
      const R p = (y - x) / 2;
      const R q = p * p + ww;
      R z = sqrt(abs(q));
      x += t;
      if (q >= 0) {
        z = p + std::copysign(z, p);
        w[nn - 1] = w[nn] = x + z;
        if (z != 0) w[nn] = x - ww / z;
      } else {
        w[nn] = std::complex<R>(x + p, -z);
        w[nn - 1] = std::conj(w[nn]);
      }
      nn -= 2;
      its = 0;
      continue;
    }
    if (its == max_its) throw NumericalFailure("eigenvalues: QR iteration did not converge");
    if (its > 0 && its % 10 == 0) {
      t += x;
      for (int i = 0; i <= nn; ++i) a(i, i) -= x;
      const R s = abs(a(nn, nn - 1)) + abs(a(nn - 1, nn - 2));
      y = x = R(0.75) * s;
      ww = R(-0.4375) * s * s;
    }
    ++its;
    int m = nn - 2;
    R p = 0, q = 0, r = 0, z = 0;
    for (; m >= l; --m) {
      z = a(m, m);
      r = x - z;
      R s = y - z;
      p = (r * s - ww) / a(m + 1, m) + a(m, m + 1);
      q = a(m + 1, m + 1) - z - r - s;
      r = a(m + 2, m + 1);
      s = abs(p) + abs(q) + abs(r);
      p /= s;
      q /= s;
      r /= s;
      if (m == l) break;
      const R u = abs(a(m, m - 1)) * (abs(q) + abs(r));
      const R v = abs(p) * (abs(a(m - 1, m - 1)) + abs(z) + abs(a(m + 1, m + 1)));
      if (u <= eps * v) break;
    }
    for (int i = m; i < nn - 1; ++i) {
      a(i + 2, i) = 0;
      if (i != m) a(i + 2, i - 1) = 0;
    }
    for (int k = m; k < nn; ++k) {
      if (k != m) {
        p = a(k, k - 1);
        q = a(k + 1, k - 1);
        r = 0;
        if (k + 1 != nn) r = a(k + 2, k - 1);
        if ((x = abs(p) + abs(q) + abs(r)) != 0) {
          p /= x;
          q /= x;
          r /= x;
        }
      }
      const R s = std::copysign(sqrt(p * p + q * q + r * r), p);
      if (s == 0) continue;
      if (k == m) {
        if (l != m) a(k, k - 1) = -a(k, k - 1);
      } else {
        a(k, k - 1) = -s * x;
      }
      p += s;
      x = p / s;
      y = q / s;
      z = r / s;
      q /= p;
      r /= p;
      for (int j = k; j <= nn; ++j) {
        p = a(k, j) + q * a(k + 1, j);
        if (k + 1 != nn) {
          p += r * a(k + 2, j);
          a(k + 2, j) -= p * z;
        }
        a(k + 1, j) -= p * y;
        a(k, j) -= p * x;
      }
      const int mmin = nn < k + 3 ? nn : k + 3;
      for (int i = l; i <= mmin; ++i) {
        p = x * a(i, k) + y * a(i, k + 1);
        if (k + 1 != nn) {
          p += z * a(i, k + 2);
          a(i, k + 2) -= p * r;
        }
        a(i, k + 1) -= p * q;
        a(i, k) -= p;
      }
    }
  }
  Spectrum out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    out[i] = Complex(static_cast<double>(w[i].real()), static_cast<double>(w[i].imag()));
  return out;
}

inline void sort_spectrum(Spectrum& s) {
  std::sort(s.begin(), s.end(), [](const Complex& a, const Complex& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
}

}  // namespace detail

/// All eigenvalues of a real square matrix, counted with multiplicity.
/// Complex eigenvalues come in exact conjugate pairs.
inline Spectrum eigenvalues(const RealMatrix& m) {
  require_square(m, "eigenvalues");
  require_finite(m, "eigenvalues");
  if (m.rows() == 0) return {};
  Matrix<long double> a(m.rows(), m.cols());
  std::copy(m.data().begin(), m.data().end(), a.data().begin());
  detail::balance(a);
  detail::reduce_hessenberg(a);
  auto w = detail::hessenberg_qr(a);
  detail::sort_spectrum(w);
  return w;
}

inline double spectral_radius(const RealMatrix& m) {
  double r = 0.0;
  for (const auto& z : eigenvalues(m)) r = std::max(r, std::abs(z));
  return r;
}

// ---------------------------------------------------------------------------
// Singular values and numerical rank

template <typename T>
struct JacobiSvd {
  Matrix<T> W;  // columns are sigma_i * u_i, ordered like sigma
  Matrix<T> V;  // unitary, M V = W
  std::vector<double> sigma;  // descending
};

/// One-sided (Hestenes) Jacobi SVD. Works for real and complex matrices of
/// any shape.
template <typename T>
JacobiSvd<T> jacobi_svd(const Matrix<T>& m) {
  require_finite(m, "jacobi_svd");
  const std::size_t rows = m.rows();
  const std::size_t n = m.cols();
  Matrix<T> a = m;
  Matrix<T> v = Matrix<T>::identity(n);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  constexpr int max_sweeps = 80;

  // Columns below this squared norm are rounding noise; rotating them never settles.
  const double negligible = std::pow(eps * frobenius(m), 2);
  const double tol = 4.0 * eps;

  bool rotated = true;
  for (int sweep = 0; sweep < max_sweeps && rotated; ++sweep) {
    rotated = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double alpha = 0.0, beta = 0.0;
        T gamma{};
        for (std::size_t k = 0; k < rows; ++k) {
          alpha += std::norm(a(k, i));
          beta += std::norm(a(k, j));
          gamma += detail::conj_if(a(k, i)) * a(k, j);
        }
        const double g = std::abs(gamma);
        if (g == 0.0 || alpha <= negligible || beta <= negligible || g <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * g);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        const T phase = detail::conj_if(gamma / g);
        for (std::size_t k = 0; k < rows; ++k) {
          const T ai = a(k, i);
          const T bj = a(k, j) * phase;
          a(k, i) = c * ai - s * bj;
          a(k, j) = s * ai + c * bj;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const T vi = v(k, i);
          const T vj = v(k, j) * phase;
          v(k, i) = c * vi - s * vj;
          v(k, j) = s * vi + c * vj;
        }
      }
    }
  }
  if (rotated) throw NumericalFailure("jacobi_svd: no convergence");

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < rows; ++k) s += std::norm(a(k, j));
    norms[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  JacobiSvd<T> out{Matrix<T>(rows, n), Matrix<T>(n, n), std::vector<double>(n)};
  for (std::size_t jj = 0; jj < n; ++jj) {
    const std::size_t j = order[jj];
    out.sigma[jj] = norms[j];
    for (std::size_t k = 0; k < rows; ++k) out.W(k, jj) = a(k, j);
    for (std::size_t k = 0; k < n; ++k) out.V(k, jj) = v(k, j);
  }
  return out;
}

template <typename T>
std::vector<double> singular_values(const Matrix<T>& m) {
  // Jacobi cost scales with the column count squared; work on the thinner side.
  auto sv = m.cols() > m.rows() ? jacobi_svd(m.adjoint()).sigma : jacobi_svd(m).sigma;
  sv.resize(std::min(m.rows(), m.cols()));
  return sv;
}

inline constexpr double kDefaultTolRank = 1e-9;

/// Number of singular values above tol_rank times the largest one.
template <typename T>
std::size_t numerical_rank(const Matrix<T>& m, double tol_rank = kDefaultTolRank) {
  if (!(tol_rank > 0.0)) throw InputError("numerical_rank: tolerance must be positive");
  if (m.empty()) return 0;
  const auto sv = singular_values(m);
  if (sv.empty() || sv.front() == 0.0) return 0;
  const double cut = tol_rank * sv.front();
  return static_cast<std::size_t>(std::count_if(sv.begin(), sv.end(), [cut](double s) { return s > cut; }));
}

// ---------------------------------------------------------------------------
// Linear solves

inline constexpr double kDefaultTolSingular = 1e-13;

struct LuFactors {
  RealMatrix lu;
  std::vector<std::size_t> perm;  // row i of the factored matrix is row perm[i] of the input
};

/// LU with partial pivoting. Throws SingularityError on an exactly zero pivot.
inline LuFactors lu_factor(const RealMatrix& m) {
  require_square(m, "lu_factor");
  require_finite(m, "lu_factor");
  const std::size_t n = m.rows();
  LuFactors f{m, std::vector<std::size_t>(n)};
  std::iota(f.perm.begin(), f.perm.end(), 0);
  auto& a = f.lu;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (a(piv, k) == 0.0) throw SingularityError("lu_factor: matrix is singular", 0.0);
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(f.perm[k], f.perm[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      a(i, k) /= a(k, k);
      const double lik = a(i, k);
      if (lik == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= lik * a(k, j);
    }
  }
  return f;
}

inline RealMatrix lu_solve(const LuFactors& f, const RealMatrix& rhs) {
  const std::size_t n = f.lu.rows();
  if (rhs.rows() != n) throw DimensionError("lu_solve: right-hand side has wrong row count");
  RealMatrix y(n, rhs.cols());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < rhs.cols(); ++j) y(i, j) = rhs(f.perm[i], j);
  for (std::size_t j = 0; j < rhs.cols(); ++j) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < i; ++k) y(i, j) -= f.lu(i, k) * y(k, j);
    for (std::size_t ii = n; ii-- > 0;) {
      for (std::size_t k = ii + 1; k < n; ++k) y(ii, j) -= f.lu(ii, k) * y(k, j);
      y(ii, j) /= f.lu(ii, ii);
    }
  }
  return y;
}

/// 1 / (||M||_1 ||M^-1||_1). Zero for exactly singular input.
inline double rcond(const RealMatrix& m) {
  require_square(m, "rcond");
  if (m.rows() == 0) return 1.0;
  try {
    const auto f = lu_factor(m);
    const auto inv = lu_solve(f, RealMatrix::identity(m.rows()));
    return 1.0 / (norm_one(m) * norm_one(inv));
  } catch (const SingularityError&) {
    return 0.0;
  }
}

/// Solves M Y = rhs. Rejects M whose reciprocal condition is at or below tol_singular.
inline RealMatrix solve(const RealMatrix& m, const RealMatrix& rhs, double tol_singular = kDefaultTolSingular) {
  require_square(m, "solve");
  require_finite(m, "solve");
  require_finite(rhs, "solve");
  if (rhs.rows() != m.rows()) throw DimensionError("solve: right-hand side has wrong row count");
  if (m.rows() == 0) return RealMatrix(0, rhs.cols());
  const double rc = rcond(m);
  if (!(rc > tol_singular)) {
    std::ostringstream os;
    os << "solve: matrix is singular or nearly singular (rcond = " << rc << ")";
    throw SingularityError(os.str(), rc);
  }
  return lu_solve(lu_factor(m), rhs);
}

inline RealMatrix inverse(const RealMatrix& m, double tol_singular = kDefaultTolSingular) {
  return solve(m, RealMatrix::identity(m.rows()), tol_singular);
}

// ---------------------------------------------------------------------------
// Polynomials

/// Monic real coefficients, highest power first, of prod (z - r_i). Input
/// roots are expected to be closed under conjugation; imaginary residue of
/// the expansion is dropped.
inline RealVector poly_from_roots(std::span<const Complex> roots) {
  std::vector<Complex> c{Complex(1.0)};
  for (const auto& r : roots) {
    c.push_back(Complex(0.0));
    for (std::size_t k = c.size() - 1; k > 0; --k) c[k] -= r * c[k - 1];
  }
  RealVector out(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) out[k] = c[k].real();
  return out;
}

/// det(zI - M) as monic coefficients, highest power first.
inline RealVector char_poly(const RealMatrix& m) {
  require_square(m, "char_poly");
  const auto ev = eigenvalues(m);
  return poly_from_roots(ev);
}

// ---------------------------------------------------------------------------
// Basis completion

/// Nonsingular T (n x n) whose first p rows are C and whose remaining rows
/// are unit vectors at the non-pivot columns of C, so that [I_p, 0] T = C.
///
/// Pivot columns are picked left to right: a column is taken when its
/// largest remaining entry is at least a tenth of the largest remaining
/// entry overall (threshold pivoting).
inline RealMatrix complete_row_basis(const RealMatrix& c, double tol_rank = kDefaultTolRank) {
  require_finite(c, "complete_row_basis");
  const std::size_t p = c.rows();
  const std::size_t n = c.cols();
  if (p > n) throw DimensionError("complete_row_basis: more rows than columns");
  const std::size_t r = numerical_rank(c, tol_rank);
  if (r < p) {
    std::ostringstream os;
    os << "complete_row_basis: C must have full row rank " << p << ", numerical rank is " << r;
    throw RankDeficiencyError(os.str(), r, p);
  }

  constexpr double threshold = 0.5;
  RealMatrix w = c;
  std::vector<bool> is_pivot(n, false);
  std::size_t row = 0;
  while (row < p) {
    double overall = 0.0;
    for (std::size_t i = row; i < p; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (!is_pivot[j]) overall = std::max(overall, std::abs(w(i, j)));
    if (overall == 0.0) throw RankDeficiencyError("complete_row_basis: elimination broke down", row, p);
    std::size_t col = n;
    std::size_t prow = row;
    for (std::size_t j = 0; j < n && col == n; ++j) {
      if (is_pivot[j]) continue;
      double best = 0.0;
      std::size_t bi = row;
      for (std::size_t i = row; i < p; ++i)
        if (std::abs(w(i, j)) > best) {
          best = std::abs(w(i, j));
          bi = i;
        }
      if (best >= threshold * overall) {
        col = j;
        prow = bi;
      }
    }
    is_pivot[col] = true;
    if (prow != row)
      for (std::size_t j = 0; j < n; ++j) std::swap(w(row, j), w(prow, j));
    for (std::size_t i = row + 1; i < p; ++i) {
      const double f = w(i, col) / w(row, col);
      for (std::size_t j = 0; j < n; ++j) w(i, j) -= f * w(row, j);
      w(i, col) = 0.0;
    }
    ++row;
  }

  RealMatrix t(n, n);
  t.set_block(0, 0, c);
  std::size_t next = p;
  for (std::size_t j = 0; j < n; ++j)
    if (!is_pivot[j]) t(next++, j) = 1.0;
  return t;
}

}  // namespace piobs

#pragma once

// Co-simulation of the plant and a PI observer over a finite horizon.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "piobs/design.hpp"
#include "piobs/errors.hpp"
#include "piobs/linalg.hpp"

namespace piobs {

namespace input {

struct Zero {};
struct Constant {
  RealVector value;
};
/// Zero before `onset`, `value` from `onset` on.
struct Step {
  RealVector value;
  std::size_t onset = 0;
};
/// Independent uniform entries in [-amplitude, amplitude], reproducible from `seed`.
struct RandomBounded {
  double amplitude = 1.0;
  std::uint64_t seed = 1;
};

}  // namespace input

using InputSignal = std::variant<input::Zero, input::Constant, input::Step, input::RandomBounded>;

struct SimulationConfig {
  std::size_t horizon = 100;
  RealVector x0;
  RealVector xhat0;
  RealVector v0;
  InputSignal input = input::Zero{};
  double convergence_tol = 1e-6;
  /// Abort when the plant state exceeds this in the infinity norm.
  double divergence_limit = 1e12;
};

struct SimulationStep {
  std::size_t k = 0;
  RealVector x, xhat, y, v, u, e;
  double e_inf = 0.0;
  double v_inf = 0.0;
};

struct SimulationTrace {
  std::vector<SimulationStep> steps;  // k = 0 .. horizon
  /// First k with max(||e||, ||v||) <= convergence_tol.
  std::optional<std::size_t> converged_at;
  /// The tolerance holds from converged_at to the end of the trace.
  bool tail_converged = false;
};

/// Plant state left the admissible range; carries the trace up to the last finite step.
class DivergenceError : public NumericalFailure {
 public:
  DivergenceError(const std::string& what, std::size_t step, SimulationTrace partial)
      : NumericalFailure(what), step_(step), partial_(std::move(partial)) {}

  std::size_t step() const noexcept { return step_; }
  const SimulationTrace& partial_trace() const noexcept { return partial_; }

 private:
  std::size_t step_;
  SimulationTrace partial_;
};

namespace detail {

inline void require_length(const RealVector& v, std::size_t n, const char* what) {
  if (v.size() != n) {
    std::ostringstream os;
    os << what << " has length " << v.size() << ", expected " << n;
    throw DimensionError(os.str());
  }
}

inline RealVector axpy(RealVector y, const RealVector& x, double s = 1.0) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
  return y;
}

}  // namespace detail

struct PlantStep {
  RealVector x_next;
  RealVector y;
};

/// x(k+1) = A x + B u, y = C x
inline PlantStep step_plant(const SystemRealization& sys, const RealVector& x, const RealVector& u) {
  detail::require_length(x, sys.n(), "plant state");
  detail::require_length(u, sys.m(), "input");
  return {detail::axpy(sys.A() * x, sys.B() * u), sys.C() * x};
}

struct ObserverStep {
  RealVector xhat_next;
  RealVector v_next;
};

/// xhat(k+1) = (A - L C) xhat + L y + B u + F v,  v(k+1) = v + y - C xhat
inline ObserverStep step_observer(const SystemRealization& sys, const RealMatrix& l, const RealMatrix& f,
                                  const RealVector& xhat, const RealVector& v, const RealVector& y,
                                  const RealVector& u) {
  const std::size_t n = sys.n(), p = sys.p();
  if (l.rows() != n || l.cols() != p || f.rows() != n || f.cols() != p)
    throw DimensionError("step_observer: L and F must be n x p");
  detail::require_length(xhat, n, "observer state");
  detail::require_length(v, p, "integral state");
  detail::require_length(y, p, "output");
  detail::require_length(u, sys.m(), "input");
  const RealMatrix a_lc = sys.A() - l * sys.C();
  RealVector xn = a_lc * xhat;
  xn = detail::axpy(std::move(xn), l * y);
  xn = detail::axpy(std::move(xn), sys.B() * u);
  xn = detail::axpy(std::move(xn), f * v);
  RealVector vn = detail::axpy(v, detail::axpy(y, sys.C() * xhat, -1.0));
  return {std::move(xn), std::move(vn)};
}

inline ObserverStep step_observer(const PiObserver& obs, const RealVector& xhat, const RealVector& v,
                                  const RealVector& y, const RealVector& u) {
  return step_observer(obs.system, obs.L, obs.F, xhat, v, y, u);
}

/// Materializes u(0..horizon) for an input signal.
inline std::vector<RealVector> input_sequence(const InputSignal& sig, std::size_t m, std::size_t horizon) {
  std::vector<RealVector> u(horizon + 1, RealVector(m, 0.0));
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, input::Constant>) {
          detail::require_length(s.value, m, "constant input");
          std::fill(u.begin(), u.end(), s.value);
        } else if constexpr (std::is_same_v<S, input::Step>) {
          detail::require_length(s.value, m, "step input");
          for (std::size_t k = s.onset; k <= horizon; ++k) u[k] = s.value;
        } else if constexpr (std::is_same_v<S, input::RandomBounded>) {
          if (!(s.amplitude >= 0.0) || !std::isfinite(s.amplitude))
            throw InputError("random input amplitude must be finite and non-negative");
          std::mt19937_64 rng(s.seed);
          std::uniform_real_distribution<double> dist(-s.amplitude, s.amplitude);
          for (auto& uk : u)
            for (auto& x : uk) x = dist(rng);
        }
      },
      sig);
  return u;
}

inline SimulationTrace run_simulation(const PiObserver& obs, const SimulationConfig& cfg) {
  const auto& sys = obs.system;
  const std::size_t n = sys.n(), p = sys.p();
  if (cfg.horizon < 1) throw InputError("simulation horizon must be at least 1");
  if (!(cfg.convergence_tol > 0.0)) throw InputError("convergence tolerance must be positive");
  const RealVector x0 = cfg.x0.empty() ? RealVector(n, 0.0) : cfg.x0;
  const RealVector xhat0 = cfg.xhat0.empty() ? RealVector(n, 0.0) : cfg.xhat0;
  const RealVector v0 = cfg.v0.empty() ? RealVector(p, 0.0) : cfg.v0;
  detail::require_length(x0, n, "x0");
  detail::require_length(xhat0, n, "xhat0");
  detail::require_length(v0, p, "v0");
  const auto u = input_sequence(cfg.input, sys.m(), cfg.horizon);

  SimulationTrace trace;
  trace.steps.reserve(cfg.horizon + 1);
  RealVector x = x0, xhat = xhat0, v = v0;
  for (std::size_t k = 0;; ++k) {
    SimulationStep s;
    s.k = k;
    s.x = x;
    s.xhat = xhat;
    s.v = v;
    s.u = u[k];
    s.y = sys.C() * x;
    s.e = detail::axpy(xhat, x, -1.0);
    s.e_inf = max_abs(std::span<const double>(s.e));
    s.v_inf = max_abs(std::span<const double>(s.v));
    if (!(max_abs(std::span<const double>(x)) <= cfg.divergence_limit) ||
        !(max_abs(std::span<const double>(xhat)) <= cfg.divergence_limit) || !std::isfinite(s.v_inf)) {
      std::ostringstream os;
      os << "simulation diverged at step " << k << ": state norm exceeds " << cfg.divergence_limit;
      throw DivergenceError(os.str(), k, std::move(trace));
    }
    trace.steps.push_back(std::move(s));
    if (k == cfg.horizon) break;
    const auto plant = step_plant(sys, x, u[k]);
    const auto est = step_observer(obs, xhat, v, plant.y, u[k]);
    x = plant.x_next;
    xhat = est.xhat_next;
    v = est.v_next;
  }

  for (const auto& s : trace.steps) {
    if (std::max(s.e_inf, s.v_inf) <= cfg.convergence_tol) {
      trace.converged_at = s.k;
      break;
    }
  }
  if (trace.converged_at) {
    trace.tail_converged = std::all_of(trace.steps.begin() + static_cast<std::ptrdiff_t>(*trace.converged_at),
                                       trace.steps.end(), [&](const SimulationStep& s) {
                                         return std::max(s.e_inf, s.v_inf) <= cfg.convergence_tol;
                                       });
  }
  return trace;
}

struct ErrorDynamicsResidual {
  double max_residual = 0.0;
  std::size_t worst_step = 0;  // k such that step k -> k+1 has the largest residual
};

/// max_k || [e(k+1); v(k+1)] - Aug [e(k); v(k)] ||_inf
inline ErrorDynamicsResidual error_dynamics_check(const SimulationTrace& trace, const PiObserver& obs) {
  ErrorDynamicsResidual r;
  const RealMatrix aug = augmented_matrix(obs);
  const std::size_t n = obs.system.n(), p = obs.system.p();
  for (std::size_t k = 0; k + 1 < trace.steps.size(); ++k) {
    const auto& s = trace.steps[k];
    const auto& t = trace.steps[k + 1];
    RealVector z(n + p);
    std::copy(s.e.begin(), s.e.end(), z.begin());
    std::copy(s.v.begin(), s.v.end(), z.begin() + static_cast<std::ptrdiff_t>(n));
    const auto pred = aug * z;
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res = std::max(res, std::abs(t.e[i] - pred[i]));
    for (std::size_t i = 0; i < p; ++i) res = std::max(res, std::abs(t.v[i] - pred[n + i]));
    if (res > r.max_residual) {
      r.max_residual = res;
      r.worst_step = k;
    }
  }
  return r;
}

struct DecayFit {
  double rate = 0.0;       // exp(slope) of log max(||e||, ||v||) against k
  double intercept = 0.0;  // log-scale intercept
  std::size_t points = 0;
};

/// Least-squares fit of log max(||e(k)||, ||v(k)||) = a + k log(rate) over
/// k in [first, last], skipping samples at or below `floor`.
inline std::optional<DecayFit> fit_decay(const SimulationTrace& trace, std::size_t first = 10, std::size_t last = 200,
                                         double floor = 1e-13) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t count = 0;
  for (const auto& s : trace.steps) {
    if (s.k < first || s.k > last) continue;
    const double z = std::max(s.e_inf, s.v_inf);
    if (!(z > floor)) continue;
    const double x = static_cast<double>(s.k), y = std::log(z);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count < 2) return std::nullopt;
  const double denom = static_cast<double>(count) * sxx - sx * sx;
  if (denom == 0.0) return std::nullopt;
  const double slope = (static_cast<double>(count) * sxy - sx * sy) / denom;
  return DecayFit{std::exp(slope), (sy - slope * sx) / static_cast<double>(count), count};
}

}  // namespace piobs

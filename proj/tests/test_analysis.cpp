#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "piobs/analysis.hpp"
#include "piobs/design.hpp"
#include "support/oracles.hpp"
#include "support/random_systems.hpp"

using namespace piobs;
using namespace piobs::testing;

namespace {

const RealMatrix kDiag{{0.5, 0}, {0, 2}};

}  // namespace

TEST(SystemRealization, ValidatesShapes) {
  EXPECT_NO_THROW(SystemRealization(kDiag, RealMatrix{{1}, {0}}, RealMatrix{{0, 1}}));
  EXPECT_THROW(SystemRealization(RealMatrix{{1, 2}}, RealMatrix{{1}}, RealMatrix{{1, 0}}), DimensionError);
  EXPECT_THROW(SystemRealization(kDiag, RealMatrix{{1}}, RealMatrix{{0, 1}}), DimensionError);
  EXPECT_THROW(SystemRealization(kDiag, RealMatrix{{1}, {0}}, RealMatrix{{0, 1, 2}}), DimensionError);
}

TEST(SystemRealization, RequiresFullRowRankC) {
  EXPECT_THROW(SystemRealization(kDiag, RealMatrix{{1}, {0}}, RealMatrix{{0, 0}}), RankDeficiencyError);
  EXPECT_THROW(SystemRealization(kDiag, RealMatrix{{1}, {0}}, RealMatrix{{1, 2}, {2, 4}}), RankDeficiencyError);
  try {
    SystemRealization(kDiag, RealMatrix{{1}, {0}}, RealMatrix{{1, 2}, {2, 4}});
  } catch (const RankDeficiencyError& e) {
    EXPECT_NE(std::string(e.what()).find("rank[C] = p"), std::string::npos);
    EXPECT_EQ(e.rank(), 1u);
    EXPECT_EQ(e.expected(), 2u);
  }
}

TEST(SystemRealization, RejectsNonFinite) {
  EXPECT_THROW(SystemRealization(RealMatrix{{INFINITY}}, RealMatrix{{1}}, RealMatrix{{1}}), InputError);
}

TEST(SchurStability, KnownValues) {
  const auto a = is_schur_stable(0.5 * RealMatrix::identity(3), 0.0);
  EXPECT_TRUE(a.stable);
  EXPECT_NEAR(a.spectral_radius, 0.5, 1e-15);

  const auto b = is_schur_stable(RealMatrix::identity(2), 0.0);
  EXPECT_FALSE(b.stable);
  EXPECT_NEAR(std::abs(b.worst - Complex(1, 0)), 0.0, 1e-15);

  const auto c = is_schur_stable(RealMatrix{{0, 1}, {-0.25, 0}}, 0.0);
  EXPECT_TRUE(c.stable);
  EXPECT_NEAR(c.spectral_radius, 0.5, 1e-14);
}

TEST(SchurStability, MarginIsStrict) {
  EXPECT_TRUE(is_schur_stable(RealMatrix{{0.9}}, 0.05).stable);
  EXPECT_FALSE(is_schur_stable(RealMatrix{{0.96}}, 0.05).stable);
}

TEST(Pbh, KnownValues) {
  EXPECT_EQ(pbh_rank_at(kDiag, RealMatrix{{0, 1}}, Complex(2, 0)), 2u);
  EXPECT_EQ(pbh_rank_at(kDiag, RealMatrix{{1, 0}}, Complex(2, 0)), 1u);
  EXPECT_EQ(pbh_rank_at(RealMatrix{{0}}, RealMatrix{{1}}, Complex(1, 0)), 1u);
  EXPECT_THROW(pbh_rank_at(kDiag, RealMatrix{{1}}, Complex(1, 0)), DimensionError);
}

TEST(Classify, KnownValues) {
  const auto obs = classify_eigenvalues(kDiag, RealMatrix{{0, 1}});
  ASSERT_EQ(obs.size(), 2u);
  EXPECT_NEAR(obs[0].eigenvalue.real(), 0.5, 1e-15);
  EXPECT_TRUE(obs[0].stable);
  EXPECT_FALSE(obs[0].observable);  // C = [0, 1] does not see the 0.5 mode
  EXPECT_NEAR(obs[1].eigenvalue.real(), 2.0, 1e-15);
  EXPECT_FALSE(obs[1].stable);
  EXPECT_TRUE(obs[1].observable);

  const auto unobs = classify_eigenvalues(kDiag, RealMatrix{{1, 0}});
  EXPECT_TRUE(unobs[0].stable);
  EXPECT_TRUE(unobs[0].observable);
  EXPECT_FALSE(unobs[1].stable);
  EXPECT_FALSE(unobs[1].observable);

  const auto both = classify_eigenvalues(0.3 * RealMatrix::identity(2), RealMatrix{{1, 0}});
  ASSERT_EQ(both.size(), 2u);
  EXPECT_TRUE(both[0].stable && both[1].stable);
  EXPECT_FALSE(both[0].observable || both[1].observable);  // repeated eigenvalue, one output
}

TEST(Classify, BoundaryCountsAsUnstable) {
  const auto e = classify_eigenvalues(RealMatrix{{1.0 - 1e-12}}, RealMatrix{{1}});
  EXPECT_FALSE(e[0].stable);
  EXPECT_TRUE(e[0].boundary);
  EXPECT_TRUE(classify_eigenvalues(RealMatrix{{0.999}}, RealMatrix{{1}})[0].stable);
}

TEST(Detectability, KnownValues) {
  EXPECT_TRUE(is_detectable(kDiag, RealMatrix{{0, 1}}).detectable);
  const auto v = is_detectable(kDiag, RealMatrix{{1, 0}});
  EXPECT_FALSE(v.detectable);
  ASSERT_EQ(v.witness.size(), 1u);
  EXPECT_NEAR(std::abs(v.witness[0] - Complex(2, 0)), 0.0, 1e-14);
  EXPECT_TRUE(is_detectable(0.3 * RealMatrix::identity(2), RealMatrix{{1, 0}}).detectable);
}

TEST(Detectability, ComplexWitnessPair) {
  // Rotation by 60 degrees scaled to 1.2, hidden from the output.
  const double r = 1.2, th = std::numbers::pi / 3;
  RealMatrix a(3, 3);
  a(0, 0) = 0.4;
  a(1, 1) = r * std::cos(th);
  a(1, 2) = r * std::sin(th);
  a(2, 1) = -r * std::sin(th);
  a(2, 2) = r * std::cos(th);
  const auto v = is_detectable(a, RealMatrix{{1, 0, 0}});
  EXPECT_FALSE(v.detectable);
  ASSERT_EQ(v.witness.size(), 2u);
  EXPECT_LE(greedy_match_distance(v.witness, {std::polar(r, th), std::polar(r, -th)}), 1e-12);
}

TEST(Observability, KnownValues) {
  const auto a = is_observable(RealMatrix{{0, 1}, {0, 0}}, RealMatrix{{1, 0}});
  EXPECT_TRUE(a.observable);
  EXPECT_EQ(a.stack_rank, 2u);
  EXPECT_TRUE(a.stack_agrees);
  EXPECT_FALSE(is_observable(kDiag, RealMatrix{{1, 0}}).observable);
  EXPECT_TRUE(is_observable(RealMatrix{{0.5}}, RealMatrix{{1}}).observable);
}

TEST(Observability, StackMatrixShape) {
  const auto o = observability_matrix(RealMatrix{{0, 1}, {0, 0}}, RealMatrix{{1, 0}});
  EXPECT_EQ(o, RealMatrix::identity(2));
}

TEST(Observability, AgreesWithExactRationalStackRank) {
  Rng rng(21);
  int unobservable = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = uniform_index(rng, 1, 5);
    const std::size_t p = uniform_index(rng, 1, std::min<std::size_t>(2, n));
    RealMatrix a(n, n), c(p, n);
    // Sparse small integers make unobservable pairs common.
    for (auto& x : a.data()) x = uniform(rng, 0, 1) < 0.5 ? 0.0 : static_cast<double>(uniform_index(rng, 0, 4)) - 2.0;
    for (auto& x : c.data()) x = uniform(rng, 0, 1) < 0.6 ? 0.0 : static_cast<double>(uniform_index(rng, 0, 2)) - 1.0;
    if (max_abs(c) == 0.0) c(0, 0) = 1.0;
    const bool exact = exact_observability_rank(a, c) == n;
    unobservable += exact ? 0 : 1;
    EXPECT_EQ(is_observable(a, c).observable, exact) << "trial " << t;
  }
  EXPECT_GT(unobservable, 20);
}

TEST(Observability, ImpliesDetectability) {
  Rng rng(22);
  for (int t = 0; t < 200; ++t) {
    const auto rp = uniform(rng, 0, 1) < 0.5 ? random_detectable_plant(rng) : random_undetectable_plant(rng);
    const auto obs = is_observable(rp.A, rp.C);
    const auto det = is_detectable(rp.A, rp.C);
    if (obs.observable) {
      EXPECT_TRUE(det.detectable);
    }
    if (!det.detectable) {
      const bool has = std::any_of(det.eigen.begin(), det.eigen.end(),
                                   [](const EigClassification& e) { return !e.stable && !e.observable; });
      EXPECT_TRUE(has);
    }
  }
}

TEST(Detectability, EigenvalueFormAgreesWithSampledCondition) {
  // Condition (a) can only be sampled: rank [C; zI - A] = n on a grid of |z| >= 1
  // plus the unstable eigenvalues themselves.
  Rng rng(23);
  for (int t = 0; t < 100; ++t) {
    const auto rp = uniform(rng, 0, 1) < 0.5 ? random_detectable_plant(rng) : random_undetectable_plant(rng);
    if (rp.A.rows() > 6) continue;
    const std::size_t n = rp.A.rows();
    bool sampled = true;
    for (double r : {1.0, 1.3, 2.0, 4.0})
      for (int k = 0; k < 24; ++k)
        sampled = sampled && pbh_rank_at(rp.A, rp.C, std::polar(r, 2 * std::numbers::pi * k / 24.0)) == n;
    for (const auto& z : eigenvalues(rp.A))
      if (std::abs(z) >= 1.0) sampled = sampled && pbh_rank_at(rp.A, rp.C, z) == n;
    EXPECT_EQ(is_detectable(rp.A, rp.C).detectable, sampled) << "trial " << t;
  }
}

TEST(Kalman, SpecExampleUnstableHiddenMode) {
  const auto kd = kalman_decompose(kDiag, RealMatrix{{1, 0}});
  EXPECT_EQ(kd.q, 1u);
  EXPECT_NEAR(kd.A11(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(kd.A22(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(std::abs(kd.C1(0, 0)), 1.0, 1e-15);
}

TEST(Kalman, ObservablePairIsTrivial) {
  const auto kd = kalman_decompose(RealMatrix{{0, 1}, {0, 0}}, RealMatrix{{1, 0}});
  EXPECT_EQ(kd.q, 2u);
  EXPECT_TRUE(kd.observable());
  EXPECT_EQ(kd.T, RealMatrix::identity(2));
  EXPECT_EQ(kd.A22.rows(), 0u);
}

TEST(Kalman, StableHiddenMode) {
  const RealMatrix a{{0.1, 0}, {0, 0.2}};
  const auto kd = kalman_decompose(a, RealMatrix{{1, 0}});
  EXPECT_EQ(kd.q, 1u);
  EXPECT_NEAR(kd.A22(0, 0), 0.2, 1e-15);
  EXPECT_TRUE(is_schur_stable(kd.A22).stable);
}

TEST(Kalman, RandomDecompositionInvariants) {
  Rng rng(24);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = uniform_index(rng, 2, 8);
    const std::size_t p = uniform_index(rng, 1, std::min<std::size_t>(3, n - 1));
    const std::size_t q = uniform_index(rng, p, n - 1);
    const auto rp = unobservable_plant(rng, n, 1, p, q, 0.05, 1.8);
    const auto kd = kalman_decompose(rp.A, rp.C);
    ASSERT_EQ(kd.q, q) << "trial " << t;
    const double scale = std::max(1.0, max_abs(rp.A));
    EXPECT_LE(max_abs(kd.reconstruct_A() - rp.A), 1e-9 * scale);
    EXPECT_LE(max_abs(kd.reconstruct_C() - rp.C), 1e-9 * std::max(1.0, max_abs(rp.C)));
    // T^T A T is block lower triangular.
    const RealMatrix z = kd.T.transpose() * rp.A * kd.T;
    EXPECT_LE(max_abs(z.block(0, q, q, n - q)), 1e-9 * scale);
    EXPECT_LE(max_abs((rp.C * kd.T).block(0, q, p, n - q)), 1e-9 * std::max(1.0, max_abs(rp.C)));
    EXPECT_TRUE(is_observable(kd.A11, kd.C1).observable);
    EXPECT_LE(pairing_distance(eigenvalues(kd.A22), rp.unobservable), 1e-8);
    Spectrum joined = eigenvalues(kd.A11);
    for (const auto& z2 : eigenvalues(kd.A22)) joined.push_back(z2);
    EXPECT_LE(pairing_distance(joined, eigenvalues(rp.A)), 1e-7);
  }
}

TEST(Kalman, DetectableImpliesStableA22) {
  Rng rng(25);
  for (int t = 0; t < 200; ++t) {
    const auto rp = random_detectable_plant(rng);
    if (!is_detectable(rp.A, rp.C).detectable) continue;
    const auto kd = kalman_decompose(rp.A, rp.C);
    if (kd.q < rp.A.rows()) {
      EXPECT_TRUE(is_schur_stable(kd.A22).stable);
    }
  }
}

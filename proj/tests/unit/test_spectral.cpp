#include <gtest/gtest.h>

#include <random>

#include "gaah/spectral.hpp"
#include "oracles.hpp"

using namespace gaah;

namespace {

// -ln IPR averaged over the eigenvectors of a dense symmetric matrix,
// computed with Eigen only.
double dense_mean_neg_ln_ipr(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  double s = 0.0;
  for (Eigen::Index k = 0; k < m.cols(); ++k) s -= std::log(es.eigenvectors().col(k).array().pow(4).sum());
  return s / static_cast<double>(m.cols());
}

// Closed form for the uniform open chain: eigenvectors sqrt(2/(L+1)) sin(k pi j/(L+1)).
double uniform_chain_mean_neg_ln_ipr(int L) {
  double s = 0.0;
  for (int k = 1; k <= L; ++k) {
    double ipr = 0.0;
    for (int j = 1; j <= L; ++j) {
      const double a = std::sqrt(2.0 / (L + 1)) * std::sin(k * j * std::numbers::pi / (L + 1));
      ipr += a * a * a * a;
    }
    s -= std::log(ipr);
  }
  return s / L;
}

}  // namespace

TEST(Spectral, IprOfBasisAndUniformStates) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(7);
  e[3] = 1.0;
  EXPECT_DOUBLE_EQ(ipr(e), 1.0);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(16, 0.25);
  EXPECT_NEAR(ipr(u), 1.0 / 16.0, 1e-15);
  EXPECT_THROW(ipr(Eigen::VectorXd(Eigen::VectorXd::Constant(4, 1.0))), DomainError);
}

TEST(Spectral, IprBoundsOnRandomStates) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int c = 0; c < 1000; ++c) {
    const int n = 1 + static_cast<int>(rng() % 64);
    Eigen::VectorXcd psi(n);
    for (auto& x : psi) x = {g(rng), g(rng)};
    psi.normalize();
    const double v = ipr(psi);
    ASSERT_GE(v, 1.0 / n - 1e-14);
    ASSERT_LE(v, 1.0 + 1e-14);
  }
}

TEST(Spectral, PhaseLabelsIncludingBoundaries) {
  EXPECT_EQ(classify_phase(0.5, 1.0), PhaseLabel::Extended);
  EXPECT_EQ(classify_phase(0.5, 4.0), PhaseLabel::Localized);
  EXPECT_EQ(classify_phase(2.0, 1.0), PhaseLabel::Critical);
  EXPECT_EQ(classify_phase(0.5, 2.0), PhaseLabel::Critical);
  EXPECT_EQ(classify_phase(1.0, 1.0), PhaseLabel::Critical);
  EXPECT_EQ(classify_phase(1.5, 3.0), PhaseLabel::Critical);
  EXPECT_EQ(classify_phase(1.5, 3.0001), PhaseLabel::Localized);
  EXPECT_EQ(classify_phase(0.0, 2.0001), PhaseLabel::Localized);
  EXPECT_EQ(to_string(PhaseLabel::Critical), "critical");
  EXPECT_THROW(classify_phase(-1.0, 0.0), ParameterError);
}

TEST(Spectral, UniformChainClosedForm) {
  for (const auto& [L, expected] : {std::pair{10, 1.992430164690206162}, std::pair{12, 2.159484249353372354},
                                    std::pair{100, 4.209655408733095069}}) {
    ModelParams p;
    p.L = L;
    const double got = tridiagonal_ipr_summary(single_particle_tridiagonal(p)).mean_neg_ln_ipr;
    EXPECT_NEAR(got, uniform_chain_mean_neg_ln_ipr(L), 1e-10) << L;
    EXPECT_NEAR(got, std::log(2.0 * (L + 1) / 3.0), 1e-10) << L;
    EXPECT_NEAR(got, expected, 1e-10) << L;
  }
}

TEST(Spectral, TwistedVectorsMatchDenseEigenvectors) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> mu(0.0, 2.0), V(0.0, 4.0), d(-3.14, 3.14);
  for (int c = 0; c < 60; ++c) {
    ModelParams p;
    p.L = 5 + static_cast<int>(rng() % 200);
    p.mu = c % 3 == 0 ? 1.0 + mu(rng) / 2 : mu(rng);
    p.V = V(rng);
    p.delta = d(rng);
    const auto t = single_particle_tridiagonal(p);
    const auto s = tridiagonal_ipr_summary(t);
    EXPECT_NEAR(s.mean_neg_ln_ipr, dense_mean_neg_ln_ipr(t.dense()), 1e-8) << "L=" << p.L << " mu=" << p.mu;
  }
}

TEST(Spectral, TridiagonalEigenvaluesMatchDense) {
  ModelParams p;
  p.L = 300;
  p.mu = 1.4;
  p.V = 2.2;
  p.delta = 0.7;
  const auto t = single_particle_tridiagonal(p);
  const Eigen::VectorXd ev = lapack::tridiagonal_eigenvalues(t.diagonal, t.off_diagonal);
  const Eigen::VectorXd ref = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(t.dense()).eigenvalues();
  EXPECT_LE((ev - ref).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Spectral, DenseDecompositionAgreesWithEigen) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g;
  for (const int n : {5, 80, 300}) {
    Eigen::MatrixXd a(n, n);
    for (auto& x : a.reshaped()) x = g(rng);
    a = (a + a.transpose()).eval();
    const auto es = eigendecompose(a);
    const Eigen::VectorXd ref = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues();
    EXPECT_LE((es.values - ref).cwiseAbs().maxCoeff(), 1e-10 * n);
    EXPECT_LE((a * es.vectors - es.vectors * es.values.asDiagonal()).cwiseAbs().maxCoeff(), 1e-10 * n);
    EXPECT_LE((es.vectors.transpose() * es.vectors - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(),
              1e-12 * n);
  }
}

TEST(Spectral, DenseThresholdIsEnforced) {
  ModelParams p;
  p.L = 14;
  const auto h = build_sector_hamiltonian(p, 7);
  EXPECT_THROW(eigendecompose(h, 1000), ParameterError);
  EXPECT_THROW(eigendecompose(Eigen::MatrixXd(3, 4)), ParameterError);
}

TEST(Spectral, SectorSpectrumOfSingleExcitationIsTridiagonal) {
  ModelParams p;
  p.L = 20;
  p.mu = 1.1;
  p.V = 2.9;
  p.delta = -2.2;
  const auto h = build_sector_hamiltonian(p, 1);
  const auto t = single_particle_tridiagonal(p);
  EXPECT_LE((eigendecompose(h).values - lapack::tridiagonal_eigenvalues(t.diagonal, t.off_diagonal))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(Spectral, PhaseMapDoesNotDependOnWorkerCount) {
  std::vector<std::pair<double, double>> grid{{0.5, 0.5}, {1.5, 1.0}, {0.5, 4.0}, {0.0, 0.0}};
  PhaseMapOptions one, many;
  many.workers = 3;
  const auto a = ipr_phase_map(grid, 60, 7, 42, one);
  const auto b = ipr_phase_map(grid, 60, 7, 42, many);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mean, b[i].mean);
    EXPECT_EQ(a[i].std_error, b[i].std_error);
  }
  // mu = V = 0 is phase independent.
  EXPECT_NEAR(a[3].mean, std::log(2.0 * 61 / 3.0), 1e-10);
  EXPECT_LT(a[3].std_error, 1e-12);
  // Extended spreads more than localized.
  EXPECT_GT(a[0].mean, a[2].mean + 1.0);
}

TEST(Spectral, NegLogMeanStatisticIsBelowMeanNegLog) {
  // Jensen: -ln(mean IPR) <= mean(-ln IPR).
  PhaseMapOptions o;
  o.statistic = IprStatistic::NegLogMean;
  const auto a = ipr_phase_map({{1.0, 2.0}}, 100, 5, 9);
  const auto b = ipr_phase_map({{1.0, 2.0}}, 100, 5, 9, o);
  EXPECT_LE(b[0].mean, a[0].mean + 1e-12);
}

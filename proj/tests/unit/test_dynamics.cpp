#include <gtest/gtest.h>

#include <random>

#include "gaah/dynamics.hpp"
#include "oracles.hpp"

using namespace gaah;

namespace {

ModelParams random_params(std::mt19937_64& rng, int L) {
  std::uniform_real_distribution<double> mu(0.0, 2.0), V(0.0, 4.0), d(-3.14, 3.14);
  ModelParams p;
  p.L = L;
  p.mu = mu(rng);
  p.V = V(rng);
  p.delta = d(rng);
  return p;
}

Eigen::VectorXd random_distribution(std::mt19937_64& rng, int n) {
  std::exponential_distribution<double> e;
  Eigen::VectorXd p(n);
  for (auto& x : p) x = e(rng);
  // Some exact zeros exercise the 0 log 0 convention.
  if (n > 3) p[1] = 0.0;
  return p / p.sum();
}

}  // namespace

TEST(Dynamics, TwoSiteRabiOscillation) {
  ModelParams p;
  p.L = 2;
  const auto h = build_sector_hamiltonian(p, 1);
  const auto psi0 = PureState::basis_state(h.basis, state_from_string("10"));
  const auto times = time_grid(0.0, 500.0, 0.5);
  for (const std::size_t threshold : {std::size_t{4096}, std::size_t{0}}) {
    EvolveOptions o;
    o.dense_threshold = threshold;
    const auto states = evolve(h, psi0, times, o);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const auto occ = occupancy(states[k]);
      const double s = std::sin(kDefaultLambda * times[k]);
      ASSERT_NEAR(occ[1], s * s, 1e-9) << "t=" << times[k];
      ASSERT_NEAR(occ[0], 1.0 - s * s, 1e-9);
    }
  }
}

TEST(Dynamics, TimeZeroIsIdentity) {
  std::mt19937_64 rng(1);
  const auto p = random_params(rng, 8);
  const auto h = build_sector_hamiltonian(p, 4);
  const auto psi0 = PureState::basis_state(h.basis, state_from_string("10101010"));
  const std::vector<double> t0{0.0};
  for (const std::size_t threshold : {std::size_t{4096}, std::size_t{0}}) {
    EvolveOptions o;
    o.dense_threshold = threshold;
    EXPECT_LE((evolve(h, psi0, t0, o)[0].amps - psi0.amps).norm(), 1e-14);
  }
}

TEST(Dynamics, DenseAndKrylovMatchMatrixExponential) {
  std::mt19937_64 rng(2);
  const std::vector<double> times{0.0, 3.0, 50.0, 217.5, 500.0};
  for (int c = 0; c < 6; ++c) {
    const int L = 6 + 2 * (c % 3);
    const auto p = random_params(rng, L);
    const auto h = build_sector_hamiltonian(p, L / 2);
    const auto states = default_initial_states(L, L / 2);
    const auto psi0 = PureState::basis_state(h.basis, states[static_cast<std::size_t>(c) % states.size()]);
    EvolveOptions dense, krylov;
    krylov.dense_threshold = 0;
    const auto a = evolve(h, psi0, times, dense);
    const auto b = evolve(h, psi0, times, krylov);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const Eigen::VectorXcd ref = oracle::expm_apply(h.dense(), times[k], psi0.amps);
      EXPECT_LE((a[k].amps - ref).norm(), 1e-9) << "dense L=" << L << " t=" << times[k];
      EXPECT_LE((b[k].amps - ref).norm(), 1e-8) << "krylov L=" << L << " t=" << times[k];
    }
  }
}

TEST(Dynamics, EvolverSelectsMethodByThreshold) {
  ModelParams p;
  p.L = 10;
  const auto h = build_sector_hamiltonian(p, 5);
  EXPECT_EQ(Evolver(h).method(), EvolveMethod::Dense);
  EvolveOptions o;
  o.dense_threshold = 100;
  EXPECT_EQ(Evolver(h, o).method(), EvolveMethod::Krylov);
  EXPECT_EQ(to_string(EvolveMethod::Krylov), "krylov");
}

TEST(Dynamics, EvolverRejectsBadInput) {
  ModelParams p;
  p.L = 4;
  const auto h = build_sector_hamiltonian(p, 2);
  Evolver ev(h);
  const std::vector<double> t{0.0, 1.0};
  EXPECT_THROW(ev.states(Eigen::VectorXcd::Constant(6, 1.0), t), DomainError);
  EXPECT_THROW(ev.states(Eigen::VectorXcd::Zero(5), t), ParameterError);
  Eigen::VectorXcd e = Eigen::VectorXcd::Zero(6);
  e[0] = 1.0;
  const std::vector<double> unsorted{2.0, 1.0};
  EXPECT_THROW(ev.states(e, unsorted), ParameterError);
}

TEST(Dynamics, TimeGridIsInclusive) {
  const auto t = time_grid(0.0, 500.0, 2.0);
  EXPECT_EQ(t.size(), 251u);
  EXPECT_EQ(t.back(), 500.0);
  EXPECT_EQ(time_grid(350.0, 450.0, 2.0).size(), 51u);
  EXPECT_EQ(time_grid(0.0, 1.0, 0.1).size(), 11u);
  EXPECT_THROW(time_grid(0.0, 1.0, 0.0), ParameterError);
  EXPECT_THROW(time_grid(2.0, 1.0, 0.5), ParameterError);
}

TEST(Dynamics, ParticipationEntropyReferenceValues) {
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(252, 1.0 / 252);
  for (const double q : {1.0, 2.0, 3.5})
    EXPECT_NEAR(participation_entropy(uniform, q), 5.529429087511423307, 1e-12) << q;
  const Eigen::VectorXd half = Eigen::VectorXd::Constant(2, 0.5);
  EXPECT_NEAR(participation_entropy(half, 1.0), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(participation_entropy(half, 2.0), std::numbers::ln2, 1e-15);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(5);
  delta[2] = 1.0;
  EXPECT_EQ(participation_entropy(delta, 1.0), 0.0);
  EXPECT_EQ(participation_entropy(delta, 2.0), 0.0);
}

TEST(Dynamics, ParticipationEntropyRejectsBadInput) {
  const Eigen::VectorXd half = Eigen::VectorXd::Constant(2, 0.5);
  EXPECT_THROW(participation_entropy(half, 0.5), ParameterError);
  EXPECT_THROW(participation_entropy(Eigen::VectorXd::Constant(2, 0.6), 2.0), DomainError);
  Eigen::VectorXd neg(2);
  neg << 1.5, -0.5;
  EXPECT_THROW(participation_entropy(neg, 2.0), DomainError);
}

TEST(Dynamics, EntropyIsNonIncreasingInOrderAndBounded) {
  std::mt19937_64 rng(3);
  for (int c = 0; c < 1000; ++c) {
    const int n = 1 + static_cast<int>(rng() % 300);
    const auto p = random_distribution(rng, n);
    const double s1 = participation_entropy(p, 1.0);
    const double s2 = participation_entropy(p, 2.0);
    const double s3 = participation_entropy(p, 3.0);
    ASSERT_GE(s1, s2 - 1e-12);
    ASSERT_GE(s2, s3 - 1e-12);
    ASSERT_GE(s3, -1e-12);
    ASSERT_LE(s1, std::log(n) + 1e-12);
    // Renyi-2 against its definition.
    ASSERT_NEAR(s2, -std::log(p.squaredNorm()), 1e-12);
  }
}

TEST(Dynamics, OccupancyOfProductStates) {
  const auto basis = std::make_shared<const SectorBasis>(10, 5);
  const auto neel = PureState::basis_state(basis, state_from_string("1010101010"));
  const auto occ = occupancy(neel);
  for (int j = 0; j < 10; ++j) EXPECT_EQ(occ[static_cast<std::size_t>(j)], j % 2 == 0 ? 1.0 : 0.0);
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(252, 1.0 / 252);
  for (const double x : occupancy(*basis, uniform)) EXPECT_NEAR(x, 0.5, 1e-14);
}

TEST(Dynamics, DefaultInitialStates) {
  const auto s = default_initial_states(10, 5);
  ASSERT_EQ(s.size(), 10u);
  EXPECT_EQ(to_string(s[0]), "1010101010");
  EXPECT_EQ(to_string(s[1]), "1010101001");
  EXPECT_EQ(to_string(s[4]), "1001010101");
  EXPECT_EQ(to_string(s[5]), "0101010101");
  EXPECT_EQ(to_string(s[9]), "0110101010");
  for (const auto& x : s) EXPECT_EQ(x.excitations(), 5);
  EXPECT_THROW(default_initial_states(10, 4), ParameterError);
}

TEST(Dynamics, ConservationInvariantsOnRandomQuenches) {
  std::mt19937_64 rng(4);
  int cases = 0;
  for (int c = 0; c < 250; ++c) {
    const int L = 2 + static_cast<int>(rng() % 7);
    const int M = 1 + static_cast<int>(rng() % static_cast<unsigned>(L - 1));
    const auto p = random_params(rng, L);
    const auto h = build_sector_hamiltonian(p, M);
    const auto basis = h.basis;
    const auto psi0 = PureState::basis_state(basis, basis->state(rng() % basis->size()));
    const std::vector<double> times{0.0, 17.0, 123.0, 499.0};
    EvolveOptions o;
    o.dense_threshold = c % 2 == 0 ? 4096 : 0;
    const auto states = evolve(h, psi0, times, o);
    for (const auto& st : states) {
      ASSERT_NEAR(st.norm(), 1.0, 1e-9);
      double total = 0.0;
      for (const double x : occupancy(st)) {
        ASSERT_GE(x, -1e-12);
        ASSERT_LE(x, 1.0 + 1e-12);
        total += x;
      }
      ASSERT_NEAR(total, M, 1e-9);
      // Energy is conserved.
      const double e0 = std::real(psi0.amps.dot(h.entries * psi0.amps));
      const double e = std::real(st.amps.dot(h.entries * st.amps));
      ASSERT_NEAR(e, e0, 1e-10);
      ++cases;
    }
  }
  EXPECT_GE(cases, 1000);
}

TEST(Dynamics, ReflectedChainGivesSameEntropy) {
  // Site j -> L+1-j maps the profile at delta onto the profile at
  // -delta - 2 pi (L+1) alpha, so reflected initial states evolve alike.
  std::mt19937_64 rng(6);
  const std::vector<double> times{0.0, 40.0, 260.0};
  for (int c = 0; c < 20; ++c) {
    const int L = 4 + 2 * (c % 3);
    auto p = random_params(rng, L);
    ModelParams r = p;
    r.delta = wrap_phase(-p.delta - 2.0 * std::numbers::pi * (L + 1) * p.alpha);
    const auto states = default_initial_states(L, L / 2);
    const auto s = states[static_cast<std::size_t>(c) % states.size()];
    std::string reversed = to_string(s);
    std::reverse(reversed.begin(), reversed.end());
    const auto a = quench_pe_series(p, {s}, {p.delta}, times, {2.0});
    const auto b = quench_pe_series(r, {state_from_string(reversed)}, {r.delta}, times, {2.0});
    for (std::size_t k = 0; k < times.size(); ++k)
      EXPECT_NEAR(a.series[0].samples[0][k], b.series[0].samples[0][k], 1e-9);
  }
}

TEST(Dynamics, StrongDisorderFreezesASingleExcitation) {
  ModelParams p;
  p.L = 10;
  p.mu = 0.5;
  p.V = 4.0;
  const auto times = time_grid(0.0, 500.0, 5.0);
  std::vector<double> deltas;
  for (int r = 0; r < 20; ++r) deltas.push_back(draw_phase(99, 0, static_cast<std::uint64_t>(r)));
  const auto occ = quench_occupancy(p, state_from_string("1000000000"), deltas, times);
  const auto m = occ.sites[0].mean();
  EXPECT_GT(*std::min_element(m.begin(), m.end()), 0.5);
  ModelParams free = p;
  free.V = 0.0;
  free.mu = 0.0;
  const auto spread = quench_occupancy(free, state_from_string("1000000000"), {0.0}, times);
  EXPECT_LT(*std::min_element(spread.sites[0].samples[0].begin(), spread.sites[0].samples[0].end()), 0.2);
}

TEST(Dynamics, QuenchIsIndependentOfWorkerCount) {
  ModelParams p;
  p.mu = 1.5;
  p.V = 1.0;
  const auto times = time_grid(0.0, 100.0, 10.0);
  const std::vector<double> deltas{0.1, -1.2, 2.7};
  QuenchOptions one, three;
  three.workers = 3;
  const auto states = default_initial_states(10, 5);
  const auto a = quench_pe_series(p, states, deltas, times, {1.0, 2.0}, one);
  const auto b = quench_pe_series(p, states, deltas, times, {1.0, 2.0}, three);
  ASSERT_EQ(a.series[1].trajectories(), 30u);
  for (std::size_t o = 0; o < 2; ++o) EXPECT_EQ(a.series[o].samples, b.series[o].samples);
  // Trajectory draw * n_states + state.
  const auto single = quench_pe_series(p, {states[3]}, {deltas[2]}, times, {2.0});
  EXPECT_EQ(single.series[0].samples[0], a.series[1].samples[2 * 10 + 3]);
}

TEST(Dynamics, QuenchRejectsMixedSectors) {
  ModelParams p;
  const std::vector<FockState> mixed{state_from_string("1010101010"), state_from_string("1110101010")};
  const std::vector<double> t{0.0};
  EXPECT_THROW(quench_pe_series(p, mixed, {0.0}, t, {2.0}), ParameterError);
  EXPECT_THROW(quench_pe_series(p, {state_from_string("101010")}, {0.0}, t, {2.0}), ParameterError);
  EXPECT_THROW(quench_pe_series(p, {state_from_string("1010101010")}, {}, t, {2.0}), ParameterError);
}

TEST(Dynamics, ShotResamplingIsReproducibleAndUnbiased) {
  Eigen::VectorXd p(4);
  p << 0.1, 0.2, 0.3, 0.4;
  CounterRng a(stream_key(5, 1, 2)), b(stream_key(5, 1, 2));
  const auto x = resample_shots(p, 1000, a);
  const auto y = resample_shots(p, 1000, b);
  EXPECT_EQ(x, y);
  EXPECT_NEAR(x.sum(), 1.0, 1e-12);
  for (const double v : x) EXPECT_EQ(std::round(v * 1000.0), v * 1000.0);
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(4);
  CounterRng rng(stream_key(7, 0, 0));
  for (int r = 0; r < 200; ++r) avg += resample_shots(p, 1000, rng);
  avg /= 200.0;
  EXPECT_LE((avg - p).cwiseAbs().maxCoeff(), 0.005);
  EXPECT_THROW(resample_shots(p, 0, rng), ParameterError);
}

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "lnd/diagnostics.hpp"

namespace {

using lnd::Matrix;
using lnd::Rng;
using lnd::TabularMDP;

Matrix random_policy(int S, int A, Rng& rng) {
  Matrix pol(S, A);
  for (int s = 0; s < S; ++s) {
    double sum = 0.0;
    for (int a = 0; a < A; ++a) {
      pol[s][a] = rng.uniform() + 0.05;
      sum += pol[s][a];
    }
    for (int a = 0; a < A; ++a) pol[s][a] /= sum;
  }
  return pol;
}

// Independent oracle: the discounted occupancy is (1 - gamma) times the
// discounted sum of per-step state distributions, rolled forward until the
// tail weight is negligible.
std::vector<double> forward_dp_state_marginal(const TabularMDP& mdp,
                                              const Matrix& policy) {
  int S = mdp.num_states;
  Matrix M(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      for (int s2 = 0; s2 < S; ++s2)
        M[s][s2] += policy[s][a] * mdp.p(s, a, s2);
  std::vector<double> dist(mdp.p0);
  std::vector<double> d(static_cast<std::size_t>(S), 0.0);
  double w = 1.0 - mdp.gamma;
  while (w > 1e-16) {
    for (int s = 0; s < S; ++s) d[static_cast<std::size_t>(s)] += w * dist[static_cast<std::size_t>(s)];
    std::vector<double> next(static_cast<std::size_t>(S), 0.0);
    for (int s = 0; s < S; ++s)
      for (int s2 = 0; s2 < S; ++s2)
        next[static_cast<std::size_t>(s2)] +=
            dist[static_cast<std::size_t>(s)] * M[s][s2];
    dist = std::move(next);
    w *= mdp.gamma;
  }
  return d;
}

TEST(SolveLinear, RecoversAKnownSolution) {
  Matrix a(3, 3);
  double vals[3][3] = {{2, 1, -1}, {-3, -1, 2}, {-2, 1, 2}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a[i][j] = vals[i][j];
  std::vector<double> b{8, -11, -3};
  std::vector<double> x = lnd::detail::solve_linear(a, b);
  EXPECT_NEAR(x[0], 2.0, 1e-12);
  EXPECT_NEAR(x[1], 3.0, 1e-12);
  EXPECT_NEAR(x[2], -1.0, 1e-12);

  Matrix sing(2, 2);
  sing[0][0] = 1;
  sing[0][1] = 2;
  sing[1][0] = 2;
  sing[1][1] = 4;
  EXPECT_THROW(lnd::detail::solve_linear(sing, {1, 2}),
               lnd::ConvergenceError);
}

TEST(Occupancy, TwoStateChainMatchesHandSolution) {
  // s0 always hops to s1, s1 is absorbing; gamma = 0.5 and start in s0 give
  // equal mass on both states.
  TabularMDP mdp;
  mdp.num_states = 2;
  mdp.num_actions = 1;
  mdp.gamma = 0.5;
  mdp.P = {0, 1, 0, 1};
  mdp.r = {0, 0};
  mdp.p0 = {1, 0};
  Matrix pol(2, 1);
  pol[0][0] = 1;
  pol[1][0] = 1;
  lnd::OccupancyTable occ = lnd::occupancy_measure(mdp, pol);
  EXPECT_NEAR(occ.at(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(occ.at(1, 0), 0.5, 1e-12);
  EXPECT_LT(occ.residual, 1e-10);
}

TEST(Occupancy, AgreesWithForwardRolloutOracleAndSumsToOne) {
  Rng rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    TabularMDP mdp = TabularMDP::random(6, 3, 0.9, rng);
    Matrix pol = random_policy(6, 3, rng);
    lnd::OccupancyTable occ = lnd::occupancy_measure(mdp, pol);

    double total = 0.0;
    for (double v : occ.rho) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-10);
    EXPECT_LT(occ.residual, 1e-10);

    std::vector<double> d = forward_dp_state_marginal(mdp, pol);
    for (int s = 0; s < 6; ++s)
      for (int a = 0; a < 3; ++a)
        EXPECT_NEAR(occ.at(s, a), d[static_cast<std::size_t>(s)] * pol[s][a],
                    1e-10);
  }
}

TEST(Occupancy, FixedPointPathAgreesWithTheOracle) {
  // 65 states forces the iterative solver.
  Rng rng(43);
  TabularMDP mdp = TabularMDP::random(65, 2, 0.9, rng);
  Matrix pol = random_policy(65, 2, rng);
  lnd::OccupancyTable occ = lnd::occupancy_measure(mdp, pol);
  std::vector<double> d = forward_dp_state_marginal(mdp, pol);
  double worst = 0.0;
  for (int s = 0; s < 65; ++s)
    for (int a = 0; a < 2; ++a)
      worst = std::max(worst, std::fabs(occ.at(s, a) -
                                        d[static_cast<std::size_t>(s)] *
                                            pol[s][a]));
  EXPECT_LT(worst, 1e-8);
  EXPECT_LT(occ.residual, 1e-10);
}

TEST(Occupancy, RejectsBadPolicies) {
  Rng rng(47);
  TabularMDP mdp = TabularMDP::random(3, 2, 0.9, rng);
  Matrix pol(3, 2);
  pol[0][0] = 0.6;
  pol[0][1] = 0.6;  // row sums to 1.2
  pol[1][0] = 1.0;
  pol[2][0] = 1.0;
  EXPECT_THROW(lnd::occupancy_measure(mdp, pol), lnd::InputError);
  Matrix wrong(2, 2);
  EXPECT_THROW(lnd::occupancy_measure(mdp, wrong), lnd::ShapeError);
}

TEST(Relabel, OccupancyCommutesWithStatePermutations) {
  Rng rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    int S = 2 + rng.uniform_int(7);  // 2..8 states
    int A = 1 + rng.uniform_int(3);
    TabularMDP mdp = TabularMDP::random(S, A, 0.85, rng);
    Matrix pol = random_policy(S, A, rng);
    std::vector<int> perm = rng.permutation(S);
    lnd::RelabelCheck check = lnd::verify_relabeling_invariance(mdp, pol, perm);
    EXPECT_LT(check.max_abs_diff, 1e-10)
        << "trial " << trial << " S=" << S << " A=" << A;
  }
}

TEST(Relabel, PermutationValidationCatchesNonBijections) {
  EXPECT_NO_THROW(lnd::check_permutation({2, 0, 1}, 3));
  EXPECT_THROW(lnd::check_permutation({0, 0, 1}, 3), lnd::InputError);
  EXPECT_THROW(lnd::check_permutation({0, 1}, 3), lnd::InputError);
  EXPECT_THROW(lnd::check_permutation({0, 1, 3}, 3), lnd::InputError);
}

TEST(Histogram, RightEdgeBelongsToTheLastBin) {
  std::vector<int> h = lnd::histogram_unit({0.0, 0.05, 0.1, 0.95, 1.0}, 10);
  EXPECT_EQ(h[0], 2);
  EXPECT_EQ(h[1], 1);
  EXPECT_EQ(h[9], 2);
  int total = 0;
  for (int c : h) total += c;
  EXPECT_EQ(total, 5);
  EXPECT_THROW(lnd::histogram_unit({1.5}, 10), lnd::InputError);
  EXPECT_THROW(lnd::histogram_unit({0.5}, 0), lnd::InputError);
}

TEST(Scripted, ControllerReachesTheGoalRegion) {
  lnd::PointMass2D env;
  lnd::DemoBuffer corpus = lnd::scripted_expert_corpus(env, 3, 11);
  EXPECT_EQ(corpus.size(), 300);
  std::vector<double> rets = lnd::episode_returns(corpus);
  for (double r : rets) {
    EXPECT_LT(r, 0.0);    // rewards are negative by construction
    EXPECT_GT(r, -30.0);  // but the controller is competent
  }
  // Final states sit near the goal.
  for (int ep = 0; ep < 3; ++ep) {
    const auto& last = corpus.records[static_cast<std::size_t>(ep) * 100 + 99];
    double dist = std::hypot(last.s_next[0] - 1.0, last.s_next[1] - 1.0);
    EXPECT_LT(dist, 0.2);
  }
}

TEST(PaccInit, ProducesOneAccuracyPerTrialInsideTheUnitInterval) {
  lnd::PointMass2D env;
  lnd::LtiNoise noise = lnd::sample_noise(lnd::NoiseKind::kShuffle, 4, 3);
  lnd::PaccInitConfig cfg;
  cfg.trials = 5;
  cfg.batch = 64;
  cfg.corpus_episodes = 1;
  cfg.encoder_hidden = {8};
  cfg.disc_hidden = {8};
  cfg.policy_hidden = {8};
  std::vector<double> accs = lnd::pacc_init_stat(env, noise, cfg, 7);
  ASSERT_EQ(accs.size(), 5u);
  for (double a : accs) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
  // Deterministic in the seed.
  EXPECT_EQ(lnd::pacc_init_stat(env, noise, cfg, 7), accs);
}

TEST(Sweep, ReturnsOnePointPerSigmaWithPerSeedReturns) {
  lnd::PointMass2D env;
  lnd::DemoBuffer expert = lnd::scripted_expert_corpus(env, 2, 13);
  lnd::GailConfig cfg;
  cfg.policy_hidden = {8};
  cfg.value_hidden = {8};
  cfg.disc_hidden = {8};
  cfg.batch = 100;
  cfg.iterations = 1;
  std::vector<lnd::SweepPoint> pts =
      lnd::gaussian_scale_sweep(env, expert, {0.1, 1.0}, 2, cfg, 5, 2);
  ASSERT_EQ(pts.size(), 2u);
  for (const lnd::SweepPoint& pt : pts) {
    ASSERT_EQ(pt.returns.size(), 2u);
    double mean = (pt.returns[0] + pt.returns[1]) / 2.0;
    EXPECT_NEAR(pt.mean, mean, 1e-12);
    EXPECT_TRUE(std::isfinite(pt.mean));
  }
  EXPECT_DOUBLE_EQ(pts[0].sigma, 0.1);
  EXPECT_DOUBLE_EQ(pts[1].sigma, 1.0);
}

TEST(Embeddings, ExportWritesOneRowPerRecord) {
  Rng rng(61);
  lnd::DenseNet enc = lnd::DenseNet::random_init({4, 8, 3},
                                                 lnd::Head::kLinear, rng);
  lnd::DenseNet disc = lnd::DenseNet::random_init({3, 8, 1},
                                                  lnd::Head::kSigmoid, rng);
  lnd::PointMass2D env;
  lnd::DemoBuffer buf = lnd::scripted_expert_corpus(env, 1, 17);
  buf.records.resize(3);
  std::string path = testing::TempDir() + "/emb.csv";
  lnd::export_embeddings(enc, disc, {{"expert", &buf}}, path);

  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "buffer,index,z0,z1,z2,dn,p_das");
  // Each data row has buffer, index, three z's, dn, p_das: 7 fields.
  std::stringstream ss(lines[1]);
  std::string field;
  int fields = 0;
  while (std::getline(ss, field, ',')) ++fields;
  EXPECT_EQ(fields, 7);
  EXPECT_EQ(lines[1].substr(0, 9), "expert,0,");
}

}  // namespace

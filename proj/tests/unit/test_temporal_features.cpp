#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "dyg2vec/temporal_features.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace dyg;
using namespace dyg::testing;

namespace {

std::vector<Edge> make_edges(std::initializer_list<std::tuple<NodeId, NodeId, double>> list) {
  std::vector<Edge> out;
  for (const auto& [u, v, t] : list) out.push_back({out.size(), u, v, t, std::nullopt});
  return out;
}

}  // namespace

TEST(DegreeAt, Examples) {
  const auto e = make_edges({{1, 2, 1}, {1, 3, 2}, {2, 3, 3}});
  EXPECT_EQ(degree_at(e, 1, 2), 2);
  EXPECT_EQ(degree_at(e, 1, 0.5), 0);
  EXPECT_EQ(degree_at(e, 9, 5), 0);
  const auto par = make_edges({{1, 2, 1}, {1, 2, 2}});
  EXPECT_EQ(degree_at(par, 1, 2), 2);
}

TEST(CommonNeighborsAt, Examples) {
  const auto e = make_edges({{1, 2, 1}, {1, 3, 2}, {2, 3, 3}, {2, 4, 4}});
  EXPECT_EQ(common_neighbors_at(e, 1, 2, 4), 1);
  EXPECT_EQ(common_neighbors_at(e, 1, 2, 1.5), 0);
  EXPECT_EQ(common_neighbors_at(e, 7, 2, 4), 0);
}

TEST(TemporalCounts, MatchBruteForceOracle) {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng = make_rng(trial, {400});
    const auto g = dyg::testing::random_graph(rng, dyg::testing::random_int(rng, 1, 50), 8, 15);
    for (NodeId u = 0; u < g.num_nodes; ++u)
      for (double t = -1; t <= 16; t += 1) {
        ASSERT_EQ(degree_at(g.edges, u, t), brute_degree(g.edges, u, t));
        for (NodeId v = 0; v < g.num_nodes; ++v) ASSERT_EQ(common_neighbors_at(g.edges, u, v, t), brute_common(g.edges, u, v, t));
      }
  }
}

TEST(TemporalCounts, MonotoneInTimeAndSymmetric) {
  for (std::uint64_t trial = 0; trial < 30; ++trial) {
    Rng rng = make_rng(trial, {401});
    const auto g = dyg::testing::random_graph(rng, 40, 7, 10);
    for (NodeId u = 0; u < g.num_nodes; ++u)
      for (NodeId v = 0; v < g.num_nodes; ++v)
        for (double t = 0; t < 10; t += 1) {
          EXPECT_LE(degree_at(g.edges, u, t), degree_at(g.edges, u, t + 1));
          EXPECT_LE(common_neighbors_at(g.edges, u, v, t), common_neighbors_at(g.edges, u, v, t + 1));
          EXPECT_EQ(common_neighbors_at(g.edges, u, v, t), common_neighbors_at(g.edges, v, u, t));
        }
  }
}

TEST(StructuralCounts, RowsMatchPointQueries) {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng = make_rng(trial, {402});
    const auto g = make_ctdg(dyg::testing::random_edges(rng, dyg::testing::random_int(rng, 1, 50), 9, 12, true), 9);
    const auto c = structural_counts(g.edges);
    for (std::size_t p = 0; p < g.num_edges(); ++p) {
      const Edge& e = g.edges[p];
      const auto r = static_cast<Index>(p);
      ASSERT_EQ(c(r, 0), brute_degree(g.edges, e.u, e.t));
      ASSERT_EQ(c(r, 1), brute_degree(g.edges, e.v, e.t));
      ASSERT_EQ(c(r, 2), brute_common(g.edges, e.u, e.v, e.t));
    }
  }
}

TEST(ScaleCounts, Log1pAndRaw) {
  Matrix<double> m(1, 3);
  m << 0, 1, 9;
  EXPECT_EQ(scale_counts(m, CountScale::Raw), m);
  const auto s = scale_counts(m, CountScale::Log1p);
  EXPECT_EQ(s(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(s(0, 1), std::log(2.0));
  EXPECT_DOUBLE_EQ(s(0, 2), std::log(10.0));
}

TEST(EdgeEncoding, SelectorRowsReproduceCounts) {
  ad::Tape<double> tape;
  Matrix<double> counts(1, 3);
  counts << 2, 3, 1;
  Matrix<double> w2 = Matrix<double>::Zero(3, 5);
  w2(0, 0) = w2(1, 1) = w2(2, 2) = 1;
  const auto out = ad::matmul(tape.constant(counts), tape.constant(w2)).value();
  EXPECT_EQ(out(0, 0), 2);
  EXPECT_EQ(out(0, 1), 3);
  EXPECT_EQ(out(0, 2), 1);
  EXPECT_EQ(out(0, 3), 0);
  const auto zero = ad::matmul(tape.constant(counts), tape.constant(Matrix<double>::Zero(3, 5))).value();
  EXPECT_TRUE(zero.isZero(0));
}

TEST(Time2Vec, ZeroParamsGiveZero) {
  const Eigen::RowVectorXd z = Eigen::RowVectorXd::Zero(6);
  EXPECT_TRUE(time2vec_eval(z, z, 3.7).isZero(0));
}

TEST(Time2Vec, LinearAndPeriodicTerms) {
  Eigen::RowVectorXd omega(3), phase = Eigen::RowVectorXd::Zero(3);
  omega << 1, std::numbers::pi, std::numbers::pi;
  const auto out = time2vec_eval(omega, phase, 2.0);
  EXPECT_EQ(out[0], 2.0);
  EXPECT_NEAR(out[1], 0.0, 1e-12);
  EXPECT_NEAR(out[2], 0.0, 1e-12);
}

TEST(Time2Vec, TapeMatchesEvalAndIsBounded) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = dyg::testing::random_int(rng, 1, 12);
    Eigen::RowVectorXd omega = dyg::testing::random_matrix<double>(1, d, rng, -3, 3);
    Eigen::RowVectorXd phase = dyg::testing::random_matrix<double>(1, d, rng, -3, 3);
    Matrix<double> dt = dyg::testing::random_matrix<double>(7, 1, rng, 0, 100);
    ad::Tape<double> tape;
    const auto out = time2vec(tape.constant(omega), tape.constant(phase), tape.constant(dt)).value();
    for (Index r = 0; r < 7; ++r) {
      const auto ref = time2vec_eval(omega, phase, dt(r, 0));
      for (Index k = 0; k < d; ++k) {
        EXPECT_NEAR(out(r, k), ref[k], 1e-12);
        if (k >= 1) {
          EXPECT_LE(out(r, k), 1.0);
          EXPECT_GE(out(r, k), -1.0);
        }
      }
    }
  }
}

TEST(Time2Vec, InitialFrequencies) {
  const auto w = time2vec_init_omega(100);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_NEAR(w[1], 1.0, 1e-12);
  EXPECT_NEAR(w[99], 1e-9, 1e-21);
}

#pragma once

#include <span>

#include "dyg2vec/ctdg.hpp"
#include "dyg2vec/tensor.hpp"

namespace dyg {

/// Number of edges in `edges` touching `node` with timestamp <= t. Parallel edges each count.
int degree_at(std::span<const Edge> edges, NodeId node, double t);

/// |N(u) ∩ N(v)| over edges with timestamp <= t, where N(x) is the set of
/// distinct nodes adjacent to x, excluding u and v themselves.
int common_neighbors_at(std::span<const Edge> edges, NodeId u, NodeId v, double t);

/// For every edge p of the slice: [deg(u_p), deg(v_p), cn(u_p, v_p)], each
/// evaluated at t_p over the slice. One sweep over timestamp groups.
Matrix<double> structural_counts(std::span<const Edge> edges);

enum class CountScale { Log1p, Raw };

/// x -> ln(1 + x) for Log1p; identity for Raw.
Matrix<double> scale_counts(Matrix<double> counts, CountScale scale);

/// Time2Vec on a column of time differences (n x 1):
/// out[:,0] = w0*dt + b0, out[:,k] = sin(wk*dt + bk) for k >= 1.
/// omega and phase are 1 x D.
template <typename S>
ad::Var<S> time2vec(const ad::Var<S>& omega, const ad::Var<S>& phase, const ad::Var<S>& dt) {
  if (dt.cols() != 1 || omega.rows() != 1 || phase.rows() != 1 || omega.cols() != phase.cols() || omega.cols() < 1)
    throw DimensionError("time2vec: expected dt n x 1 and omega/phase 1 x D");
  const Index d = omega.cols();
  auto lin = ad::add(ad::matmul(dt, omega), phase);
  if (d == 1) return lin;
  return ad::concat_cols<S>({ad::slice_cols(lin, 0, 1), ad::sin(ad::slice_cols(lin, 1, d - 1))});
}

/// Plain evaluation of the same map for a single time difference.
Eigen::RowVectorXd time2vec_eval(const Eigen::RowVectorXd& omega, const Eigen::RowVectorXd& phase, double dt);

/// Frequencies spread geometrically from 1 down to 1e-9 for the sinusoidal part and a
/// zero linear coefficient. Phases start at zero.
Eigen::RowVectorXd time2vec_init_omega(Index dim);

}  // namespace dyg

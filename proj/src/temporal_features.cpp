#include "dyg2vec/temporal_features.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace dyg {

int degree_at(std::span<const Edge> edges, NodeId node, double t) {
  int d = 0;
  for (const Edge& e : edges)
    if (e.t <= t && e.touches(node)) ++d;
  return d;
}

int common_neighbors_at(std::span<const Edge> edges, NodeId u, NodeId v, double t) {
  std::unordered_set<NodeId> nu, nv;
  for (const Edge& e : edges) {
    if (e.t > t) continue;
    if (e.touches(u)) nu.insert(e.other(u));
    if (e.touches(v)) nv.insert(e.other(v));
  }
  int c = 0;
  for (NodeId w : nu)
    if (w != u && w != v && nv.count(w)) ++c;
  return c;
}

Matrix<double> structural_counts(std::span<const Edge> edges) {
  Matrix<double> out(static_cast<Index>(edges.size()), 3);
  std::unordered_map<NodeId, int> degree;
  std::unordered_map<NodeId, std::unordered_set<NodeId>> nbrs;
  auto common = [&](NodeId u, NodeId v) {
    const auto& a = nbrs[u];
    const auto& b = nbrs[v];
    const auto& small = a.size() <= b.size() ? a : b;
    const auto& large = a.size() <= b.size() ? b : a;
    int c = 0;
    for (NodeId w : small)
      if (w != u && w != v && large.count(w)) ++c;
    return c;
  };
  std::size_t i = 0;
  while (i < edges.size()) {
    std::size_t j = i;
    while (j < edges.size() && edges[j].t == edges[i].t) ++j;
    for (std::size_t k = i; k < j; ++k) {
      const Edge& e = edges[k];
      ++degree[e.u];
      if (e.v != e.u) ++degree[e.v];
      nbrs[e.u].insert(e.v);
      nbrs[e.v].insert(e.u);
    }
    for (std::size_t k = i; k < j; ++k) {
      const Edge& e = edges[k];
      out(static_cast<Index>(k), 0) = degree[e.u];
      out(static_cast<Index>(k), 1) = degree[e.v];
      out(static_cast<Index>(k), 2) = common(e.u, e.v);
    }
    i = j;
  }
  return out;
}

Matrix<double> scale_counts(Matrix<double> counts, CountScale scale) {
  if (scale == CountScale::Log1p) counts = counts.array().log1p().matrix();
  return counts;
}

Eigen::RowVectorXd time2vec_eval(const Eigen::RowVectorXd& omega, const Eigen::RowVectorXd& phase, double dt) {
  Eigen::RowVectorXd out = omega * dt + phase;
  for (Index k = 1; k < out.size(); ++k) out[k] = std::sin(out[k]);
  return out;
}

Eigen::RowVectorXd time2vec_init_omega(Index dim) {
  Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(dim);
  for (Index k = 1; k < dim; ++k) {
    const double frac = dim > 2 ? static_cast<double>(k - 1) / static_cast<double>(dim - 2) : 0.0;
    w[k] = std::pow(10.0, -9.0 * frac);
  }
  return w;
}

}  // namespace dyg

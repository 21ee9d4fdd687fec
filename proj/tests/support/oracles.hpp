#pragma once

// Brute-force reference implementations shared by unit and acceptance tests.

#include <algorithm>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "dyg2vec/ctdg.hpp"
#include "dyg2vec/metrics.hpp"

namespace dyg::testing {

// Pairwise oracles, quadratic in the number of records.
inline std::optional<double> oracle_ap(const std::vector<double>& s, const std::vector<int>& y) {
  const std::size_t n = s.size();
  std::vector<std::pair<std::size_t, double>> terms;
  for (std::size_t i = 0; i < n; ++i) {
    if (!y[i]) continue;
    std::size_t rank = 1, hits = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const bool ahead = s[j] > s[i] || (s[j] == s[i] && j < i);
      rank += ahead;
      hits += ahead && y[j];
    }
    terms.push_back({rank, static_cast<double>(hits) / static_cast<double>(rank)});
  }
  if (terms.empty()) return std::nullopt;
  std::sort(terms.begin(), terms.end());
  double sum = 0;
  for (const auto& t : terms) sum += t.second;
  return sum / static_cast<double>(terms.size());
}

inline std::optional<double> oracle_auc(const std::vector<double>& s, const std::vector<int>& y) {
  long twice_wins = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    pos += y[i];
    neg += !y[i];
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (!y[j]) twice_wins += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
  }
  if (pos == 0 || neg == 0) return std::nullopt;
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

inline std::size_t oracle_rank(const RankGroup& g) {
  std::size_t r = 1;
  for (double n : g.negatives)
    if (!(n < g.positive)) ++r;
  return r;
}

inline int brute_degree(std::span<const Edge> edges, NodeId n, double t) {
  int d = 0;
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (!(edges[i].t > t) && (edges[i].u == n || edges[i].v == n)) d += 1;
  return d;
}

inline std::set<NodeId> brute_nbrs(std::span<const Edge> edges, NodeId x, double t) {
  std::set<NodeId> s;
  for (const Edge& e : edges) {
    if (e.t > t) continue;
    if (e.u == x) s.insert(e.v);
    if (e.v == x) s.insert(e.u);
  }
  return s;
}

inline int brute_common(std::span<const Edge> edges, NodeId u, NodeId v, double t) {
  auto a = brute_nbrs(edges, u, t), b = brute_nbrs(edges, v, t);
  a.erase(u);
  a.erase(v);
  int c = 0;
  for (NodeId w : a) c += static_cast<int>(b.count(w));
  return c;
}


}  // namespace dyg::testing

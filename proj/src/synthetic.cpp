#include "dyg2vec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_map>

#include "dyg2vec/error.hpp"
#include "dyg2vec/rng.hpp"

namespace dyg {

CTDG generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.num_nodes < 3) throw ConfigError("synthetic graph needs at least 3 nodes");
  if (cfg.recent < 1) throw ConfigError("synthetic recency window must be >= 1");
  if (cfg.activity_exponent < 0.0) throw ConfigError("activity exponent must be >= 0");
  Rng rng = make_rng(cfg.seed, {tag(Stream::Synthetic)});
  const auto n = static_cast<std::uint64_t>(cfg.num_nodes);

  std::vector<Edge> edges;
  edges.reserve(cfg.num_edges);
  std::deque<std::size_t> window;  // positions of the last `recent` edges
  std::unordered_map<NodeId, int> recent_degree;

  std::vector<double> cumulative(static_cast<std::size_t>(n));
  double total = 0.0;
  for (std::uint64_t i = 0; i < n; ++i) {
    total += std::pow(static_cast<double>(i + 1), -cfg.activity_exponent);
    cumulative[i] = total;
  }
  auto draw = [&]() {
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), uniform01(rng) * total);
    return static_cast<NodeId>(std::min<std::ptrdiff_t>(it - cumulative.begin(), static_cast<std::ptrdiff_t>(n) - 1));
  };
  auto random_pair = [&]() {
    const NodeId u = draw();
    NodeId v = draw();
    while (v == u) v = draw();
    return std::pair{u, v};
  };

  for (std::size_t i = 0; i < cfg.num_edges; ++i) {
    std::pair<NodeId, NodeId> pair;
    bool closed = false;
    if (!window.empty() && uniform01(rng) < cfg.closure_prob) {
      // Pick a recent edge (w, x), then another recent edge of w to find y.
      const Edge& first = edges[window[uniform_index(rng, window.size())]];
      const bool flip = uniform01(rng) < 0.5;
      const NodeId w = flip ? first.u : first.v;
      const NodeId x = first.other(w);
      std::vector<NodeId> candidates;
      for (std::size_t p : window) {
        const Edge& e = edges[p];
        if (!e.touches(w)) continue;
        const NodeId y = e.other(w);
        if (y != x && y != w) candidates.push_back(y);
      }
      if (!candidates.empty()) {
        pair = {x, candidates[uniform_index(rng, candidates.size())]};
        closed = true;
      }
    }
    if (!closed) pair = random_pair();

    Edge e;
    e.index = i;
    e.u = pair.first;
    e.v = pair.second;
    e.t = static_cast<double>(i) * cfg.period;
    e.label = recent_degree[e.u] >= cfg.label_degree ? 1 : 0;
    edges.push_back(e);

    window.push_back(i);
    ++recent_degree[e.u];
    ++recent_degree[e.v];
    if (window.size() > cfg.recent) {
      const Edge& old = edges[window.front()];
      --recent_degree[old.u];
      --recent_degree[old.v];
      window.pop_front();
    }
  }
  return make_ctdg(std::move(edges), cfg.num_nodes);
}

}  // namespace dyg

#include "dyg2vec/window.hpp"

#include <algorithm>

#include "dyg2vec/error.hpp"

namespace dyg {

std::vector<Interval> generate_intervals(std::size_t num_edges, std::size_t stride, std::size_t window) {
  if (stride < 1 || window < 1) throw ContractError("generate_intervals: stride and window must be >= 1");
  std::vector<Interval> out;
  const std::size_t m = num_edges / stride;
  for (std::size_t j = 1; j <= m; ++j) {
    const std::size_t end = j * stride;
    out.push_back({end > window ? end - window : 0, end});
  }
  return out;
}

std::optional<WindowBatch> make_window_batch(std::span<const Edge> edges, Interval interval, std::size_t target_size) {
  if (interval.start > interval.end || interval.end > edges.size())
    throw ContractError("make_window_batch: interval outside the edge list");
  WindowBatch b;
  b.interval = interval;
  b.input_edges = edges.subspan(interval.start, interval.end - interval.start);
  const std::size_t stop = std::min(interval.end + target_size, edges.size());
  b.target_edges.assign(edges.begin() + static_cast<std::ptrdiff_t>(interval.end),
                        edges.begin() + static_cast<std::ptrdiff_t>(stop));
  if (b.input_edges.empty() && b.target_edges.empty()) return std::nullopt;
  return b;
}

std::vector<WindowBatch> target_batches(std::span<const Edge> history, std::span<const Edge> targets,
                                        std::size_t window, std::size_t target_size) {
  if (window < 1 || target_size < 1) throw ContractError("target_batches: window and target size must be >= 1");
  std::vector<WindowBatch> out;
  for (std::size_t begin = 0; begin < targets.size(); begin += target_size) {
    const std::size_t end = std::min(begin + target_size, targets.size());
    const std::size_t first_index = targets[begin].index;
    const auto it = std::lower_bound(history.begin(), history.end(), first_index,
                                     [](const Edge& e, std::size_t idx) { return e.index < idx; });
    const auto pos = static_cast<std::size_t>(it - history.begin());
    const std::size_t lo = pos > window ? pos - window : 0;
    WindowBatch b;
    b.interval = {lo, pos};
    b.input_edges = history.subspan(lo, pos - lo);
    b.target_edges.assign(targets.begin() + static_cast<std::ptrdiff_t>(begin),
                          targets.begin() + static_cast<std::ptrdiff_t>(end));
    out.push_back(std::move(b));
  }
  return out;
}

Incidence::Incidence(std::span<const Edge> edges) : edges_(edges) {
  nodes_.reserve(edges.size());
  for (const Edge& e : edges) {
    nodes_.push_back(e.u);
    nodes_.push_back(e.v);
  }
  std::sort(nodes_.begin(), nodes_.end());
  nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
  local_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) local_.emplace(nodes_[i], static_cast<int>(i));
  lists_.resize(nodes_.size());
  for (std::size_t p = 0; p < edges.size(); ++p) {
    const Edge& e = edges[p];
    lists_[static_cast<std::size_t>(local_.at(e.u))].push_back(p);
    if (e.v != e.u) lists_[static_cast<std::size_t>(local_.at(e.v))].push_back(p);
  }
}

int Incidence::local(NodeId n) const {
  auto it = local_.find(n);
  return it == local_.end() ? -1 : it->second;
}

std::span<const std::size_t> Incidence::incident_of(NodeId n) const {
  const int i = local(n);
  if (i < 0) return {};
  return incident(i);
}

std::vector<std::size_t> sample_neighbors(const Incidence& inc, NodeId anchor, std::size_t n, Rng& rng) {
  if (n < 1) throw ContractError("sample_neighbors: need at least one neighbor slot");
  const auto all = inc.incident_of(anchor);
  std::vector<std::size_t> pool(all.begin(), all.end());
  if (pool.size() <= n) return pool;
  for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<std::size_t> sample_neighbors(std::span<const Edge> input_edges, NodeId anchor, std::size_t n, Rng& rng) {
  return sample_neighbors(Incidence(input_edges), anchor, n, rng);
}

LayeredNeighborhood build_layered_neighborhood(const Incidence& inc, std::span<const NodeId> seeds, int num_layers,
                                               std::size_t num_neighbors, std::uint64_t seed) {
  if (num_layers < 1) throw ContractError("build_layered_neighborhood: need at least one layer");
  LayeredNeighborhood out;
  std::vector<NodeId> anchors(seeds.begin(), seeds.end());
  std::sort(anchors.begin(), anchors.end());
  anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());
  for (int hop = 1; hop <= num_layers; ++hop) {
    LayeredNeighborhood::Hop h;
    h.anchors = anchors;
    h.samples.reserve(anchors.size());
    std::vector<NodeId> next = anchors;
    for (NodeId a : anchors) {
      Rng rng = make_rng(seed, {tag(Stream::Neighbor), static_cast<std::uint64_t>(hop), static_cast<std::uint64_t>(a)});
      auto s = sample_neighbors(inc, a, num_neighbors, rng);
      for (std::size_t p : s) next.push_back(inc.edges()[p].other(a));
      h.samples.push_back(std::move(s));
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    out.hops.push_back(std::move(h));
    anchors = std::move(next);
  }
  return out;
}

}  // namespace dyg

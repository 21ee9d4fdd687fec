#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "dyg2vec/ctdg.hpp"

namespace dyg {

/// Half-open range [start, end) of edge indices.
struct Interval {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const Interval&) const = default;
};

/// {[jS - W, jS) : j = 0..floor(E/S)}, lower bound clamped to 0 and the empty
/// leading interval dropped.
std::vector<Interval> generate_intervals(std::size_t num_edges, std::size_t stride, std::size_t window);

/// Input (history) slice and the target slice that follows it.
struct WindowBatch {
  Interval interval;
  std::span<const Edge> input_edges;
  std::vector<Edge> target_edges;
};

/// input = edges[start, end), target = edges[end, min(end + K, E)).
/// Returns nullopt (skip) when both slices are empty.
std::optional<WindowBatch> make_window_batch(std::span<const Edge> edges, Interval interval, std::size_t target_size);

/// Chunks `targets` into groups of K consecutive edges (stride = K). Each batch's
/// input is the W edges of `history` that precede the chunk's first target, by
/// edge index. `history` must be sorted by index and outlive the batches.
std::vector<WindowBatch> target_batches(std::span<const Edge> history, std::span<const Edge> targets,
                                        std::size_t window, std::size_t target_size);

/// Node -> incident edge positions over an edge slice. Nodes are held in
/// ascending id order and addressed by a dense local index.
class Incidence {
 public:
  explicit Incidence(std::span<const Edge> edges);

  std::span<const Edge> edges() const { return edges_; }
  const std::vector<NodeId>& nodes() const { return nodes_; }
  /// Local index of n, or -1 when n has no incident edge.
  int local(NodeId n) const;
  /// Positions (into edges()) of edges touching the node with local index i, in time order.
  const std::vector<std::size_t>& incident(int i) const { return lists_[static_cast<std::size_t>(i)]; }
  std::span<const std::size_t> incident_of(NodeId n) const;

 private:
  std::span<const Edge> edges_;
  std::vector<NodeId> nodes_;
  std::unordered_map<NodeId, int> local_;
  std::vector<std::vector<std::size_t>> lists_;
};

/// Uniform sample of at most n distinct incident edges of `anchor` (positions
/// into the slice, ascending). All incident edges when there are <= n.
std::vector<std::size_t> sample_neighbors(const Incidence& inc, NodeId anchor, std::size_t n, Rng& rng);
std::vector<std::size_t> sample_neighbors(std::span<const Edge> input_edges, NodeId anchor, std::size_t n, Rng& rng);

/// Per-hop anchors with their sampled edges. Hop 1 anchors are the seeds; hop
/// l+1 anchors add the far endpoints of every hop-l sample.
struct LayeredNeighborhood {
  struct Hop {
    std::vector<NodeId> anchors;                       // ascending
    std::vector<std::vector<std::size_t>> samples;     // per anchor, positions into the edge slice
  };
  std::vector<Hop> hops;
};

/// Every anchor draws independently per hop from the stream (seed, hop, node),
/// so a node's sample does not depend on which other anchors are present.
LayeredNeighborhood build_layered_neighborhood(const Incidence& inc, std::span<const NodeId> seeds, int num_layers,
                                               std::size_t num_neighbors, std::uint64_t seed);

}  // namespace dyg

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dyg2vec/tensor.hpp"

namespace dyg {

using NodeId = std::int32_t;
using FeatureMatrix = Matrix<double>;

/// One interaction. Edges are undirected; u/v keep the order found in the source data.
struct Edge {
  std::size_t index = 0;  // position in the time-sorted edge list
  NodeId u = 0;
  NodeId v = 0;
  double t = 0.0;
  std::optional<int> label;  // dynamic label of the source node, when provided

  bool touches(NodeId n) const { return u == n || v == n; }
  NodeId other(NodeId n) const { return u == n ? v : u; }
};

/// Immutable, time-ordered interaction log with optional node and edge features.
struct CTDG {
  std::vector<Edge> edges;
  NodeId num_nodes = 0;
  std::shared_ptr<const FeatureMatrix> node_features;  // N x D^V or null
  std::shared_ptr<const FeatureMatrix> edge_features;  // E x D^E (rows indexed by Edge::index) or null
  std::vector<std::string> original_ids;               // compact id -> source id

  std::size_t num_edges() const { return edges.size(); }
  Index node_dim() const { return node_features ? node_features->cols() : 0; }
  Index edge_dim() const { return edge_features ? edge_features->cols() : 0; }
  bool has_labels() const;

  /// Edge feature row for e (empty when the graph has no edge features).
  Eigen::Ref<const Eigen::Matrix<double, 1, Eigen::Dynamic>> edge_feature(const Edge& e) const;

  /// Checks time order, id ranges and feature shapes; throws ValidationError.
  void validate() const;
};

/// Reads `u,v,t[,label][,f0,...]` with a header row. Rows are stably sorted by t
/// and node ids are compacted to 0..N-1 in order of first appearance.
CTDG load_csv(const std::string& path, bool require_labels = false);

/// Builds a CTDG from in-memory edges (ids already compact). Sorts stably by t.
CTDG make_ctdg(std::vector<Edge> edges, NodeId num_nodes, std::shared_ptr<const FeatureMatrix> edge_features = nullptr,
               std::shared_ptr<const FeatureMatrix> node_features = nullptr);

/// Writes `original_id,compact_id` lines.
void write_idmap(const CTDG& g, const std::string& path);

/// Binary cache ("DYGG") for fast reloads of an ingested graph.
void save_graph_cache(const CTDG& g, const std::string& path);
CTDG load_graph_cache(const std::string& path);

/// Loads a cache when the path ends in ".bin", CSV otherwise.
CTDG load_dataset(const std::string& path);

/// All edges with t_i <= t <= t_j, in order.
std::span<const Edge> temporal_subgraph(std::span<const Edge> edges, double t_i, double t_j);
inline std::span<const Edge> temporal_subgraph(const CTDG& g, double t_i, double t_j) {
  return temporal_subgraph(std::span<const Edge>(g.edges), t_i, t_j);
}

enum class SplitMode { Transductive, Inductive };

struct SplitSpec {
  SplitMode mode = SplitMode::Transductive;
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::vector<NodeId> masked_nodes;  // sorted; empty in transductive mode
  std::uint64_t seed = 0;

  bool is_masked(NodeId n) const;
  bool touches_masked(const Edge& e) const { return is_masked(e.u) || is_masked(e.v); }
};

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

/// Chronological split by edge index: train_end = floor(train*E), val_end = floor((train+val)*E).
SplitSpec chronological_split(std::size_t num_edges, const SplitFractions& f = {});
inline SplitSpec chronological_split(const CTDG& g, const SplitFractions& f = {}) {
  return chronological_split(g.num_edges(), f);
}

/// Chronological boundaries plus a seeded sample of ceil(fraction*N) masked nodes.
SplitSpec inductive_split(const CTDG& g, double node_fraction = 0.1, std::uint64_t seed = 0,
                          const SplitFractions& f = {});

/// Edge index ranges of each partition. Transductive: contiguous slices.
/// Inductive: train drops edges touching masked nodes; val/test keep only those.
std::vector<Edge> train_edges(const CTDG& g, const SplitSpec& s);
std::vector<Edge> val_edges(const CTDG& g, const SplitSpec& s);
std::vector<Edge> test_edges(const CTDG& g, const SplitSpec& s);

void write_split_manifest(const SplitSpec& s, const std::string& path);
SplitSpec read_split_manifest(const std::string& path);

}  // namespace dyg

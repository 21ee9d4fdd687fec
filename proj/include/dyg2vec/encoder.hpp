#pragma once

// Window encoder: L layers of multi-head temporal attention over uniformly
// sampled incident edges, with Time2Vec relative-time terms and structural
// edge encodings.
//
//   h_i^l = h_i^{l-1} W1 + MHA(q = h_i^{l-1}, K = V = [Phi_p ...])
//   Phi_p = [h_{other(p)}^{l-1} || time2vec(tbar_i - t_p) + counts_p W2 || m_p]
//
// Row vectors throughout, so every "W x" of the column-vector notation is
// written "x W" here.

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "dyg2vec/ctdg.hpp"
#include "dyg2vec/params.hpp"
#include "dyg2vec/temporal_features.hpp"
#include "dyg2vec/window.hpp"

namespace dyg {

struct EncoderConfig {
  int num_layers = 3;
  int num_heads = 2;
  Index node_dim = 100;
  Index time_dim = 100;
  std::size_t num_neighbors = 20;
  double dropout = 0.1;
  CountScale count_scale = CountScale::Log1p;
  Index node_feature_dim = 0;  // D^V of the dataset, 0 when absent
  Index edge_feature_dim = 0;  // D^E of the dataset, 0 when absent

  Index message_dim() const { return node_dim + time_dim + edge_feature_dim; }
  void validate() const;
};

/// Registers every "encoder.*" parameter with seeded Xavier initialization.
template <typename S>
void init_encoder_params(ParamSet<S>& params, const EncoderConfig& cfg, std::uint64_t seed);

/// Parameters of one attention layer, bound to a tape.
template <typename S>
struct LayerVars {
  ad::Var<S> w1, wq, bq, wk, bk, wv, bv, wo;
};

template <typename S>
struct EncoderVars {
  ad::Var<S> omega, phase, w2;
  ad::Var<S> w_in, b_in;  // only valid when node features exist
  std::vector<LayerVars<S>> layers;
};

/// Puts the encoder parameters on `tape`; trainable=false makes them constants.
template <typename S>
EncoderVars<S> bind_encoder(ad::Tape<S>& tape, ParamSet<S>& params, const EncoderConfig& cfg, bool trainable = true);

/// What the encoder sees of a window: its edges, optional per-edge masks on the
/// encoding inputs (counts and edge features), and the feature tables.
struct GraphView {
  std::span<const Edge> edges;
  std::span<const std::uint8_t> masked;  // empty, or one flag per edge
  const FeatureMatrix* edge_features = nullptr;
  const FeatureMatrix* node_features = nullptr;
  double end_time = 0.0;  // recency fallback for nodes without incident edges
};

/// Window end timestamp: the latest input timestamp, else the first target's, else 0.
double window_end_time(std::span<const Edge> input, std::span<const Edge> targets);

/// Flattened sample list for one layer: sample s connects anchor row
/// anchor[s] to neighbor row other[s] via edge position edge[s].
struct SampleList {
  std::vector<int> anchor;
  std::vector<int> other;
  std::vector<int> edge;
  std::size_t size() const { return anchor.size(); }
};

/// Row-stacked Phi_p for every sample: [h_prev[other] || f_p || m_p], with
/// f_p = time2vec(recency[anchor] - t_p) + encoded[edge].
template <typename S>
ad::Var<S> edge_messages(const ad::Var<S>& h_prev, const SampleList& samples, std::span<const double> recency,
                         std::span<const double> edge_times, const ad::Var<S>& encoded_edges,
                         const ad::Var<S>& edge_feats, const EncoderVars<S>& vars);

/// Multi-head scaled dot-product attention of each anchor (query row) over its
/// samples' messages. Anchors without samples receive a zero row.
template <typename S>
ad::Var<S> mha(const ad::Var<S>& queries, const ad::Var<S>& messages, std::span<const int> anchor_of_sample,
               const LayerVars<S>& layer, int num_heads, double dropout, Rng& rng);

/// One encoder layer over all anchor rows.
template <typename S>
ad::Var<S> layer_forward(const ad::Var<S>& h_prev, const SampleList& samples, std::span<const double> recency,
                         std::span<const double> edge_times, const ad::Var<S>& encoded_edges,
                         const ad::Var<S>& edge_feats, const EncoderVars<S>& vars, const LayerVars<S>& layer,
                         int num_heads, double dropout, Rng& rng);

template <typename S>
struct NodeEmbeddings {
  ad::Var<S> H;
  std::vector<NodeId> nodes;    // node of each row
  std::vector<double> recency;  // latest incident timestamp in the window (or window end)
  std::unordered_map<NodeId, int> rows;
  std::size_t num_window_nodes = 0;  // rows [0, n) are nodes with incident edges

  int row(NodeId n) const;
  bool has(NodeId n) const { return rows.count(n) != 0; }
};

/// Encodes every node with an incident edge in the view, plus `extra_nodes`
/// (which only get the W1 chain over their initial state). Window rows never
/// depend on extra_nodes.
template <typename S>
NodeEmbeddings<S> encode(ad::Tape<S>& tape, const EncoderVars<S>& vars, const EncoderConfig& cfg,
                         const GraphView& view, std::span<const NodeId> extra_nodes, std::uint64_t seed);

}  // namespace dyg

#include "dyg2vec/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dyg {

void EncoderConfig::validate() const {
  if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (num_heads < 1) throw ConfigError("num_heads must be >= 1");
  if (node_dim < 1 || time_dim < 1) throw ConfigError("node_dim and time_dim must be >= 1");
  if (node_dim % num_heads != 0) throw ConfigError("num_heads must divide node_dim");
  if (num_neighbors < 1) throw ConfigError("num_neighbors must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0,1)");
}

namespace {
std::string layer_name(int l, const char* what) { return "encoder.layer" + std::to_string(l) + "." + what; }
}  // namespace

template <typename S>
void init_encoder_params(ParamSet<S>& params, const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(seed, {tag(Stream::Init), 1});
  params.add("encoder.time.omega", time2vec_init_omega(cfg.time_dim).cast<S>());
  params.add_zeros("encoder.time.phase", 1, cfg.time_dim);
  params.add_xavier("encoder.edge_enc.w2", 3, cfg.time_dim, rng);
  if (cfg.node_feature_dim > 0) {
    params.add_xavier("encoder.input.w", cfg.node_feature_dim, cfg.node_dim, rng);
    params.add_zeros("encoder.input.b", 1, cfg.node_dim);
  }
  const Index dh = cfg.node_dim;
  for (int l = 0; l < cfg.num_layers; ++l) {
    params.add_xavier(layer_name(l, "w1"), dh, dh, rng);
    params.add_xavier(layer_name(l, "wq"), dh, dh, rng);
    params.add_zeros(layer_name(l, "bq"), 1, dh);
    params.add_xavier(layer_name(l, "wk"), cfg.message_dim(), dh, rng);
    params.add_zeros(layer_name(l, "bk"), 1, dh);
    params.add_xavier(layer_name(l, "wv"), cfg.message_dim(), dh, rng);
    params.add_zeros(layer_name(l, "bv"), 1, dh);
    params.add_xavier(layer_name(l, "wo"), dh, dh, rng);
  }
}

template <typename S>
EncoderVars<S> bind_encoder(ad::Tape<S>& tape, ParamSet<S>& params, const EncoderConfig& cfg, bool trainable) {
  EncoderVars<S> v;
  v.omega = tape.param(params.at("encoder.time.omega"), trainable);
  v.phase = tape.param(params.at("encoder.time.phase"), trainable);
  v.w2 = tape.param(params.at("encoder.edge_enc.w2"), trainable);
  if (cfg.node_feature_dim > 0) {
    v.w_in = tape.param(params.at("encoder.input.w"), trainable);
    v.b_in = tape.param(params.at("encoder.input.b"), trainable);
  }
  for (int l = 0; l < cfg.num_layers; ++l) {
    LayerVars<S> lv;
    lv.w1 = tape.param(params.at(layer_name(l, "w1")), trainable);
    lv.wq = tape.param(params.at(layer_name(l, "wq")), trainable);
    lv.bq = tape.param(params.at(layer_name(l, "bq")), trainable);
    lv.wk = tape.param(params.at(layer_name(l, "wk")), trainable);
    lv.bk = tape.param(params.at(layer_name(l, "bk")), trainable);
    lv.wv = tape.param(params.at(layer_name(l, "wv")), trainable);
    lv.bv = tape.param(params.at(layer_name(l, "bv")), trainable);
    lv.wo = tape.param(params.at(layer_name(l, "wo")), trainable);
    v.layers.push_back(lv);
  }
  return v;
}

double window_end_time(std::span<const Edge> input, std::span<const Edge> targets) {
  if (!input.empty()) return input.back().t;
  if (!targets.empty()) return targets.front().t;
  return 0.0;
}

template <typename S>
ad::Var<S> edge_messages(const ad::Var<S>& h_prev, const SampleList& samples, std::span<const double> recency,
                         std::span<const double> edge_times, const ad::Var<S>& encoded_edges,
                         const ad::Var<S>& edge_feats, const EncoderVars<S>& vars) {
  ad::Tape<S>& tape = *h_prev.tape();
  const auto n = static_cast<Index>(samples.size());
  Matrix<S> dt(n, 1);
  for (Index s = 0; s < n; ++s)
    dt(s, 0) = static_cast<S>(recency[static_cast<std::size_t>(samples.anchor[s])] -
                              edge_times[static_cast<std::size_t>(samples.edge[s])]);
  auto f = ad::add(time2vec(vars.omega, vars.phase, tape.constant(std::move(dt))),
                   ad::gather_rows(encoded_edges, std::span<const int>(samples.edge)));
  std::vector<ad::Var<S>> parts{ad::gather_rows(h_prev, std::span<const int>(samples.other)), f};
  if (edge_feats.cols() > 0) parts.push_back(ad::gather_rows(edge_feats, std::span<const int>(samples.edge)));
  return ad::concat_cols(parts);
}

template <typename S>
ad::Var<S> mha(const ad::Var<S>& queries, const ad::Var<S>& messages, std::span<const int> anchor_of_sample,
               const LayerVars<S>& layer, int num_heads, double dropout, Rng& rng) {
  ad::Tape<S>& tape = *queries.tape();
  const Index n_anchor = queries.rows();
  const Index width = layer.wo.rows();
  if (messages.rows() == 0) return tape.constant(Matrix<S>::Zero(n_anchor, layer.wo.cols()));
  if (width % num_heads != 0) throw DimensionError("mha: head count does not divide the projection width");
  const Index head_dim = width / num_heads;

  auto q = ad::add(ad::matmul(queries, layer.wq), layer.bq);
  auto k = ad::add(ad::matmul(messages, layer.wk), layer.bk);
  auto v = ad::add(ad::matmul(messages, layer.wv), layer.bv);

  auto scores = ad::block_row_sum(ad::mul(ad::gather_rows(q, anchor_of_sample), k), head_dim);
  scores = ad::scale(scores, static_cast<S>(1.0 / std::sqrt(static_cast<double>(head_dim))));
  auto weights = ad::segment_softmax(scores, anchor_of_sample, n_anchor);
  weights = ad::dropout(weights, dropout, rng);
  auto pooled = ad::segment_sum(ad::scale_blocks(v, weights), anchor_of_sample, n_anchor);
  return ad::matmul(pooled, layer.wo);
}

template <typename S>
ad::Var<S> layer_forward(const ad::Var<S>& h_prev, const SampleList& samples, std::span<const double> recency,
                         std::span<const double> edge_times, const ad::Var<S>& encoded_edges,
                         const ad::Var<S>& edge_feats, const EncoderVars<S>& vars, const LayerVars<S>& layer,
                         int num_heads, double dropout, Rng& rng) {
  for (std::size_t s = 0; s < samples.size(); ++s)
    if (samples.anchor[s] < 0 || samples.anchor[s] >= h_prev.rows() || samples.other[s] < 0 ||
        samples.other[s] >= h_prev.rows())
      throw ContractError("layer_forward: sample references a node without an embedding row");
  auto residual = ad::matmul(h_prev, layer.w1);
  if (samples.size() == 0) return residual;
  auto msgs = edge_messages(h_prev, samples, recency, edge_times, encoded_edges, edge_feats, vars);
  return ad::add(residual, mha(h_prev, msgs, std::span<const int>(samples.anchor), layer, num_heads, dropout, rng));
}

template <typename S>
int NodeEmbeddings<S>::row(NodeId n) const {
  auto it = rows.find(n);
  if (it == rows.end()) throw ContractError("no embedding row for node " + std::to_string(n));
  return it->second;
}

template <typename S>
NodeEmbeddings<S> encode(ad::Tape<S>& tape, const EncoderVars<S>& vars, const EncoderConfig& cfg,
                         const GraphView& view, std::span<const NodeId> extra_nodes, std::uint64_t seed) {
  if (!view.masked.empty() && view.masked.size() != view.edges.size())
    throw ContractError("encode: mask length does not match the edge count");
  const Incidence inc(view.edges);
  const auto& window_nodes = inc.nodes();
  const auto n_w = static_cast<Index>(window_nodes.size());
  const auto n_e = static_cast<Index>(view.edges.size());

  NodeEmbeddings<S> out;
  out.nodes = window_nodes;
  out.num_window_nodes = window_nodes.size();
  for (std::size_t i = 0; i < window_nodes.size(); ++i) {
    const auto& inc_list = inc.incident(static_cast<int>(i));
    out.recency.push_back(view.edges[inc_list.back()].t);
  }
  std::vector<NodeId> extras;
  for (NodeId n : extra_nodes)
    if (inc.local(n) < 0) extras.push_back(n);
  std::sort(extras.begin(), extras.end());
  extras.erase(std::unique(extras.begin(), extras.end()), extras.end());
  for (NodeId n : extras) {
    out.nodes.push_back(n);
    out.recency.push_back(view.end_time);
  }
  for (std::size_t i = 0; i < out.nodes.size(); ++i) out.rows.emplace(out.nodes[i], static_cast<int>(i));

  auto is_masked = [&](std::size_t p) { return !view.masked.empty() && view.masked[p] != 0; };

  // Initial state: projected node features, or zeros.
  auto initial_state = [&](std::span<const NodeId> nodes) -> ad::Var<S> {
    const auto n = static_cast<Index>(nodes.size());
    if (cfg.node_feature_dim == 0 || view.node_features == nullptr)
      return tape.constant(Matrix<S>::Zero(n, cfg.node_dim));
    Matrix<S> x(n, cfg.node_feature_dim);
    for (Index i = 0; i < n; ++i) x.row(i) = view.node_features->row(nodes[static_cast<std::size_t>(i)]).template cast<S>();
    return ad::add(ad::matmul(tape.constant(std::move(x)), vars.w_in), vars.b_in);
  };

  std::vector<ad::Var<S>> blocks;
  if (n_w > 0) {
    std::vector<double> edge_times(static_cast<std::size_t>(n_e));
    for (Index p = 0; p < n_e; ++p) edge_times[static_cast<std::size_t>(p)] = view.edges[static_cast<std::size_t>(p)].t;

    Matrix<double> counts = scale_counts(structural_counts(view.edges), cfg.count_scale);
    Matrix<S> feats(n_e, cfg.edge_feature_dim);
    for (Index p = 0; p < n_e; ++p) {
      if (is_masked(static_cast<std::size_t>(p))) {
        counts.row(p).setZero();
        feats.row(p).setZero();
      } else if (cfg.edge_feature_dim > 0) {
        feats.row(p) = view.edge_features->row(static_cast<Index>(view.edges[static_cast<std::size_t>(p)].index))
                           .template cast<S>();
      }
    }
    auto encoded = ad::matmul(tape.constant(counts.cast<S>()), vars.w2);
    auto edge_feats = tape.constant(std::move(feats));

    const auto hood = build_layered_neighborhood(inc, window_nodes, cfg.num_layers, cfg.num_neighbors, seed);
    auto h = initial_state(window_nodes);
    for (int k = 0; k < cfg.num_layers; ++k) {
      // Layer k consumes the outermost remaining hop.
      const auto& hop = hood.hops[static_cast<std::size_t>(cfg.num_layers - 1 - k)];
      SampleList samples;
      for (std::size_t a = 0; a < hop.anchors.size(); ++a) {
        const int arow = inc.local(hop.anchors[a]);
        for (std::size_t p : hop.samples[a]) {
          samples.anchor.push_back(arow);
          samples.other.push_back(inc.local(view.edges[p].other(hop.anchors[a])));
          samples.edge.push_back(static_cast<int>(p));
        }
      }
      Rng drop_rng = make_rng(seed, {tag(Stream::Dropout), static_cast<std::uint64_t>(k)});
      h = layer_forward(h, samples, std::span<const double>(out.recency.data(), window_nodes.size()),
                        std::span<const double>(edge_times), encoded, edge_feats, vars,
                        vars.layers[static_cast<std::size_t>(k)], cfg.num_heads, cfg.dropout, drop_rng);
    }
    blocks.push_back(h);
  }
  if (!extras.empty()) {
    auto h = initial_state(extras);
    for (const auto& layer : vars.layers) h = ad::matmul(h, layer.w1);
    blocks.push_back(h);
  }
  out.H = blocks.empty() ? tape.constant(Matrix<S>::Zero(0, cfg.node_dim))
                         : (blocks.size() == 1 ? blocks.front() : ad::concat_rows(blocks));
  return out;
}

#define DYG_INSTANTIATE_ENCODER(S)                                                                                  \
  template void init_encoder_params<S>(ParamSet<S>&, const EncoderConfig&, std::uint64_t);                         \
  template EncoderVars<S> bind_encoder<S>(ad::Tape<S>&, ParamSet<S>&, const EncoderConfig&, bool);                   \
  template ad::Var<S> edge_messages<S>(const ad::Var<S>&, const SampleList&, std::span<const double>,               \
                                       std::span<const double>, const ad::Var<S>&, const ad::Var<S>&,               \
                                       const EncoderVars<S>&);                                                      \
  template ad::Var<S> mha<S>(const ad::Var<S>&, const ad::Var<S>&, std::span<const int>, const LayerVars<S>&, int,  \
                             double, Rng&);                                                                         \
  template ad::Var<S> layer_forward<S>(const ad::Var<S>&, const SampleList&, std::span<const double>,               \
                                       std::span<const double>, const ad::Var<S>&, const ad::Var<S>&,               \
                                       const EncoderVars<S>&, const LayerVars<S>&, int, double, Rng&);              \
  template struct NodeEmbeddings<S>;                                                                                \
  template NodeEmbeddings<S> encode<S>(ad::Tape<S>&, const EncoderVars<S>&, const EncoderConfig&, const GraphView&, \
                                       std::span<const NodeId>, std::uint64_t);

DYG_INSTANTIATE_ENCODER(float)
DYG_INSTANTIATE_ENCODER(double)

#undef DYG_INSTANTIATE_ENCODER

}  // namespace dyg

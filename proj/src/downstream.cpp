#include "dyg2vec/downstream.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <string>
#include <unordered_set>

#include "dyg2vec/mlp.hpp"
#include "dyg2vec/window.hpp"

namespace dyg {

std::vector<Edge> sample_negatives(std::span<const Edge> positives, std::size_t per_positive, NodeId num_nodes,
                                   Rng& rng) {
  if (num_nodes < 2) throw ContractError("sample_negatives: need at least 2 nodes to draw a negative destination");
  std::vector<Edge> out;
  out.reserve(positives.size() * per_positive);
  for (const Edge& e : positives) {
    for (std::size_t k = 0; k < per_positive; ++k) {
      Edge n = e;
      do {
        n.v = static_cast<NodeId>(uniform_index(rng, static_cast<std::uint64_t>(num_nodes)));
      } while (n.v == e.v);
      out.push_back(n);
    }
  }
  return out;
}

namespace {

template <typename S>
void init_decoder_time(ParamSet<S>& params, const std::string& prefix, Index time_dim) {
  params.add(prefix + ".time.omega", time2vec_init_omega(time_dim).cast<S>());
  params.add_zeros(prefix + ".time.phase", 1, time_dim);
}

template <typename S>
ad::Var<S> decoder_time(ad::Tape<S>& tape, ParamSet<S>& params, const std::string& prefix,
                        const NodeEmbeddings<S>& emb, std::span<const int> rows, std::span<const double> t,
                        bool trainable) {
  Matrix<S> dt(static_cast<Index>(rows.size()), 1);
  for (std::size_t i = 0; i < rows.size(); ++i)
    dt(static_cast<Index>(i), 0) = static_cast<S>(t[i] - emb.recency[static_cast<std::size_t>(rows[i])]);
  return time2vec(tape.param(params.at(prefix + ".time.omega"), trainable),
                  tape.param(params.at(prefix + ".time.phase"), trainable), tape.constant(std::move(dt)));
}

template <typename S>
std::vector<int> rows_of(const NodeEmbeddings<S>& emb, std::span<const NodeId> nodes) {
  std::vector<int> r(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) r[i] = emb.row(nodes[i]);
  return r;
}

}  // namespace

template <typename S>
void init_flp_params(ParamSet<S>& params, Index node_dim, Index time_dim, std::uint64_t seed) {
  Rng rng = make_rng(seed, {tag(Stream::Init), 3});
  init_decoder_time(params, "flp", time_dim);
  init_mlp(params, "flp", {node_dim + time_dim, node_dim, 1}, rng);
}

template <typename S>
void init_dnc_params(ParamSet<S>& params, Index node_dim, Index time_dim, std::uint64_t seed) {
  Rng rng = make_rng(seed, {tag(Stream::Init), 4});
  init_decoder_time(params, "dnc", time_dim);
  init_mlp(params, "dnc", {node_dim + time_dim, node_dim, node_dim, 1}, rng);
}

template <typename S>
ad::Var<S> flp_decode(ad::Tape<S>& tape, ParamSet<S>& params, const NodeEmbeddings<S>& emb,
                      std::span<const NodeId> u, std::span<const NodeId> v, std::span<const double> t,
                      bool trainable) {
  if (u.size() != v.size() || u.size() != t.size()) throw ContractError("flp_decode: query lengths differ");
  const auto ru = rows_of(emb, u);
  const auto rv = rows_of(emb, v);
  auto h = ad::add(ad::gather_rows(emb.H, std::span<const int>(ru)), ad::gather_rows(emb.H, std::span<const int>(rv)));
  auto x = ad::concat_cols<S>({h, decoder_time(tape, params, "flp", emb, ru, t, trainable)});
  return mlp_forward(tape, params, "flp", x, 2, trainable);
}

template <typename S>
ad::Var<S> dnc_decode(ad::Tape<S>& tape, ParamSet<S>& params, const NodeEmbeddings<S>& emb,
                      std::span<const NodeId> u, std::span<const double> t, double dropout, Rng& rng,
                      bool trainable) {
  if (u.size() != t.size()) throw ContractError("dnc_decode: query lengths differ");
  const auto ru = rows_of(emb, u);
  auto x = ad::concat_cols<S>(
      {ad::gather_rows(emb.H, std::span<const int>(ru)), decoder_time(tape, params, "dnc", emb, ru, t, trainable)});
  return mlp_forward(tape, params, "dnc", x, 3, trainable, dropout, &rng);
}

TaskData make_task_data(const CTDG& graph, const SplitSpec& split) {
  TaskData d;
  d.train_history = train_edges(graph, split);
  d.train_targets = d.train_history;
  d.val_targets = val_edges(graph, split);
  d.test_targets = test_edges(graph, split);
  d.full_history = graph.edges;
  return d;
}

void DownstreamConfig::validate() const {
  encoder.validate();
  if (window < 1) throw ConfigError("window_size must be >= 1");
  if (target_size < 1) throw ConfigError("target_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (!(label_fraction > 0.0 && label_fraction <= 1.0)) throw ConfigError("label_fraction must lie in (0,1]");
  if (decoder_dropout < 0.0 || decoder_dropout >= 1.0) throw ConfigError("decoder dropout must lie in [0,1)");
}

std::vector<std::size_t> select_intervals(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("label_fraction must lie in (0,1]");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n == 0) return idx;
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  if (keep >= n) return idx;
  Rng rng = make_rng(seed, {tag(Stream::Subset)});
  for (std::size_t i = 0; i < keep; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Window rows of a frozen encoder, kept as plain values.
template <typename S>
struct CachedWindow {
  Matrix<S> H;
  std::vector<NodeId> nodes;
  std::vector<double> recency;
};

template <typename S>
NodeEmbeddings<S> rebind(ad::Tape<S>& tape, const Matrix<S>& H, std::vector<NodeId> nodes, std::vector<double> recency,
                         std::size_t num_window_nodes) {
  NodeEmbeddings<S> out;
  out.H = tape.constant(H);
  out.nodes = std::move(nodes);
  out.recency = std::move(recency);
  out.num_window_nodes = num_window_nodes;
  for (std::size_t i = 0; i < out.nodes.size(); ++i) out.rows.emplace(out.nodes[i], static_cast<int>(i));
  return out;
}

/// Window rows from the cache plus freshly computed rows for nodes outside the window.
template <typename S>
NodeEmbeddings<S> from_cache(ad::Tape<S>& tape, const EncoderVars<S>& vars, const EncoderConfig& cfg,
                             const CachedWindow<S>& cache, const CTDG& graph, std::span<const NodeId> extra,
                             double end_time) {
  std::unordered_set<NodeId> have(cache.nodes.begin(), cache.nodes.end());
  std::vector<NodeId> missing;
  for (NodeId n : extra)
    if (!have.count(n)) missing.push_back(n);
  if (missing.empty()) return rebind(tape, cache.H, cache.nodes, cache.recency, cache.nodes.size());
  GraphView empty{{}, {}, graph.edge_features.get(), graph.node_features.get(), end_time};
  auto tail = encode(tape, vars, cfg, empty, missing, 0);
  NodeEmbeddings<S> out;
  out.nodes = cache.nodes;
  out.recency = cache.recency;
  out.num_window_nodes = cache.nodes.size();
  out.nodes.insert(out.nodes.end(), tail.nodes.begin(), tail.nodes.end());
  out.recency.insert(out.recency.end(), tail.recency.begin(), tail.recency.end());
  out.H = cache.H.rows() == 0 ? tail.H : ad::concat_rows<S>({tape.constant(cache.H), tail.H});
  for (std::size_t i = 0; i < out.nodes.size(); ++i) out.rows.emplace(out.nodes[i], static_cast<int>(i));
  return out;
}

GraphView view_of(const CTDG& graph, std::span<const Edge> input, std::span<const Edge> targets) {
  return GraphView{input, {}, graph.edge_features.get(), graph.node_features.get(), window_end_time(input, targets)};
}

std::vector<NodeId> endpoints(std::span<const Edge> a, std::span<const Edge> b = {}) {
  std::vector<NodeId> out;
  out.reserve(2 * (a.size() + b.size()));
  for (const Edge& e : a) {
    out.push_back(e.u);
    out.push_back(e.v);
  }
  for (const Edge& e : b) {
    out.push_back(e.u);
    out.push_back(e.v);
  }
  return out;
}

std::vector<Edge> labeled(std::span<const Edge> edges) {
  std::vector<Edge> out;
  for (const Edge& e : edges)
    if (e.label) out.push_back(e);
  return out;
}

struct Queries {
  std::vector<NodeId> u, v;
  std::vector<double> t;

  void append(std::span<const Edge> edges) {
    for (const Edge& e : edges) {
      u.push_back(e.u);
      v.push_back(e.v);
      t.push_back(e.t);
    }
  }
  std::size_t size() const { return u.size(); }
};

constexpr std::size_t kDecodeChunk = 8192;

/// FLP scores in eval mode, decoded in chunks on short-lived tapes.
template <typename S>
std::vector<double> flp_scores(ParamSet<S>& params, const NodeEmbeddings<S>& emb, const Queries& q) {
  std::vector<double> out;
  out.reserve(q.size());
  const Matrix<S>& H = emb.H.value();
  for (std::size_t lo = 0; lo < q.size(); lo += kDecodeChunk) {
    const std::size_t n = std::min(kDecodeChunk, q.size() - lo);
    ad::Tape<S> tape(ad::Mode::Eval);
    auto local = rebind(tape, H, emb.nodes, emb.recency, emb.num_window_nodes);
    auto logits = flp_decode(tape, params, local, std::span<const NodeId>(q.u).subspan(lo, n),
                             std::span<const NodeId>(q.v).subspan(lo, n), std::span<const double>(q.t).subspan(lo, n),
                             false);
    for (Index i = 0; i < logits.rows(); ++i) out.push_back(static_cast<double>(logits.value()(i, 0)));
  }
  return out;
}

template <typename S>
using Snapshot = std::map<std::string, Matrix<S>>;

template <typename S>
Snapshot<S> snapshot(const std::vector<Parameter<S>*>& ps) {
  Snapshot<S> s;
  for (auto* p : ps) s.emplace(p->name, p->value);
  return s;
}

template <typename S>
void restore(const std::vector<Parameter<S>*>& ps, const Snapshot<S>& s) {
  for (auto* p : ps) p->value = s.at(p->name);
}

bool better(const std::optional<double>& a, const std::optional<double>& b) {
  return a && (!b || *a > *b);
}

}  // namespace

template <typename S>
FlpMetrics evaluate_flp(const CTDG& graph, std::span<const Edge> history, std::span<const Edge> targets,
                        ParamSet<S>& params, const DownstreamConfig& cfg, std::size_t horizon,
                        std::size_t rank_negatives, std::uint64_t eval_seed) {
  FlpMetrics m;
  if (targets.empty()) return m;
  const auto batches = target_batches(history, targets, cfg.window, horizon);
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<RankGroup> groups;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& batch = batches[b];
    const auto bi = static_cast<std::uint64_t>(b);
    Rng neg_rng = make_rng(eval_seed, {tag(Stream::Negative), bi, 0});
    Rng rank_rng = make_rng(eval_seed, {tag(Stream::Negative), bi, 1});
    const auto negatives = sample_negatives(batch.target_edges, 1, graph.num_nodes, neg_rng);
    const auto ranked = rank_negatives > 0 ? sample_negatives(batch.target_edges, rank_negatives, graph.num_nodes, rank_rng)
                                           : std::vector<Edge>{};

    ad::Tape<S> tape(ad::Mode::Eval);
    auto vars = bind_encoder(tape, params, cfg.encoder, false);
    const auto extra = endpoints(batch.target_edges, negatives);
    std::vector<NodeId> all_extra = extra;
    for (const Edge& e : ranked) all_extra.push_back(e.v);
    const auto emb = encode(tape, vars, cfg.encoder, view_of(graph, batch.input_edges, batch.target_edges),
                            all_extra, derive_seed(eval_seed, {tag(Stream::Neighbor), bi}));

    Queries q;
    q.append(batch.target_edges);
    q.append(negatives);
    const auto s = flp_scores(params, emb, q);
    const std::size_t p = batch.target_edges.size();
    for (std::size_t i = 0; i < s.size(); ++i) {
      scores.push_back(s[i]);
      labels.push_back(i < p ? 1 : 0);
    }
    m.positives += p;
    m.predictions += p;
    if (!ranked.empty()) {
      Queries rq;
      rq.append(ranked);
      const auto rs = flp_scores(params, emb, rq);
      for (std::size_t i = 0; i < p; ++i) {
        RankGroup g;
        g.positive = s[i];
        g.negatives.assign(rs.begin() + static_cast<std::ptrdiff_t>(i * rank_negatives),
                           rs.begin() + static_cast<std::ptrdiff_t>((i + 1) * rank_negatives));
        groups.push_back(std::move(g));
      }
    }
  }
  m.ap = average_precision(scores, labels);
  if (!groups.empty()) {
    m.mrr = mrr(groups);
    m.recall10 = recall_at_k(groups, 10);
  }
  return m;
}

template <typename S>
std::optional<double> evaluate_dnc(const CTDG& graph, std::span<const Edge> history, std::span<const Edge> targets,
                                   ParamSet<S>& params, const DownstreamConfig& cfg, std::size_t horizon,
                                   std::uint64_t eval_seed) {
  const auto batches = target_batches(history, targets, cfg.window, horizon);
  std::vector<double> scores;
  std::vector<int> labels;
  Rng unused = make_rng(eval_seed, {tag(Stream::Dropout)});
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& batch = batches[b];
    const auto lab = labeled(batch.target_edges);
    if (lab.empty()) continue;
    ad::Tape<S> tape(ad::Mode::Eval);
    auto vars = bind_encoder(tape, params, cfg.encoder, false);
    const auto extra = endpoints(lab);
    const auto emb = encode(tape, vars, cfg.encoder, view_of(graph, batch.input_edges, batch.target_edges), extra,
                            derive_seed(eval_seed, {tag(Stream::Neighbor), static_cast<std::uint64_t>(b)}));
    Queries q;
    q.append(lab);
    auto logits = dnc_decode(tape, params, emb, q.u, q.t, 0.0, unused, false);
    for (std::size_t i = 0; i < lab.size(); ++i) {
      scores.push_back(static_cast<double>(logits.value()(static_cast<Index>(i), 0)));
      labels.push_back(*lab[i].label);
    }
  }
  return auc(scores, labels);
}

template <typename S>
DownstreamResult train_downstream(const CTDG& graph, const TaskData& data, ParamSet<S>& params,
                                  const DownstreamConfig& cfg,
                                  const std::function<void(const DownstreamEpoch&)>& on_epoch) {
  cfg.validate();
  const bool flp = cfg.task == Task::FLP;
  const std::string prefix = flp ? "flp." : "dnc.";
  if (!params.contains(prefix + "l0.w")) {
    if (flp)
      init_flp_params(params, cfg.encoder.node_dim, cfg.encoder.time_dim, cfg.seed);
    else
      init_dnc_params(params, cfg.encoder.node_dim, cfg.encoder.time_dim, cfg.seed);
  }
  if (!flp && !graph.has_labels()) throw ValidationError("DNC needs a label column");

  std::vector<Parameter<S>*> trainable = params.with_prefix(prefix);
  if (!cfg.freeze_encoder)
    for (auto* p : params.with_prefix("encoder.")) trainable.push_back(p);
  AdamState<S> adam;
  adam.options.lr = cfg.lr;
  adam.options.weight_decay = cfg.weight_decay;

  const auto batches = target_batches(data.train_history, data.train_targets, cfg.window, cfg.target_size);
  DownstreamResult result;
  result.intervals_total = batches.size();
  result.intervals_used = select_intervals(batches.size(), cfg.label_fraction, cfg.seed);

  const std::uint64_t val_seed = derive_seed(cfg.seed, {tag(Stream::Split), 1});
  auto validate_now = [&]() -> std::optional<double> {
    if (data.val_targets.empty()) return std::nullopt;
    if (flp)
      return evaluate_flp(graph, data.full_history, data.val_targets, params, cfg, cfg.target_size, 0, val_seed).ap;
    return evaluate_dnc(graph, data.full_history, data.val_targets, params, cfg, cfg.target_size, val_seed);
  };

  result.initial_val_metric = validate_now();
  result.best_val_metric = result.initial_val_metric;
  auto best = snapshot(trainable);

  std::vector<std::optional<CachedWindow<S>>> cache(batches.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    DownstreamEpoch log;
    log.epoch = epoch;
    const auto ep = static_cast<std::uint64_t>(epoch);
    for (std::size_t b : result.intervals_used) {
      const auto& batch = batches[b];
      const auto bi = static_cast<std::uint64_t>(b);
      auto t0 = Clock::now();
      std::vector<Edge> positives = flp ? batch.target_edges : labeled(batch.target_edges);
      if (positives.empty()) continue;
      std::vector<Edge> negatives;
      if (flp) {
        Rng rng = make_rng(cfg.seed, {tag(Stream::Negative), ep, bi});
        negatives = sample_negatives(positives, 1, graph.num_nodes, rng);
      }
      const auto extra = endpoints(positives, negatives);
      const GraphView view = view_of(graph, batch.input_edges, batch.target_edges);
      log.times.sample += ms_since(t0);

      t0 = Clock::now();
      ad::Tape<S> tape(ad::Mode::Train);
      params.zero_grad();
      auto vars = bind_encoder(tape, params, cfg.encoder, !cfg.freeze_encoder);
      NodeEmbeddings<S> emb;
      if (cfg.freeze_encoder) {
        if (!cache[b]) {
          ad::Tape<S> frozen(ad::Mode::Eval);
          auto fv = bind_encoder(frozen, params, cfg.encoder, false);
          auto e = encode(frozen, fv, cfg.encoder, view, {}, derive_seed(cfg.seed, {tag(Stream::Neighbor), bi, 0}));
          cache[b] = CachedWindow<S>{e.H.value(), e.nodes, e.recency};
        }
        emb = from_cache(tape, vars, cfg.encoder, *cache[b], graph, extra, view.end_time);
      } else {
        emb = encode(tape, vars, cfg.encoder, view, extra, derive_seed(cfg.seed, {tag(Stream::Neighbor), bi, ep}));
      }
      log.times.encode += ms_since(t0);

      t0 = Clock::now();
      Queries q;
      q.append(positives);
      q.append(negatives);
      std::vector<S> y(q.size(), S(0));
      ad::Var<S> logits;
      if (flp) {
        std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(positives.size()), S(1));
        logits = flp_decode(tape, params, emb, q.u, q.v, q.t, true);
      } else {
        for (std::size_t i = 0; i < positives.size(); ++i) y[i] = static_cast<S>(*positives[i].label);
        Rng drop = make_rng(cfg.seed, {tag(Stream::Dropout), ep, bi, 1});
        logits = dnc_decode(tape, params, emb, q.u, q.t, cfg.decoder_dropout, drop, true);
      }
      auto loss = ad::bce_with_logits(logits, std::span<const S>(y));
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      log.times.decode += ms_since(t0);

      t0 = Clock::now();
      tape.backward(loss);
      adam_step(trainable, adam);
      log.times.step += ms_since(t0);

      log.train_loss += value;
      ++log.batches;
    }
    if (log.batches > 0) log.train_loss /= static_cast<double>(log.batches);
    log.val_metric = validate_now();
    if (better(log.val_metric, result.best_val_metric) || (!log.val_metric && !result.best_val_metric)) {
      result.best_val_metric = log.val_metric;
      result.best_epoch = epoch;
      best = snapshot(trainable);
    }
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  restore(trainable, best);
  return result;
}

template <typename S>
DncReport dnc_protocol(const CTDG& graph, const TaskData& data, ParamSet<S>& params, DownstreamConfig cfg,
                       const std::function<void(const DownstreamEpoch&)>& on_epoch) {
  cfg.task = Task::DNC;
  cfg.freeze_encoder = true;
  if (!params.contains("dnc.l0.w")) init_dnc_params(params, cfg.encoder.node_dim, cfg.encoder.time_dim, cfg.seed);
  const std::uint64_t test_seed = derive_seed(cfg.seed, {tag(Stream::Split), 2});
  DncReport r;
  r.untrained_auc = evaluate_dnc(graph, data.full_history, data.test_targets, params, cfg, cfg.target_size, test_seed);
  r.training = train_downstream(graph, data, params, cfg, on_epoch);
  r.test_auc = evaluate_dnc(graph, data.full_history, data.test_targets, params, cfg, cfg.target_size, test_seed);
  return r;
}

#define DYG_INSTANTIATE_DOWNSTREAM(S)                                                                                \
  template void init_flp_params<S>(ParamSet<S>&, Index, Index, std::uint64_t);                                      \
  template void init_dnc_params<S>(ParamSet<S>&, Index, Index, std::uint64_t);                                      \
  template ad::Var<S> flp_decode<S>(ad::Tape<S>&, ParamSet<S>&, const NodeEmbeddings<S>&, std::span<const NodeId>,  \
                                    std::span<const NodeId>, std::span<const double>, bool);                        \
  template ad::Var<S> dnc_decode<S>(ad::Tape<S>&, ParamSet<S>&, const NodeEmbeddings<S>&, std::span<const NodeId>,  \
                                    std::span<const double>, double, Rng&, bool);                                   \
  template FlpMetrics evaluate_flp<S>(const CTDG&, std::span<const Edge>, std::span<const Edge>, ParamSet<S>&,      \
                                      const DownstreamConfig&, std::size_t, std::size_t, std::uint64_t);            \
  template std::optional<double> evaluate_dnc<S>(const CTDG&, std::span<const Edge>, std::span<const Edge>,         \
                                                 ParamSet<S>&, const DownstreamConfig&, std::size_t, std::uint64_t); \
  template DownstreamResult train_downstream<S>(const CTDG&, const TaskData&, ParamSet<S>&, const DownstreamConfig&, \
                                                const std::function<void(const DownstreamEpoch&)>&);                \
  template DncReport dnc_protocol<S>(const CTDG&, const TaskData&, ParamSet<S>&, DownstreamConfig,                  \
                                     const std::function<void(const DownstreamEpoch&)>&);

DYG_INSTANTIATE_DOWNSTREAM(float)
DYG_INSTANTIATE_DOWNSTREAM(double)

#undef DYG_INSTANTIATE_DOWNSTREAM

}  // namespace dyg

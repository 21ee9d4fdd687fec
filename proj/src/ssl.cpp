#include "dyg2vec/ssl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "dyg2vec/mlp.hpp"
#include "dyg2vec/window.hpp"

namespace dyg {

void DistortionConfig::validate() const {
  if (p_drop_edge < 0.0 || p_drop_edge > 1.0) throw ConfigError("p_drop_edge must lie in [0,1]");
  if (p_mask_feature < 0.0 || p_mask_feature > 1.0) throw ConfigError("p_mask_feat must lie in [0,1]");
}

DistortedView distort(std::span<const Edge> input, const DistortionConfig& cfg, Rng& rng) {
  cfg.validate();
  DistortedView view;
  view.edges.reserve(input.size());
  view.masked.reserve(input.size());
  for (const Edge& e : input) {
    // Both draws are consumed for every edge so the stream layout does not depend on p.
    const bool drop = uniform01(rng) < cfg.p_drop_edge;
    const bool mask = uniform01(rng) < cfg.p_mask_feature;
    if (drop) continue;
    view.edges.push_back(e);
    view.masked.push_back(mask ? 1 : 0);
  }
  return view;
}

namespace {

template <typename S>
void require_rows(const ad::Var<S>& z, const char* op) {
  if (z.rows() < 2) throw ContractError(std::string(op) + ": need at least 2 rows, got " + std::to_string(z.rows()));
}

template <typename S>
ad::Var<S> centered(const ad::Var<S>& z) {
  return ad::sub(z, ad::col_mean(z));
}

}  // namespace

template <typename S>
ad::Var<S> vicreg_variance(const ad::Var<S>& z, double gamma, double eps) {
  require_rows(z, "vicreg_variance");
  auto c = centered(z);
  auto var = ad::col_mean(ad::mul(c, c));
  auto std_dev = ad::sqrt(ad::shift(var, static_cast<S>(eps)));
  auto hinge = ad::relu(ad::shift(ad::scale(std_dev, S(-1)), static_cast<S>(gamma)));
  return ad::mean(hinge);
}

template <typename S>
ad::Var<S> vicreg_covariance(const ad::Var<S>& z) {
  require_rows(z, "vicreg_covariance");
  const Index d = z.cols();
  auto c = centered(z);
  auto cov = ad::scale(ad::matmul(ad::transpose(c), c), static_cast<S>(1.0 / static_cast<double>(z.rows())));
  Matrix<S> off = Matrix<S>::Ones(d, d);
  off.diagonal().setZero();
  auto off_diag = ad::mul(cov, z.tape()->constant(std::move(off)));
  return ad::scale(ad::sum(ad::mul(off_diag, off_diag)), static_cast<S>(1.0 / static_cast<double>(d)));
}

template <typename S>
ad::Var<S> vicreg_invariance(const ad::Var<S>& a, const ad::Var<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError("vicreg_invariance: shapes " + ad::detail::shape_str(a.rows(), a.cols()) + " and " +
                        ad::detail::shape_str(b.rows(), b.cols()) + " differ");
  if (a.rows() == 0) throw ContractError("vicreg_invariance: empty batch");
  auto diff = ad::sub(a, b);
  return ad::scale(ad::sum(ad::mul(diff, diff)), static_cast<S>(1.0 / static_cast<double>(a.rows())));
}

template <typename S>
SslLoss<S> ssl_loss(const ad::Var<S>& a, const ad::Var<S>& b, const VicregWeights& w) {
  auto s = vicreg_invariance(a, b);
  auto v = ad::add(vicreg_variance(a, w.gamma, w.eps), vicreg_variance(b, w.gamma, w.eps));
  auto c = ad::add(vicreg_covariance(a), vicreg_covariance(b));
  SslLoss<S> out;
  out.total = ad::add(ad::add(ad::scale(s, static_cast<S>(w.lambda)), ad::scale(v, static_cast<S>(w.mu))),
                      ad::scale(c, static_cast<S>(w.nu)));
  out.invariance = static_cast<double>(s.item());
  out.variance = static_cast<double>(v.item());
  out.covariance = static_cast<double>(c.item());
  return out;
}

template <typename S>
void init_predictor_params(ParamSet<S>& params, Index node_dim, std::uint64_t seed) {
  Rng rng = make_rng(seed, {tag(Stream::Init), 2});
  init_mlp(params, "predictor", {node_dim, node_dim, node_dim}, rng);
}

template <typename S>
ad::Var<S> predictor_forward(ad::Tape<S>& tape, ParamSet<S>& params, const ad::Var<S>& h, bool trainable) {
  return mlp_forward(tape, params, "predictor", h, 2, trainable, 0.0, nullptr, Activation::Sigmoid);
}

template <typename S>
PretrainResult pretrain(const CTDG& graph, std::span<const Edge> history, ParamSet<S>& params,
                        const PretrainConfig& cfg, const std::function<void(const PretrainEpoch&)>& on_epoch) {
  cfg.encoder.validate();
  cfg.distortion.validate();
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.window < 1 || cfg.stride < 1) throw ConfigError("ssl_window and ssl_stride must be >= 1");
  if (!params.contains("predictor.l0.w")) init_predictor_params(params, cfg.encoder.node_dim, cfg.seed);

  AdamState<S> adam;
  adam.options.lr = cfg.lr;
  std::vector<Parameter<S>*> trainable = params.with_prefix("encoder.");
  for (auto* p : params.with_prefix("predictor.")) trainable.push_back(p);

  const auto intervals = generate_intervals(history.size(), cfg.stride, cfg.window);
  PretrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    PretrainEpoch log;
    log.epoch = epoch;
    for (std::size_t j = 0; j < intervals.size(); ++j) {
      const auto input = history.subspan(intervals[j].start, intervals[j].end - intervals[j].start);
      const auto e = static_cast<std::uint64_t>(epoch);
      DistortedView views[2];
      for (std::uint64_t k = 0; k < 2; ++k) {
        Rng rng = make_rng(cfg.seed, {tag(Stream::Distort), e, j, k});
        views[k] = distort(input, cfg.distortion, rng);
      }

      ad::Tape<S> tape(ad::Mode::Train);
      params.zero_grad();
      auto vars = bind_encoder(tape, params, cfg.encoder, true);
      NodeEmbeddings<S> emb[2];
      for (std::uint64_t k = 0; k < 2; ++k) {
        GraphView gv{views[k].edges, views[k].masked, graph.edge_features.get(), graph.node_features.get(),
                     window_end_time(input, {})};
        emb[k] = encode(tape, vars, cfg.encoder, gv, {}, derive_seed(cfg.seed, {tag(Stream::Neighbor), e, j, k}));
      }
      // Rows of nodes present in both views, in ascending node order.
      std::vector<int> rows0, rows1;
      for (std::size_t r = 0; r < emb[0].num_window_nodes; ++r) {
        const NodeId n = emb[0].nodes[r];
        auto it = emb[1].rows.find(n);
        if (it != emb[1].rows.end() && static_cast<std::size_t>(it->second) < emb[1].num_window_nodes) {
          rows0.push_back(static_cast<int>(r));
          rows1.push_back(it->second);
        }
      }
      if (rows0.size() < 2) {
        ++log.skipped;
        continue;
      }
      auto z0 = predictor_forward(tape, params, ad::gather_rows(emb[0].H, std::span<const int>(rows0)));
      auto z1 = predictor_forward(tape, params, ad::gather_rows(emb[1].H, std::span<const int>(rows1)));
      auto loss = ssl_loss(z0, z1, cfg.vicreg);
      const double value = static_cast<double>(loss.total.item());
      if (!std::isfinite(value)) throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch));
      tape.backward(loss.total);
      adam_step(trainable, adam);

      log.loss += value;
      log.variance += loss.variance;
      log.covariance += loss.covariance;
      log.invariance += loss.invariance;
      ++log.batches;
      if (epoch == cfg.epochs) {
        const Matrix<S>& z = z0.value();
        const auto mean = z.colwise().mean();
        const auto var = (z.rowwise() - mean).array().square().colwise().mean();
        result.final_repr_std = static_cast<double>(var.sqrt().mean());
      }
    }
    if (log.batches > 0) {
      const double nb = static_cast<double>(log.batches);
      log.loss /= nb;
      log.variance /= nb;
      log.covariance /= nb;
      log.invariance /= nb;
    }
    log.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

#define DYG_INSTANTIATE_SSL(S)                                                                              \
  template ad::Var<S> vicreg_variance<S>(const ad::Var<S>&, double, double);                                \
  template ad::Var<S> vicreg_covariance<S>(const ad::Var<S>&);                                              \
  template ad::Var<S> vicreg_invariance<S>(const ad::Var<S>&, const ad::Var<S>&);                           \
  template SslLoss<S> ssl_loss<S>(const ad::Var<S>&, const ad::Var<S>&, const VicregWeights&);              \
  template void init_predictor_params<S>(ParamSet<S>&, Index, std::uint64_t);                               \
  template ad::Var<S> predictor_forward<S>(ad::Tape<S>&, ParamSet<S>&, const ad::Var<S>&, bool);            \
  template PretrainResult pretrain<S>(const CTDG&, std::span<const Edge>, ParamSet<S>&, const PretrainConfig&, \
                                      const std::function<void(const PretrainEpoch&)>&);

DYG_INSTANTIATE_SSL(float)
DYG_INSTANTIATE_SSL(double)

#undef DYG_INSTANTIATE_SSL

}  // namespace dyg

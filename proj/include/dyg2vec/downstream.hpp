#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dyg2vec/ctdg.hpp"
#include "dyg2vec/encoder.hpp"
#include "dyg2vec/metrics.hpp"
#include "dyg2vec/params.hpp"

namespace dyg {

enum class Task { FLP, DNC };

/// Copies of the positives with the destination replaced by a uniform node
/// v' != v, `per_positive` per edge, grouped by positive.
std::vector<Edge> sample_negatives(std::span<const Edge> positives, std::size_t per_positive, NodeId num_nodes,
                                   Rng& rng);

/// flp.* : own Time2Vec plus MLP (D^H + D^T) -> D^H -> 1.
template <typename S>
void init_flp_params(ParamSet<S>& params, Index node_dim, Index time_dim, std::uint64_t seed);

/// dnc.* : own Time2Vec plus MLP (D^H + D^T) -> D^H -> D^H -> 1 with dropout after the first layer.
template <typename S>
void init_dnc_params(ParamSet<S>& params, Index node_dim, Index time_dim, std::uint64_t seed);

/// logit = MLP([H_u + H_v || time2vec(t - tmax(u))]), one row per query.
template <typename S>
ad::Var<S> flp_decode(ad::Tape<S>& tape, ParamSet<S>& params, const NodeEmbeddings<S>& emb,
                      std::span<const NodeId> u, std::span<const NodeId> v, std::span<const double> t,
                      bool trainable = true);

/// logit = MLP([H_u || time2vec(t - tmax(u))]); dropout only in training mode.
template <typename S>
ad::Var<S> dnc_decode(ad::Tape<S>& tape, ParamSet<S>& params, const NodeEmbeddings<S>& emb,
                      std::span<const NodeId> u, std::span<const double> t, double dropout, Rng& rng,
                      bool trainable = true);

/// Edge sets seen by each stage. Training inputs come from train_history only;
/// evaluation inputs come from the full edge list.
struct TaskData {
  std::vector<Edge> train_history;
  std::vector<Edge> train_targets;
  std::vector<Edge> val_targets;
  std::vector<Edge> test_targets;
  std::span<const Edge> full_history;
};

TaskData make_task_data(const CTDG& graph, const SplitSpec& split);

struct DownstreamConfig {
  Task task = Task::FLP;
  EncoderConfig encoder;
  std::size_t window = 4096;
  std::size_t target_size = 200;
  int epochs = 100;
  double lr = 1e-4;
  double weight_decay = 0.0;
  bool freeze_encoder = false;
  double label_fraction = 1.0;
  double decoder_dropout = 0.1;
  std::size_t rank_negatives = 500;
  std::uint64_t seed = 0;
  void validate() const;
};

struct PhaseTimes {
  double sample = 0, encode = 0, decode = 0, step = 0;  // milliseconds
};

struct DownstreamEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_metric;  // AP for FLP, AUC for DNC
  std::size_t batches = 0;
  PhaseTimes times;
};

struct DownstreamResult {
  std::optional<double> initial_val_metric;
  std::vector<DownstreamEpoch> epochs;
  int best_epoch = 0;  // 0 = the untrained state
  std::optional<double> best_val_metric;
  std::size_t intervals_total = 0;
  std::vector<std::size_t> intervals_used;  // indices into the training batches
};

/// Training batch indices kept for a label fraction: max(1, round(f*n)) of n,
/// seeded, ascending.
std::vector<std::size_t> select_intervals(std::size_t n, double fraction, std::uint64_t seed);

/// Trains the task decoder (and the encoder unless frozen) in place. Decoder
/// parameters are created when missing. On return `params` holds the state with
/// the best validation metric.
template <typename S>
DownstreamResult train_downstream(const CTDG& graph, const TaskData& data, ParamSet<S>& params,
                                  const DownstreamConfig& cfg,
                                  const std::function<void(const DownstreamEpoch&)>& on_epoch = {});

struct FlpMetrics {
  std::optional<double> ap;
  std::optional<double> mrr;
  std::optional<double> recall10;
  std::size_t positives = 0;
  std::size_t predictions = 0;  // positive predictions made, one per target edge
};

/// Evaluates FLP over `targets` with horizon K (stride K): AP over 1:1
/// negatives, MRR and Recall@10 over `rank_negatives` per positive (skipped when 0).
template <typename S>
FlpMetrics evaluate_flp(const CTDG& graph, std::span<const Edge> history, std::span<const Edge> targets,
                        ParamSet<S>& params, const DownstreamConfig& cfg, std::size_t horizon,
                        std::size_t rank_negatives, std::uint64_t eval_seed);

/// AUC of the DNC decoder over labeled targets; nullopt when one class is missing.
template <typename S>
std::optional<double> evaluate_dnc(const CTDG& graph, std::span<const Edge> history, std::span<const Edge> targets,
                                   ParamSet<S>& params, const DownstreamConfig& cfg, std::size_t horizon,
                                   std::uint64_t eval_seed);

struct DncReport {
  std::optional<double> untrained_auc;
  std::optional<double> test_auc;
  DownstreamResult training;
};

/// Trains only a DNC decoder on top of the frozen encoder held in `params`
/// and reports test AUC.
template <typename S>
DncReport dnc_protocol(const CTDG& graph, const TaskData& data, ParamSet<S>& params, DownstreamConfig cfg,
                       const std::function<void(const DownstreamEpoch&)>& on_epoch = {});

}  // namespace dyg

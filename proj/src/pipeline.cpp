#include "dyg2vec/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dyg2vec/checkpoint.hpp"
#include "dyg2vec/error.hpp"
#include "dyg2vec/metrics.hpp"
#include "dyg2vec/ssl.hpp"
#include "dyg2vec/synthetic.hpp"

namespace fs = std::filesystem;

namespace dyg {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ValidationError*>(&e)) return kExitData;
  if (dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const ContractError*>(&e) ||
      dynamic_cast<const HarnessError*>(&e))
    return kExitInternal;
  if (dynamic_cast<const Error*>(&e)) return kExitData;  // file-level I/O failures
  return kExitInternal;
}

std::string error_kind(int exit_code) {
  switch (exit_code) {
    case kExitConfig: return "config";
    case kExitData: return "data";
    case kExitNumeric: return "numeric";
    default: return "internal";
  }
}

CTDG load_run_graph(const RunConfig& cfg) {
  const std::string& ds = cfg.get("dataset");
  if (ds.empty()) throw ConfigError("dataset is not set");
  if (ds == "synthetic") {
    SyntheticConfig sc;
    sc.num_nodes = static_cast<NodeId>(cfg.integer("synthetic_nodes"));
    sc.num_edges = static_cast<std::size_t>(cfg.integer("synthetic_edges"));
    sc.seed = cfg.u64("synthetic_seed");
    return generate_synthetic(sc);
  }
  if (!fs::exists(ds)) throw ConfigError("dataset '" + ds + "' does not exist");
  if (ds.size() >= 4 && ds.compare(ds.size() - 4, 4, ".bin") == 0) return load_graph_cache(ds);
  return load_csv(ds, cfg.flag("require_labels"));
}

SplitSpec load_run_split(const RunConfig& cfg, const CTDG& graph) {
  const std::string& manifest = cfg.get("split_manifest");
  if (!manifest.empty()) {
    if (!fs::exists(manifest)) throw ConfigError("split manifest '" + manifest + "' does not exist");
    auto s = read_split_manifest(manifest);
    if (s.val_end > graph.num_edges()) throw ValidationError("split manifest does not fit the dataset");
    return s;
  }
  const std::string& mode = cfg.get("split_mode");
  if (mode == "transductive") {
    auto s = chronological_split(graph);
    s.seed = cfg.u64("seed");
    return s;
  }
  if (mode == "inductive") return inductive_split(graph, cfg.real("inductive_fraction"), cfg.u64("seed"));
  throw ConfigError("split_mode must be transductive or inductive, got '" + mode + "'");
}

EncoderConfig encoder_config(const RunConfig& cfg, const CTDG& graph) {
  EncoderConfig e;
  e.num_layers = static_cast<int>(cfg.integer("num_layers"));
  e.num_heads = static_cast<int>(cfg.integer("num_heads"));
  e.node_dim = cfg.integer("node_dim");
  e.time_dim = cfg.integer("time_dim");
  e.num_neighbors = static_cast<std::size_t>(cfg.integer("num_neighbors"));
  e.dropout = cfg.real("dropout");
  const std::string& scale = cfg.get("edge_enc_scale");
  if (scale == "log1p")
    e.count_scale = CountScale::Log1p;
  else if (scale == "raw")
    e.count_scale = CountScale::Raw;
  else
    throw ConfigError("edge_enc_scale must be log1p or raw");
  e.node_feature_dim = graph.node_dim();
  e.edge_feature_dim = graph.edge_dim();
  e.validate();
  return e;
}

DownstreamConfig downstream_config(const RunConfig& cfg, const CTDG& graph) {
  DownstreamConfig d;
  const std::string& task = cfg.get("task");
  if (task == "flp")
    d.task = Task::FLP;
  else if (task == "dnc")
    d.task = Task::DNC;
  else
    throw ConfigError("task must be flp or dnc, got '" + task + "'");
  d.encoder = encoder_config(cfg, graph);
  d.window = static_cast<std::size_t>(cfg.integer("window_size"));
  d.target_size = static_cast<std::size_t>(cfg.integer("target_size"));
  d.epochs = static_cast<int>(cfg.integer("epochs"));
  d.lr = cfg.real("lr");
  d.weight_decay = cfg.get("weight_decay") == "auto" ? (d.task == Task::DNC ? 1e-5 : 0.0) : cfg.real("weight_decay");
  d.freeze_encoder = cfg.flag("freeze_encoder");
  d.label_fraction = cfg.real("label_fraction");
  d.rank_negatives = static_cast<std::size_t>(cfg.integer("rank_negatives"));
  d.seed = cfg.u64("seed");
  if (cfg.integer("window_size") < 1 || cfg.integer("target_size") < 1 || cfg.integer("rank_negatives") < 0)
    throw ConfigError("window_size and target_size must be >= 1, rank_negatives >= 0");
  d.validate();
  return d;
}

void write_timing_report(std::ostream& out, const std::vector<DownstreamEpoch>& epochs) {
  out << "epoch,phase,ms\n" << std::fixed << std::setprecision(3);
  for (const auto& e : epochs) {
    out << e.epoch << ",sample," << e.times.sample << '\n';
    out << e.epoch << ",encode," << e.times.encode << '\n';
    out << e.epoch << ",decode," << e.times.decode << '\n';
    out << e.epoch << ",step," << e.times.step << '\n';
  }
}

namespace {

/// Writes to the caller's stream and to run.log.
class RunLog {
 public:
  RunLog(std::ostream& out, const fs::path& file) : out_(out), file_(file) {}
  template <typename T>
  RunLog& operator<<(const T& v) {
    out_ << v;
    file_ << v;
    return *this;
  }

 private:
  std::ostream& out_;
  std::ofstream file_;
};

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return ss.str();
}

fs::path make_run_dir(const RunConfig& cfg, const std::string& sub) {
  std::ostringstream name;
  name << sub << '-' << std::hex << std::setw(16) << std::setfill('0') << cfg.hash() << '-' << timestamp();
  const fs::path base = fs::path(cfg.get("out_dir")) / name.str();
  fs::create_directories(base.parent_path());
  fs::path dir = base;
  for (int k = 1; !fs::create_directory(dir); ++k) dir = base.string() + "-" + std::to_string(k);
  std::ofstream(dir / "config.resolved") << cfg.resolved();
  return dir;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

template <typename S>
ParamSet<S> initial_params(const RunConfig& cfg, const EncoderConfig& enc) {
  ParamSet<S> params;
  init_encoder_params(params, enc, cfg.u64("seed"));
  const std::string& init = cfg.get("encoder_init");
  const std::string& ckpt = cfg.get("checkpoint");
  if (init == "random") return params;
  if (init != "checkpoint" && init != "ssl" && init != "flp")
    throw ConfigError("encoder_init must be random, checkpoint, ssl or flp");
  if (ckpt.empty() || !fs::exists(ckpt))
    throw ConfigError("encoder_init=" + init + " needs an existing checkpoint");
  params.assign_prefix(load_checkpoint<S>(ckpt), "encoder.");
  return params;
}

void write_split_files(const SplitSpec& split, const fs::path& dir) {
  write_split_manifest(split, (dir / "split.manifest").string());
}

template <typename S>
void evaluate_test(const CTDG& g, const TaskData& data, ParamSet<S>& params, const DownstreamConfig& dc,
                   const RunConfig& cfg, std::vector<MetricRow>& rows) {
  const std::uint64_t seed = dc.seed;
  const std::uint64_t eval_seed = derive_seed(seed, {tag(Stream::Split), 2});
  for (long long k : cfg.int_list("eval_horizon")) {
    if (k < 1) throw ConfigError("eval_horizon entries must be >= 1");
    const auto horizon = static_cast<std::size_t>(k);
    if (dc.task == Task::FLP) {
      const auto m = evaluate_flp(g, data.full_history, data.test_targets, params, dc, horizon, dc.rank_negatives,
                                  eval_seed);
      rows.push_back({"ap", horizon, "test", m.ap, seed});
      if (dc.rank_negatives > 0) {
        rows.push_back({"mrr", horizon, "test", m.mrr, seed});
        rows.push_back({"recall@10", horizon, "test", m.recall10, seed});
      }
    } else {
      rows.push_back({"auc", horizon, "test",
                      evaluate_dnc(g, data.full_history, data.test_targets, params, dc, horizon, eval_seed), seed});
    }
  }
}

template <typename S>
void run_pretrain(const RunConfig& cfg, const fs::path& dir, RunLog& log) {
  const CTDG g = load_run_graph(cfg);
  const SplitSpec split = load_run_split(cfg, g);
  write_split_files(split, dir);
  const auto history = train_edges(g, split);

  PretrainConfig pc;
  pc.encoder = encoder_config(cfg, g);
  pc.distortion.p_drop_edge = cfg.real("p_drop_edge");
  pc.distortion.p_mask_feature = cfg.real("p_mask_feat");
  pc.window = static_cast<std::size_t>(cfg.integer("ssl_window"));
  pc.stride = static_cast<std::size_t>(cfg.integer("ssl_stride"));
  pc.epochs = static_cast<int>(cfg.integer("epochs"));
  pc.lr = cfg.real("lr");
  pc.seed = cfg.u64("seed");

  ParamSet<S> params = initial_params<S>(cfg, pc.encoder);
  std::ofstream losses(dir / "ssl_loss.csv");
  losses << "epoch,loss,v,c,s\n" << std::setprecision(10);
  std::ofstream timing(dir / "timing.csv");
  timing << "epoch,phase,ms\n" << std::fixed << std::setprecision(3);
  const auto result = pretrain(g, history, params, pc, [&](const PretrainEpoch& e) {
    losses << e.epoch << ',' << e.loss << ',' << e.variance << ',' << e.covariance << ',' << e.invariance << '\n';
    timing << e.epoch << ",epoch," << e.ms << '\n';
    log << "epoch " << e.epoch << " loss " << e.loss << " batches " << e.batches << " skipped " << e.skipped << '\n';
  });
  save_checkpoint(params, (dir / "encoder.dygw").string());
  log << "final representation std " << result.final_repr_std << '\n';
}

template <typename S>
void run_train(const RunConfig& cfg, const fs::path& dir, RunLog& log, bool probe) {
  const CTDG g = load_run_graph(cfg);
  const SplitSpec split = load_run_split(cfg, g);
  write_split_files(split, dir);
  DownstreamConfig dc = downstream_config(cfg, g);
  if (probe) dc.freeze_encoder = true;
  if (dc.freeze_encoder && cfg.get("encoder_init") != "random" && cfg.get("checkpoint").empty())
    throw ConfigError("frozen encoder needs a checkpoint unless encoder_init=random");

  ParamSet<S> params = initial_params<S>(cfg, dc.encoder);
  const std::uint64_t encoder_hash = params.hash("encoder.");
  const TaskData data = make_task_data(g, split);

  std::ofstream history(dir / "history.csv");
  history << "epoch,train_loss,val_metric\n" << std::setprecision(10);
  auto on_epoch = [&](const DownstreamEpoch& e) {
    history << e.epoch << ',' << e.train_loss << ',';
    if (e.val_metric)
      history << *e.val_metric;
    else
      history << "NA";
    history << '\n';
    log << "epoch " << e.epoch << " loss " << e.train_loss << " val "
        << (e.val_metric ? std::to_string(*e.val_metric) : std::string("NA")) << '\n';
  };
  const auto result = train_downstream(g, data, params, dc, on_epoch);
  if (dc.freeze_encoder && params.hash("encoder.") != encoder_hash)
    throw ContractError("frozen encoder parameters changed during training");
  log << "best epoch " << result.best_epoch << " of " << dc.epochs << ", intervals " << result.intervals_used.size()
      << "/" << result.intervals_total << '\n';

  std::ofstream timing(dir / "timing.csv");
  write_timing_report(timing, result.epochs);
  save_checkpoint(params, (dir / "model.dygw").string());

  std::vector<MetricRow> rows;
  if (result.best_val_metric)
    rows.push_back({dc.task == Task::FLP ? "ap" : "auc", dc.target_size, "val", result.best_val_metric, dc.seed});
  evaluate_test(g, data, params, dc, cfg, rows);
  std::ofstream metrics(dir / "metrics.csv");
  write_metric_report(metrics, rows);
}

template <typename S>
void run_eval(const RunConfig& cfg, const fs::path& dir, RunLog& log) {
  const std::string& ckpt = cfg.get("checkpoint");
  if (ckpt.empty() || !fs::exists(ckpt)) throw ConfigError("eval needs an existing checkpoint");
  const CTDG g = load_run_graph(cfg);
  const SplitSpec split = load_run_split(cfg, g);
  write_split_files(split, dir);
  const DownstreamConfig dc = downstream_config(cfg, g);
  ParamSet<S> params = load_checkpoint<S>(ckpt);
  const std::string dec = dc.task == Task::FLP ? "flp.l0.w" : "dnc.l0.w";
  if (!params.contains(dec) || !params.contains("encoder.layer0.w1"))
    throw ConfigError("checkpoint '" + ckpt + "' lacks the encoder or the " + cfg.get("task") + " decoder");
  const TaskData data = make_task_data(g, split);
  std::vector<MetricRow> rows;
  evaluate_test(g, data, params, dc, cfg, rows);
  std::ofstream metrics(dir / "metrics.csv");
  write_metric_report(metrics, rows);
  log << "evaluated " << data.test_targets.size() << " test edges\n";
}

void run_ingest(const RunConfig& cfg, const fs::path& dir, RunLog& log) {
  const CTDG g = load_run_graph(cfg);
  save_graph_cache(g, (dir / "graph.bin").string());
  write_idmap(g, (dir / "graph.idmap").string());
  log << "nodes " << g.num_nodes << " edges " << g.num_edges() << " edge_dim " << g.edge_dim() << " node_dim "
      << g.node_dim() << '\n';
}

void run_split(const RunConfig& cfg, const fs::path& dir, RunLog& log) {
  const CTDG g = load_run_graph(cfg);
  const SplitSpec split = load_run_split(cfg, g);
  write_split_files(split, dir);
  log << "train_end " << split.train_end << " val_end " << split.val_end << " masked " << split.masked_nodes.size()
      << '\n';
}

template <typename S>
void dispatch(const std::string& name, const RunConfig& cfg, const fs::path& dir, RunLog& log) {
  if (name == "pretrain") return run_pretrain<S>(cfg, dir, log);
  if (name == "train") return run_train<S>(cfg, dir, log, false);
  if (name == "probe") return run_train<S>(cfg, dir, log, true);
  if (name == "eval") return run_eval<S>(cfg, dir, log);
}

}  // namespace

RunResult run_subcommand(const std::string& name, const RunConfig& cfg, std::ostream& out) {
  RunResult r;
  try {
    if (std::find(subcommands().begin(), subcommands().end(), name) == subcommands().end())
      throw ConfigError("unknown subcommand '" + name + "'");
    const std::string& precision = cfg.get("precision");
    if (precision != "float" && precision != "double") throw ConfigError("precision must be float or double");
    if (name == "eval" && (cfg.get("checkpoint").empty() || !fs::exists(cfg.get("checkpoint"))))
      throw ConfigError("eval needs an existing checkpoint");
    const fs::path dir = make_run_dir(cfg, name);
    r.run_dir = dir.string();
    RunLog log(out, dir / "run.log");
    log << name << " -> " << r.run_dir << '\n';
    if (name == "ingest")
      run_ingest(cfg, dir, log);
    else if (name == "split")
      run_split(cfg, dir, log);
    else if (precision == "double")
      dispatch<double>(name, cfg, dir, log);
    else
      dispatch<float>(name, cfg, dir, log);
  } catch (const std::exception& e) {
    r.exit_code = exit_code_for(e);
    r.reason = one_line(e.what());
  }
  return r;
}

}  // namespace dyg

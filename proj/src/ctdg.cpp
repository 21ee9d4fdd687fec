#include "dyg2vec/ctdg.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "dyg2vec/error.hpp"
#include "dyg2vec/rng.hpp"

namespace dyg {

bool CTDG::has_labels() const {
  return std::any_of(edges.begin(), edges.end(), [](const Edge& e) { return e.label.has_value(); });
}

Eigen::Ref<const Eigen::Matrix<double, 1, Eigen::Dynamic>> CTDG::edge_feature(const Edge& e) const {
  static const Eigen::Matrix<double, 1, Eigen::Dynamic> empty(1, 0);
  if (!edge_features) return empty;
  return edge_features->row(static_cast<Index>(e.index));
}

void CTDG::validate() const {
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge& e = edges[i];
    if (!std::isfinite(e.t)) throw ValidationError("edge " + std::to_string(i) + " has a non-finite timestamp");
    if (i > 0 && edges[i - 1].t > e.t) throw ValidationError("edges are not sorted by time at " + std::to_string(i));
    if (e.u < 0 || e.v < 0 || e.u >= num_nodes || e.v >= num_nodes)
      throw ValidationError("edge " + std::to_string(i) + " references a node outside [0, N)");
    if (edge_features && static_cast<Index>(e.index) >= edge_features->rows())
      throw ValidationError("edge " + std::to_string(i) + " has no feature row");
  }
  if (node_features && node_features->rows() != num_nodes)
    throw ValidationError("node feature matrix has " + std::to_string(node_features->rows()) + " rows, expected " +
                          std::to_string(num_nodes));
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s, long line, const char* what) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError(std::string("non-numeric ") + what + " '" + std::string(s) + "'", line);
  return v;
}

std::string parse_id(std::string_view s, long line, const char* what) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError(std::string("non-numeric ") + what + " '" + std::string(s) + "'", line);
  return std::to_string(v);
}

struct RawRow {
  std::string u, v;
  double t;
  std::optional<int> label;
  std::size_t source_row;
};

// Stable time sort, then dense ids in order of first appearance.
CTDG assemble(std::vector<RawRow> rows, Matrix<double> feats) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rows[a].t < rows[b].t; });

  CTDG g;
  std::unordered_map<std::string, NodeId> ids;
  auto compact = [&](const std::string& s) {
    auto [it, inserted] = ids.emplace(s, static_cast<NodeId>(g.original_ids.size()));
    if (inserted) g.original_ids.push_back(s);
    return it->second;
  };
  g.edges.reserve(rows.size());
  Matrix<double> sorted_feats(feats.rows(), feats.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const RawRow& r = rows[order[i]];
    Edge e;
    e.index = i;
    e.u = compact(r.u);
    e.v = compact(r.v);
    e.t = r.t;
    e.label = r.label;
    g.edges.push_back(e);
    if (feats.cols() > 0) sorted_feats.row(static_cast<Index>(i)) = feats.row(static_cast<Index>(order[i]));
  }
  g.num_nodes = static_cast<NodeId>(g.original_ids.size());
  if (feats.cols() > 0) g.edge_features = std::make_shared<const FeatureMatrix>(std::move(sorted_feats));
  g.validate();
  return g;
}

}  // namespace

CTDG load_csv(const std::string& path, bool require_labels) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty dataset file", 1);
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "u" || header[1] != "v" || header[2] != "t")
    throw ParseError("header must start with u,v,t", 1);
  std::size_t feat_begin = 3;
  const bool has_label_col = header.size() > 3 && header[3] == "label";
  if (has_label_col) feat_begin = 4;
  if (require_labels && !has_label_col) throw ValidationError("dataset has no label column");
  const std::size_t num_feats = header.size() - feat_begin;
  for (std::size_t k = 0; k < num_feats; ++k)
    if (header[feat_begin + k] != "f" + std::to_string(k))
      throw ParseError("expected feature column f" + std::to_string(k) + ", got '" +
                           std::string(header[feat_begin + k]) + "'",
                       1);

  std::vector<RawRow> rows;
  std::vector<std::vector<double>> feat_rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (f.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()),
                       line_no);
    RawRow r;
    r.u = parse_id(f[0], line_no, "node id");
    r.v = parse_id(f[1], line_no, "node id");
    r.t = parse_double(f[2], line_no, "timestamp");
    if (!std::isfinite(r.t)) throw ValidationError("line " + std::to_string(line_no) + ": non-finite timestamp");
    if (r.t < 0) throw ValidationError("line " + std::to_string(line_no) + ": negative timestamp");
    if (has_label_col && !f[3].empty()) {
      const double lab = parse_double(f[3], line_no, "label");
      if (lab != 0.0 && lab != 1.0) throw ValidationError("line " + std::to_string(line_no) + ": label must be 0 or 1");
      r.label = static_cast<int>(lab);
    }
    r.source_row = rows.size();
    std::vector<double> fr(num_feats);
    for (std::size_t k = 0; k < num_feats; ++k) fr[k] = parse_double(f[feat_begin + k], line_no, "feature");
    rows.push_back(std::move(r));
    feat_rows.push_back(std::move(fr));
  }
  Matrix<double> feats(static_cast<Index>(rows.size()), static_cast<Index>(num_feats));
  for (std::size_t i = 0; i < feat_rows.size(); ++i)
    for (std::size_t k = 0; k < num_feats; ++k) feats(static_cast<Index>(i), static_cast<Index>(k)) = feat_rows[i][k];
  return assemble(std::move(rows), std::move(feats));
}

CTDG make_ctdg(std::vector<Edge> edges, NodeId num_nodes, std::shared_ptr<const FeatureMatrix> edge_features,
               std::shared_ptr<const FeatureMatrix> node_features) {
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.t < b.t; });
  CTDG g;
  g.num_nodes = num_nodes;
  g.node_features = std::move(node_features);
  if (edge_features) {
    Matrix<double> sorted(static_cast<Index>(edges.size()), edge_features->cols());
    for (std::size_t i = 0; i < edges.size(); ++i)
      sorted.row(static_cast<Index>(i)) = edge_features->row(static_cast<Index>(edges[i].index));
    g.edge_features = std::make_shared<const FeatureMatrix>(std::move(sorted));
  }
  for (std::size_t i = 0; i < edges.size(); ++i) edges[i].index = i;
  g.edges = std::move(edges);
  g.original_ids.resize(static_cast<std::size_t>(num_nodes));
  for (NodeId n = 0; n < num_nodes; ++n) g.original_ids[static_cast<std::size_t>(n)] = std::to_string(n);
  g.validate();
  return g;
}

void write_idmap(const CTDG& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (std::size_t i = 0; i < g.original_ids.size(); ++i) out << g.original_ids[i] << ',' << i << '\n';
}

namespace {

constexpr char kGraphMagic[4] = {'D', 'Y', 'G', 'G'};
constexpr std::uint32_t kGraphVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("truncated graph cache");
  return v;
}

void put_matrix(std::ofstream& out, const FeatureMatrix* m) {
  put<std::uint64_t>(out, m ? static_cast<std::uint64_t>(m->rows()) : 0);
  put<std::uint64_t>(out, m ? static_cast<std::uint64_t>(m->cols()) : 0);
  if (m) out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(sizeof(double) * m->size()));
}

std::shared_ptr<const FeatureMatrix> get_matrix(std::ifstream& in) {
  const auto rows = static_cast<Index>(get<std::uint64_t>(in));
  const auto cols = static_cast<Index>(get<std::uint64_t>(in));
  if (cols == 0) return nullptr;
  FeatureMatrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw ParseError("truncated graph cache");
  return std::make_shared<const FeatureMatrix>(std::move(m));
}

}  // namespace

void save_graph_cache(const CTDG& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(kGraphMagic, 4);
  put(out, kGraphVersion);
  put<std::int32_t>(out, g.num_nodes);
  put<std::uint64_t>(out, g.edges.size());
  for (const Edge& e : g.edges) {
    put<std::int32_t>(out, e.u);
    put<std::int32_t>(out, e.v);
    put<double>(out, e.t);
    put<std::int32_t>(out, e.label ? *e.label : -1);
  }
  put_matrix(out, g.node_features.get());
  put_matrix(out, g.edge_features.get());
  for (const auto& s : g.original_ids) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
}

CTDG load_graph_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open graph cache '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kGraphMagic, 4) != 0) throw ParseError("'" + path + "' is not a DYGG graph cache");
  if (get<std::uint32_t>(in) != kGraphVersion) throw ParseError("unsupported graph cache version");
  CTDG g;
  g.num_nodes = get<std::int32_t>(in);
  const auto num_edges = get<std::uint64_t>(in);
  g.edges.resize(num_edges);
  for (std::size_t i = 0; i < num_edges; ++i) {
    Edge& e = g.edges[i];
    e.index = i;
    e.u = get<std::int32_t>(in);
    e.v = get<std::int32_t>(in);
    e.t = get<double>(in);
    const auto lab = get<std::int32_t>(in);
    if (lab >= 0) e.label = lab;
  }
  g.node_features = get_matrix(in);
  g.edge_features = get_matrix(in);
  g.original_ids.resize(static_cast<std::size_t>(g.num_nodes));
  for (auto& s : g.original_ids) {
    s.resize(get<std::uint32_t>(in));
    in.read(s.data(), static_cast<std::streamsize>(s.size()));
  }
  if (!in) throw ParseError("truncated graph cache");
  g.validate();
  return g;
}

CTDG load_dataset(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0) return load_graph_cache(path);
  return load_csv(path);
}

std::span<const Edge> temporal_subgraph(std::span<const Edge> edges, double t_i, double t_j) {
  if (t_i > t_j) throw ContractError("temporal_subgraph: t_i > t_j");
  auto lo = std::lower_bound(edges.begin(), edges.end(), t_i, [](const Edge& e, double t) { return e.t < t; });
  auto hi = std::upper_bound(lo, edges.end(), t_j, [](double t, const Edge& e) { return t < e.t; });
  return edges.subspan(static_cast<std::size_t>(lo - edges.begin()), static_cast<std::size_t>(hi - lo));
}

bool SplitSpec::is_masked(NodeId n) const {
  return std::binary_search(masked_nodes.begin(), masked_nodes.end(), n);
}

SplitSpec chronological_split(std::size_t num_edges, const SplitFractions& f) {
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) throw ContractError("split fractions must sum to 1");
  if (f.train < 0 || f.val < 0 || f.test < 0) throw ContractError("split fractions must be non-negative");
  if (num_edges < 3) throw ValidationError("chronological_split: need at least 3 edges, got " + std::to_string(num_edges));
  const double e = static_cast<double>(num_edges);
  SplitSpec s;
  // The epsilon absorbs representation error such as 0.85*100 = 84.99999...
  s.train_end = static_cast<std::size_t>(std::floor(f.train * e + 1e-9));
  s.val_end = static_cast<std::size_t>(std::floor((f.train + f.val) * e + 1e-9));
  s.val_end = std::min(std::max(s.val_end, s.train_end), num_edges);
  if (s.val_end == s.train_end) std::cerr << "warning: chronological_split produced an empty validation set\n";
  return s;
}

SplitSpec inductive_split(const CTDG& g, double node_fraction, std::uint64_t seed, const SplitFractions& f) {
  if (!(node_fraction > 0.0 && node_fraction < 1.0)) throw ContractError("inductive_split: fraction must lie in (0,1)");
  SplitSpec s = chronological_split(g.num_edges(), f);
  s.mode = SplitMode::Inductive;
  s.seed = seed;
  const auto n = static_cast<std::size_t>(g.num_nodes);
  const auto k = static_cast<std::size_t>(std::ceil(node_fraction * static_cast<double>(n) - 1e-9));
  std::vector<NodeId> nodes(n);
  std::iota(nodes.begin(), nodes.end(), NodeId{0});
  Rng rng = make_rng(seed, {tag(Stream::Split)});
  for (std::size_t i = 0; i < k; ++i) std::swap(nodes[i], nodes[i + uniform_index(rng, n - i)]);
  s.masked_nodes.assign(nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(s.masked_nodes.begin(), s.masked_nodes.end());
  if (train_edges(g, s).empty()) throw ValidationError("inductive_split: masked nodes leave the training set empty");
  return s;
}

std::vector<Edge> train_edges(const CTDG& g, const SplitSpec& s) {
  std::vector<Edge> out;
  for (std::size_t i = 0; i < s.train_end; ++i)
    if (s.mode == SplitMode::Transductive || !s.touches_masked(g.edges[i])) out.push_back(g.edges[i]);
  return out;
}

namespace {
std::vector<Edge> eval_range(const CTDG& g, const SplitSpec& s, std::size_t begin, std::size_t end) {
  std::vector<Edge> out;
  for (std::size_t i = begin; i < end; ++i)
    if (s.mode == SplitMode::Transductive || s.touches_masked(g.edges[i])) out.push_back(g.edges[i]);
  return out;
}
}  // namespace

std::vector<Edge> val_edges(const CTDG& g, const SplitSpec& s) { return eval_range(g, s, s.train_end, s.val_end); }
std::vector<Edge> test_edges(const CTDG& g, const SplitSpec& s) { return eval_range(g, s, s.val_end, g.num_edges()); }

void write_split_manifest(const SplitSpec& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "mode = " << (s.mode == SplitMode::Transductive ? "transductive" : "inductive") << '\n';
  out << "train_end = " << s.train_end << '\n';
  out << "val_end = " << s.val_end << '\n';
  out << "seed = " << s.seed << '\n';
  out << "masked_nodes = ";
  for (std::size_t i = 0; i < s.masked_nodes.size(); ++i) out << (i ? "," : "") << s.masked_nodes[i];
  out << '\n';
}

SplitSpec read_split_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open split manifest '" + path + "'");
  SplitSpec s;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string x) {
      x.erase(0, x.find_first_not_of(" \t"));
      x.erase(x.find_last_not_of(" \t\r") + 1);
      return x;
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "mode") {
      if (val == "transductive") s.mode = SplitMode::Transductive;
      else if (val == "inductive") s.mode = SplitMode::Inductive;
      else throw ParseError("unknown split mode '" + val + "'", line_no);
    } else if (key == "train_end") {
      s.train_end = std::stoull(val);
    } else if (key == "val_end") {
      s.val_end = std::stoull(val);
    } else if (key == "seed") {
      s.seed = std::stoull(val);
    } else if (key == "masked_nodes") {
      std::stringstream ss(val);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) s.masked_nodes.push_back(static_cast<NodeId>(std::stol(tok)));
      std::sort(s.masked_nodes.begin(), s.masked_nodes.end());
    } else {
      throw ParseError("unknown manifest key '" + key + "'", line_no);
    }
  }
  return s;
}

}  // namespace dyg

#include "dyg2vec/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <unordered_map>

#include "dyg2vec/error.hpp"

namespace dyg {

namespace {

void check_lengths(const char* op, std::size_t a, std::size_t b) {
  if (a != b) throw ContractError(std::string(op) + ": " + std::to_string(a) + " scores but " + std::to_string(b) + " labels");
}

void check_label(const char* op, int y) {
  if (y != 0 && y != 1) throw ContractError(std::string(op) + ": labels must be 0 or 1");
}

}  // namespace

std::optional<double> average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_lengths("average_precision", scores.size(), labels.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int y = labels[order[k]];
    check_label("average_precision", y);
    if (y == 1) {
      ++hits;
      total += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return total / static_cast<double>(hits);
}

std::optional<double> average_precision(std::span<const EvalRecord> records) {
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& r : records) {
    s.push_back(r.score);
    y.push_back(r.label);
  }
  return average_precision(s, y);
}

std::size_t pessimistic_rank(const RankGroup& g) {
  std::size_t above = 0;
  for (double n : g.negatives)
    if (n >= g.positive) ++above;
  return above + 1;
}

double mrr(std::span<const RankGroup> groups) {
  if (groups.empty()) throw ContractError("mrr: no groups");
  double total = 0.0;
  for (const auto& g : groups) total += 1.0 / static_cast<double>(pessimistic_rank(g));
  return total / static_cast<double>(groups.size());
}

double recall_at_k(std::span<const RankGroup> groups, std::size_t k) {
  if (groups.empty()) throw ContractError("recall_at_k: no groups");
  if (k < 1) throw ContractError("recall_at_k: k must be >= 1");
  std::size_t hits = 0;
  for (const auto& g : groups)
    if (pessimistic_rank(g) <= k) ++hits;
  return static_cast<double>(hits) / static_cast<double>(groups.size());
}

std::vector<RankGroup> rank_groups(std::span<const EvalRecord> records) {
  std::vector<RankGroup> groups;
  std::vector<int> positives;
  std::unordered_map<std::int64_t, std::size_t> index;
  for (const auto& r : records) {
    check_label("rank_groups", r.label);
    auto [it, fresh] = index.emplace(r.group_id, groups.size());
    if (fresh) {
      groups.emplace_back();
      positives.push_back(0);
    }
    auto& g = groups[it->second];
    if (r.label == 1) {
      g.positive = r.score;
      ++positives[it->second];
    } else {
      g.negatives.push_back(r.score);
    }
  }
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (positives[i] != 1)
      throw ContractError("rank_groups: group has " + std::to_string(positives[i]) + " positives, expected 1");
  return groups;
}

std::optional<double> auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths("auc", scores.size(), labels.size());
  // Rank-sum form: sort once, walk tie blocks, count 2*wins + ties as an integer.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t pos = 0, neg = 0, numerator = 0, neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t p_blk = 0, n_blk = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      const int y = labels[order[j]];
      check_label("auc", y);
      (y == 1 ? p_blk : n_blk) += 1;
      ++j;
    }
    numerator += p_blk * (2 * neg_below + n_blk);
    neg_below += n_blk;
    pos += p_blk;
    neg += n_blk;
    i = j;
  }
  if (pos == 0 || neg == 0) return std::nullopt;
  return static_cast<double>(numerator) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::optional<double> auc(std::span<const EvalRecord> records) {
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& r : records) {
    s.push_back(r.score);
    y.push_back(r.label);
  }
  return auc(s, y);
}

void write_metric_report(std::ostream& out, std::span<const MetricRow> rows) {
  out << "metric,horizon,split,value,seed\n";
  for (const auto& r : rows) {
    out << r.metric << ',' << r.horizon << ',' << r.split << ',';
    if (r.value)
      out << std::setprecision(17) << *r.value;
    else
      out << "NA";
    out << ',' << r.seed << '\n';
  }
}

}  // namespace dyg

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace dyg {

struct EvalRecord {
  double score = 0.0;
  int label = 0;
  std::int64_t group_id = 0;
};

/// One positive with its candidate negatives.
struct RankGroup {
  double positive = 0.0;
  std::vector<double> negatives;
};

/// Mean precision@k over the ranks k of the positives, descending scores, ties
/// kept in input order. nullopt without positives.
std::optional<double> average_precision(std::span<const double> scores, std::span<const int> labels);
std::optional<double> average_precision(std::span<const EvalRecord> records);

/// 1 + number of negatives scoring >= the positive.
std::size_t pessimistic_rank(const RankGroup& g);

double mrr(std::span<const RankGroup> groups);
double recall_at_k(std::span<const RankGroup> groups, std::size_t k = 10);

/// Groups records by group_id (first-seen order). Each group needs exactly one positive.
std::vector<RankGroup> rank_groups(std::span<const EvalRecord> records);

/// P(score+ > score-) + 0.5 P(tie). nullopt unless both classes are present.
std::optional<double> auc(std::span<const double> scores, std::span<const int> labels);
std::optional<double> auc(std::span<const EvalRecord> records);

/// One `metric,horizon,split,value,seed` line. Absent values are written as "NA".
struct MetricRow {
  std::string metric;
  std::size_t horizon = 0;
  std::string split;
  std::optional<double> value;
  std::uint64_t seed = 0;
};

void write_metric_report(std::ostream& out, std::span<const MetricRow> rows);

}  // namespace dyg

#pragma once

#include <cstdint>

#include "dyg2vec/ctdg.hpp"

namespace dyg {

/// Triadic-closure interaction log with evenly spaced timestamps. Each new edge
/// closes a wedge among the last `recent` edges with probability closure_prob
/// (two neighbors x, y of some w interact), otherwise joins a random pair whose
/// endpoints are drawn with Zipf activity weights (rank+1)^-activity_exponent.
/// Every edge carries a source label: 1 when the source has at least
/// label_degree incident edges among the last `recent` edges, else 0.
struct SyntheticConfig {
  NodeId num_nodes = 1000;
  std::size_t num_edges = 5000;
  double closure_prob = 0.8;
  std::size_t recent = 200;
  double period = 1.0;
  double activity_exponent = 1.0;
  int label_degree = 3;
  std::uint64_t seed = 0;
};

CTDG generate_synthetic(const SyntheticConfig& cfg);

}  // namespace dyg

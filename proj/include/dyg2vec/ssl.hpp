#pragma once

// Joint-embedding pre-training: two distorted views of each input window are
// encoded by the shared encoder, mapped by a 2-layer predictor, and pulled
// together under the VICReg objective
//   L = lambda * s(Z', Z'') + mu * [v(Z') + v(Z'')] + nu * [c(Z') + c(Z'')].

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dyg2vec/ctdg.hpp"
#include "dyg2vec/encoder.hpp"
#include "dyg2vec/params.hpp"

namespace dyg {

struct DistortionConfig {
  double p_drop_edge = 0.3;
  double p_mask_feature = 0.3;
  void validate() const;
};

/// A view keeps the surviving edges (timestamps and ids untouched) and a flag per
/// surviving edge telling the encoder to zero its encoding inputs.
struct DistortedView {
  std::vector<Edge> edges;
  std::vector<std::uint8_t> masked;
};

DistortedView distort(std::span<const Edge> input, const DistortionConfig& cfg, Rng& rng);

struct VicregWeights {
  double lambda = 25.0;  // invariance
  double mu = 25.0;      // variance
  double nu = 1.0;       // covariance
  double gamma = 1.0;    // target standard deviation
  double eps = 1e-4;     // variance stabilizer
};

/// (1/d) sum_j max(0, gamma - sqrt(Var(Z[:,j]) + eps)), population variance.
template <typename S>
ad::Var<S> vicreg_variance(const ad::Var<S>& z, double gamma, double eps);

/// (1/d) sum_{i != j} C(Z)_{ij}^2 with C(Z) = (1/n) sum (z - mean)(z - mean)^T.
template <typename S>
ad::Var<S> vicreg_covariance(const ad::Var<S>& z);

/// (1/n) sum_i ||z'_i - z''_i||^2.
template <typename S>
ad::Var<S> vicreg_invariance(const ad::Var<S>& a, const ad::Var<S>& b);

template <typename S>
struct SslLoss {
  ad::Var<S> total;
  double invariance = 0, variance = 0, covariance = 0;  // s, v(Z')+v(Z''), c(Z')+c(Z'')
};

template <typename S>
SslLoss<S> ssl_loss(const ad::Var<S>& a, const ad::Var<S>& b, const VicregWeights& w);

/// predictor.* : D^H -> D^H -> D^H with a sigmoid hidden activation.
template <typename S>
void init_predictor_params(ParamSet<S>& params, Index node_dim, std::uint64_t seed);

template <typename S>
ad::Var<S> predictor_forward(ad::Tape<S>& tape, ParamSet<S>& params, const ad::Var<S>& h, bool trainable = true);

struct PretrainConfig {
  EncoderConfig encoder;
  DistortionConfig distortion;
  VicregWeights vicreg;
  std::size_t window = 32000;
  std::size_t stride = 200;
  int epochs = 100;
  double lr = 1e-4;
  std::uint64_t seed = 0;
};

struct PretrainEpoch {
  int epoch = 0;
  double loss = 0, variance = 0, covariance = 0, invariance = 0;
  std::size_t batches = 0;
  std::size_t skipped = 0;
  double ms = 0;
};

struct PretrainResult {
  std::vector<PretrainEpoch> epochs;
  /// Mean per-dimension standard deviation of the predictor output on the last batch.
  double final_repr_std = 0.0;
};

/// Runs SSL pre-training over `history` (the training edges) and updates the
/// encoder.* and predictor.* entries of `params` in place. The state after the
/// last epoch is what remains in `params`.
template <typename S>
PretrainResult pretrain(const CTDG& graph, std::span<const Edge> history, ParamSet<S>& params,
                        const PretrainConfig& cfg, const std::function<void(const PretrainEpoch&)>& on_epoch = {});

}  // namespace dyg

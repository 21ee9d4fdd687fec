#pragma once

#include <string>
#include <vector>

#include "dyg2vec/params.hpp"

namespace dyg {

/// Registers prefix.l{i}.w / prefix.l{i}.b for consecutive widths.
template <typename S>
void init_mlp(ParamSet<S>& params, const std::string& prefix, const std::vector<Index>& widths, Rng& rng) {
  if (widths.size() < 2) throw ContractError("init_mlp: need at least an input and an output width");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    params.add_xavier(prefix + ".l" + std::to_string(i) + ".w", widths[i], widths[i + 1], rng);
    params.add_zeros(prefix + ".l" + std::to_string(i) + ".b", 1, widths[i + 1]);
  }
}

enum class Activation { Relu, Sigmoid };

/// Affine layers with an activation in between (none after the last). When
/// dropout > 0 a single dropout layer follows the first hidden activation.
template <typename S>
ad::Var<S> mlp_forward(ad::Tape<S>& tape, ParamSet<S>& params, const std::string& prefix, ad::Var<S> x, int layers,
                       bool trainable, double dropout = 0.0, Rng* rng = nullptr,
                       Activation act = Activation::Relu) {
  for (int i = 0; i < layers; ++i) {
    auto w = tape.param(params.at(prefix + ".l" + std::to_string(i) + ".w"), trainable);
    auto b = tape.param(params.at(prefix + ".l" + std::to_string(i) + ".b"), trainable);
    x = ad::add(ad::matmul(x, w), b);
    if (i + 1 < layers) {
      x = act == Activation::Relu ? ad::relu(x) : ad::sigmoid(x);
      if (i == 0 && dropout > 0.0) {
        if (rng == nullptr) throw ContractError("mlp_forward: dropout needs an rng");
        x = ad::dropout(x, dropout, *rng);
      }
    }
  }
  return x;
}

}  // namespace dyg

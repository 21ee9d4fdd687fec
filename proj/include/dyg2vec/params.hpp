#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "dyg2vec/error.hpp"
#include "dyg2vec/rng.hpp"
#include "dyg2vec/tensor.hpp"

namespace dyg {

/// Name-ordered collection of parameters. Iteration order is lexicographic by
/// name, which keeps checkpoints and hashes stable.
template <typename S>
class ParamSet {
 public:
  Parameter<S>& add(const std::string& name, Matrix<S> value) {
    if (params_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
    Parameter<S> p;
    p.name = name;
    p.value = std::move(value);
    p.zero_grad();
    return params_.emplace(name, std::move(p)).first->second;
  }

  /// Xavier/Glorot-uniform initialization for a fan_in x fan_out matrix.
  Parameter<S>& add_xavier(const std::string& name, Index rows, Index cols, Rng& rng) {
    Matrix<S> m(rows, cols);
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>((2.0 * uniform01(rng) - 1.0) * bound);
    return add(name, std::move(m));
  }

  Parameter<S>& add_zeros(const std::string& name, Index rows, Index cols) {
    return add(name, Matrix<S>::Zero(rows, cols));
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Parameter<S>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }
  const Parameter<S>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  /// Pointers to every parameter whose name starts with `prefix`.
  std::vector<Parameter<S>*> with_prefix(const std::string& prefix) {
    std::vector<Parameter<S>*> out;
    for (auto& [name, p] : params_)
      if (name.compare(0, prefix.size(), prefix) == 0) out.push_back(&p);
    return out;
  }

  /// Copies every entry with the given prefix from `other`, overwriting.
  void assign_prefix(const ParamSet& other, const std::string& prefix) {
    for (const auto& [name, p] : other.params_) {
      if (name.compare(0, prefix.size(), prefix) != 0) continue;
      auto& mine = at(name);
      if (mine.value.rows() != p.value.rows() || mine.value.cols() != p.value.cols())
        throw DimensionError("assign_prefix: shape mismatch for '" + name + "'");
      mine.value = p.value;
    }
  }

  /// FNV-1a over names, shapes and raw values of entries with `prefix`.
  std::uint64_t hash(const std::string& prefix = "") const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ULL;
      }
    };
    for (const auto& [name, p] : params_) {
      if (name.compare(0, prefix.size(), prefix) != 0) continue;
      mix(name.data(), name.size());
      const std::int64_t shape[2] = {p.value.rows(), p.value.cols()};
      mix(shape, sizeof(shape));
      mix(p.value.data(), sizeof(S) * static_cast<std::size_t>(p.value.size()));
    }
    return h;
  }

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& [_, p] : params_)
      if (!p.value.allFinite()) return false;
    return true;
  }

  template <typename T>
  ParamSet<T> cast() const {
    ParamSet<T> out;
    for (const auto& [name, p] : params_) out.add(name, p.value.template cast<T>());
    return out;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter<S>> params_;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// First/second moment buffers keyed by parameter name, plus the step counter.
template <typename S>
struct AdamState {
  AdamOptions options;
  std::map<std::string, Matrix<S>> m;
  std::map<std::string, Matrix<S>> v;
  long t = 0;
};

/// One bias-corrected Adam update over `params`. Weight decay is applied as an
/// L2 term added to the gradient before the moment updates.
template <typename S>
void adam_step(const std::vector<Parameter<S>*>& params, AdamState<S>& state) {
  const auto& o = state.options;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
  for (Parameter<S>* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols())
      throw ContractError("adam_step: gradient shape does not match parameter '" + p->name + "'");
    auto& m = state.m[p->name];
    auto& v = state.v[p->name];
    if (m.size() == 0) {
      m = Matrix<S>::Zero(p->value.rows(), p->value.cols());
      v = Matrix<S>::Zero(p->value.rows(), p->value.cols());
    } else if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw ContractError("adam_step: moment shape does not match parameter '" + p->name + "'");
    }
    Matrix<S> g = p->grad;
    if (o.weight_decay > 0) g += static_cast<S>(o.weight_decay) * p->value;
    m = static_cast<S>(o.beta1) * m + static_cast<S>(1.0 - o.beta1) * g;
    v = static_cast<S>(o.beta2) * v + static_cast<S>(1.0 - o.beta2) * g.cwiseProduct(g);
    const S step = static_cast<S>(o.lr / bc1);
    const S root_bc2 = static_cast<S>(std::sqrt(bc2));
    p->value.array() -= step * m.array() / (v.array().sqrt() / root_bc2 + static_cast<S>(o.eps));
  }
}

}  // namespace dyg

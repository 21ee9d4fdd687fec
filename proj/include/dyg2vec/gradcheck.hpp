#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <string>

#include "dyg2vec/params.hpp"

namespace dyg {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates checked per parameter; larger parameters are subsampled.
  Index max_coords_per_param = 64;
  /// Denominator floor for the relative error.
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

/// Builds the scalar loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<ad::Var<double>(ad::Tape<double>&, ParamSet<double>&)>;

/// Compares reverse-mode gradients against central differences.
/// Throws HarnessError if two identical forward passes disagree.
inline GradCheckReport finite_difference_check(ParamSet<double>& params, const LossBuilder& build,
                                               const GradCheckOptions& opt = {}) {
  auto eval = [&]() {
    ad::Tape<double> tape(ad::Mode::Eval);
    return build(tape, params).item();
  };
  const double f0 = eval();
  const double f1 = eval();
  if (std::memcmp(&f0, &f1, sizeof(double)) != 0)
    throw HarnessError("finite_difference_check: forward pass is not deterministic");

  params.zero_grad();
  {
    ad::Tape<double> tape(ad::Mode::Eval);
    auto loss = build(tape, params);
    tape.backward(loss);
  }

  GradCheckReport rep;
  Rng rng = make_rng(opt.seed, {tag(Stream::GradCheck)});
  for (auto& [name, p] : params) {
    const Index n = p.value.size();
    std::vector<Index> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (n > opt.max_coords_per_param) {
      for (Index i = 0; i < opt.max_coords_per_param; ++i) {
        const auto j = i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n - i)));
        std::swap(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]);
      }
      coords.resize(static_cast<std::size_t>(opt.max_coords_per_param));
    }
    for (Index c : coords) {
      double& x = p.value.data()[c];
      const double saved = x;
      x = saved + opt.step;
      const double fp = eval();
      x = saved - opt.step;
      const double fm = eval();
      x = saved;
      const double numeric = (fp - fm) / (2.0 * opt.step);
      const double analytic = p.grad.data()[c];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), opt.abs_floor});
      const double rel = std::abs(numeric - analytic) / denom;
      ++rep.coords_checked;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_param = name;
        rep.worst_index = c;
        rep.worst_analytic = analytic;
        rep.worst_numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace dyg

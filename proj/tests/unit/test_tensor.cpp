#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "dyg2vec/checkpoint.hpp"
#include "dyg2vec/gradcheck.hpp"
#include "dyg2vec/params.hpp"
#include "support/generators.hpp"

using namespace dyg;
using dyg::testing::random_matrix;

namespace {

Matrix<double> mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix<double> m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST(Primitives, MatmulIdentity) {
  ad::Tape<double> t;
  auto a = t.constant(mat({{1, 2}, {3, 4}}));
  auto i = t.constant(mat({{1, 0}, {0, 1}}));
  EXPECT_EQ(ad::matmul(a, i).value(), mat({{1, 2}, {3, 4}}));
}

TEST(Primitives, Relu) {
  ad::Tape<double> t;
  EXPECT_EQ(ad::relu(t.constant(mat({{-1, 0, 2}}))).value(), mat({{0, 0, 2}}));
}

TEST(Primitives, SoftmaxSymmetric) {
  ad::Tape<double> t;
  EXPECT_EQ(ad::softmax_rows(t.constant(mat({{0, 0}}))).value(), mat({{0.5, 0.5}}));
}

TEST(Primitives, ShapeMismatchNamesPrimitive) {
  ad::Tape<double> t;
  auto a = t.constant(Matrix<double>::Zero(2, 3));
  auto b = t.constant(Matrix<double>::Zero(2, 3));
  try {
    ad::matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("2x3"), std::string::npos);
  }
  EXPECT_THROW(ad::add(a, t.constant(Matrix<double>::Zero(3, 3))), DimensionError);
  EXPECT_THROW(ad::concat_rows<double>({a, t.constant(Matrix<double>::Zero(1, 2))}), DimensionError);
}

TEST(Primitives, DropoutIdentityInEval) {
  Rng rng(1);
  ad::Tape<double> t(ad::Mode::Eval);
  auto x = t.constant(random_matrix(4, 5, rng));
  EXPECT_EQ(ad::dropout(x, 0.5, rng).value(), x.value());
}

TEST(Primitives, DropoutIsInverted) {
  Rng rng(2);
  ad::Tape<double> t(ad::Mode::Train);
  auto x = t.constant(Matrix<double>::Ones(200, 200));
  const auto& y = ad::dropout(x, 0.25, rng).value();
  for (Index i = 0; i < y.size(); ++i) EXPECT_TRUE(y.data()[i] == 0.0 || std::abs(y.data()[i] - 4.0 / 3.0) < 1e-15);
  EXPECT_NEAR(y.mean(), 1.0, 0.02);
}

TEST(Backward, SquareAtThree) {
  ad::Tape<double> t;
  auto x = t.leaf(mat({{3}}));
  auto y = ad::mul(x, x);
  t.backward(y);
  EXPECT_EQ(x.grad()(0, 0), 6.0);
}

TEST(Backward, NonScalarLossRejected) {
  ad::Tape<double> t;
  auto x = t.leaf(mat({{1, 2}}));
  EXPECT_THROW(t.backward(x), ContractError);
}

TEST(Backward, FanOutAccumulates) {
  ad::Tape<double> t;
  auto x = t.leaf(mat({{2}}));
  auto y = ad::add(ad::scale(x, 3.0), ad::mul(x, x));  // 3x + x^2
  t.backward(y);
  EXPECT_EQ(x.grad()(0, 0), 7.0);
}

TEST(Backward, LinearLayerMseMatchesFiniteDifferences) {
  Rng rng(11);
  ParamSet<double> ps;
  ps.add("w", random_matrix(3, 4, rng));
  ps.add("b", random_matrix(1, 4, rng));
  const Matrix<double> x = random_matrix(5, 3, rng);
  const Matrix<double> y = random_matrix(5, 4, rng);
  auto build = [&](ad::Tape<double>& t, ParamSet<double>& p) {
    auto out = ad::add(ad::matmul(t.constant(x), t.param(p.at("w"))), t.param(p.at("b")));
    auto d = ad::sub(out, t.constant(y));
    return ad::mean(ad::mul(d, d));
  };
  const auto rep = finite_difference_check(ps, build);
  EXPECT_LT(rep.max_rel_error, 1e-6) << rep.worst_param << "[" << rep.worst_index << "]";
  EXPECT_EQ(rep.coords_checked, 16u);
}

TEST(Backward, SigmoidBceGradientIsResidualOverN) {
  Rng rng(5);
  const Matrix<double> z = random_matrix(6, 1, rng, -3, 3);
  const std::vector<double> y{1, 0, 0, 1, 1, 0};
  ad::Tape<double> t;
  auto logits = t.leaf(z);
  t.backward(ad::bce_with_logits(logits, std::span<const double>(y)));
  for (Index i = 0; i < 6; ++i) {
    const double sig = 1.0 / (1.0 + std::exp(-z(i, 0)));
    EXPECT_NEAR(logits.grad()(i, 0), (sig - y[static_cast<std::size_t>(i)]) / 6.0, 1e-15);
  }
}

TEST(Bce, KnownValues) {
  ad::Tape<double> t;
  const std::vector<double> one{1};
  EXPECT_NEAR(ad::bce_with_logits(t.constant(mat({{0}})), std::span<const double>(one)).item(), std::log(2.0), 1e-15);
  const double big = ad::bce_with_logits(t.constant(mat({{20}})), std::span<const double>(one)).item();
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, std::log1p(std::exp(-20.0)), 1e-20);
  EXPECT_NEAR(big, 2e-9, 1e-10);
  const double huge = ad::bce_with_logits(t.constant(mat({{-800}})), std::span<const double>(one)).item();
  EXPECT_EQ(huge, 800.0);
}

TEST(Bce, SeparatedLossShrinksMonotonically) {
  const std::vector<double> y{1, 0, 1, 0};
  double prev = INFINITY;
  for (double m = 0.5; m < 40; m *= 1.5) {
    ad::Tape<double> t;
    const double l = ad::bce_with_logits(t.constant(mat({{m}, {-m}, {m}, {-m}})), std::span<const double>(y)).item();
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(Bce, RejectsEmptyAndBadLabels) {
  ad::Tape<double> t;
  const std::vector<double> none;
  EXPECT_THROW(ad::bce_with_logits(t.constant(Matrix<double>::Zero(0, 1)), std::span<const double>(none)),
               ContractError);
  const std::vector<double> bad{0.5};
  EXPECT_THROW(ad::bce_with_logits(t.constant(mat({{0}})), std::span<const double>(bad)), ContractError);
}

TEST(Adam, FirstStepMovesByLr) {
  Parameter<double> p{"p", mat({{0.0}}), mat({{1.0}})};
  AdamState<double> s;
  adam_step<double>({&p}, s);
  EXPECT_NEAR(p.value(0, 0), -1e-4 / (1.0 + 1e-8), 1e-18);
  EXPECT_EQ(s.t, 1);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  Parameter<double> p{"p", mat({{0.7, -2.0}}), mat({{0.0, 0.0}})};
  AdamState<double> s;
  for (int i = 0; i < 3; ++i) adam_step<double>({&p}, s);
  EXPECT_EQ(p.value, mat({{0.7, -2.0}}));
  EXPECT_EQ(s.t, 3);
}

TEST(Adam, WeightDecayPullsTowardZero) {
  Parameter<double> p{"p", mat({{1.0}}), mat({{0.0}})};
  AdamState<double> s;
  s.options.weight_decay = 1e-5;
  adam_step<double>({&p}, s);
  // Effective gradient 1e-5 > 0; bias-corrected step = lr * g / (|g| + eps).
  EXPECT_LT(p.value(0, 0), 1.0);
  EXPECT_NEAR(p.value(0, 0), 1.0 - 1e-4 * 1e-5 / (1e-5 + 1e-8), 1e-15);
}

TEST(Adam, ShapeMismatchIsContractError) {
  Parameter<double> p{"p", mat({{1.0, 2.0}}), mat({{0.0}})};
  AdamState<double> s;
  EXPECT_THROW(adam_step<double>({&p}, s), ContractError);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  Rng rng(3);
  ParamSet<double> ps;
  ps.add("w", random_matrix(2, 2, rng));
  auto build = [](ad::Tape<double>& t, ParamSet<double>& p) {
    t.param(p.at("w"));
    return t.constant(mat({{4.0}}));
  };
  const auto rep = finite_difference_check(ps, build);
  EXPECT_EQ(rep.max_rel_error, 0.0);
  EXPECT_EQ(ps.at("w").grad, Matrix<double>::Zero(2, 2));
}

TEST(GradCheck, NonDeterministicForwardIsHarnessError) {
  ParamSet<double> ps;
  ps.add("w", mat({{1.0}}));
  int calls = 0;
  auto build = [&](ad::Tape<double>& t, ParamSet<double>& p) {
    return ad::scale(t.param(p.at("w")), static_cast<double>(++calls));
  };
  EXPECT_THROW(finite_difference_check(ps, build), HarnessError);
}

// Random compositions of every differentiable primitive, checked against
// central differences.
TEST(Properties, RandomCompositionsMatchFiniteDifferences) {
  for (std::uint64_t trial = 0; trial < 25; ++trial) {
    Rng rng = make_rng(trial, {100});
    const Index n = dyg::testing::random_int(rng, 2, 5);
    const Index d = 2 * dyg::testing::random_int(rng, 1, 3);
    ParamSet<double> ps;
    ps.add("a", random_matrix(n, d, rng));
    ps.add("w", random_matrix(d, d, rng));
    ps.add("r", random_matrix(1, d, rng));
    ps.add("s", random_matrix(n, d / 2, rng));
    std::vector<int> seg(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) seg[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
    std::vector<int> gather{1, 0, static_cast<int>(n - 1), 1};
    auto build = [&](ad::Tape<double>& t, ParamSet<double>& p) {
      auto a = t.param(p.at("a"));
      auto w = t.param(p.at("w"));
      auto r = t.param(p.at("r"));
      auto s = t.param(p.at("s"));
      auto h = ad::add(ad::matmul(a, w), r);
      h = ad::concat_cols<double>({ad::sigmoid(ad::slice_cols(h, 0, d / 2)), ad::sin(ad::slice_cols(h, d / 2, d / 2))});
      auto sm = ad::softmax_rows(h);
      auto seg_w = ad::segment_softmax(ad::block_row_sum(h, d / 2), seg, 2);
      auto pooled = ad::segment_sum(ad::scale_blocks(sm, seg_w), seg, 2);
      auto g = ad::gather_rows(ad::sub(h, ad::col_mean(h)), gather);
      auto q = ad::sqrt(ad::shift(ad::mul(s, s), 0.5));
      auto stacked = ad::concat_rows<double>({pooled, ad::slice_rows(g, 1, 2)});
      return ad::add(ad::add(ad::mean(ad::mul(stacked, stacked)), ad::sum(ad::row_sum(ad::transpose(q)))),
                     ad::sum(ad::relu(ad::shift(g, 0.1))));
    };
    const auto rep = finite_difference_check(ps, build, {.seed = trial});
    EXPECT_LT(rep.max_rel_error, 1e-4) << "trial " << trial << " " << rep.worst_param << "[" << rep.worst_index
                                       << "] analytic " << rep.worst_analytic << " numeric " << rep.worst_numeric;
  }
}

TEST(Properties, BackwardIsLinear) {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng = make_rng(trial, {101});
    const Matrix<double> x0 = random_matrix(3, 4, rng);
    const Matrix<double> w = random_matrix(4, 2, rng);
    const double a = 4 * uniform01(rng) - 2, b = 4 * uniform01(rng) - 2;
    auto grad_of = [&](double ca, double cb) {
      ad::Tape<double> t;
      auto x = t.leaf(x0);
      auto f = ad::sum(ad::sigmoid(ad::matmul(x, t.constant(w))));
      auto g = ad::mean(ad::mul(x, x));
      t.backward(ad::add(ad::scale(f, ca), ad::scale(g, cb)));
      return Matrix<double>(x.grad());
    };
    const Matrix<double> combined = grad_of(a, b);
    const Matrix<double> separate = a * grad_of(1, 0) + b * grad_of(0, 1);
    EXPECT_LT((combined - separate).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Properties, SeededForwardAndBackwardAreBitwiseDeterministic) {
  auto run = [](std::uint64_t seed) {
    Rng rng = make_rng(seed, {102});
    ad::Tape<float> t(ad::Mode::Train);
    auto x = t.leaf(random_matrix<float>(8, 6, rng));
    auto y = ad::dropout(ad::softmax_rows(ad::matmul(x, ad::transpose(x))), 0.3, rng);
    auto loss = ad::mean(ad::mul(y, y));
    t.backward(loss);
    return std::pair<Matrix<float>, Matrix<float>>(y.value(), x.grad());
  };
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = run(s), b = run(s);
    EXPECT_EQ(std::memcmp(a.first.data(), b.first.data(), sizeof(float) * a.first.size()), 0);
    EXPECT_EQ(std::memcmp(a.second.data(), b.second.data(), sizeof(float) * a.second.size()), 0);
  }
}

TEST(Properties, SoftmaxRowsSumToOne) {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng = make_rng(trial, {103});
    const Index r = dyg::testing::random_int(rng, 1, 6), c = dyg::testing::random_int(rng, 1, 9);
    ad::Tape<double> td;
    const Matrix<double> x = random_matrix(r, c, rng, -30, 30);
    const auto& yd = ad::softmax_rows(td.constant(x)).value();
    ad::Tape<float> tf;
    const auto& yf = ad::softmax_rows(tf.constant(x.cast<float>().eval())).value();
    for (Index i = 0; i < r; ++i) {
      EXPECT_NEAR(yd.row(i).sum(), 1.0, 1e-12);
      EXPECT_NEAR(yf.row(i).sum(), 1.0f, 1e-6f);
    }
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(9);
  ParamSet<float> f;
  f.add("encoder.a", random_matrix<float>(3, 4, rng));
  f.add("flp.b", random_matrix<float>(1, 7, rng));
  const std::string path = ::testing::TempDir() + "ckpt_f.dygw";
  save_checkpoint(f, path);
  const auto g = load_checkpoint<float>(path);
  EXPECT_EQ(g.hash(), f.hash());
  EXPECT_EQ(checkpoint_precision(path), Precision::F32);

  ParamSet<double> d;
  d.add("x", random_matrix(2, 2, rng));
  const std::string dpath = ::testing::TempDir() + "ckpt_d.dygw";
  save_checkpoint(d, dpath);
  EXPECT_EQ(load_checkpoint<double>(dpath).hash(), d.hash());
  EXPECT_EQ(checkpoint_precision(dpath), Precision::F64);
}

TEST(Checkpoint, RejectsForeignFile) {
  const std::string path = ::testing::TempDir() + "not_a_ckpt.dygw";
  { std::ofstream(path) << "hello"; }
  EXPECT_THROW(load_checkpoint<float>(path), Error);
}

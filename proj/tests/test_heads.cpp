#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tgx/heads.hpp"

using namespace tgx;

namespace {

using T = Tensor<double>;

T logits_of(std::size_t n, std::size_t c, std::vector<double> v, bool grad = false) {
  return T::from(matrix_shape(n, c), std::move(v), grad);
}

Graph graph_with_nodes(std::size_t n) {
  Graph g;
  g.node_features = FeatureArray::zeros({n, 1, 1, 1});
  return g;
}

}  // namespace

TEST(PoolNodes, ConstantMap) {
  const T z = pool_nodes(T::full({2, 3, 4, 4}, 7.0));
  for (double v : z.data()) EXPECT_EQ(v, 7.0);
}

TEST(PoolNodes, ArithmeticMean) {
  EXPECT_EQ(pool_nodes(T::from({1, 1, 2, 2}, {1, 2, 3, 4})).item(), 2.5);
}

TEST(PoolNodes, SinglePixelIsIdentity) {
  Rng rng(1);
  const T x = oracle::random_tensor({3, 4, 1, 1}, rng);
  EXPECT_EQ(oracle::max_abs_diff(pool_nodes(x).data(), x.data()), 0.0);
}

TEST(PoolGraph, OneNodeGraphIsIdentity) {
  const GraphBatch b = batch_merge({graph_with_nodes(1)});
  const T z = T::from({1, 3, 1, 1}, {1, -2, 3});
  EXPECT_EQ(oracle::max_abs_diff(pool_graph(z, b, GraphPooling::Mean).data(), z.data()), 0.0);
}

TEST(PoolGraph, SegmentMean) {
  const GraphBatch b = batch_merge({graph_with_nodes(1), graph_with_nodes(2)});
  const T z = T::from({3, 2, 1, 1}, {1, 2, 3, 4, 5, 8});
  const T p = pool_graph(z, b, GraphPooling::Mean);
  EXPECT_EQ(p.at(1, 0), 4.0);
  EXPECT_EQ(p.at(1, 1), 6.0);
  EXPECT_EQ(p.at(0, 1), 2.0);
}

TEST(PoolGraph, SumCountsNodes) {
  const GraphBatch b = batch_merge({graph_with_nodes(3), graph_with_nodes(1), graph_with_nodes(4)});
  const T p = pool_graph(T::full({8, 2, 1, 1}, 1.0), b, GraphPooling::Sum);
  EXPECT_EQ(p.at(0, 1), 3.0);
  EXPECT_EQ(p.at(1, 0), 1.0);
  EXPECT_EQ(p.at(2, 0), 4.0);
}

TEST(PoolGraph, IdenticalSingleNodeGraphsUnchanged) {
  Rng rng(2);
  const GraphBatch b = batch_merge(std::vector<Graph>(5, graph_with_nodes(1)));
  const T z = oracle::random_tensor({5, 3, 1, 1}, rng);
  EXPECT_EQ(oracle::max_abs_diff(pool_graph(z, b, GraphPooling::Mean).data(), z.data()), 0.0);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  const std::vector<int> t{0, 2};
  EXPECT_NEAR(cross_entropy(T::zeros(matrix_shape(2, 3)), t).item(), std::log(3.0), 1e-12);
}

TEST(CrossEntropy, SaturatedTarget) {
  const std::vector<int> t{1};
  EXPECT_NEAR(cross_entropy(logits_of(1, 3, {0, 50, 0}), t).item(), 0.0, 1e-9);
}

TEST(CrossEntropy, MatchesSoftmaxOracle) {
  Rng rng(3);
  const T z = oracle::random_tensor(matrix_shape(4, 3), rng);
  const std::vector<int> t{0, 2, 1, 1};
  EXPECT_NEAR(cross_entropy(z, t).item(), oracle::cross_entropy(z.data(), t, 3), 1e-12);
}

TEST(CrossEntropy, ShiftInvariant) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const T z = oracle::random_tensor(matrix_shape(3, 4), rng);
    const auto t = oracle::random_targets(3, 4, rng);
    std::vector<double> shifted(z.data().begin(), z.data().end());
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t c = 0; c < 4; ++c) shifted[i * 4 + c] += 10.0 * (i + 1) - 7.5;
    EXPECT_NEAR(cross_entropy(z, t).item(), cross_entropy(logits_of(3, 4, shifted), t).item(), 1e-9);
  }
}

TEST(CrossEntropy, RejectsBadTargets) {
  const std::vector<int> bad{3};
  const std::vector<int> two{0, 1};
  EXPECT_THROW(cross_entropy(T::zeros(matrix_shape(1, 3)), bad), std::invalid_argument);
  EXPECT_THROW(cross_entropy(T::zeros(matrix_shape(1, 3)), two), ShapeError);
}

TEST(AucLoss, EqualScoresGiveClosedForm) {
  const std::vector<int> t{1, 0};
  EXPECT_NEAR(auc_ranking_loss(T::full(matrix_shape(2, 3), 0.4), t).item(), 2.0 * std::log(2.0),
              1e-12);
}

TEST(AucLoss, SaturatedMargin) {
  const std::vector<int> t{0};
  EXPECT_NEAR(auc_ranking_loss(logits_of(1, 3, {60, 0, 0}), t).item(), 0.0, 1e-12);
}

TEST(AucLoss, MatchesDoubleLoop) {
  Rng rng(5);
  const T z = oracle::random_tensor(matrix_shape(3, 4), rng);
  const std::vector<int> t{3, 0, 1};
  EXPECT_NEAR(auc_ranking_loss(z, t).item(), oracle::auc_loss(z.data(), t, 4), 1e-12);
}

TEST(AucLoss, ShiftInvariantAndMonotoneInTarget) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const T z = oracle::random_tensor(matrix_shape(1, 4), rng);
    const std::vector<int> t{trial % 4};
    std::vector<double> v(z.data().begin(), z.data().end());
    std::vector<double> shifted = v;
    for (double& s : shifted) s += 3.25;
    const double base = auc_ranking_loss(z, t).item();
    EXPECT_NEAR(base, auc_ranking_loss(logits_of(1, 4, shifted), t).item(), 1e-9);
    double previous = base;
    for (int step = 1; step <= 5; ++step) {
      std::vector<double> raised = v;
      raised[t[0]] += 0.5 * step;
      const double next = auc_ranking_loss(logits_of(1, 4, raised), t).item();
      EXPECT_LT(next, previous);
      previous = next;
    }
  }
}

TEST(CompositeLoss, GammaZeroIsCrossEntropy) {
  Rng rng(7);
  const T z = oracle::random_tensor(matrix_shape(5, 3), rng);
  const auto t = oracle::random_targets(5, 3, rng);
  EXPECT_EQ(composite_loss(z, t, {1, 0, 0}).item(), cross_entropy(z, t).item());
}

TEST(CompositeLoss, EqualScoresSumClosedForms) {
  const std::vector<int> t{2};
  EXPECT_NEAR(composite_loss(T::zeros(matrix_shape(1, 3)), t, {}).item(),
              std::log(3.0) + 2.0 * std::log(2.0), 1e-12);
}

TEST(CompositeLoss, LinearInGamma) {
  Rng rng(8);
  const T z = oracle::random_tensor(matrix_shape(4, 3), rng);
  const auto t = oracle::random_targets(4, 3, rng);
  const double l0 = composite_loss(z, t, {1, 0, 0}).item();
  const double l1 = composite_loss(z, t, {1, 0, 1}).item();
  const double l2 = composite_loss(z, t, {1, 0, 2}).item();
  EXPECT_NEAR(l2 - l0, 2.0 * (l1 - l0), 1e-12);
}

TEST(CompositeLoss, GradientCheck) {
  Rng rng(9);
  const T z = oracle::random_tensor(matrix_shape(4, 3), rng, true);
  const auto t = oracle::random_targets(4, 3, rng);
  const auto report = grad_check([&] { return composite_loss(z, t, {1, 0, 1.5}); }, {{"z", z}});
  EXPECT_LT(report.max_relative_error(), 1e-6);
}

TEST(IouComposite, BetaZeroIsScaledCrossEntropy) {
  Rng rng(10);
  PredictionBundle<double> b{oracle::random_tensor(matrix_shape(3, 3), rng), std::nullopt, {0, 1, 2}, std::nullopt};
  EXPECT_NEAR(iou_composite_loss(b, {2.0, 0.0, 0.0}).item(),
              2.0 * cross_entropy(b.logits, std::span<const int>(b.targets)).item(), 1e-15);
}

TEST(IouComposite, PerfectIouHasNoRegressionTerm) {
  PredictionBundle<double> b{T::zeros(matrix_shape(2, 3)), T::from(vector_shape(2), {0.3, 0.9}),
                             {0, 1}, std::vector<double>{0.3, 0.9}};
  EXPECT_NEAR(iou_composite_loss(b, {1.0, 1.0, 0.0}).item(), std::log(3.0), 1e-12);
}

TEST(IouComposite, RegressionOnly) {
  PredictionBundle<double> b{T::zeros(matrix_shape(1, 3)), T::from(vector_shape(1), {0.5}), {0},
                             std::vector<double>{0.75}};
  EXPECT_NEAR(iou_composite_loss(b, {0.0, 1.0, 0.0}).item(), 0.0625, 1e-15);
}

TEST(IouComposite, RejectsMissingFields) {
  PredictionBundle<double> b{T::zeros(matrix_shape(1, 3)), std::nullopt, {0}, std::nullopt};
  EXPECT_THROW(iou_composite_loss(b, {1.0, 1.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(iou_composite_loss(b, {0.0, 0.0, 0.0}), std::invalid_argument);
}

TEST(Classifier, ArgmaxInvariantToPositiveScalingWithoutBias) {
  Rng rng(11);
  ParameterSet<double> params;
  ClassifierHead<double> head(params, "head", 4, 3, rng, 1.0);
  for (auto& b : head.bias().mutable_data()) b = 0.0;
  const T z = oracle::random_tensor({6, 4, 1, 1}, rng);
  const T base = classify_nodes(z, head);
  const T scaled = classify_nodes(scale(z, 3.7), head);
  EXPECT_EQ(argmax_rows(base.data(), 3), argmax_rows(scaled.data(), 3));
}

TEST(Classifier, RejectsSingleClass) {
  ParameterSet<double> params;
  Rng rng(12);
  EXPECT_THROW(ClassifierHead<double>(params, "head", 4, 1, rng), std::invalid_argument);
}

TEST(ArgmaxRows, TiesGoToLowerClassAndMaskApplies) {
  const std::vector<double> z{1, 1, 0, 0, 2, 2};
  EXPECT_EQ(argmax_rows(z, 3), (std::vector<int>{0, 1}));
  const std::vector<std::vector<bool>> mask{{false, true, true}, {true, false, true}};
  EXPECT_EQ(argmax_rows(z, 3, mask), (std::vector<int>{1, 2}));
}

TEST(Softplus, StableAtExtremes) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_EQ(softplus(800.0), 800.0);
  EXPECT_GT(softplus(-800.0), -1e-300);
  EXPECT_LT(softplus(-800.0), 1e-300);
}

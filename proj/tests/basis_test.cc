#include "fade/basis.h"

#include <random>
#include <string>

#include <gtest/gtest.h>

#include "fade/errors.h"
#include "fade/glm.h"
#include "fade/sim.h"

namespace fade {
namespace {

Dataset SimData(size_t n, uint64_t seed) {
  sim::DgpSpec spec;
  spec.n = n;
  spec.seed = seed;
  return sim::Generate(spec);
}

Dataset TenRowsSixPositive() {
  ColumnRoles roles;
  roles.a = "a";
  roles.y = "y";
  roles.x = {"x1"};
  std::vector<Record> rows;
  for (int i = 0; i < 10; ++i) {
    rows.push_back(Record{.a = i % 2, .x = {0.1 * i}, .y = i < 6 ? 1.0 : 0.0});
  }
  return Dataset(std::move(rows), {0, 1}, roles);
}

TEST(Assemble, MeanColumnIsFoldAverage) {
  Dataset ds = TenRowsSixPositive();
  BasisMatrix b = Assemble(ds, {BasisSource::Mean(), BasisSource::RawFeature("x1")},
                           OutcomeMode::kObservable, "learn");
  ASSERT_EQ(b.cols(), 2);
  for (Eigen::Index i = 0; i < b.rows(); ++i) EXPECT_DOUBLE_EQ(b.values(i, 0), 0.6);
  EXPECT_EQ(b.names, (std::vector<std::string>{"mean", "x1"}));
}

TEST(Assemble, CounterfactualMeanUsesUntreatedRows) {
  Dataset ds = SimData(2000, 3);
  BasisMatrix b = Assemble(ds, {BasisSource::Mean(), BasisSource::RawFeature("x1")},
                           OutcomeMode::kCounterfactual, "t");
  EXPECT_DOUBLE_EQ(b.values(0, 0), ds.Untreated().Y().mean());
}

TEST(Assemble, DuplicateColumnIsIllConditioned) {
  Dataset ds = SimData(200, 1);
  try {
    Assemble(ds,
             {BasisSource::Mean(), BasisSource::RawFeature("x1"),
              BasisSource::RawFeature("x1")},
             OutcomeMode::kObservable, "learn");
    FAIL() << "expected a conditioning error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(e.what()).find("x1"), std::string::npos);
  }
}

TEST(Assemble, FiveDistinctColumnsArePositiveDefinite) {
  Dataset ds = SimData(1000, 2);
  std::vector<BasisSource> sources = {BasisSource::Mean()};
  for (const char* c : {"x1", "x2", "x3", "x4"}) {
    sources.push_back(BasisSource::RawFeature(c));
  }
  BasisMatrix b = Assemble(ds, sources, OutcomeMode::kObservable, "learn");
  Eigen::MatrixXd gram = b.values.transpose() * b.values / double(b.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
}

TEST(Assemble, RejectsTooManyColumnsAndBadLengths) {
  Dataset ds = TenRowsSixPositive();
  std::vector<BasisSource> wide;
  for (int j = 0; j < 10; ++j) {
    wide.push_back(BasisSource::Values("v" + std::to_string(j),
                                       std::vector<double>(10, j)));
  }
  EXPECT_THROW(Assemble(ds, wide, OutcomeMode::kObservable, "x"), Error);
  EXPECT_THROW(Assemble(ds, {BasisSource::Values("v", {1, 2, 3})},
                        OutcomeMode::kObservable, "x"),
               Error);
  EXPECT_THROW(Assemble(ds, {}, OutcomeMode::kObservable, "x"), Error);
}

TEST(Assemble, ModelColumnAppliesOffsetAndScale) {
  Dataset ds = SimData(500, 4);
  Eigen::MatrixXd x = FeatureMatrix(ds, {"x1", "x2"});
  GlmModel m = FitGlm(x, ds.Y(), Link::kLogit);
  m.features = {"x1", "x2"};
  BasisMatrix b = Assemble(
      ds, {BasisSource::Mean(), BasisSource::Model("m", m, 2.0, 3.0)},
      OutcomeMode::kObservable, "learn");
  Eigen::VectorXd expected = (2.0 + 3.0 * m.Predict(x).array()).matrix();
  EXPECT_LE((b.values.col(1) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Predict, DotProductAndTruncation) {
  Eigen::Vector3d row(1.0, 0.5, 0.25);
  Eigen::Vector3d beta(0.2, 0.4, 0.8);
  Bounds unit{0.0, 1.0};
  EXPECT_DOUBLE_EQ(Predict(row, beta, false, unit), 0.6);
  Eigen::Vector3d big(2.0, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(Predict(row, big, false, unit), 2.0);
  EXPECT_DOUBLE_EQ(Predict(row, big, true, unit), 1.0);
  EXPECT_DOUBLE_EQ(Predict(row, -big, true, unit), 0.0);
  EXPECT_THROW(Predict(row, Eigen::Vector2d(1, 1), false, unit), Error);
}

TEST(PredictAll, TruncationIsIdempotentAndInBounds) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 3.0);
  BasisMatrix b;
  b.values.resize(50, 3);
  for (Eigen::Index i = 0; i < 50; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) b.values(i, j) = normal(rng);
  }
  b.bounds = {-1.0, 2.0};
  Eigen::Vector3d beta(0.5, -1.0, 2.0);
  Eigen::VectorXd f = PredictAll(b, beta, true);
  EXPECT_GE(f.minCoeff(), -1.0);
  EXPECT_LE(f.maxCoeff(), 2.0);
  Eigen::VectorXd clamped_again =
      f.unaryExpr([&](double v) { return b.bounds.Clamp(v); });
  EXPECT_EQ(f, clamped_again);
  Eigen::VectorXd raw = PredictAll(b, beta, false);
  for (Eigen::Index i = 0; i < 50; ++i) {
    if (b.bounds.Contains(raw[i])) {
      EXPECT_EQ(raw[i], f[i]);
    }
  }
}

TEST(Signature, StableAndOrderSensitive) {
  std::vector<std::string> cols = {"mean", "x1", "m"};
  EXPECT_EQ(HashColumnNames(cols), HashColumnNames(cols));
  EXPECT_NE(HashColumnNames(cols), HashColumnNames({"x1", "mean", "m"}));
  EXPECT_NE(HashColumnNames({"ab", "c"}), HashColumnNames({"a", "bc"}));
  Dataset ds = TenRowsSixPositive();
  BasisMatrix a = Assemble(ds, {BasisSource::Mean(), BasisSource::RawFeature("x1")},
                           OutcomeMode::kObservable, "learn");
  BasisMatrix b = Assemble(ds, {BasisSource::Mean(), BasisSource::RawFeature("x1")},
                           OutcomeMode::kObservable, "learn");
  EXPECT_EQ(a.signature, b.signature);
  EXPECT_EQ(a.signature.fold, "learn");
}

}  // namespace
}  // namespace fade

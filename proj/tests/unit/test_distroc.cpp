#include "knnloc/distroc.hpp"
#include "knnloc/pipeline.hpp"
#include "knnloc/rng.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace knnloc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ScaleLocModel constant_model(double m, double sd) {
  Eigen::MatrixXd x(2, 1);
  x << 0, 1;
  const Dataset d = make_dataset(x, Eigen::VectorXd::Constant(2, m));
  const std::vector<Index> rows{0, 1};
  Eigen::VectorXd r(2);
  r << sd, -sd;
  ScaleLocModel model;
  model.feature_names = d.feature_names;
  model.target_name = "y";
  model.standardizer = Standardizer::identity(1);
  model.mean = fit_mean(d, rows, {}, 1);
  model.variance = fit_variance(r, d, rows, {}, 1, true);
  return model;
}

// Y = shift + slope * x1 + N(0, 1), x1 ~ U[0, 1].
Dataset linear_population(double shift, double slope, Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform();
    y(i) = shift + slope * x(i, 0) + rng.normal();
  }
  return make_dataset(x, y);
}

const Eigen::VectorXd kOrigin = Eigen::VectorXd::Zero(1);

} // namespace

TEST(NormalLaw, CdfValues) {
  const NormalLaw law{3.0, 2.0};
  EXPECT_EQ(law.cdf(3.0).value, 0.5);
  EXPECT_NEAR(law.cdf(3.0 + 1.95996398 * 2.0).value, 0.975, 1e-8);
  EXPECT_NEAR(law.cdf(3.0 + 1.959963984540054 * 2.0).value, 0.975, 1e-10);
  EXPECT_EQ(law.cdf(-kInf).value, 0.0);
  EXPECT_EQ(law.cdf(kInf).value, 1.0);
  for (double t = -5; t < 10; t += 0.25) {
    EXPECT_NEAR(law.cdf(t).value, oracle::phi((t - 3.0) / 2.0), 1e-12);
    EXPECT_FALSE(law.cdf(t).degenerate);
  }
  EXPECT_NEAR(law.quantile(0.975), 3.0 + 2.0 * 1.959963984540054, 1e-12);
}

TEST(NormalLaw, DegenerateStep) {
  const NormalLaw law{1.0, 0.0};
  EXPECT_EQ(law.cdf(0.999).value, 0.0);
  EXPECT_EQ(law.cdf(1.0).value, 1.0);
  EXPECT_TRUE(law.cdf(1.0).degenerate);
  EXPECT_EQ(law.quantile(0.3), 1.0);
}

TEST(ConditionalCdf, UsesFittedModel) {
  const ScaleLocModel m = constant_model(2.0, 0.5);
  EXPECT_EQ(conditional_cdf(m, 2.0, kOrigin).value, 0.5);
  const NormalLaw law = conditional_law(m, kOrigin);
  EXPECT_EQ(law.mean, 2.0);
  EXPECT_DOUBLE_EQ(law.sd, 0.5);
}

TEST(Roc, TprFprExample) {
  const RocModel roc(constant_model(1.0, 1.0), constant_model(0.0, 1.0));
  const RocPoint pt = tpr_fpr(roc, 0.5, kOrigin);
  EXPECT_NEAR(pt.tpr, 0.69146, 1e-5);
  EXPECT_NEAR(pt.fpr, 0.30854, 1e-5);
  EXPECT_NEAR(pt.tpr, oracle::phi(0.5), 1e-12);
  EXPECT_NEAR(pt.fpr, 1 - oracle::phi(0.5), 1e-12);
}

TEST(Roc, IdenticalPopulations) {
  const RocModel roc(constant_model(0.7, 1.3), constant_model(0.7, 1.3));
  for (double c = -5; c <= 5; c += 0.5) {
    const RocPoint pt = tpr_fpr(roc, c, kOrigin);
    EXPECT_EQ(pt.tpr, pt.fpr);
  }
  EXPECT_EQ(auc(roc, kOrigin), 0.5);
  Eigen::MatrixXd grid(4, 1);
  grid << 0, 0.3, 0.6, 1;
  for (double a : auc_surface(roc, grid)) EXPECT_EQ(a, 0.5);
}

TEST(Roc, CurveIsMonotoneWithFixedEnds) {
  const RocModel roc(constant_model(1.0, 2.0), constant_model(-0.5, 0.7));
  const RocPoint lo = tpr_fpr(roc, -kInf, kOrigin);
  const RocPoint hi = tpr_fpr(roc, kInf, kOrigin);
  EXPECT_EQ(lo.tpr, 1.0);
  EXPECT_EQ(lo.fpr, 1.0);
  EXPECT_EQ(hi.tpr, 0.0);
  EXPECT_EQ(hi.fpr, 0.0);
  RocPoint prev = lo;
  for (double c = -20; c <= 20; c += 0.1) {
    const RocPoint pt = tpr_fpr(roc, c, kOrigin);
    EXPECT_LE(pt.tpr, prev.tpr);
    EXPECT_LE(pt.fpr, prev.fpr);
    prev = pt;
  }
}

TEST(Auc, ClosedFormExample) {
  const RocModel roc(constant_model(1.3859, 1.0), constant_model(0.0, 1.0));
  EXPECT_NEAR(auc(roc, kOrigin), 0.8365, 1e-4);
  EXPECT_NEAR(auc(roc, kOrigin), oracle::phi(1.3859 / std::sqrt(2.0)), 1e-12);
}

TEST(Auc, DegenerateBothScalesZero) {
  EXPECT_EQ(binormal_auc({1, 0}, {0, 0}), 1.0);
  EXPECT_EQ(binormal_auc({0, 0}, {1, 0}), 0.0);
  EXPECT_EQ(binormal_auc({1, 0}, {1, 0}), 0.5);
}

TEST(Auc, QuadratureMatchesClosedForm) {
  for (double delta : {-2.0, -0.5, 0.0, 0.3, 1.0, 2.5}) {
    for (double sd_d : {0.5, 1.0, 2.0}) {
      for (double sd_h : {0.5, 1.0, 3.0}) {
        const NormalLaw d{delta, sd_d}, h{0.0, sd_h};
        const double closed = binormal_auc(d, h);
        EXPECT_NEAR(closed, oracle::phi(delta / std::hypot(sd_d, sd_h)), 1e-12);
        EXPECT_NEAR(binormal_auc_quadrature(d, h, 10000), closed, 1e-6)
            << delta << ' ' << sd_d << ' ' << sd_h;
      }
    }
  }
  EXPECT_THROW(binormal_auc_quadrature({0, 1}, {0, 1}, 1), std::invalid_argument);
}

TEST(Auc, SwappedCompositionIsComplement) {
  for (double delta : {-1.0, 0.4, 1.3859}) {
    const NormalLaw d{delta, 1.2}, h{0.0, 0.8};
    EXPECT_NEAR(swapped_auc_quadrature(d, h, 10000), 1.0 - binormal_auc(d, h), 1e-6);
  }
}

TEST(Auc, ModelQuadratureAgrees) {
  const RocModel roc(constant_model(0.9, 1.1), constant_model(0.1, 0.6));
  EXPECT_NEAR(auc_quadrature(roc, kOrigin, 10000), auc(roc, kOrigin), 1e-6);
}

TEST(Auc, RocModelPreconditions) {
  ScaleLocModel emp = constant_model(0, 1);
  emp.error_mode = ErrorMode::empirical;
  emp.calibration = Eigen::VectorXd::Ones(20);
  EXPECT_THROW(RocModel(emp, constant_model(0, 1)), std::invalid_argument);
  ScaleLocModel wide = constant_model(0, 1);
  wide.feature_names.push_back("x2");
  EXPECT_THROW(RocModel(wide, constant_model(0, 1)), std::invalid_argument);
}

TEST(Auc, SurfaceSinglePoint) {
  const RocModel roc(constant_model(1, 1), constant_model(0, 1));
  Eigen::MatrixXd grid(1, 1);
  grid << 0.4;
  const auto s = auc_surface(roc, grid);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], auc(roc, grid.row(0).transpose()));
}

TEST(Auc, IncreasesWithSeparation) {
  PipelineConfig cfg;
  cfg.seed = 1;
  const PipelineResult d = fit_pipeline(linear_population(0.0, 2.0, 12000, 11), cfg);
  cfg.seed = 2;
  const PipelineResult h = fit_pipeline(linear_population(0.0, 0.0, 12000, 12), cfg);
  const RocModel roc(d.model, h.model);
  Eigen::MatrixXd grid(10, 1);
  for (Index i = 0; i < 10; ++i) grid(i, 0) = 0.05 + 0.1 * static_cast<double>(i);
  const auto s = auc_surface(roc, grid);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GE(s[i], s[i - 1] - 0.03);
  EXPECT_GT(s.back(), s.front() + 0.3);
}

TEST(Auc, LocationShiftEquivariance) {
  PipelineConfig cfg;
  cfg.seed = 4;
  const Dataset dd = linear_population(0.0, 1.5, 8000, 21);
  const Dataset hh = linear_population(0.0, 0.0, 8000, 22);
  Dataset ds = dd, hs = hh;
  ds.response.array() += 25.0;
  hs.response.array() += 25.0;
  const RocModel a(fit_pipeline(dd, cfg).model, fit_pipeline(hh, cfg).model);
  const RocModel b(fit_pipeline(ds, cfg).model, fit_pipeline(hs, cfg).model);
  for (double x = 0.05; x < 1; x += 0.1) {
    const Eigen::VectorXd v = Eigen::VectorXd::Constant(1, x);
    EXPECT_NEAR(auc(a, v), auc(b, v), 0.01);
  }
}

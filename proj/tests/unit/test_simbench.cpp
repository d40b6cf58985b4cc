#include "knnloc/parallel.hpp"
#include "knnloc/simbench.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace knnloc;

namespace {

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

} // namespace

TEST(Scenario, TableValues) {
  const ScenarioSpec s2 = ScenarioSpec::table(2, 3);
  EXPECT_EQ(s2.sd(Eigen::Vector3d(0.5, 0.9, 0.1)), 2.5);
  EXPECT_EQ(s2.mean(Eigen::Vector3d(0.5, 0.9, 0.1)), 0.0);
  const ScenarioSpec s1 = ScenarioSpec::table(1, 3);
  EXPECT_EQ(s1.mean(Eigen::Vector3d(0.2, 1, 1)), 10.0);
  EXPECT_EQ(s1.sd(Eigen::Vector3d(0.2, 1, 1)), 1.0);
  EXPECT_EQ(s1.mean_formula(), "5*(x2 + x3)");
  EXPECT_EQ(s1.sd_formula(), "1");
  EXPECT_EQ(ScenarioSpec::table(6, 5).mean_terms, (Support{0, 1, 2}));
  EXPECT_EQ(ScenarioSpec::table(6, 5).sd_terms, (Support{3, 4}));
  EXPECT_EQ(ScenarioSpec::table(9, 10).sd_terms, (Support{7, 8, 9}));
  EXPECT_EQ(ScenarioSpec::regime_dimensions(2), (std::vector<Index>{3, 10, 20, 25}));
  EXPECT_EQ(ScenarioSpec::regime_dimensions(5), (std::vector<Index>{5, 10, 20, 50}));
  EXPECT_EQ(ScenarioSpec::regime_dimensions(8), (std::vector<Index>{10, 25, 50, 100}));
}

TEST(Scenario, Preconditions) {
  EXPECT_THROW(ScenarioSpec::table(0, 3), std::invalid_argument);
  EXPECT_THROW(ScenarioSpec::table(10, 3), std::invalid_argument);
  EXPECT_THROW(ScenarioSpec::table(6, 4), std::invalid_argument);
  EXPECT_THROW(ScenarioSpec::regime_dimensions(11), std::invalid_argument);
  EXPECT_THROW(generate(ScenarioSpec::table(1, 3), 0, 1), std::invalid_argument);
}

TEST(Generate, ScenarioFourMean) {
  const Index n = 100000;
  const Dataset d = generate(ScenarioSpec::table(4, 5), n, 8);
  const double mean = d.response.mean();
  const double var = (d.response.array() - mean).square().sum() / static_cast<double>(n - 1);
  EXPECT_LT(std::abs(mean - 10.0), 3.0 * std::sqrt(var / static_cast<double>(n)));
  EXPECT_NEAR(var, 25.0 * 4.0 / 12.0 + 1.0, 0.2);
}

TEST(Generate, CovariateAndErrorMoments) {
  const Index n = 50000;
  const ScenarioSpec spec = ScenarioSpec::table(3, 10);
  const Dataset d = generate(spec, n, 99);
  const double dn = static_cast<double>(n);
  for (Index j = 0; j < spec.p; ++j) {
    const Eigen::VectorXd c = d.features.col(j);
    EXPECT_GE(c.minCoeff(), 0.0);
    EXPECT_LT(c.maxCoeff(), 1.0);
    const double m = c.mean();
    const double v = (c.array() - m).square().sum() / (dn - 1);
    EXPECT_LT(std::abs(m - 0.5), 4.0 * std::sqrt(1.0 / 12.0 / dn));
    EXPECT_NEAR(v, 1.0 / 12.0, 0.003);
  }
  Eigen::VectorXd z(n);
  Index used = 0;
  for (Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = d.features.row(i).transpose();
    const double s = spec.sd(x);
    if (s < 1e-3) continue;
    z(used++) = (d.response(i) - spec.mean(x)) / s;
  }
  const Eigen::VectorXd zz = z.head(used);
  const double du = static_cast<double>(used);
  const double zm = zz.mean();
  const double zv = (zz.array() - zm).square().sum() / (du - 1);
  EXPECT_LT(std::abs(zm), 4.0 / std::sqrt(du));
  EXPECT_LT(std::abs(zv - 1.0), 4.0 * std::sqrt(2.0 / du));
}

TEST(Generate, Reproducible) {
  const ScenarioSpec spec = ScenarioSpec::table(7, 10);
  const Dataset a = generate(spec, 500, 3);
  const Dataset b = generate(spec, 500, 3);
  const Dataset c = generate(spec, 500, 4);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.response, b.response);
  EXPECT_NE(a.response, c.response);
  // The first rows do not depend on n.
  const Dataset shorter = generate(spec, 200, 3);
  EXPECT_EQ(shorter.features, a.features.topRows(200));
}

TEST(Mss, OraclePredictionsScoreZero) {
  const ScenarioSpec spec = ScenarioSpec::table(3, 3);
  const Dataset test = generate(spec, 300, 5);
  Eigen::MatrixXd pred(300, 2);
  for (Index i = 0; i < 300; ++i) {
    const Eigen::VectorXd x = test.features.row(i).transpose();
    pred(i, 0) = spec.mean(x);
    pred(i, 1) = spec.sd(x);
  }
  const MssValue zero = mss(pred, spec, test);
  EXPECT_EQ(zero.mean, 0.0);
  EXPECT_EQ(zero.sigma, 0.0);

  Eigen::MatrixXd shifted = pred;
  shifted.col(0).array() += 1.0;
  shifted.col(1).array() -= 2.0;
  const MssValue off = mss(shifted, spec, test);
  EXPECT_NEAR(off.mean, 1.0, 1e-12);
  EXPECT_NEAR(off.sigma, 4.0, 1e-12);

  Eigen::MatrixXd rev_pred = shifted.colwise().reverse();
  Dataset rev = test;
  rev.features = test.features.colwise().reverse();
  rev.response = test.response.reverse();
  const MssValue r = mss(rev_pred, spec, rev);
  EXPECT_NEAR(r.mean, off.mean, 1e-12);
  EXPECT_NEAR(r.sigma, off.sigma, 1e-12);

  EXPECT_THROW(mss(pred.topRows(10), spec, test), std::invalid_argument);
  EXPECT_THROW(mss(pred, ScenarioSpec::table(3, 10), test), std::invalid_argument);
}

TEST(Harness, SeedsAreDistinctAndStable) {
  const RunSeeds a = run_seeds(1, 3, 10, 5000, 0);
  const RunSeeds b = run_seeds(1, 3, 10, 5000, 0);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.pipeline, b.pipeline);
  EXPECT_NE(a.train, a.test);
  EXPECT_NE(a.test, a.pipeline);
  EXPECT_NE(run_seeds(1, 3, 10, 5000, 1).train, a.train);
  EXPECT_NE(run_seeds(1, 3, 10, 2500, 0).train, a.train);
  EXPECT_NE(run_seeds(2, 3, 10, 5000, 0).train, a.train);
  EXPECT_NE(run_seeds(1, 4, 10, 5000, 0).train, a.train);
}

TEST(Harness, SimulationConfig) {
  const PipelineConfig on = simulation_config(true);
  EXPECT_FALSE(on.standardize);
  EXPECT_EQ(on.error_mode, ErrorMode::gaussian);
  EXPECT_TRUE(on.feature_selection);
  EXPECT_FALSE(simulation_config(false).feature_selection);
}

TEST(Harness, GridValidation) {
  GridSpec g;
  EXPECT_NO_THROW(g.validate());
  g.runs = 0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = {};
  g.n_list.clear();
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = {};
  g.scenarios = {6};
  g.p_list = {3};
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = {};
  g.n_test = 0;
  EXPECT_THROW(run_grid(g), std::invalid_argument);
}

TEST(Harness, GridIsDeterministicAcrossThreads) {
  GridSpec g;
  g.scenarios = {1, 2};
  g.p_list = {3};
  g.n_list = {600, 900};
  g.runs = 3;
  g.n_test = 200;
  g.seed = 17;
  const std::size_t saved = num_threads();
  set_num_threads(1);
  std::vector<std::string> order;
  const auto a = run_grid(g, [&](const SimCell& c) {
    order.push_back(std::to_string(c.scenario) + "/" + std::to_string(c.n) +
                    (c.feature_selection ? "/on" : "/off"));
  });
  set_num_threads(4);
  const auto b = run_grid(g);
  set_num_threads(saved);
  ASSERT_EQ(a.size(), 8u);
  EXPECT_EQ(order.front(), "1/600/on");
  EXPECT_EQ(order[1], "1/600/off");
  EXPECT_EQ(order.back(), "2/900/off");
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t r = 0; r < a[i].runs.size(); ++r) {
      EXPECT_EQ(a[i].runs[r].mean, b[i].runs[r].mean);
      EXPECT_EQ(a[i].runs[r].sigma, b[i].runs[r].sigma);
    }
    double m = 0;
    for (const MssValue& v : a[i].runs) m += v.mean;
    EXPECT_NEAR(a[i].average.mean, m / 3.0, 1e-15);
  }
  const MssValue single = run_once(ScenarioSpec::table(2, 3), 900, 200, false, 17, 2);
  EXPECT_EQ(single.mean, a[7].runs[2].mean);
  EXPECT_EQ(single.sigma, a[7].runs[2].sigma);
}

TEST(Harness, Writers) {
  SimCell c;
  c.scenario = 3;
  c.p = 10;
  c.n = 2500;
  c.feature_selection = false;
  c.runs = {{0.5, 0.25}, {1.5, 0.75}};
  c.average = {1.0, 0.5};
  SimCell d = c;
  d.feature_selection = true;
  d.average = {0.125, 0.0625};

  std::ostringstream cells, runs, table;
  write_cells_csv(cells, {d, c});
  write_runs_csv(runs, {c});
  write_table(table, {d, c});
  const auto cl = lines(cells.str());
  ASSERT_EQ(cl.size(), 3u);
  EXPECT_EQ(cl[0], "scenario,p,n,fs,runs,mss_m,mss_sigma");
  EXPECT_EQ(cl[1], "3,10,2500,on,2,0.125,0.0625");
  EXPECT_EQ(cl[2], "3,10,2500,off,2,1,0.5");
  const auto rl = lines(runs.str());
  ASSERT_EQ(rl.size(), 3u);
  EXPECT_EQ(rl[2], "3,10,2500,off,1,1.5,0.75");
  const std::string t = table.str();
  EXPECT_NE(t.find("Scenario 3: m = 5*(x2 + x3), sigma = 5*(x1)"), std::string::npos) << t;
  EXPECT_NE(t.find("  FS\n"), std::string::npos);
  EXPECT_NE(t.find("  No FS\n"), std::string::npos);
  EXPECT_NE(t.find("p=10"), std::string::npos);
  EXPECT_NE(t.find("0.1250"), std::string::npos);
  EXPECT_NE(t.find("1.0000"), std::string::npos);
  EXPECT_LT(t.find("0.1250"), t.find("1.0000"));
}

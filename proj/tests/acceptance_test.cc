// Acceptance gate: eleven end-to-end criteria, one PASS/FAIL line each.
// Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fade/basis.h"
#include "fade/eval.h"
#include "fade/glm.h"
#include "fade/nuisance.h"
#include "fade/pipeline.h"
#include "fade/sim.h"
#include "fade/solver.h"
#include "oracles.h"
#include "test_util.h"

namespace fade {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

bool Within(double value, double target, double tol) {
  return std::abs(value - target) <= tol;
}

FairnessSpec Spec(DisparityKind kind, OutcomeMode mode = OutcomeMode::kObservable) {
  FairnessSpec s;
  s.kind = kind;
  s.mode = mode;
  return s;
}

std::vector<FairnessSpec> AllSpecs(OutcomeMode mode) {
  return {Spec(DisparityKind::kRate, mode), Spec(DisparityKind::kFpr, mode),
          Spec(DisparityKind::kFnr, mode)};
}

Eigen::VectorXd ExpitAll(const Eigen::VectorXd& z) {
  return z.unaryExpr([](double v) { return Expit(v); });
}

// ---------------------------------------------------------------------------
// 1. Bayes-optimal predictor against the simulated potential outcome.

Outcome BayesReproduction() {
  auto start = Clock::now();
  sim::DgpSpec spec;
  spec.n = 50000;
  spec.seed = 101;
  Dataset ds = sim::Generate(spec);
  Evaluator ev(ds, EvalTarget::kOracle, AllSpecs(OutcomeMode::kObservable));
  PerformanceProfile p = ev.Profile(0, sim::BayesOptimal(spec, ds));
  double elapsed = Seconds(start);
  double rate = p.Metric("rate"), fpr = p.Metric("fpr"), fnr = p.Metric("fnr");
  bool ok = Within(p.mse, 0.05, 0.01) && Within(p.auc, 0.98, 0.01) &&
            Within(rate, 0.26, 0.02) && Within(fpr, 0.07, 0.02) &&
            Within(fnr, 0.05, 0.02) && elapsed < 10.0;
  return {ok, Fmt("mse %.4f auc %.4f rate %.4f fpr %.4f fnr %.4f (%.2f s)", p.mse,
                  p.auc, rate, fpr, fnr, elapsed)};
}

// ---------------------------------------------------------------------------
// Shared simulated pipeline for criteria 2, 3, 4 and 10: five base
// predictors fit on a 1,000-row learn fold, nuisances and weights on
// 1,000-row folds, profiles against Y0 on a fresh 10,000-row test sample.

json PipelineConfig(const std::string& out) {
  json axis = DefaultLambdaAxis();
  return json{
      {"input", {{"dgp", {{"n", 5000}}}}},
      {"seed", 2024},
      {"mode", "counterfactual"},
      {"split", {{"cross_fit_folds", 1}}},
      {"basis",
       json::array(
           {{{"kind", "mean"}},
            {{"kind", "model"}, {"name", "logit_a_x12"}, {"features", {"a", "x1", "x2"}}},
            {{"kind", "model"}, {"name", "logit_x34"}, {"features", {"x3", "x4"}}},
            {{"kind", "model"},
             {"name", "linear_all"},
             {"link", "identity"},
             {"features", {"a", "x1", "x2", "x3", "x4"}}},
            {{"kind", "model"},
             {"name", "logit_x1234"},
             {"features", {"x1", "x2", "x3", "x4"}}}})},
      {"fairness", json::array({{{"kind", "rate"}}, {{"kind", "fpr"}}, {{"kind", "fnr"}}})},
      {"solver", {{"kind", "grid"}, {"axes", {axis, axis, axis}}}},
      {"evaluation", {{"target", "oracle"}, {"fresh_test_n", 10000}}},
      {"output", out}};
}

struct PipelineRun {
  RunConfig config;
  RunResult result;
  double seconds = 0.0;
  std::string error;
};

PipelineRun& SharedRun() {
  static testing::TempDir dir;
  static PipelineRun run = [] {
    PipelineRun r;
    try {
      r.config = ParseRunConfig(PipelineConfig(dir.File("sim")).dump());
      auto start = Clock::now();
      r.result = Run(r.config, 1);
      r.seconds = Seconds(start);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    return r;
  }();
  return run;
}

// Index of the grid point with the given penalty vector.
int FindProfile(const RunResult& r, const Eigen::VectorXd& lambda) {
  for (const auto& p : r.profiles) {
    if (p.lambda == lambda) return p.id;
  }
  return -1;
}

Outcome OlsStack() {
  PipelineRun& run = SharedRun();
  if (!run.error.empty()) return {false, "pipeline failed: " + run.error};
  const RunResult& r = run.result;
  int ols_id = FindProfile(r, Eigen::Vector3d::Zero());
  const PerformanceProfile& ols = r.profiles[ols_id];

  // Each base column alone, truncated, on the same test sample.
  Dataset test = LoadCsv(run.config.output_dir + "/" + artifacts::FoldFile(Fold::kTestTarget),
                         sim::DgpRoles(), {0, 1});
  BasisMatrix basis = Assemble(test, r.fit.sources, OutcomeMode::kCounterfactual, "test");
  Evaluator ev(test, EvalTarget::kOracle, AllSpecs(OutcomeMode::kObservable));
  double best_base = 1e9;
  std::ostringstream bases;
  for (Eigen::Index j = 0; j < basis.cols(); ++j) {
    Eigen::VectorXd f = basis.values.col(j).cwiseMax(0.0).cwiseMin(1.0);
    double mse = ev.Profile(0, f).mse;
    best_base = std::min(best_base, mse);
    bases << (j ? " " : "") << Fmt("%.3f", mse);
  }
  // The whole run (simulation, nuisances, 1331 solves and profiles) stands
  // in for the single-point pipeline, so its time bounds this one.
  bool ok = Within(ols.mse, 0.07, 0.03) && ols.mse <= best_base + 0.01 &&
            run.seconds < 30.0;
  return {ok, Fmt("ols mse %.4f, base mse [%s], run %.2f s", ols.mse,
                  bases.str().c_str(), run.seconds)};
}

Outcome SinglePenaltyVanishing() {
  PipelineRun& run = SharedRun();
  if (!run.error.empty()) return {false, "pipeline failed: " + run.error};
  const RunResult& r = run.result;
  const ProblemData& p = r.fit.problem;
  const double top = DefaultLambdaAxis().back();
  bool ok = true;
  std::ostringstream detail;
  const char* labels[] = {"rate", "fpr", "fnr"};
  for (int j = 0; j < 3; ++j) {
    Eigen::Vector3d lambda = Eigen::Vector3d::Zero();
    int at_zero = FindProfile(r, lambda);
    lambda[j] = top;
    int at_top = FindProfile(r, lambda);
    double train0 = std::abs(p.Moment(j, r.fit.solutions[at_zero].beta));
    double train1 = std::abs(p.Moment(j, r.fit.solutions[at_top].beta));
    double test0 = r.profiles[at_zero].Metric(labels[j]);
    double test1 = r.profiles[at_top].Metric(labels[j]);
    bool this_ok = train1 <= 0.2 * train0 && test1 < test0;
    if (j == 0) this_ok = this_ok && test1 <= 0.10;
    ok = ok && this_ok;
    detail << Fmt("%s train %.4f->%.4f test %.4f->%.4f; ", labels[j], train0, train1,
                  test0, test1);
  }
  return {ok, detail.str()};
}

Outcome JointMinimization() {
  PipelineRun& run = SharedRun();
  if (!run.error.empty()) return {false, "pipeline failed: " + run.error};
  const RunResult& r = run.result;
  int id = SelectMinNorm(r.profiles, {"mse", "rate", "fpr", "fnr"});
  const PerformanceProfile& p = r.profiles[id];
  double rate = p.Metric("rate"), fpr = p.Metric("fpr"), fnr = p.Metric("fnr");
  bool ok = r.profiles.size() == 1331 && rate <= 0.10 && fpr <= 0.10 &&
            fnr <= 0.10 && p.mse <= 0.18;
  return {ok, Fmt("selected lambda (%g, %g, %g): mse %.4f rate %.4f fpr %.4f fnr %.4f",
                  p.lambda[0], p.lambda[1], p.lambda[2], p.mse, rate, fpr, fnr)};
}

// ---------------------------------------------------------------------------
// 5-7. Solver checks on random instances.

Outcome ShermanMorrison() {
  std::mt19937_64 rng(505);
  std::uniform_int_distribution<int> dim(1, 10), pen(1, 3);
  std::uniform_real_distribution<double> lam(0.0, 1000.0);
  std::vector<ProblemData> problems;
  std::vector<Eigen::VectorXd> lambdas;
  for (int i = 0; i < 100; ++i) {
    int k = dim(rng), t = pen(rng);
    problems.push_back(testing::RandomProblem(rng, k, t));
    Eigen::VectorXd l(t);
    for (int j = 0; j < t; ++j) l[j] = lam(rng);
    lambdas.push_back(l);
  }
  auto start = Clock::now();
  std::vector<Eigen::VectorXd> fast;
  for (int i = 0; i < 100; ++i) fast.push_back(SolvePenalized(problems[i], lambdas[i]).beta);
  double elapsed = Seconds(start);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd direct = testing::DirectPenalized(problems[i], lambdas[i]);
    worst = std::max(worst, (fast[i] - direct).lpNorm<Eigen::Infinity>());
  }
  return {worst <= 1e-8 && elapsed < 1.0,
          Fmt("max |dbeta| %.3g over 100 instances (%.4f s)", worst, elapsed)};
}

Outcome DualityRoundTrips() {
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> dim(2, 8), pen(1, 3);
  std::uniform_real_distribution<double> frac(0.1, 0.9), lam(0.0, 100.0);
  double worst_forward = 0.0, worst_reverse = 0.0;
  for (int i = 0; i < 50; ++i) {
    int k = dim(rng), t = pen(rng);
    ProblemData p = testing::RandomProblem(rng, k, t);
    Eigen::VectorXd ols = p.q.ldlt().solve(p.c);
    Eigen::VectorXd eps(t);
    for (int j = 0; j < t; ++j) eps[j] = frac(rng) * std::abs(p.Moment(j, ols));
    FadeSolution rm = SolveRiskMin(p, eps);
    if (!rm.lambda.allFinite()) return {false, "risk-min returned an infinite dual"};
    worst_forward = std::max(
        worst_forward, (SolvePenalized(p, rm.lambda).beta - rm.beta).lpNorm<Eigen::Infinity>());

    Eigen::VectorXd lambda(t);
    for (int j = 0; j < t; ++j) lambda[j] = lam(rng);
    Eigen::VectorXd pen_beta = SolvePenalized(p, lambda).beta;
    Eigen::VectorXd levels(t);
    for (int j = 0; j < t; ++j) levels[j] = std::abs(p.Moment(j, pen_beta));
    worst_reverse = std::max(
        worst_reverse, (SolveRiskMin(p, levels).beta - pen_beta).lpNorm<Eigen::Infinity>());
  }
  return {worst_forward <= 1e-6 && worst_reverse <= 1e-6,
          Fmt("risk-min -> penalized %.3g, penalized -> risk-min %.3g", worst_forward,
              worst_reverse)};
}

Outcome ConstrainedOracles() {
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> frac(0.1, 0.9);
  const SolverTolerances tol;
  double worst_rm = 0.0, worst_uf = 0.0, worst_level = 0.0;
  for (int i = 0; i < 25; ++i) {
    ProblemData p = testing::RandomProblem(rng, 4, 2);
    Eigen::VectorXd ols = p.q.ldlt().solve(p.c);
    Eigen::Vector2d eps(frac(rng) * std::abs(p.Moment(0, ols)),
                        frac(rng) * std::abs(p.Moment(1, ols)));
    FadeSolution rm = SolveRiskMin(p, eps);
    testing::LatticeResult lattice = testing::RiskMinLattice(p, eps);
    worst_rm = std::max(worst_rm, std::abs(p.Objective(rm.beta) - lattice.objective));
  }
  for (int i = 0; i < 25; ++i) {
    ProblemData p = testing::RandomProblem(rng, 4, 2);
    Eigen::Vector2d alpha(1.0, frac(rng));
    double ols_risk = p.Risk(p.q.ldlt().solve(p.c));
    double floor_risk = p.Risk(SolveUnfairMin(p, 1e6, alpha).beta);
    double budget = ols_risk + frac(rng) * (floor_risk - ols_risk);
    FadeSolution uf = SolveUnfairMin(p, std::sqrt(budget), alpha);
    testing::NuGridResult grid = testing::UnfairMinNuGrid(p, std::sqrt(budget), alpha);
    if (!grid.found) return {false, "nu-grid oracle found no feasible point"};
    double objective = alpha[0] * std::pow(p.Moment(0, uf.beta), 2) +
                       alpha[1] * std::pow(p.Moment(1, uf.beta), 2);
    worst_uf = std::max(worst_uf, std::abs(objective - grid.objective));
    worst_level = std::max(worst_level, std::abs(p.Risk(uf.beta) - budget) /
                                            std::max(1.0, budget));
  }
  bool ok = worst_rm <= 1e-4 && worst_uf <= 1e-4 && worst_level <= tol.risk_tol;
  return {ok, Fmt("risk-min gap %.3g, unfair-min gap %.3g, |risk - eps^2| %.3g",
                  worst_rm, worst_uf, worst_level)};
}

// ---------------------------------------------------------------------------
// 8. Double robustness with true nuisances and one replaced by 0.5.

Outcome DoubleRobustness() {
  const double truth = 0.578;
  sim::DgpSpec spec;
  spec.n = 50000;
  spec.seed = 808;
  Dataset ds = sim::Generate(spec);
  Eigen::VectorXd pi = sim::TruePropensity(spec, ds);
  Eigen::VectorXd mu0 = sim::BayesOptimal(spec, ds);
  Eigen::VectorXd half = Eigen::VectorXd::Constant(ds.size(), 0.5);
  auto phi_mean = [&](const Eigen::VectorXd& p, const Eigen::VectorXd& m) {
    NuisanceFit fit = MakeNuisanceFit(p, m, std::nullopt, kDefaultGamma, {0, 1},
                                      true, Provenance::kOracle);
    return ComputePseudoOutcomes(fit, ds, false).phi.mean();
  };
  double bad_pi = phi_mean(half, mu0);
  double bad_mu = phi_mean(pi, half);
  double plug_in = half.mean();
  // Y0 index is N(0, 54) when A = 0 and N(5.4, 54) when A = 1.
  const double sd = std::sqrt(54.0);
  const double quadrature = 0.7 * testing::GaussHermiteExpectation(Expit, 0.0, sd) +
                            0.3 * testing::GaussHermiteExpectation(Expit, 5.4, sd);
  bool ok = Within(bad_pi, truth, 0.01) && Within(bad_mu, truth, 0.01) &&
            std::abs(plug_in - truth) > 0.05;
  return {ok, Fmt("pi=0.5: %.4f, mu0=0.5: %.4f, plug-in %.4f (quadrature truth %.4f)",
                  bad_pi, bad_mu, plug_in, quadrature)};
}

// ---------------------------------------------------------------------------
// 9. Confidence interval coverage for a fixed predictor.

Outcome CiCoverage() {
  auto start = Clock::now();
  sim::DgpSpec base;
  const Eigen::VectorXd predictor_coef =
      (Eigen::VectorXd(5) << 0.0, 0.6, -0.4, 0.3, -0.5).finished();
  auto predictor = [&](const Dataset& ds) {
    sim::Coefficients c;
    for (int i = 0; i < 5; ++i) c[i] = predictor_coef[i];
    return ExpitAll(sim::LinearIndex(ds, c));
  };
  const std::vector<FairnessSpec> specs = AllSpecs(OutcomeMode::kCounterfactual);

  // Population values from a large oracle sample.
  sim::DgpSpec big = base;
  big.n = 2000000;
  big.seed = 909;
  Dataset pop = sim::Generate(big);
  Evaluator oracle(pop, EvalTarget::kOracle, AllSpecs(OutcomeMode::kObservable));
  PerformanceProfile truth = oracle.Profile(0, predictor(pop));

  const int reps = 500;
  int covered[4] = {0, 0, 0, 0};
  for (int rep = 0; rep < reps; ++rep) {
    sim::DgpSpec nuis_spec = base, target_spec = base;
    nuis_spec.n = target_spec.n = 2000;
    nuis_spec.seed = 20000 + 2 * rep;
    target_spec.seed = 20001 + 2 * rep;
    Dataset nuis = sim::Generate(nuis_spec);
    Dataset target = sim::Generate(target_spec);
    NuisanceFit fit = NuisanceModels::Fit(nuis, {}).Apply(target);
    PseudoOutcomes po = ComputePseudoOutcomes(fit, target, true);
    Evaluator ev(target, EvalTarget::kCounterfactual, specs, po);
    PerformanceProfile p = ev.Profile(rep, predictor(target));
    covered[0] += std::abs(p.mse - truth.mse) <= p.mse_ci_half_width;
    for (int j = 0; j < 3; ++j) {
      covered[j + 1] += std::abs(p.disparities[j].signed_value -
                                 truth.disparities[j].signed_value) <=
                        p.disparities[j].ci_half_width;
    }
  }
  double elapsed = Seconds(start);
  bool ok = elapsed < 300.0;
  std::ostringstream detail;
  const char* names[] = {"mse", "rate", "fpr", "fnr"};
  for (int m = 0; m < 4; ++m) {
    double rate = double(covered[m]) / reps;
    ok = ok && rate >= 0.92 && rate <= 0.98;
    detail << Fmt("%s %.3f ", names[m], rate);
  }
  detail << Fmt("(%.1f s)", elapsed);
  return {ok, detail.str()};
}

// ---------------------------------------------------------------------------
// 10. Solve and profile the full 1331-point grid.

Outcome Throughput() {
  PipelineRun& run = SharedRun();
  if (!run.error.empty()) return {false, "pipeline failed: " + run.error};
  auto start = Clock::now();
  LambdaGrid grid = LambdaGrid::Uniform(DefaultLambdaAxis(), 3);
  std::vector<FadeSolution> sols = SolveGrid(run.result.fit.problem, grid);
  double solve_seconds = Seconds(start);
  WriteSolutionsCsv(run.config.output_dir + "/" + artifacts::kSolutions, sols,
                    run.result.fit.labels, run.result.fit.columns);
  auto profiles = StageEvaluate(run.config, 1);
  double elapsed = Seconds(start);
  bool ok = profiles.size() == 1331 && run.result.fit.problem.k() == 5 && elapsed < 5.0;
  return {ok, Fmt("1331 solves %.3f s, solve + evaluate %.2f s (n_test %zu)",
                  solve_seconds, elapsed, profiles.front().n_test)};
}

// ---------------------------------------------------------------------------
// 11. Excess risk of the penalized weights shrinks with the sample size.

struct Moments {
  Eigen::MatrixXd q;
  Eigen::VectorXd c;
};

Eigen::MatrixXd FixedBasis(const Dataset& ds) {
  Eigen::MatrixXd b(ds.size(), 6);
  b.col(0).setOnes();
  b.col(1) = ds.A();
  for (int j = 0; j < 4; ++j) b.col(2 + j) = ds.Column("x" + std::to_string(j + 1));
  return b;
}

ProblemData CounterfactualProblem(const Dataset& ds, const sim::DgpSpec& spec,
                                  bool oracle) {
  BasisMatrix basis;
  basis.values = FixedBasis(ds);
  basis.names = {"one", "a", "x1", "x2", "x3", "x4"};
  Eigen::VectorXd target;
  if (oracle) {
    target = ds.Y0();
  } else {
    NuisanceFit fit = MakeNuisanceFit(sim::TruePropensity(spec, ds),
                                      sim::BayesOptimal(spec, ds), std::nullopt,
                                      kDefaultGamma, {0, 1}, true, Provenance::kOracle);
    target = ComputePseudoOutcomes(fit, ds, false).phi;
  }
  std::vector<FairnessVector> g;
  for (const auto& s : AllSpecs(OutcomeMode::kCounterfactual)) {
    g.push_back(EvalFairness(s, ds, target));
  }
  return BuildProblem(basis, target, g);
}

Outcome ExcessRiskShrinkage() {
  sim::DgpSpec spec;
  spec.n = 1000000;
  spec.seed = 1111;
  ProblemData population = CounterfactualProblem(sim::Generate(spec), spec, true);
  std::vector<Eigen::VectorXd> lambdas;
  for (double l : DefaultLambdaAxis()) lambdas.push_back(Eigen::Vector3d::Constant(l));
  std::vector<Eigen::VectorXd> best;
  for (const auto& l : lambdas) best.push_back(SolvePenalized(population, l).beta);

  auto sup_excess = [&](size_t n, uint64_t seed) {
    sim::DgpSpec s = spec;
    s.n = n;
    s.seed = seed;
    ProblemData sample = CounterfactualProblem(sim::Generate(s), s, false);
    PenalizedPath path(sample);
    double worst = 0.0;
    for (size_t i = 0; i < lambdas.size(); ++i) {
      Eigen::VectorXd beta = path.Solve(lambdas[i]);
      worst = std::max(worst, std::abs(population.Objective(beta) -
                                       population.Objective(best[i])));
    }
    return worst;
  };
  const int reps = 50;
  int improved = 0;
  for (int rep = 0; rep < reps; ++rep) {
    double small = sup_excess(1000, 50000 + 2 * rep);
    double large = sup_excess(16000, 50001 + 2 * rep);
    improved += large < small;
  }
  double share = double(improved) / reps;
  return {share >= 0.9, Fmt("excess risk smaller at n = 16000 in %d / %d replications",
                            improved, reps)};
}

}  // namespace
}  // namespace fade

int main() {
  using fade::Outcome;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"bayes-optimal reproduction", fade::BayesReproduction},
      {"ols stack", fade::OlsStack},
      {"single-penalty vanishing", fade::SinglePenaltyVanishing},
      {"joint minimization", fade::JointMinimization},
      {"sherman-morrison correctness", fade::ShermanMorrison},
      {"duality roundtrips", fade::DualityRoundTrips},
      {"constrained-solver oracles", fade::ConstrainedOracles},
      {"double robustness", fade::DoubleRobustness},
      {"ci coverage", fade::CiCoverage},
      {"throughput", fade::Throughput},
      {"excess-risk shrinkage", fade::ExcessRiskShrinkage},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %2zu %-30s %s  %s\n", i + 1, criteria[i].first,
                o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}

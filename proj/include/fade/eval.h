#ifndef FADE_EVAL_H_
#define FADE_EVAL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fade/dataset.h"
#include "fade/fairness.h"
#include "fade/nuisance.h"

namespace fade {

inline constexpr double kDefaultCiAlpha = 0.05;

// Standard normal quantile.
double NormalQuantile(double p);

// Point estimate with a normal confidence half-width.
struct Estimate {
  double value = 0.0;
  double ci_half_width = 0.0;
};

// z_{1 - alpha/2} * sd(terms) / sqrt(n), with the n - 1 sample variance.
double CiHalfWidth(const Eigen::VectorXd& terms, double alpha);

// Observable: Pn(f - Y)^2. Counterfactual: Pn(f^2 - 2 f phi + phibar), which
// needs pseudo->phibar and may come out slightly negative.
Estimate EstimateRisk(const Eigen::VectorXd& predictions, const Dataset& data,
                      OutcomeMode mode, const PseudoOutcomes* pseudo,
                      double alpha = kDefaultCiAlpha);

// Signed Pn(g f). The outcome used in the fairness weights is Y in
// observable mode and `outcome_proxy` in counterfactual mode. The half-width
// uses the delta-method terms
//   s0 eta0 / Pn(gamma0) - s1 eta1 / Pn(gamma1),
//   eta_a = gamma_a (f - Pn[gamma_a f] / Pn[gamma_a]),
// for every kind, so normalizer estimation is accounted for.
Estimate EstimateDisparity(
    const Eigen::VectorXd& predictions, const FairnessSpec& spec,
    const Dataset& data,
    const std::optional<Eigen::VectorXd>& outcome_proxy = std::nullopt,
    double alpha = kDefaultCiAlpha, bool clip_proxy = false);

// Mann-Whitney statistic, ties counted 1/2. Labels must be 0/1 with both
// classes present.
double Auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

struct ClassifierRule {
  enum class Kind { kThreshold, kBernoulli } kind = Kind::kThreshold;
  double threshold = 0.5;
  uint64_t seed = 0;

  static ClassifierRule Threshold(double c) { return {Kind::kThreshold, c, 0}; }
  static ClassifierRule Bernoulli(uint64_t seed) {
    return {Kind::kBernoulli, 0.5, seed};
  }
};

// 1{f >= c}, or seeded Bernoulli(f) draws (requires f in [0, 1]).
Eigen::VectorXd ToClassifier(const Eigen::VectorXd& predictions,
                             const ClassifierRule& rule);

// What a profile measures on the test fold.
enum class EvalTarget {
  kObservable,      // Y
  kCounterfactual,  // Y0 through the pseudo-outcomes
  kOracle,          // simulated Y0, read directly
};
const char* EvalTargetName(EvalTarget target);
EvalTarget ParseEvalTarget(const std::string& name);

// Copy of `data` with Y replaced by Y0 and the decision columns dropped.
Dataset OracleView(const Dataset& data);

struct DisparityEstimate {
  std::string label;
  double signed_value = 0.0;
  double abs_value = 0.0;
  double ci_half_width = 0.0;
};

struct PerformanceProfile {
  int id = 0;
  Eigen::VectorXd lambda;
  double mse = 0.0;
  double mse_ci_half_width = 0.0;
  double auc = 0.0;  // NaN when the AUC labels have a single class
  std::vector<DisparityEstimate> disparities;
  size_t n_test = 0;

  // Value of "mse" or a disparity label (absolute value); throws if absent.
  double Metric(const std::string& name) const;
};

// Evaluates fixed predictions on one test fold. Precomputes the outcome,
// fairness weights and AUC labels once so many models can be profiled.
class Evaluator {
 public:
  // Counterfactual targets need `pseudo` with phibar. AUC labels are Y
  // (observable), Y on D = 0 rows (counterfactual) or Y0 (oracle).
  Evaluator(const Dataset& test, EvalTarget target,
            std::vector<FairnessSpec> specs,
            std::optional<PseudoOutcomes> pseudo = std::nullopt,
            double alpha = kDefaultCiAlpha, bool clip_proxy = false);

  PerformanceProfile Profile(int id, const Eigen::VectorXd& predictions,
                             const Eigen::VectorXd& lambda = {}) const;
  size_t size() const { return static_cast<size_t>(outcome_.size()); }
  const std::vector<FairnessSpec>& specs() const { return specs_; }

 private:
  Dataset data_;
  EvalTarget target_;
  std::vector<FairnessSpec> specs_;
  std::optional<PseudoOutcomes> pseudo_;
  double alpha_;
  bool clip_proxy_;
  Eigen::VectorXd outcome_;  // Y, phi or Y0
  std::vector<Eigen::Index> auc_rows_;
  Eigen::VectorXd auc_labels_;
};

// Profiles each prediction vector in parallel; output order follows input.
std::vector<PerformanceProfile> ProfileAll(
    const Evaluator& evaluator,
    const std::vector<Eigen::VectorXd>& predictions,
    const std::vector<Eigen::VectorXd>& lambdas, int jobs = 1);

// argmin over profiles of the Euclidean norm of the named metrics ("mse" or
// disparity labels, disparities in absolute value). Ties go to the lower
// mse, then the lower id.
int SelectMinNorm(const std::vector<PerformanceProfile>& profiles,
                  const std::vector<std::string>& metrics);

// mse plus every subset of the disparity labels, smallest subsets first.
std::vector<std::vector<std::string>> SelectionSubsets(
    const std::vector<std::string>& disparity_labels);

// One row per profile: model_id, lambda_<label>..., mse, mse_ci, auc, then
// <label>, abs_<label>, ci_<label> per disparity, n_test.
void WriteFrontierCsv(const std::string& path,
                      const std::vector<PerformanceProfile>& profiles,
                      const std::vector<std::string>& lambda_labels);
std::vector<PerformanceProfile> ReadFrontierCsv(const std::string& path);

}  // namespace fade

#endif  // FADE_EVAL_H_

#ifndef FADE_FAIRNESS_H_
#define FADE_FAIRNESS_H_

#include <array>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "fade/dataset.h"

namespace fade {

enum class DisparityKind { kRate, kFpr, kFnr, kCustom };
enum class OutcomeMode { kObservable, kCounterfactual };

const char* DisparityName(DisparityKind kind);
DisparityKind ParseDisparityKind(const std::string& name);
OutcomeMode ParseOutcomeMode(const std::string& name);

// Indicator over the four (A, outcome) cells, indexed [a][outcome].
using CellPredicate = std::array<std::array<bool, 2>, 2>;

// Weighted difference of two conditional means,
//   alpha0 * E[f | h0(A, Y~) = 1] - alpha1 * E[f | h1(A, Y~) = 1].
struct CustomDisparity {
  double alpha0 = 1.0;
  double alpha1 = 1.0;
  CellPredicate h0{};
  CellPredicate h1{};
};

struct FairnessSpec {
  DisparityKind kind = DisparityKind::kRate;
  OutcomeMode mode = OutcomeMode::kObservable;
  std::optional<CustomDisparity> custom;
  std::string name;  // label used in reports; defaults to the kind name

  std::string Label() const;
};

// Evaluated fairness function: g_i for every unit of a sample, so that the
// signed disparity of predictions f is Pn(g * f).
struct FairnessVector {
  Eigen::VectorXd g;
  FairnessSpec spec;
};

// Builds g with same-sample empirical normalizers:
//   rate: (1 - a) / Pn(1 - A) - a / Pn(A)
//   fpr:  (1 - y)(1 - a) / Pn[(1 - Y)(1 - A)] - (1 - y) a / Pn[(1 - Y) A]
//   fnr:  y a / Pn[Y A] - y (1 - a) / Pn[Y (1 - A)]
// Observable mode reads y from the data; counterfactual mode reads it from
// `outcome_proxy` (phi or mu0), clipped to [0, 1] when `clip_proxy` is set.
// Fractional outcomes weight the cells linearly, so a custom predicate h is
// evaluated as y * h(a, 1) + (1 - y) * h(a, 0).
FairnessVector EvalFairness(
    const FairnessSpec& spec, const Dataset& data,
    const std::optional<Eigen::VectorXd>& outcome_proxy = std::nullopt,
    bool clip_proxy = false);

// Signed Pn(g * f).
double Disparity(const FairnessVector& g, const Eigen::VectorXd& predictions);

// Per-unit outcome weights (gamma_0, gamma_1) whose ratio means define the
// disparity: Pn(g f) = Pn(gamma_0 f) / Pn(gamma_0) - Pn(gamma_1 f) / Pn(gamma_1).
// For custom specs the alphas are folded into the returned scale factors.
struct GroupWeights {
  Eigen::VectorXd first;
  Eigen::VectorXd second;
  double first_scale = 1.0;
  double second_scale = 1.0;
};
GroupWeights FairnessGroupWeights(const FairnessSpec& spec,
                                  const Eigen::VectorXd& a,
                                  const Eigen::VectorXd& outcome);

}  // namespace fade

#endif  // FADE_FAIRNESS_H_

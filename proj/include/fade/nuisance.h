#ifndef FADE_NUISANCE_H_
#define FADE_NUISANCE_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fade/dataset.h"
#include "fade/glm.h"

namespace fade {

// Default truncation margin: propensities are capped at 1 - 0.025.
inline constexpr double kDefaultGamma = 0.025;

enum class NuisanceTarget {
  kDecision,        // pi(W) = P(D = 1 | W), all rows
  kOutcome,         // mu0(W) = E[Y | W, D = 0], D = 0 rows
  kSquaredOutcome,  // nu0(W) = E[Y^2 | W, D = 0], D = 0 rows
};

enum class ScoreKind { kPi, kMu0, kNu0 };

enum class Provenance { kBuiltin, kExternal, kOracle };

// Per-unit nuisance estimates over one target fold.
struct NuisanceFit {
  Eigen::VectorXd pi_hat;
  Eigen::VectorXd mu0_hat;
  std::optional<Eigen::VectorXd> nu0_hat;
  double gamma = kDefaultGamma;
  Provenance provenance = Provenance::kBuiltin;
};

// Validates ranges, truncates pi at 1 - gamma and, for binary outcomes,
// sets nu0 = mu0. Throws kInvalidInput on length or range violations.
NuisanceFit MakeNuisanceFit(Eigen::VectorXd pi_hat, Eigen::VectorXd mu0_hat,
                            std::optional<Eigen::VectorXd> nu0_hat,
                            double gamma, const Bounds& bounds,
                            bool binary_outcome, Provenance provenance);

struct PseudoOutcomes {
  Eigen::VectorXd phi;
  std::optional<Eigen::VectorXd> phibar;
};

struct NuisanceOptions {
  double gamma = kDefaultGamma;
  IrlsOptions irls;
  // Covariates for every nuisance model; empty means (A, X, S).
  std::vector<std::string> features;
};

// One nuisance regression. Outcome targets train on D = 0 rows only; Y is
// rescaled to [0, 1] by the dataset bounds for the logit link, and Y^2 is
// regressed with an identity link.
GlmModel FitLogisticIrls(const Dataset& data, NuisanceTarget target,
                         const IrlsOptions& options,
                         const std::vector<std::string>& features = {});

// The three nuisance regressions trained on one fold, applied to another.
class NuisanceModels {
 public:
  static NuisanceModels Fit(const Dataset& data, const NuisanceOptions& options);

  NuisanceFit Apply(const Dataset& target) const;

  const GlmModel& propensity() const { return pi_; }
  const GlmModel& outcome() const { return mu0_; }
  const std::optional<GlmModel>& squared_outcome() const { return nu0_; }
  // False when any underlying IRLS fit hit its iteration cap.
  bool converged() const;

 private:
  GlmModel pi_;
  GlmModel mu0_;
  std::optional<GlmModel> nu0_;
  Bounds bounds_;
  double gamma_ = kDefaultGamma;
};

// Reads a headerless single-column score file aligned with the target fold.
// Pi scores must lie in [0, 1] and are truncated at 1 - gamma; mu0 scores in
// the outcome bounds; nu0 scores in [0, max(lower^2, upper^2)].
Eigen::VectorXd IngestExternalScores(const std::string& path, ScoreKind kind,
                                     size_t expected_rows, const Bounds& bounds,
                                     double gamma = kDefaultGamma);

// phi   = (1 - d) / (1 - pi) * (y - mu0) + mu0
// phibar = (1 - d) / (1 - pi) * (y^2 - nu0) + nu0
PseudoOutcomes ComputePseudoOutcomes(const NuisanceFit& fit,
                                     const Dataset& data, bool want_phibar);

struct CrossFitResult {
  PseudoOutcomes pseudo;
  NuisanceFit fit;  // out-of-fold nuisance values, in row order
  // Set when folds == 1: no held-out data, nuisances were fit in-sample.
  bool in_sample_warning = false;
};

// Each unit's nuisance values come from models trained on the other folds.
// Fold assignment is a seeded permutation sliced into near-equal parts.
CrossFitResult CrossFit(const Dataset& data, int folds,
                        const NuisanceOptions& options, uint64_t seed,
                        bool want_phibar = true);

}  // namespace fade

#endif  // FADE_NUISANCE_H_

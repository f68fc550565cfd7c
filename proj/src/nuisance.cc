#include "fade/nuisance.h"

#include <algorithm>
#include <cmath>

#include "fade/csv.h"
#include "fade/errors.h"

namespace fade {

NuisanceFit MakeNuisanceFit(Eigen::VectorXd pi_hat, Eigen::VectorXd mu0_hat,
                            std::optional<Eigen::VectorXd> nu0_hat,
                            double gamma, const Bounds& bounds,
                            bool binary_outcome, Provenance provenance) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw InvalidInput("truncation margin gamma must lie in (0, 1)");
  }
  if (pi_hat.size() != mu0_hat.size() ||
      (nu0_hat && nu0_hat->size() != pi_hat.size())) {
    throw InvalidInput("nuisance vectors have different lengths");
  }
  for (Eigen::Index i = 0; i < pi_hat.size(); ++i) {
    if (!(pi_hat[i] >= 0.0 && pi_hat[i] <= 1.0)) {
      throw InvalidInput("propensity outside [0, 1] at row " +
                         std::to_string(i + 1));
    }
    pi_hat[i] = std::min(pi_hat[i], 1.0 - gamma);
    if (!bounds.Contains(mu0_hat[i])) {
      throw InvalidInput("mu0 outside outcome bounds at row " +
                         std::to_string(i + 1));
    }
  }
  if (binary_outcome) {
    nu0_hat = mu0_hat;
  } else if (nu0_hat && nu0_hat->minCoeff() < 0.0) {
    throw InvalidInput("nu0 must be nonnegative");
  }
  return NuisanceFit{std::move(pi_hat), std::move(mu0_hat), std::move(nu0_hat),
                     gamma, provenance};
}

GlmModel FitLogisticIrls(const Dataset& data, NuisanceTarget target,
                         const IrlsOptions& options,
                         const std::vector<std::string>& features) {
  std::vector<std::string> names =
      features.empty() ? DefaultFeatures(data.roles()) : features;
  if (target == NuisanceTarget::kDecision) {
    GlmModel m =
        FitGlm(FeatureMatrix(data, names), data.D(), Link::kLogit, options);
    m.features = names;
    return m;
  }
  Dataset untreated = data.Untreated();
  if (untreated.empty()) {
    throw InvalidInput("no D = 0 rows available for outcome regression");
  }
  const Bounds& b = untreated.bounds();
  Eigen::VectorXd y = untreated.Y();
  GlmModel m;
  if (target == NuisanceTarget::kOutcome) {
    Eigen::VectorXd scaled = (y.array() - b.lower) / b.Width();
    m = FitGlm(FeatureMatrix(untreated, names), scaled, Link::kLogit, options);
  } else {
    m = FitGlm(FeatureMatrix(untreated, names), y.array().square().matrix(),
               Link::kIdentity, options);
  }
  m.features = names;
  return m;
}

NuisanceModels NuisanceModels::Fit(const Dataset& data,
                                   const NuisanceOptions& options) {
  NuisanceModels models;
  models.bounds_ = data.bounds();
  models.gamma_ = options.gamma;
  models.pi_ = FitLogisticIrls(data, NuisanceTarget::kDecision, options.irls,
                               options.features);
  models.mu0_ = FitLogisticIrls(data, NuisanceTarget::kOutcome, options.irls,
                                options.features);
  if (!data.binary_outcome()) {
    models.nu0_ = FitLogisticIrls(data, NuisanceTarget::kSquaredOutcome,
                                  options.irls, options.features);
  }
  return models;
}

bool NuisanceModels::converged() const {
  return pi_.converged && mu0_.converged && (!nu0_ || nu0_->converged);
}

NuisanceFit NuisanceModels::Apply(const Dataset& target) const {
  Eigen::VectorXd pi = pi_.Predict(target);
  Eigen::VectorXd mu0 =
      (bounds_.lower + bounds_.Width() * mu0_.Predict(target).array()).matrix();
  std::optional<Eigen::VectorXd> nu0;
  if (nu0_) {
    nu0 = nu0_->Predict(target).cwiseMax(0.0);
  }
  return MakeNuisanceFit(std::move(pi), std::move(mu0), std::move(nu0), gamma_,
                         bounds_, target.binary_outcome(),
                         Provenance::kBuiltin);
}

Eigen::VectorXd IngestExternalScores(const std::string& path, ScoreKind kind,
                                     size_t expected_rows, const Bounds& bounds,
                                     double gamma) {
  std::vector<double> values = csv::ReadColumn(path);
  if (values.size() != expected_rows) {
    throw InvalidInput(path + ": expected " + std::to_string(expected_rows) +
                       " scores, got " + std::to_string(values.size()));
  }
  double lo = 0.0, hi = 1.0;
  if (kind == ScoreKind::kMu0) {
    lo = bounds.lower;
    hi = bounds.upper;
  } else if (kind == ScoreKind::kNu0) {
    hi = std::max(bounds.lower * bounds.lower, bounds.upper * bounds.upper);
  }
  Eigen::VectorXd out(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    if (values[i] < lo || values[i] > hi) {
      throw InvalidInput(path + ": score " + csv::FormatDouble(values[i]) +
                         " at row " + std::to_string(i + 1) +
                         " outside [" + csv::FormatDouble(lo) + ", " +
                         csv::FormatDouble(hi) + "]");
    }
    out[i] = values[i];
  }
  if (kind == ScoreKind::kPi) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
      throw InvalidInput("truncation margin gamma must lie in (0, 1)");
    }
    out = out.cwiseMin(1.0 - gamma);
  }
  return out;
}

PseudoOutcomes ComputePseudoOutcomes(const NuisanceFit& fit,
                                     const Dataset& data, bool want_phibar) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  if (fit.pi_hat.size() != n || fit.mu0_hat.size() != n) {
    throw InvalidInput("nuisance fit does not cover every row");
  }
  if (want_phibar && !fit.nu0_hat) {
    throw InvalidInput("phibar requested but no nu0 estimate is available");
  }
  Eigen::VectorXd d = data.D();
  Eigen::VectorXd y = data.Y();
  PseudoOutcomes out;
  out.phi.resize(n);
  if (want_phibar) out.phibar = Eigen::VectorXd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double pi = fit.pi_hat[i];
    if (!(pi < 1.0)) {
      throw NumericFailure("propensity of 1 at row " + std::to_string(i + 1));
    }
    double weight = (1.0 - d[i]) / (1.0 - pi);
    out.phi[i] = weight * (y[i] - fit.mu0_hat[i]) + fit.mu0_hat[i];
    if (want_phibar) {
      (*out.phibar)[i] =
          weight * (y[i] * y[i] - (*fit.nu0_hat)[i]) + (*fit.nu0_hat)[i];
    }
  }
  return out;
}

CrossFitResult CrossFit(const Dataset& data, int folds,
                        const NuisanceOptions& options, uint64_t seed,
                        bool want_phibar) {
  if (folds < 1) throw InvalidInput("cross-fit folds must be >= 1");
  CrossFitResult result;
  if (folds == 1) {
    NuisanceModels models = NuisanceModels::Fit(data, options);
    result.fit = models.Apply(data);
    result.pseudo = ComputePseudoOutcomes(result.fit, data, want_phibar);
    result.in_sample_warning = true;
    return result;
  }
  const size_t n = data.size();
  if (n < static_cast<size_t>(folds)) {
    throw InvalidInput("fewer rows than cross-fit folds");
  }
  std::vector<size_t> perm = Permutation(n, seed);
  std::vector<int> fold_of(n);
  for (size_t r = 0; r < n; ++r) {
    fold_of[perm[r]] = static_cast<int>(r * folds / n);
  }

  Eigen::VectorXd pi(n), mu0(n), nu0(n);
  bool have_nu0 = false;
  for (int k = 0; k < folds; ++k) {
    std::vector<size_t> in_fold, out_fold;
    for (size_t i = 0; i < n; ++i) {
      (fold_of[i] == k ? in_fold : out_fold).push_back(i);
    }
    Dataset held_out = data.Subset(in_fold);
    Dataset training = data.Subset(out_fold);
    bool has_untreated = std::any_of(
        training.records().begin(), training.records().end(),
        [](const Record& r) { return r.d && *r.d == 0; });
    if (!has_untreated) {
      throw InvalidInput("cross-fit fold " + std::to_string(k) +
                         " has no D = 0 training rows");
    }
    NuisanceFit part = NuisanceModels::Fit(training, options).Apply(held_out);
    for (size_t r = 0; r < in_fold.size(); ++r) {
      pi[in_fold[r]] = part.pi_hat[r];
      mu0[in_fold[r]] = part.mu0_hat[r];
      if (part.nu0_hat) {
        nu0[in_fold[r]] = (*part.nu0_hat)[r];
        have_nu0 = true;
      }
    }
  }
  std::optional<Eigen::VectorXd> nu0_opt;
  if (have_nu0) nu0_opt = std::move(nu0);
  result.fit = MakeNuisanceFit(std::move(pi), std::move(mu0),
                               std::move(nu0_opt), options.gamma,
                               data.bounds(), data.binary_outcome(),
                               Provenance::kBuiltin);
  result.pseudo = ComputePseudoOutcomes(result.fit, data, want_phibar);
  return result;
}

}  // namespace fade

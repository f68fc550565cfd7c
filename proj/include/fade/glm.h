#ifndef FADE_GLM_H_
#define FADE_GLM_H_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fade/dataset.h"

namespace fade {

enum class Link { kLogit, kIdentity };

// Predictions from logit-link models are clamped to this range.
inline constexpr double kProbabilityClamp = 1e-6;

struct IrlsOptions {
  int max_iter = 50;
  // Convergence when the max-norm of the mean log-likelihood gradient is at
  // or below this value.
  double tol = 1e-8;
};

// Generalized linear model with intercept, fit by iteratively reweighted
// least squares. Logit link accepts fractional responses in [0, 1]
// (quasi-binomial); identity link is ordinary least squares.
struct GlmModel {
  Link link = Link::kLogit;
  std::vector<std::string> features;
  // coefficients[0] is the intercept.
  Eigen::VectorXd coefficients;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;

  double PredictRow(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  Eigen::VectorXd Predict(const Eigen::MatrixXd& design) const;
  Eigen::VectorXd Predict(const Dataset& data) const;
};

double Expit(double z);

// Fits on a design matrix without intercept column; one is added. Throws
// kInvalidInput on empty input and kNumeric on a rank-deficient design.
GlmModel FitGlm(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                Link link, const IrlsOptions& options = {});

// Feature matrix for the named columns (any of a, x..., s...).
Eigen::MatrixXd FeatureMatrix(const Dataset& data,
                              const std::vector<std::string>& features);
// Default covariates W = (A, X, S).
std::vector<std::string> DefaultFeatures(const ColumnRoles& roles);

}  // namespace fade

#endif  // FADE_GLM_H_

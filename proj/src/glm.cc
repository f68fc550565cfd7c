#include "fade/glm.h"

#include <algorithm>
#include <cmath>

#include "fade/errors.h"

namespace fade {
namespace {

double ClampProbability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

Eigen::MatrixXd WithIntercept(const Eigen::MatrixXd& design) {
  Eigen::MatrixXd x(design.rows(), design.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(design.cols()) = design;
  return x;
}

// Mean quasi-binomial log-likelihood at clamped probabilities.
double LogLikelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    double p = ClampProbability(Expit(eta[i]));
    total += y[i] * std::log(p) + (1.0 - y[i]) * std::log1p(-p);
  }
  return total / static_cast<double>(eta.size());
}

}  // namespace

double Expit(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double GlmModel::PredictRow(
    const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  double eta = coefficients[0] + row.dot(coefficients.tail(row.size()));
  return link == Link::kLogit ? ClampProbability(Expit(eta)) : eta;
}

Eigen::VectorXd GlmModel::Predict(const Eigen::MatrixXd& design) const {
  if (design.cols() + 1 != coefficients.size()) {
    throw InvalidInput("design has wrong number of features for model");
  }
  Eigen::VectorXd out(design.rows());
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    out[i] = PredictRow(design.row(i));
  }
  return out;
}

Eigen::VectorXd GlmModel::Predict(const Dataset& data) const {
  return Predict(FeatureMatrix(data, features));
}

GlmModel FitGlm(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                Link link, const IrlsOptions& options) {
  const Eigen::Index n = design.rows();
  if (n == 0) throw InvalidInput("cannot fit a model on zero rows");
  if (response.size() != n) throw InvalidInput("response length mismatch");
  if (link == Link::kLogit &&
      (response.minCoeff() < 0.0 || response.maxCoeff() > 1.0)) {
    throw InvalidInput("logit-link response must lie in [0, 1]");
  }
  const Eigen::MatrixXd x = WithIntercept(design);
  const Eigen::Index p = x.cols();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (n < p || qr.rank() < p) {
    throw NumericFailure("rank-deficient design: rank " +
                         std::to_string(qr.rank()) + " < " + std::to_string(p) +
                         " columns (including intercept)");
  }

  GlmModel model;
  model.link = link;
  if (link == Link::kIdentity) {
    model.coefficients = qr.solve(response);
    model.converged = true;
    model.iterations = 1;
    model.gradient_norm =
        (x.transpose() * (response - x * model.coefficients)).cwiseAbs().maxCoeff() /
        static_cast<double>(n);
    return model;
  }

  // Start from the intercept-only fit.
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ybar = ClampProbability(response.mean());
  beta[0] = std::log(ybar / (1.0 - ybar));
  Eigen::VectorXd eta = x * beta;
  double loglik = LogLikelihood(eta, response);

  for (int iter = 0; iter < options.max_iter; ++iter) {
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = ClampProbability(Expit(eta[i]));
      w[i] = mu[i] * (1.0 - mu[i]);
    }
    Eigen::VectorXd gradient =
        x.transpose() * (response - mu) / static_cast<double>(n);
    model.gradient_norm = gradient.cwiseAbs().maxCoeff();
    model.iterations = iter;
    if (model.gradient_norm <= options.tol) {
      model.converged = true;
      break;
    }
    Eigen::MatrixXd hessian =
        x.transpose() * w.asDiagonal() * x / static_cast<double>(n);
    Eigen::VectorXd step = hessian.ldlt().solve(gradient);
    if (!step.allFinite()) break;

    // Step halving keeps the likelihood monotone on near-separable data.
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 30; ++half) {
      Eigen::VectorXd candidate = beta + scale * step;
      Eigen::VectorXd candidate_eta = x * candidate;
      double candidate_loglik = LogLikelihood(candidate_eta, response);
      if (candidate_loglik >= loglik - 1e-15) {
        beta = std::move(candidate);
        eta = std::move(candidate_eta);
        loglik = candidate_loglik;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
  }
  if (!model.converged) {
    // Final gradient for the reported state.
    Eigen::VectorXd mu(n);
    for (Eigen::Index i = 0; i < n; ++i) mu[i] = ClampProbability(Expit(eta[i]));
    Eigen::VectorXd gradient =
        x.transpose() * (response - mu) / static_cast<double>(n);
    model.gradient_norm = gradient.cwiseAbs().maxCoeff();
    model.converged = model.gradient_norm <= options.tol;
    model.iterations = options.max_iter;
  }
  model.coefficients = beta;
  return model;
}

Eigen::MatrixXd FeatureMatrix(const Dataset& data,
                              const std::vector<std::string>& features) {
  Eigen::MatrixXd m(data.size(), features.size());
  for (size_t j = 0; j < features.size(); ++j) {
    m.col(j) = data.Column(features[j]);
  }
  return m;
}

std::vector<std::string> DefaultFeatures(const ColumnRoles& roles) {
  std::vector<std::string> f = {roles.a};
  f.insert(f.end(), roles.x.begin(), roles.x.end());
  f.insert(f.end(), roles.s.begin(), roles.s.end());
  return f;
}

}  // namespace fade

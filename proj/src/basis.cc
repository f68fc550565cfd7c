#include "fade/basis.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fade/errors.h"

namespace fade {

BasisSource BasisSource::Mean(std::optional<double> value) {
  BasisSource s;
  s.kind = SourceKind::kMean;
  s.name = "mean";
  s.mean_value = value;
  return s;
}

BasisSource BasisSource::PriorScore(const std::string& column) {
  BasisSource s;
  s.kind = SourceKind::kPriorScore;
  s.name = column;
  s.column = column;
  return s;
}

BasisSource BasisSource::RawFeature(const std::string& column) {
  BasisSource s;
  s.kind = SourceKind::kRawFeature;
  s.name = column;
  s.column = column;
  return s;
}

BasisSource BasisSource::Values(const std::string& name,
                                std::vector<double> values) {
  BasisSource s;
  s.kind = SourceKind::kValues;
  s.name = name;
  s.values = std::move(values);
  return s;
}

BasisSource BasisSource::Model(const std::string& name, GlmModel model,
                               double offset, double scale) {
  BasisSource s;
  s.kind = SourceKind::kModel;
  s.name = name;
  s.model = std::make_shared<const GlmModel>(std::move(model));
  s.offset = offset;
  s.scale = scale;
  return s;
}

uint64_t HashColumnNames(const std::vector<std::string>& names) {
  uint64_t h = 14695981039346656037ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (const auto& name : names) {
    for (char c : name) mix(static_cast<unsigned char>(c));
    mix(0x1f);  // unit separator
  }
  return h;
}

void CheckConditioning(const Eigen::MatrixXd& values,
                       const std::vector<std::string>& names, double eig_tol) {
  const double n = static_cast<double>(values.rows());
  Eigen::MatrixXd gram = values.transpose() * values / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd& ev = eig.eigenvalues();  // ascending
  double largest = ev[ev.size() - 1];
  double smallest = ev[0];
  if (largest > 0.0 && smallest >= eig_tol * largest) return;

  Eigen::VectorXd direction = eig.eigenvectors().col(0).cwiseAbs();
  double peak = direction.maxCoeff();
  std::ostringstream msg;
  msg << "basis is ill-conditioned: min eigenvalue of Pn(bb^T) " << smallest
      << " < " << eig_tol << " x max eigenvalue " << largest
      << "; near-collinear columns:";
  for (Eigen::Index j = 0; j < direction.size(); ++j) {
    if (direction[j] >= 0.25 * peak) msg << ' ' << names[j];
  }
  throw NumericFailure(msg.str());
}

BasisMatrix Assemble(const Dataset& data, const std::vector<BasisSource>& sources,
                     OutcomeMode mode, const std::string& fold_id,
                     double eig_tol) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  const Eigen::Index k = static_cast<Eigen::Index>(sources.size());
  if (k == 0) throw InvalidInput("basis needs at least one column");
  if (k >= n) {
    throw InvalidInput("basis dimension " + std::to_string(k) +
                       " must be smaller than the fold size " +
                       std::to_string(n));
  }
  BasisMatrix basis;
  basis.values.resize(n, k);
  basis.bounds = data.bounds();
  for (Eigen::Index j = 0; j < k; ++j) {
    const BasisSource& src = sources[j];
    basis.names.push_back(src.name);
    switch (src.kind) {
      case SourceKind::kMean: {
        double value;
        if (src.mean_value) {
          value = *src.mean_value;
        } else if (mode == OutcomeMode::kCounterfactual) {
          Dataset untreated = data.Untreated();
          if (untreated.empty()) {
            throw InvalidInput("mean column: no D = 0 rows in fold");
          }
          value = untreated.Y().mean();
        } else {
          value = data.Y().mean();
        }
        basis.values.col(j).setConstant(value);
        break;
      }
      case SourceKind::kPriorScore:
      case SourceKind::kRawFeature:
        basis.values.col(j) = data.Column(src.column);
        break;
      case SourceKind::kValues:
        if (static_cast<Eigen::Index>(src.values.size()) != n) {
          throw InvalidInput("prediction column '" + src.name + "' has " +
                             std::to_string(src.values.size()) +
                             " rows, fold has " + std::to_string(n));
        }
        basis.values.col(j) =
            Eigen::Map<const Eigen::VectorXd>(src.values.data(), n);
        break;
      case SourceKind::kModel:
        if (!src.model) throw InvalidInput("model column without a model");
        basis.values.col(j) =
            (src.offset + src.scale * src.model->Predict(data).array()).matrix();
        break;
    }
  }
  if (!basis.values.allFinite()) {
    throw NumericFailure("basis contains non-finite values");
  }
  CheckConditioning(basis.values, basis.names, eig_tol);
  basis.signature = {HashColumnNames(basis.names), fold_id};
  return basis;
}

double Predict(const Eigen::Ref<const Eigen::VectorXd>& basis_row,
               const Eigen::Ref<const Eigen::VectorXd>& beta, bool truncate,
               const Bounds& bounds) {
  if (basis_row.size() != beta.size()) {
    throw InvalidInput("basis row and weight vector lengths differ");
  }
  double raw = basis_row.dot(beta);
  return truncate ? bounds.Clamp(raw) : raw;
}

Eigen::VectorXd PredictAll(const BasisMatrix& basis,
                           const Eigen::Ref<const Eigen::VectorXd>& beta,
                           bool truncate) {
  if (basis.cols() != beta.size()) {
    throw InvalidInput("basis width and weight vector length differ");
  }
  Eigen::VectorXd out = basis.values * beta;
  if (truncate) {
    out = out.cwiseMax(basis.bounds.lower).cwiseMin(basis.bounds.upper);
  }
  return out;
}

}  // namespace fade

#ifndef FADE_BASIS_H_
#define FADE_BASIS_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fade/dataset.h"
#include "fade/fairness.h"
#include "fade/glm.h"

namespace fade {

// Default conditioning tolerance, relative to the largest eigenvalue of
// Pn(b b^T).
inline constexpr double kDefaultEigTol = 1e-8;

enum class SourceKind { kMean, kPriorScore, kRawFeature, kValues, kModel };

// One basis column.
struct BasisSource {
  SourceKind kind = SourceKind::kMean;
  std::string name;
  // kMean: the constant; computed from the assembled fold when absent.
  std::optional<double> mean_value;
  // kPriorScore / kRawFeature: dataset column.
  std::string column;
  // kValues: row-aligned predictions for the fold being assembled.
  std::vector<double> values;
  // kModel: column = offset + scale * model(W).
  std::shared_ptr<const GlmModel> model;
  double offset = 0.0;
  double scale = 1.0;

  static BasisSource Mean(std::optional<double> value = std::nullopt);
  static BasisSource PriorScore(const std::string& column);
  static BasisSource RawFeature(const std::string& column);
  static BasisSource Values(const std::string& name, std::vector<double> values);
  static BasisSource Model(const std::string& name, GlmModel model,
                           double offset = 0.0, double scale = 1.0);
};

struct BasisSignature {
  uint64_t columns = 0;  // hash of the ordered column names
  std::string fold;

  bool operator==(const BasisSignature&) const = default;
};

// FNV-1a hash of the ordered column names.
uint64_t HashColumnNames(const std::vector<std::string>& names);

struct BasisMatrix {
  Eigen::MatrixXd values;  // n x k
  std::vector<std::string> names;
  BasisSignature signature;
  Bounds bounds;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

// Builds the n x k basis over `data`. The mean column is Pn(Y | D = 0) in
// counterfactual mode and Pn(Y) in observable mode unless a fitted value is
// supplied. Throws kNumeric, naming the near-collinear columns, when the
// smallest eigenvalue of Pn(b b^T) is below eig_tol times the largest.
BasisMatrix Assemble(const Dataset& data, const std::vector<BasisSource>& sources,
                     OutcomeMode mode, const std::string& fold_id,
                     double eig_tol = kDefaultEigTol);

// Eigenvalue check on Pn(b b^T); throws as in Assemble.
void CheckConditioning(const Eigen::MatrixXd& values,
                       const std::vector<std::string>& names, double eig_tol);

// b^T beta, clipped to the bounds when `truncate` is set.
double Predict(const Eigen::Ref<const Eigen::VectorXd>& basis_row,
               const Eigen::Ref<const Eigen::VectorXd>& beta, bool truncate,
               const Bounds& bounds);
Eigen::VectorXd PredictAll(const BasisMatrix& basis,
                           const Eigen::Ref<const Eigen::VectorXd>& beta,
                           bool truncate);

}  // namespace fade

#endif  // FADE_BASIS_H_

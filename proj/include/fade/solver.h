#ifndef FADE_SOLVER_H_
#define FADE_SOLVER_H_

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fade/basis.h"
#include "fade/fairness.h"

namespace fade {

struct SolverTolerances {
  double kkt_tol = 1e-9;
  // Relative to max(1, eps^2).
  double risk_tol = 1e-10;
  double breakdown_tol = 1e-12;
};

// Empirical moments of one weight-fitting problem:
//   risk(beta)      = beta^T Q beta - 2 c^T beta + d
//   disparity_j     = m_j^T beta
struct ProblemData {
  Eigen::MatrixXd q;                     // Pn(b b^T)
  Eigen::VectorXd c;                     // Pn(b * target)
  std::vector<Eigen::VectorXd> moments;  // m_j = Pn(g_j b)
  std::optional<double> second_moment;   // d = Pn(Y^2) or Pn(phibar)
  std::vector<std::string> labels;       // one per fairness moment
  BasisSignature signature;

  int k() const { return static_cast<int>(c.size()); }
  int t() const { return static_cast<int>(moments.size()); }
  // beta^T Q beta - 2 c^T beta.
  double Objective(const Eigen::VectorXd& beta) const;
  // Requires second_moment.
  double Risk(const Eigen::VectorXd& beta) const;
  double Moment(int j, const Eigen::VectorXd& beta) const {
    return moments[j].dot(beta);
  }
};

// `target` is Y (observable) or phi (counterfactual). `second_moment_terms`
// is y^2 or phibar per unit; pass it when risk levels are needed.
ProblemData BuildProblem(
    const BasisMatrix& basis, const Eigen::VectorXd& target,
    const std::vector<FairnessVector>& fairness,
    const std::optional<Eigen::VectorXd>& second_moment_terms = std::nullopt);

enum class SolutionOrigin { kPenalized, kRiskMin, kUnfairMin };
const char* OriginName(SolutionOrigin origin);

struct FadeSolution {
  Eigen::VectorXd beta;
  SolutionOrigin origin = SolutionOrigin::kPenalized;
  // Penalized: the penalties. Risk-min: dual multipliers mapped to the
  // squared-constraint form. Unfair-min: the equivalent penalties alpha / nu.
  Eigen::VectorXd lambda;
  double lambda0 = 0.0;
  Eigen::VectorXd epsilon;  // risk-min caps, or the single unfair-min level
  Eigen::VectorXd alpha;    // unfair-min weights
  double nu = 0.0;          // unfair-min risk multiplier
  bool at_unfairness_floor = false;  // unfair-min returned the nu -> 0 limit
  int iterations = 0;
  double kkt_residual = 0.0;
  BasisSignature signature;
};

// Sherman-Morrison path for (Q + lambda0 K + sum_j lambda_j m_j m_j^T)^-1.
// (Q + lambda0 K) is inverted once at construction; each Solve applies t
// rank-one updates in order j = 1..t.
class PenalizedPath {
 public:
  explicit PenalizedPath(const ProblemData& problem, double lambda0 = 0.0,
                         const std::optional<Eigen::MatrixXd>& smoothing =
                             std::nullopt,
                         const SolverTolerances& tol = {});

  Eigen::MatrixXd Inverse(const Eigen::VectorXd& lambda) const;
  Eigen::VectorXd Solve(const Eigen::VectorXd& lambda) const;
  FadeSolution SolveAt(const Eigen::VectorXd& lambda) const;

  const Eigen::MatrixXd& base_inverse() const { return base_inverse_; }

 private:
  const ProblemData* problem_;
  double lambda0_;
  SolverTolerances tol_;
  Eigen::MatrixXd base_inverse_;
};

FadeSolution SolvePenalized(
    const ProblemData& problem, const Eigen::VectorXd& lambda,
    double lambda0 = 0.0,
    const std::optional<Eigen::MatrixXd>& smoothing = std::nullopt,
    const SolverTolerances& tol = {});

// The 11-point penalty axis used for the default grids.
const std::vector<double>& DefaultLambdaAxis();

// Cartesian product of per-penalty axes, first axis varying slowest.
struct LambdaGrid {
  std::vector<std::vector<double>> axes;
  std::optional<Eigen::VectorXd> seed;

  static LambdaGrid Uniform(const std::vector<double>& axis, int t);
  size_t size() const;
  int dims() const { return static_cast<int>(axes.size()); }
  Eigen::VectorXd Point(size_t index) const;
  // Throws kInvalidInput on negative, non-finite or empty axes.
  void Validate() const;
};

// One solution per grid point, in grid order.
std::vector<FadeSolution> SolveGrid(
    const ProblemData& problem, const LambdaGrid& grid, double lambda0 = 0.0,
    const std::optional<Eigen::MatrixXd>& smoothing = std::nullopt,
    int jobs = 1, const SolverTolerances& tol = {});

// Minimizes the empirical risk subject to |m_j^T beta| <= eps_j with a
// primal active-set method started at beta = 0. Infinite caps are allowed.
FadeSolution SolveRiskMin(const ProblemData& problem,
                          const Eigen::VectorXd& epsilon,
                          const SolverTolerances& tol = {});

// Minimizes sum_j alpha_j (m_j^T beta)^2 subject to risk(beta) <= eps^2 by
// bisection on the risk multiplier. Throws InfeasibleError when the
// least-squares risk already exceeds eps^2.
FadeSolution SolveUnfairMin(const ProblemData& problem, double epsilon,
                            const Eigen::VectorXd& alpha,
                            const SolverTolerances& tol = {});

// Stand-in for infinite duals (a cap of exactly zero on an active moment).
inline constexpr double kMaxSeedLambda = 1e12;

// Grid around a risk-min solution's dual: each axis holds 0, lambda*_j and
// lambda*_j * s for every spread multiplier s.
LambdaGrid SeedGrid(const FadeSolution& risk_min_solution,
                    const std::vector<double>& spread);

// Throws kInvalidInput unless `smoothing` is symmetric PSD of size k.
void CheckSmoothingMatrix(const Eigen::MatrixXd& smoothing, int k);

// Audit CSV: model_id, lambda_<label>..., beta_<column>...
void WriteSolutionsCsv(const std::string& path,
                       const std::vector<FadeSolution>& solutions,
                       const std::vector<std::string>& labels,
                       const std::vector<std::string>& columns);
struct SolutionTable {
  std::vector<std::string> labels;
  std::vector<std::string> columns;
  std::vector<int> ids;
  std::vector<Eigen::VectorXd> lambdas;
  std::vector<Eigen::VectorXd> betas;
};
SolutionTable ReadSolutionsCsv(const std::string& path);

}  // namespace fade

#endif  // FADE_SOLVER_H_

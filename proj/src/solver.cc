#include "fade/solver.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fade/csv.h"
#include "fade/errors.h"
#include "fade/parallel.h"

namespace fade {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void CheckLambda(const ProblemData& p, const Eigen::VectorXd& lambda) {
  if (lambda.size() != p.t()) {
    throw InvalidInput("penalty vector has " + std::to_string(lambda.size()) +
                       " entries for " + std::to_string(p.t()) +
                       " fairness moments");
  }
  for (Eigen::Index j = 0; j < lambda.size(); ++j) {
    if (!std::isfinite(lambda[j]) || lambda[j] < 0.0) {
      throw InvalidInput("penalties must be finite and nonnegative");
    }
  }
}

// Rows of the one-sided constraint system: constraint 2j is +m_j^T beta <=
// eps_j, constraint 2j + 1 is -m_j^T beta <= eps_j.
struct Constraints {
  std::vector<Eigen::VectorXd> normals;
  std::vector<double> caps;
};

Constraints OneSided(const ProblemData& p, const Eigen::VectorXd& eps) {
  Constraints out;
  for (int j = 0; j < p.t(); ++j) {
    out.normals.push_back(p.moments[j]);
    out.caps.push_back(eps[j]);
    out.normals.push_back(-p.moments[j]);
    out.caps.push_back(eps[j]);
  }
  return out;
}

struct ActiveSetResult {
  Eigen::VectorXd beta;
  std::vector<int> working;
  Eigen::VectorXd multipliers;  // aligned with working
  int iterations = 0;
  bool converged = false;
};

ActiveSetResult RunActiveSet(const ProblemData& p, const Constraints& cons,
                             const Eigen::LDLT<Eigen::MatrixXd>& q_factor,
                             int max_iter, double kkt_tol) {
  const int k = p.k();
  ActiveSetResult r;
  r.beta = Eigen::VectorXd::Zero(k);
  const double step_floor = 1e-13;
  for (r.iterations = 0; r.iterations < max_iter; ++r.iterations) {
    // Equality-constrained step: min (p^T Q p + grad^T p) s.t. A p = 0, with
    // grad = 2(Q beta - c). Range-space solve through Q^-1.
    Eigen::VectorXd half_grad = p.q * r.beta - p.c;
    const int w = static_cast<int>(r.working.size());
    Eigen::MatrixXd a(w, k);
    for (int i = 0; i < w; ++i) a.row(i) = cons.normals[r.working[i]];
    Eigen::VectorXd q_inv_grad = q_factor.solve(half_grad);
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(w);
    Eigen::VectorXd step;
    if (w == 0) {
      step = -q_inv_grad;
    } else {
      Eigen::MatrixXd q_inv_at = q_factor.solve(a.transpose());
      Eigen::MatrixXd schur = a * q_inv_at;
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(schur);
      // Multipliers of the scaled system; the true ones are 2 * half_mu.
      Eigen::VectorXd half_mu = cod.solve(-(a * q_inv_grad));
      step = -(q_inv_grad + q_inv_at * half_mu);
      mu = 2.0 * half_mu;
    }
    const double scale = 1.0 + r.beta.lpNorm<Eigen::Infinity>();
    if (step.lpNorm<Eigen::Infinity>() <= step_floor * scale) {
      if (w == 0) {
        r.converged = true;
        r.multipliers = mu;
        return r;
      }
      Eigen::Index worst;
      double most_negative = mu.minCoeff(&worst);
      if (most_negative >= -kkt_tol) {
        r.converged = true;
        r.multipliers = mu;
        return r;
      }
      r.working.erase(r.working.begin() + worst);
      continue;
    }
    double alpha = 1.0;
    int blocking = -1;
    for (int i = 0; i < static_cast<int>(cons.caps.size()); ++i) {
      if (std::find(r.working.begin(), r.working.end(), i) !=
          r.working.end()) {
        continue;
      }
      double slope = cons.normals[i].dot(step);
      if (slope <= 1e-15 * cons.normals[i].lpNorm<Eigen::Infinity>() *
                       step.lpNorm<Eigen::Infinity>()) {
        continue;
      }
      double slack = cons.caps[i] - cons.normals[i].dot(r.beta);
      double reach = std::max(slack, 0.0) / slope;
      if (reach < alpha) {
        alpha = reach;
        blocking = i;
      }
    }
    r.beta += alpha * step;
    if (blocking >= 0) r.working.push_back(blocking);
  }
  return r;
}

}  // namespace

double ProblemData::Objective(const Eigen::VectorXd& beta) const {
  return beta.dot(q * beta) - 2.0 * c.dot(beta);
}

double ProblemData::Risk(const Eigen::VectorXd& beta) const {
  if (!second_moment) {
    throw InvalidInput("risk level requires the second-moment term d");
  }
  return Objective(beta) + *second_moment;
}

ProblemData BuildProblem(
    const BasisMatrix& basis, const Eigen::VectorXd& target,
    const std::vector<FairnessVector>& fairness,
    const std::optional<Eigen::VectorXd>& second_moment_terms) {
  const Eigen::Index n = basis.rows();
  if (target.size() != n) {
    throw InvalidInput("target length does not match the basis rows");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  ProblemData p;
  p.q = basis.values.transpose() * basis.values * inv_n;
  p.q = 0.5 * (p.q + p.q.transpose());
  p.c = basis.values.transpose() * target * inv_n;
  for (const auto& fv : fairness) {
    if (fv.g.size() != n) {
      throw InvalidInput("fairness vector length does not match the basis");
    }
    p.moments.push_back(basis.values.transpose() * fv.g * inv_n);
    p.labels.push_back(fv.spec.Label());
  }
  if (second_moment_terms) {
    if (second_moment_terms->size() != n) {
      throw InvalidInput("second-moment terms do not match the basis rows");
    }
    p.second_moment = second_moment_terms->mean();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(p.q);
  if (llt.info() != Eigen::Success) {
    throw NumericFailure("Pn(b b^T) is not positive definite");
  }
  p.signature = basis.signature;
  return p;
}

const char* OriginName(SolutionOrigin origin) {
  switch (origin) {
    case SolutionOrigin::kPenalized:
      return "penalized";
    case SolutionOrigin::kRiskMin:
      return "risk_min";
    case SolutionOrigin::kUnfairMin:
      return "unfair_min";
  }
  return "unknown";
}

void CheckSmoothingMatrix(const Eigen::MatrixXd& smoothing, int k) {
  if (smoothing.rows() != k || smoothing.cols() != k) {
    throw InvalidInput("smoothing matrix must be " + std::to_string(k) + "x" +
                       std::to_string(k));
  }
  if (!smoothing.allFinite()) {
    throw InvalidInput("smoothing matrix has non-finite entries");
  }
  double scale = std::max(1.0, smoothing.cwiseAbs().maxCoeff());
  if ((smoothing - smoothing.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * scale) {
    throw InvalidInput("smoothing matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      smoothing, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw InvalidInput("smoothing matrix is not positive semidefinite");
  }
}

PenalizedPath::PenalizedPath(const ProblemData& problem, double lambda0,
                             const std::optional<Eigen::MatrixXd>& smoothing,
                             const SolverTolerances& tol)
    : problem_(&problem), lambda0_(lambda0), tol_(tol) {
  if (!std::isfinite(lambda0) || lambda0 < 0.0) {
    throw InvalidInput("lambda0 must be finite and nonnegative");
  }
  Eigen::MatrixXd base = problem.q;
  if (smoothing) {
    CheckSmoothingMatrix(*smoothing, problem.k());
    base += lambda0 * *smoothing;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(base);
  if (llt.info() != Eigen::Success) {
    throw NumericFailure("Q + lambda0 K is not positive definite");
  }
  base_inverse_ =
      llt.solve(Eigen::MatrixXd::Identity(problem.k(), problem.k()));
  base_inverse_ = 0.5 * (base_inverse_ + base_inverse_.transpose());
}

Eigen::MatrixXd PenalizedPath::Inverse(const Eigen::VectorXd& lambda) const {
  CheckLambda(*problem_, lambda);
  Eigen::MatrixXd inv = base_inverse_;
  for (int j = 0; j < problem_->t(); ++j) {
    if (lambda[j] == 0.0) continue;
    const Eigen::VectorXd& m = problem_->moments[j];
    Eigen::VectorXd u = inv * m;
    double denom = 1.0 + lambda[j] * m.dot(u);
    if (denom <= tol_.breakdown_tol) {
      std::ostringstream msg;
      msg << "rank-one update " << j + 1 << " broke down (denominator "
          << denom << ")";
      throw NumericFailure(msg.str());
    }
    inv.noalias() -= (lambda[j] / denom) * u * u.transpose();
  }
  return inv;
}

Eigen::VectorXd PenalizedPath::Solve(const Eigen::VectorXd& lambda) const {
  return Inverse(lambda) * problem_->c;
}

FadeSolution PenalizedPath::SolveAt(const Eigen::VectorXd& lambda) const {
  FadeSolution s;
  s.beta = Solve(lambda);
  if (!s.beta.allFinite()) throw NumericFailure("non-finite penalized weights");
  s.origin = SolutionOrigin::kPenalized;
  s.lambda = lambda;
  s.lambda0 = lambda0_;
  s.signature = problem_->signature;
  return s;
}

FadeSolution SolvePenalized(const ProblemData& problem,
                            const Eigen::VectorXd& lambda, double lambda0,
                            const std::optional<Eigen::MatrixXd>& smoothing,
                            const SolverTolerances& tol) {
  return PenalizedPath(problem, lambda0, smoothing, tol).SolveAt(lambda);
}

const std::vector<double>& DefaultLambdaAxis() {
  static const std::vector<double> axis = {0,  0.001, 0.01, 1,    10,  20,
                                           50, 100,   500,  1000, 2000};
  return axis;
}

LambdaGrid LambdaGrid::Uniform(const std::vector<double>& axis, int t) {
  LambdaGrid g;
  g.axes.assign(static_cast<size_t>(t), axis);
  return g;
}

size_t LambdaGrid::size() const {
  if (axes.empty()) return 0;
  size_t total = 1;
  for (const auto& axis : axes) total *= axis.size();
  return total;
}

Eigen::VectorXd LambdaGrid::Point(size_t index) const {
  Eigen::VectorXd point(dims());
  for (int j = dims() - 1; j >= 0; --j) {
    const auto& axis = axes[j];
    point[j] = axis[index % axis.size()];
    index /= axis.size();
  }
  return point;
}

void LambdaGrid::Validate() const {
  if (axes.empty()) throw InvalidInput("penalty grid has no axes");
  for (const auto& axis : axes) {
    if (axis.empty()) throw InvalidInput("penalty grid axis is empty");
    for (double v : axis) {
      if (!std::isfinite(v) || v < 0.0) {
        throw InvalidInput("penalty grid values must be finite and >= 0");
      }
    }
  }
}

std::vector<FadeSolution> SolveGrid(
    const ProblemData& problem, const LambdaGrid& grid, double lambda0,
    const std::optional<Eigen::MatrixXd>& smoothing, int jobs,
    const SolverTolerances& tol) {
  grid.Validate();
  if (grid.dims() != problem.t()) {
    throw InvalidInput("penalty grid has " + std::to_string(grid.dims()) +
                       " axes for " + std::to_string(problem.t()) +
                       " fairness moments");
  }
  const PenalizedPath path(problem, lambda0, smoothing, tol);
  std::vector<FadeSolution> out(grid.size());
  ParallelFor(out.size(), jobs,
              [&](size_t i) { out[i] = path.SolveAt(grid.Point(i)); });
  return out;
}

FadeSolution SolveRiskMin(const ProblemData& problem,
                          const Eigen::VectorXd& epsilon,
                          const SolverTolerances& tol) {
  const int t = problem.t();
  if (epsilon.size() != t) {
    throw InvalidInput("risk-min needs one cap per fairness moment");
  }
  for (Eigen::Index j = 0; j < t; ++j) {
    if (std::isnan(epsilon[j]) || epsilon[j] < 0.0) {
      throw InvalidInput("risk-min caps must be nonnegative");
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> q_factor(problem.q);
  const int max_iter = 50 + 20 * t;

  Eigen::VectorXd eps = epsilon;
  ActiveSetResult r =
      RunActiveSet(problem, OneSided(problem, eps), q_factor, max_iter,
                   tol.kkt_tol);
  if (!r.converged) {
    for (Eigen::Index j = 0; j < t; ++j) {
      if (std::isfinite(eps[j])) eps[j] = eps[j] * (1.0 + 1e-10) + 1e-14;
    }
    r = RunActiveSet(problem, OneSided(problem, eps), q_factor, max_iter,
                     tol.kkt_tol);
    if (!r.converged) {
      throw NumericFailure("risk-min active set exceeded " +
                           std::to_string(max_iter) +
                           " iterations after perturbation");
    }
  }

  const Constraints cons = OneSided(problem, eps);
  FadeSolution s;
  s.beta = r.beta;
  s.origin = SolutionOrigin::kRiskMin;
  s.epsilon = epsilon;
  s.lambda = Eigen::VectorXd::Zero(t);
  s.iterations = r.iterations;
  s.signature = problem.signature;

  Eigen::VectorXd stationarity = 2.0 * (problem.q * r.beta - problem.c);
  double residual = 0.0;
  for (size_t i = 0; i < r.working.size(); ++i) {
    const int c = r.working[i];
    const double mu = std::max(r.multipliers[i], 0.0);
    stationarity += mu * cons.normals[c];
    const int j = c / 2;
    const double level = std::abs(problem.Moment(j, r.beta));
    if (mu == 0.0) continue;
    s.lambda[j] += level > 0.0 ? mu / (2.0 * level) : kInf;
  }
  residual = stationarity.lpNorm<Eigen::Infinity>();
  for (size_t i = 0; i < cons.caps.size(); ++i) {
    residual = std::max(residual,
                        cons.normals[i].dot(r.beta) - cons.caps[i]);
  }
  s.kkt_residual = residual;
  return s;
}

FadeSolution SolveUnfairMin(const ProblemData& problem, double epsilon,
                            const Eigen::VectorXd& alpha,
                            const SolverTolerances& tol) {
  const int t = problem.t();
  const int k = problem.k();
  if (!problem.second_moment) {
    throw InvalidInput("unfair-min needs the second-moment term d");
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw InvalidInput("unfair-min risk level must be positive and finite");
  }
  if (alpha.size() != t) {
    throw InvalidInput("unfair-min needs one weight per fairness moment");
  }
  for (Eigen::Index j = 0; j < t; ++j) {
    if (!std::isfinite(alpha[j]) || alpha[j] < 0.0) {
      throw InvalidInput("unfair-min weights must be finite and nonnegative");
    }
  }
  const double budget = epsilon * epsilon;
  const double slack = tol.risk_tol * std::max(1.0, budget);

  FadeSolution s;
  s.origin = SolutionOrigin::kUnfairMin;
  s.epsilon = Eigen::VectorXd::Constant(1, epsilon);
  s.alpha = alpha;
  s.signature = problem.signature;

  const PenalizedPath path(problem, 0.0, std::nullopt, tol);
  const Eigen::VectorXd ols = path.base_inverse() * problem.c;
  const double ols_risk = problem.Risk(ols);
  if (ols_risk > budget + slack) {
    std::ostringstream msg;
    msg << "unfair-min infeasible: least-squares risk " << ols_risk
        << " exceeds eps^2 = " << budget;
    throw InfeasibleError(msg.str(), ols_risk);
  }

  // Minimum-risk point on the unfairness floor: the null space of M.
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(k, k);
  for (int j = 0; j < t; ++j) {
    m += alpha[j] * problem.moments[j] * problem.moments[j].transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  std::vector<Eigen::Index> null_dirs;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (eig.eigenvalues()[i] <= 1e-10 * top) null_dirs.push_back(i);
  }
  Eigen::VectorXd floor_beta = Eigen::VectorXd::Zero(k);
  if (!null_dirs.empty()) {
    Eigen::MatrixXd basis(k, static_cast<Eigen::Index>(null_dirs.size()));
    for (size_t i = 0; i < null_dirs.size(); ++i) {
      basis.col(static_cast<Eigen::Index>(i)) =
          eig.eigenvectors().col(null_dirs[i]);
    }
    Eigen::MatrixXd reduced = basis.transpose() * problem.q * basis;
    floor_beta = basis * reduced.ldlt().solve(basis.transpose() * problem.c);
  }
  if (problem.Risk(floor_beta) <= budget + slack) {
    s.beta = floor_beta;
    s.nu = 0.0;
    s.lambda = Eigen::VectorXd::Constant(t, kInf);
    s.at_unfairness_floor = true;
    return s;
  }

  // beta(nu) = nu (M + nu Q)^-1 c = (Q + M / nu)^-1 c, so with s = 1 / nu the
  // path is the penalized solution at lambda = s * alpha. Risk increases in s.
  auto solve_at = [&](double scale) { return path.Solve(scale * alpha); };
  double lo = 1e-12;
  double hi = 1e12;
  Eigen::VectorXd beta_lo = solve_at(lo);
  Eigen::VectorXd beta_hi = solve_at(hi);
  if (problem.Risk(beta_hi) <= budget + slack) {
    s.beta = beta_hi;
    s.nu = 1.0 / hi;
    s.lambda = hi * alpha;
    return s;
  }
  double mid = lo;
  Eigen::VectorXd beta_mid = beta_lo;
  double risk_mid = problem.Risk(beta_mid);
  int it = 0;
  for (; it < 200 && std::abs(risk_mid - budget) > slack; ++it) {
    mid = std::sqrt(lo * hi);
    beta_mid = solve_at(mid);
    risk_mid = problem.Risk(beta_mid);
    if (risk_mid > budget) {
      hi = mid;
    } else {
      lo = mid;
      beta_lo = beta_mid;
    }
  }
  if (std::abs(risk_mid - budget) > slack) {
    // Bracket exhausted: keep the feasible end.
    mid = lo;
    beta_mid = beta_lo;
  }
  s.beta = beta_mid;
  s.nu = 1.0 / mid;
  s.lambda = mid * alpha;
  s.iterations = it;
  return s;
}

LambdaGrid SeedGrid(const FadeSolution& sol,
                    const std::vector<double>& spread) {
  if (sol.origin != SolutionOrigin::kRiskMin) {
    throw InvalidInput("seed_grid needs a risk-min solution");
  }
  LambdaGrid grid;
  Eigen::VectorXd seed(sol.lambda.size());
  for (Eigen::Index j = 0; j < sol.lambda.size(); ++j) {
    double center = std::min(sol.lambda[j], kMaxSeedLambda);
    seed[j] = center;
    std::vector<double> axis = {0.0, center};
    for (double factor : spread) {
      if (!std::isfinite(factor) || factor < 0.0) {
        throw InvalidInput("spread multipliers must be finite and >= 0");
      }
      axis.push_back(std::min(center * factor, kMaxSeedLambda));
    }
    std::sort(axis.begin(), axis.end());
    axis.erase(std::unique(axis.begin(), axis.end()), axis.end());
    grid.axes.push_back(std::move(axis));
  }
  grid.seed = seed;
  return grid;
}

void WriteSolutionsCsv(const std::string& path,
                       const std::vector<FadeSolution>& solutions,
                       const std::vector<std::string>& labels,
                       const std::vector<std::string>& columns) {
  csv::Table table;
  table.header.push_back("model_id");
  for (const auto& l : labels) table.header.push_back("lambda_" + l);
  for (const auto& c : columns) table.header.push_back("beta_" + c);
  for (size_t i = 0; i < solutions.size(); ++i) {
    const FadeSolution& s = solutions[i];
    if (s.beta.size() != static_cast<Eigen::Index>(columns.size())) {
      throw InvalidInput("solution width does not match the column names");
    }
    std::vector<std::string> row = {std::to_string(i)};
    for (size_t j = 0; j < labels.size(); ++j) {
      double v = static_cast<Eigen::Index>(j) < s.lambda.size()
                     ? s.lambda[static_cast<Eigen::Index>(j)]
                     : 0.0;
      row.push_back(csv::FormatDouble(v));
    }
    for (Eigen::Index j = 0; j < s.beta.size(); ++j) {
      row.push_back(csv::FormatDouble(s.beta[j]));
    }
    table.rows.push_back(std::move(row));
  }
  csv::Write(path, table);
}

SolutionTable ReadSolutionsCsv(const std::string& path) {
  csv::Table table = csv::Read(path);
  if (table.header.empty() || table.header[0] != "model_id") {
    throw InvalidInput(path + ": not a solutions file");
  }
  SolutionTable out;
  std::vector<size_t> lambda_cols, beta_cols;
  for (size_t i = 1; i < table.header.size(); ++i) {
    const std::string& h = table.header[i];
    if (h.rfind("lambda_", 0) == 0) {
      out.labels.push_back(h.substr(7));
      lambda_cols.push_back(i);
    } else if (h.rfind("beta_", 0) == 0) {
      out.columns.push_back(h.substr(5));
      beta_cols.push_back(i);
    } else {
      throw InvalidInput(path + ": unexpected column '" + h + "'");
    }
  }
  for (const auto& row : table.rows) {
    out.ids.push_back(
        static_cast<int>(csv::ParseDouble(row[0], path + " model_id")));
    Eigen::VectorXd lambda(static_cast<Eigen::Index>(lambda_cols.size()));
    for (size_t j = 0; j < lambda_cols.size(); ++j) {
      // Infinite duals are written as "inf".
      const std::string& field = row[lambda_cols[j]];
      lambda[static_cast<Eigen::Index>(j)] =
          field == "inf" ? kInf : csv::ParseDouble(field, path);
    }
    Eigen::VectorXd beta(static_cast<Eigen::Index>(beta_cols.size()));
    for (size_t j = 0; j < beta_cols.size(); ++j) {
      beta[static_cast<Eigen::Index>(j)] =
          csv::ParseDouble(row[beta_cols[j]], path);
    }
    out.lambdas.push_back(std::move(lambda));
    out.betas.push_back(std::move(beta));
  }
  return out;
}

}  // namespace fade

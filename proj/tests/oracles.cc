#include "oracles.h"

#include <cmath>
#include <limits>

namespace fade::testing {

Eigen::VectorXd DirectPenalized(const ProblemData& p,
                                const Eigen::VectorXd& lambda, double lambda0,
                                const Eigen::MatrixXd* smoothing) {
  Eigen::MatrixXd a = p.q;
  if (smoothing != nullptr) a += lambda0 * *smoothing;
  for (int j = 0; j < p.t(); ++j) {
    a += lambda[j] * p.moments[j] * p.moments[j].transpose();
  }
  return a.fullPivLu().solve(p.c);
}

NaiveMoments ComputeNaiveMoments(const Eigen::MatrixXd& basis,
                                 const Eigen::VectorXd& target,
                                 const std::vector<Eigen::VectorXd>& g) {
  const int n = static_cast<int>(basis.rows());
  const int k = static_cast<int>(basis.cols());
  NaiveMoments out;
  out.q = Eigen::MatrixXd::Zero(k, k);
  out.c = Eigen::VectorXd::Zero(k);
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += basis(i, a) * basis(i, b);
      out.q(a, b) = s / n;
    }
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += basis(i, a) * target[i];
    out.c[a] = s / n;
  }
  for (const auto& gv : g) {
    Eigen::VectorXd m(k);
    for (int a = 0; a < k; ++a) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += gv[i] * basis(i, a);
      m[a] = s / n;
    }
    out.m.push_back(m);
  }
  return out;
}

namespace {

bool Feasible(const ProblemData& p, const Eigen::VectorXd& beta,
              const Eigen::VectorXd& eps) {
  for (int j = 0; j < p.t(); ++j) {
    if (std::abs(p.moments[j].dot(beta)) > eps[j]) return false;
  }
  return true;
}

}  // namespace

LatticeResult RiskMinLattice(const ProblemData& p, const Eigen::VectorXd& eps,
                             int rounds, int points_per_axis) {
  const int k = p.k();
  // Start from the zero predictor (always feasible) with a box reaching the
  // unconstrained optimum.
  Eigen::VectorXd ols = p.q.fullPivLu().solve(p.c);
  LatticeResult best{Eigen::VectorXd::Zero(k), 0.0};
  Eigen::VectorXd center = 0.5 * ols;
  double half = 0.75 * ols.lpNorm<Eigen::Infinity>() + 1e-3;
  Eigen::VectorXi idx(k);
  for (int round = 0; round < rounds; ++round) {
    idx.setZero();
    const double h = 2.0 * half / (points_per_axis - 1);
    Eigen::VectorXd beta(k);
    bool done = false;
    while (!done) {
      for (int d = 0; d < k; ++d) beta[d] = center[d] - half + h * idx[d];
      if (Feasible(p, beta, eps)) {
        double obj = p.Objective(beta);
        if (obj < best.objective) best = {beta, obj};
      }
      int d = 0;
      while (d < k && ++idx[d] == points_per_axis) idx[d++] = 0;
      done = d == k;
    }
    center = best.beta;
    half /= 2.0;
  }
  return best;
}

NuGridResult UnfairMinNuGrid(const ProblemData& p, double eps,
                             const Eigen::VectorXd& alpha, int points,
                             double log10_lo, double log10_hi) {
  const int k = p.k();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(k, k);
  for (int j = 0; j < p.t(); ++j) {
    m += alpha[j] * p.moments[j] * p.moments[j].transpose();
  }
  NuGridResult best;
  best.objective = std::numeric_limits<double>::infinity();
  const double budget = eps * eps;
  double lo = log10_lo;
  double hi = log10_hi;
  // Each pass rescans one grid step either side of the previous best.
  for (int pass = 0; pass < 6; ++pass) {
    const double step = (hi - lo) / (points - 1);
    double best_log = lo;
    for (int i = 0; i < points; ++i) {
      double log_nu = lo + step * i;
      double nu = std::pow(10.0, log_nu);
      Eigen::VectorXd beta = nu * (m + nu * p.q).fullPivLu().solve(p.c);
      double risk = p.Risk(beta);
      if (risk > budget) continue;
      double obj = beta.dot(m * beta);
      if (obj < best.objective) {
        best = {beta, obj, risk, true};
        best_log = log_nu;
      }
    }
    if (!best.found) break;
    lo = best_log - step;
    hi = best_log + step;
  }
  return best;
}

double PairwiseAuc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1.0) continue;
    for (Eigen::Index j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0.0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / pairs;
}

double GaussHermiteExpectation(const std::function<double(double)>& h,
                               double mean, double sd, int nodes) {
  // Golub-Welsch for the probabilists' Hermite weight exp(-x^2 / 2).
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(nodes, nodes);
  for (int i = 1; i < nodes; ++i) {
    jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  double total = 0.0;
  for (int i = 0; i < nodes; ++i) {
    double x = eig.eigenvalues()[i];
    double w = eig.eigenvectors()(0, i) * eig.eigenvectors()(0, i);
    total += w * h(mean + sd * x);
  }
  return total;
}

ProblemData RandomProblem(std::mt19937_64& rng, int k, int t,
                          bool with_second_moment) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 10 * k + 20;
  Eigen::MatrixXd b(n, k);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) b(i, j) = normal(rng);
  }
  Eigen::VectorXd coef(k);
  for (int j = 0; j < k; ++j) coef[j] = normal(rng);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = b.row(i).dot(coef) + normal(rng);
  ProblemData p;
  p.q = b.transpose() * b / n;
  p.c = b.transpose() * y / n;
  for (int j = 0; j < t; ++j) {
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) g[i] = normal(rng);
    p.moments.push_back(b.transpose() * g / n);
    p.labels.push_back("g" + std::to_string(j));
  }
  if (with_second_moment) p.second_moment = y.squaredNorm() / n;
  return p;
}

}  // namespace fade::testing

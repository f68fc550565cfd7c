#ifndef FADE_SIM_H_
#define FADE_SIM_H_

#include <array>
#include <cstdint>

#include <Eigen/Dense>

#include "fade/dataset.h"

namespace fade::sim {

inline constexpr int kNumCovariates = 4;
using Coefficients = std::array<double, kNumCovariates + 1>;  // (A, X1..X4)

// Synthetic lending-style process with both potential outcomes retained.
struct DgpSpec {
  size_t n = 1000;
  uint64_t seed = 0;
  double p_sensitive = 0.3;
  std::array<double, kNumCovariates> shift = {1.0, -0.8, 4.0, 2.0};
  Coefficients decision = {0.2, -1.0, 1.0, -1.0, 1.0};
  Coefficients outcome0 = {-5.0, 2.0, -3.0, 4.0, -5.0};
  Coefficients outcome1 = {1.0, -2.0, 3.0, -4.0, 5.0};
  double propensity_cap = 0.975;

  // Throws kInvalidInput on an out-of-range probability or cap.
  void Validate() const;
};

// Columns a, x1..x4, d, y, y0, y1 with bounds [0, 1].
ColumnRoles DgpRoles();

// Each column draws from its own mt19937_64 stream seeded with
// SplitMix64(seed ^ column_id); column ids are a = 1, x = 2, d = 3, y0 = 4,
// y1 = 5.
Dataset Generate(const DgpSpec& spec);

// Linear predictor (A, X)^T coef for every row.
Eigen::VectorXd LinearIndex(const Dataset& data, const Coefficients& coef);
// P(D = 1 | A, X), capped.
Eigen::VectorXd TruePropensity(const DgpSpec& spec, const Dataset& data);
// E[Y0 | A, X]; this is also the counterfactual Bayes-optimal predictor.
Eigen::VectorXd BayesOptimal(const DgpSpec& spec, const Dataset& data);

uint64_t SplitMix64(uint64_t x);

}  // namespace fade::sim

#endif  // FADE_SIM_H_

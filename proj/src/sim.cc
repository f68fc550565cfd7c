#include "fade/sim.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "fade/errors.h"
#include "fade/glm.h"

namespace fade::sim {
namespace {

enum StreamId : uint64_t { kStreamA = 1, kStreamX, kStreamD, kStreamY0, kStreamY1 };

std::mt19937_64 Stream(uint64_t seed, StreamId id) {
  return std::mt19937_64(SplitMix64(seed ^ id));
}

double Index(const Record& r, const Coefficients& coef) {
  double z = coef[0] * r.a;
  for (int j = 0; j < kNumCovariates; ++j) z += coef[j + 1] * r.x[j];
  return z;
}

}  // namespace

uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void DgpSpec::Validate() const {
  if (n == 0) throw InvalidInput("simulation needs n >= 1");
  if (!(p_sensitive >= 0.0 && p_sensitive <= 1.0)) {
    throw InvalidInput("P(A = 1) must lie in [0, 1]");
  }
  if (!(propensity_cap > 0.0 && propensity_cap < 1.0)) {
    throw InvalidInput("propensity cap must lie in (0, 1)");
  }
}

ColumnRoles DgpRoles() {
  ColumnRoles roles;
  roles.a = "a";
  roles.y = "y";
  roles.d = "d";
  for (int j = 1; j <= kNumCovariates; ++j) {
    roles.x.push_back("x" + std::to_string(j));
  }
  roles.y0 = "y0";
  roles.y1 = "y1";
  return roles;
}

Dataset Generate(const DgpSpec& spec) {
  spec.Validate();
  auto rng_a = Stream(spec.seed, kStreamA);
  auto rng_x = Stream(spec.seed, kStreamX);
  auto rng_d = Stream(spec.seed, kStreamD);
  auto rng_y0 = Stream(spec.seed, kStreamY0);
  auto rng_y1 = Stream(spec.seed, kStreamY1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Record> records(spec.n);
  for (Record& r : records) {
    r.a = unif(rng_a) < spec.p_sensitive ? 1 : 0;
    r.x.resize(kNumCovariates);
    for (int j = 0; j < kNumCovariates; ++j) {
      r.x[j] = r.a * spec.shift[j] + normal(rng_x);
    }
    double pi = std::min(spec.propensity_cap, Expit(Index(r, spec.decision)));
    r.d = unif(rng_d) < pi ? 1 : 0;
    r.y0 = unif(rng_y0) < Expit(Index(r, spec.outcome0)) ? 1.0 : 0.0;
    r.y1 = unif(rng_y1) < Expit(Index(r, spec.outcome1)) ? 1.0 : 0.0;
    r.y = *r.d == 1 ? *r.y1 : *r.y0;
  }
  return Dataset(std::move(records), Bounds{0.0, 1.0}, DgpRoles());
}

Eigen::VectorXd LinearIndex(const Dataset& data, const Coefficients& coef) {
  Eigen::VectorXd z(static_cast<Eigen::Index>(data.size()));
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i].x.size() < kNumCovariates) {
      throw InvalidInput("records need four covariates");
    }
    z[static_cast<Eigen::Index>(i)] = Index(data[i], coef);
  }
  return z;
}

Eigen::VectorXd TruePropensity(const DgpSpec& spec, const Dataset& data) {
  return LinearIndex(data, spec.decision)
      .unaryExpr([&](double z) { return std::min(spec.propensity_cap, Expit(z)); });
}

Eigen::VectorXd BayesOptimal(const DgpSpec& spec, const Dataset& data) {
  return LinearIndex(data, spec.outcome0).unaryExpr([](double z) {
    return Expit(z);
  });
}

}  // namespace fade::sim

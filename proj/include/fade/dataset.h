#ifndef FADE_DATASET_H_
#define FADE_DATASET_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fade {

// Outcome bounds [lower, upper].
struct Bounds {
  double lower = 0.0;
  double upper = 1.0;

  bool Contains(double v) const { return v >= lower && v <= upper; }
  double Clamp(double v) const {
    return v < lower ? lower : (v > upper ? upper : v);
  }
  double Width() const { return upper - lower; }
};

// One unit: sensitive feature, covariates, prior scores, decision, outcome
// and (simulation only) both potential outcomes.
struct Record {
  int a = 0;
  std::vector<double> x;
  std::vector<double> s;
  std::optional<int> d;
  double y = 0.0;
  std::optional<double> y0;
  std::optional<double> y1;
};

// Which CSV column plays which role.
struct ColumnRoles {
  std::string a;
  std::string y;
  std::optional<std::string> d;
  std::vector<std::string> x;
  std::vector<std::string> s;
  std::optional<std::string> y0;
  std::optional<std::string> y1;

  bool operator==(const ColumnRoles&) const = default;
};

// An immutable, validated collection of records.
class Dataset {
 public:
  Dataset() = default;
  // Throws fade::Error(kInvalidInput) if any record violates the invariants.
  Dataset(std::vector<Record> records, Bounds bounds, ColumnRoles roles);

  size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const Record& operator[](size_t i) const { return records_[i]; }
  const std::vector<Record>& records() const { return records_; }
  const Bounds& bounds() const { return bounds_; }
  const ColumnRoles& roles() const { return roles_; }

  bool has_decision() const { return roles_.d.has_value(); }
  bool has_oracle() const { return roles_.y0.has_value(); }
  // True when every outcome is exactly 0 or 1.
  bool binary_outcome() const;

  Eigen::VectorXd A() const;
  Eigen::VectorXd Y() const;
  Eigen::VectorXd D() const;
  Eigen::VectorXd Y0() const;
  // Named column lookup over a, x..., s..., d, y, y0, y1.
  Eigen::VectorXd Column(const std::string& name) const;

  // Rows in the given order (indices may not repeat).
  Dataset Subset(std::span<const size_t> indices) const;
  // Rows with d == 0.
  Dataset Untreated() const;

  bool operator==(const Dataset& other) const;

 private:
  std::vector<Record> records_;
  Bounds bounds_;
  ColumnRoles roles_;
};

// Reads a headed CSV. Row order is preserved; missing values are rejected.
Dataset LoadCsv(const std::string& path, const ColumnRoles& roles,
                Bounds bounds);
void SaveCsv(const Dataset& data, const std::string& path);

// Five-way split: learn, train-nuisance, train-target, test-nuisance,
// test-target.
enum class Fold { kLearn = 0, kTrainNuis, kTrainTarget, kTestNuis, kTestTarget };
inline constexpr int kNumFolds = 5;
const char* FoldName(Fold fold);

struct SplitPlan {
  std::array<double, kNumFolds> fractions = {0.2, 0.2, 0.2, 0.2, 0.2};
  uint64_t seed = 0;
  int cross_fit_folds = 1;
};

struct SplitIndices {
  std::array<std::vector<size_t>, kNumFolds> folds;
  const std::vector<size_t>& operator[](Fold f) const {
    return folds[static_cast<int>(f)];
  }
};

// Fold sizes by largest remainder; ties go to the earlier fold.
std::array<size_t, kNumFolds> FoldSizes(size_t n, const SplitPlan& plan);
// Uniform random permutation sliced contiguously by FoldSizes.
SplitIndices SplitIndicesFor(size_t n, const SplitPlan& plan);

struct SplitData {
  std::array<Dataset, kNumFolds> folds;
  const Dataset& operator[](Fold f) const {
    return folds[static_cast<int>(f)];
  }
};
SplitData Split(const Dataset& data, const SplitPlan& plan);

// Deterministic seeded permutation of 0..n-1.
std::vector<size_t> Permutation(size_t n, uint64_t seed);

}  // namespace fade

#endif  // FADE_DATASET_H_

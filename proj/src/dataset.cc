#include "fade/dataset.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "fade/csv.h"
#include "fade/errors.h"

namespace fade {
namespace {

void CheckBinary(double v, const char* what, size_t row) {
  if (v != 0.0 && v != 1.0) {
    throw InvalidInput(std::string("non-binary ") + what + " at row " +
                       std::to_string(row + 1));
  }
}

}  // namespace

Dataset::Dataset(std::vector<Record> records, Bounds bounds, ColumnRoles roles)
    : records_(std::move(records)), bounds_(bounds), roles_(std::move(roles)) {
  if (!(bounds_.lower < bounds_.upper)) {
    throw InvalidInput("outcome bounds must satisfy lower < upper");
  }
  const size_t nx = roles_.x.size();
  const size_t ns = roles_.s.size();
  for (size_t i = 0; i < records_.size(); ++i) {
    const Record& r = records_[i];
    const std::string row = " at row " + std::to_string(i + 1);
    if (r.a != 0 && r.a != 1) throw InvalidInput("non-binary A" + row);
    if (r.x.size() != nx || r.s.size() != ns) {
      throw InvalidInput("covariate arity mismatch" + row);
    }
    if (roles_.d.has_value() != r.d.has_value()) {
      throw InvalidInput("decision presence mismatch" + row);
    }
    if (r.d && *r.d != 0 && *r.d != 1) throw InvalidInput("non-binary D" + row);
    if (!bounds_.Contains(r.y)) {
      throw InvalidInput("outcome " + std::to_string(r.y) +
                         " outside bounds" + row);
    }
    if (roles_.y0.has_value() != r.y0.has_value() ||
        roles_.y1.has_value() != r.y1.has_value()) {
      throw InvalidInput("oracle column presence mismatch" + row);
    }
    if (r.y0 && !bounds_.Contains(*r.y0)) {
      throw InvalidInput("y0 outside bounds" + row);
    }
    if (r.y1 && !bounds_.Contains(*r.y1)) {
      throw InvalidInput("y1 outside bounds" + row);
    }
    if (r.d && r.y0 && r.y1) {
      double expected = *r.d == 1 ? *r.y1 : *r.y0;
      if (r.y != expected) {
        throw InvalidInput("consistency y = d*y1 + (1-d)*y0 violated" + row);
      }
    }
  }
}

bool Dataset::binary_outcome() const {
  return std::all_of(records_.begin(), records_.end(),
                     [](const Record& r) { return r.y == 0.0 || r.y == 1.0; });
}

Eigen::VectorXd Dataset::A() const {
  Eigen::VectorXd v(size());
  for (size_t i = 0; i < size(); ++i) v[i] = records_[i].a;
  return v;
}

Eigen::VectorXd Dataset::Y() const {
  Eigen::VectorXd v(size());
  for (size_t i = 0; i < size(); ++i) v[i] = records_[i].y;
  return v;
}

Eigen::VectorXd Dataset::D() const {
  if (!has_decision()) throw InvalidInput("dataset has no decision column");
  Eigen::VectorXd v(size());
  for (size_t i = 0; i < size(); ++i) v[i] = *records_[i].d;
  return v;
}

Eigen::VectorXd Dataset::Y0() const {
  if (!has_oracle()) throw InvalidInput("dataset has no y0 oracle column");
  Eigen::VectorXd v(size());
  for (size_t i = 0; i < size(); ++i) v[i] = *records_[i].y0;
  return v;
}

Eigen::VectorXd Dataset::Column(const std::string& name) const {
  Eigen::VectorXd v(size());
  auto fill = [&](auto getter) {
    for (size_t i = 0; i < size(); ++i) v[i] = getter(records_[i]);
    return v;
  };
  if (name == roles_.a) return fill([](const Record& r) { return double(r.a); });
  if (name == roles_.y) return fill([](const Record& r) { return r.y; });
  if (roles_.d && name == *roles_.d) return D();
  if (roles_.y0 && name == *roles_.y0) return Y0();
  if (roles_.y1 && name == *roles_.y1) {
    return fill([](const Record& r) { return *r.y1; });
  }
  for (size_t j = 0; j < roles_.x.size(); ++j) {
    if (roles_.x[j] == name) {
      return fill([j](const Record& r) { return r.x[j]; });
    }
  }
  for (size_t j = 0; j < roles_.s.size(); ++j) {
    if (roles_.s[j] == name) {
      return fill([j](const Record& r) { return r.s[j]; });
    }
  }
  throw InvalidInput("unknown column '" + name + "'");
}

Dataset Dataset::Subset(std::span<const size_t> indices) const {
  std::vector<Record> rows;
  rows.reserve(indices.size());
  for (size_t i : indices) {
    if (i >= size()) throw InvalidInput("subset index out of range");
    rows.push_back(records_[i]);
  }
  return Dataset(std::move(rows), bounds_, roles_);
}

Dataset Dataset::Untreated() const {
  if (!has_decision()) throw InvalidInput("dataset has no decision column");
  std::vector<Record> rows;
  for (const Record& r : records_) {
    if (*r.d == 0) rows.push_back(r);
  }
  return Dataset(std::move(rows), bounds_, roles_);
}

bool Dataset::operator==(const Dataset& other) const {
  if (bounds_.lower != other.bounds_.lower ||
      bounds_.upper != other.bounds_.upper || !(roles_ == other.roles_) ||
      size() != other.size()) {
    return false;
  }
  for (size_t i = 0; i < size(); ++i) {
    const Record& l = records_[i];
    const Record& r = other.records_[i];
    if (l.a != r.a || l.x != r.x || l.s != r.s || l.d != r.d || l.y != r.y ||
        l.y0 != r.y0 || l.y1 != r.y1) {
      return false;
    }
  }
  return true;
}

Dataset LoadCsv(const std::string& path, const ColumnRoles& roles,
                Bounds bounds) {
  if (roles.a.empty()) throw InvalidInput("role map must name an A column");
  if (roles.y.empty()) throw InvalidInput("role map must name a Y column");
  std::vector<std::string> named = {roles.a, roles.y};
  if (roles.d) named.push_back(*roles.d);
  if (roles.y0) named.push_back(*roles.y0);
  if (roles.y1) named.push_back(*roles.y1);
  named.insert(named.end(), roles.x.begin(), roles.x.end());
  named.insert(named.end(), roles.s.begin(), roles.s.end());
  std::unordered_set<std::string> seen;
  for (const auto& n : named) {
    if (!seen.insert(n).second) {
      throw InvalidInput("column '" + n + "' assigned more than one role");
    }
  }

  csv::Table table = csv::Read(path);
  std::unordered_set<std::string> header_names;
  for (const auto& h : table.header) {
    if (!header_names.insert(h).second) {
      throw InvalidInput(path + ": duplicate header column '" + h + "'");
    }
  }
  auto index_of = [&](const std::string& name) {
    int idx = table.ColumnIndex(name);
    if (idx < 0) throw InvalidInput(path + ": missing column '" + name + "'");
    return static_cast<size_t>(idx);
  };
  const size_t ia = index_of(roles.a);
  const size_t iy = index_of(roles.y);
  std::optional<size_t> id, iy0, iy1;
  if (roles.d) id = index_of(*roles.d);
  if (roles.y0) iy0 = index_of(*roles.y0);
  if (roles.y1) iy1 = index_of(*roles.y1);
  std::vector<size_t> ix, is;
  for (const auto& n : roles.x) ix.push_back(index_of(n));
  for (const auto& n : roles.s) is.push_back(index_of(n));

  std::vector<Record> records;
  records.reserve(table.rows.size());
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    auto num = [&](size_t col) {
      return csv::ParseDouble(row[col], path + " row " + std::to_string(i + 1) +
                                            " column " + table.header[col]);
    };
    Record r;
    double a = num(ia);
    CheckBinary(a, "A", i);
    r.a = static_cast<int>(a);
    r.y = num(iy);
    if (id) {
      double d = num(*id);
      CheckBinary(d, "D", i);
      r.d = static_cast<int>(d);
    }
    if (iy0) r.y0 = num(*iy0);
    if (iy1) r.y1 = num(*iy1);
    for (size_t c : ix) r.x.push_back(num(c));
    for (size_t c : is) r.s.push_back(num(c));
    records.push_back(std::move(r));
  }
  return Dataset(std::move(records), bounds, roles);
}

void SaveCsv(const Dataset& data, const std::string& path) {
  const ColumnRoles& roles = data.roles();
  csv::Table table;
  table.header.push_back(roles.a);
  table.header.insert(table.header.end(), roles.x.begin(), roles.x.end());
  table.header.insert(table.header.end(), roles.s.begin(), roles.s.end());
  if (roles.d) table.header.push_back(*roles.d);
  table.header.push_back(roles.y);
  if (roles.y0) table.header.push_back(*roles.y0);
  if (roles.y1) table.header.push_back(*roles.y1);
  for (const Record& r : data.records()) {
    std::vector<std::string> row;
    row.push_back(std::to_string(r.a));
    for (double v : r.x) row.push_back(csv::FormatDouble(v));
    for (double v : r.s) row.push_back(csv::FormatDouble(v));
    if (r.d) row.push_back(std::to_string(*r.d));
    row.push_back(csv::FormatDouble(r.y));
    if (r.y0) row.push_back(csv::FormatDouble(*r.y0));
    if (r.y1) row.push_back(csv::FormatDouble(*r.y1));
    table.rows.push_back(std::move(row));
  }
  csv::Write(path, table);
}

const char* FoldName(Fold fold) {
  switch (fold) {
    case Fold::kLearn:
      return "learn";
    case Fold::kTrainNuis:
      return "train_nuis";
    case Fold::kTrainTarget:
      return "train_target";
    case Fold::kTestNuis:
      return "test_nuis";
    case Fold::kTestTarget:
      return "test_target";
  }
  return "unknown";
}

std::vector<size_t> Permutation(size_t n, uint64_t seed) {
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  // Fisher-Yates with rejection sampling so the result does not depend on the
  // standard library's distribution implementation.
  for (size_t i = n; i > 1; --i) {
    const uint64_t bound = i;
    const uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    uint64_t draw;
    do {
      draw = rng();
    } while (draw >= limit);
    std::swap(perm[i - 1], perm[draw % bound]);
  }
  return perm;
}

std::array<size_t, kNumFolds> FoldSizes(size_t n, const SplitPlan& plan) {
  double total = 0.0;
  for (double f : plan.fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) {
      throw InvalidInput("split fractions must be finite and nonnegative");
    }
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidInput("split fractions sum to " + std::to_string(total) +
                       ", expected 1");
  }
  if (plan.cross_fit_folds < 1) {
    throw InvalidInput("cross_fit_folds must be >= 1");
  }
  std::array<size_t, kNumFolds> sizes{};
  std::array<double, kNumFolds> remainders{};
  size_t assigned = 0;
  for (int i = 0; i < kNumFolds; ++i) {
    double exact = plan.fractions[i] * static_cast<double>(n);
    sizes[i] = static_cast<size_t>(std::floor(exact));
    remainders[i] = exact - std::floor(exact);
    assigned += sizes[i];
  }
  std::array<int, kNumFolds> order = {0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(), [&](int l, int r) {
    return remainders[l] > remainders[r];
  });
  for (size_t k = 0; assigned < n; ++k, ++assigned) {
    sizes[order[k % kNumFolds]] += 1;
  }
  return sizes;
}

SplitIndices SplitIndicesFor(size_t n, const SplitPlan& plan) {
  auto sizes = FoldSizes(n, plan);
  for (int i = 0; i < kNumFolds; ++i) {
    if (plan.fractions[i] > 0.0 && sizes[i] == 0) {
      throw InvalidInput(std::string("fold ") + FoldName(static_cast<Fold>(i)) +
                         " is empty");
    }
  }
  if (sizes[static_cast<int>(Fold::kTrainTarget)] == 0) {
    throw InvalidInput("train_target fold is required");
  }
  auto perm = Permutation(n, plan.seed);
  SplitIndices out;
  size_t offset = 0;
  for (int i = 0; i < kNumFolds; ++i) {
    out.folds[i].assign(perm.begin() + offset, perm.begin() + offset + sizes[i]);
    offset += sizes[i];
  }
  return out;
}

SplitData Split(const Dataset& data, const SplitPlan& plan) {
  SplitIndices idx = SplitIndicesFor(data.size(), plan);
  SplitData out;
  for (int i = 0; i < kNumFolds; ++i) out.folds[i] = data.Subset(idx.folds[i]);
  return out;
}

}  // namespace fade

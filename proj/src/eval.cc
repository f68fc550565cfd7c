#include "fade/eval.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "fade/csv.h"
#include "fade/errors.h"
#include "fade/parallel.h"

namespace fade {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void CheckLength(const Eigen::VectorXd& predictions, size_t n) {
  if (predictions.size() != static_cast<Eigen::Index>(n)) {
    throw InvalidInput("prediction length " +
                       std::to_string(predictions.size()) +
                       " does not match the sample size " + std::to_string(n));
  }
}

// Signed disparity and its delta-method half-width from per-unit weights.
Estimate RatioDifference(const Eigen::VectorXd& f, const GroupWeights& w,
                         const std::string& label, double alpha) {
  const double p0 = w.first.mean();
  const double p1 = w.second.mean();
  if (std::abs(p0) < 1e-12 || std::abs(p1) < 1e-12) {
    throw InvalidInput("empty (A, outcome) cell for " + label + " disparity");
  }
  const double r0 = w.first.dot(f) / static_cast<double>(f.size()) / p0;
  const double r1 = w.second.dot(f) / static_cast<double>(f.size()) / p1;
  Eigen::ArrayXd eta0 = w.first.array() * (f.array() - r0);
  Eigen::ArrayXd eta1 = w.second.array() * (f.array() - r1);
  Eigen::VectorXd terms =
      (w.first_scale * eta0 / p0 - w.second_scale * eta1 / p1).matrix();
  return {w.first_scale * r0 - w.second_scale * r1, CiHalfWidth(terms, alpha)};
}

}  // namespace

double NormalQuantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidInput("normal quantile needs p in (0, 1)");
  }
  // Newton on Phi(x) - p, started from a logistic approximation.
  double x = std::log(p / (1.0 - p)) / 1.702;
  for (int i = 0; i < 50; ++i) {
    double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
    double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    double step = (cdf - p) / pdf;
    x -= step;
    if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

double CiHalfWidth(const Eigen::VectorXd& terms, double alpha) {
  const Eigen::Index n = terms.size();
  if (n < 2) return 0.0;
  const double mean = terms.mean();
  const double var = (terms.array() - mean).square().sum() / (n - 1);
  return NormalQuantile(1.0 - alpha / 2.0) * std::sqrt(var / n);
}

Estimate EstimateRisk(const Eigen::VectorXd& predictions, const Dataset& data,
                      OutcomeMode mode, const PseudoOutcomes* pseudo,
                      double alpha) {
  CheckLength(predictions, data.size());
  Eigen::VectorXd terms;
  if (mode == OutcomeMode::kObservable) {
    terms = (predictions - data.Y()).array().square().matrix();
  } else {
    if (pseudo == nullptr || !pseudo->phibar) {
      throw InvalidInput("counterfactual risk requires phi and phibar");
    }
    if (pseudo->phi.size() != predictions.size() ||
        pseudo->phibar->size() != predictions.size()) {
      throw InvalidInput("pseudo-outcome length does not match predictions");
    }
    const Eigen::ArrayXd f = predictions.array();
    terms = (f.square() - 2.0 * f * pseudo->phi.array() +
             pseudo->phibar->array())
                .matrix();
  }
  return {terms.mean(), CiHalfWidth(terms, alpha)};
}

Estimate EstimateDisparity(const Eigen::VectorXd& predictions,
                           const FairnessSpec& spec, const Dataset& data,
                           const std::optional<Eigen::VectorXd>& outcome_proxy,
                           double alpha, bool clip_proxy) {
  CheckLength(predictions, data.size());
  Eigen::VectorXd outcome;
  if (spec.kind == DisparityKind::kRate) {
    outcome = Eigen::VectorXd::Zero(predictions.size());
  } else if (spec.mode == OutcomeMode::kObservable) {
    outcome = data.Y();
  } else {
    if (!outcome_proxy) {
      throw InvalidInput("counterfactual disparity requires an outcome proxy");
    }
    if (outcome_proxy->size() != predictions.size()) {
      throw InvalidInput("outcome proxy length does not match predictions");
    }
    outcome = *outcome_proxy;
    if (clip_proxy) outcome = outcome.cwiseMax(0.0).cwiseMin(1.0);
  }
  GroupWeights w = FairnessGroupWeights(spec, data.A(), outcome);
  return RatioDifference(predictions, w, spec.Label(), alpha);
}

double Auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  if (scores.size() != labels.size()) {
    throw InvalidInput("AUC scores and labels differ in length");
  }
  const Eigen::Index n = scores.size();
  double positives = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0) {
      throw InvalidInput("AUC labels must be 0 or 1");
    }
    positives += labels[i];
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw InvalidInput("AUC needs both classes present");
  }
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });
  // Sum of midranks of the positives.
  double rank_sum = 0.0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (size_t r = i; r < j; ++r) rank_sum += labels[order[r]] * midrank;
    i = j;
  }
  return (rank_sum - positives * (positives + 1.0) / 2.0) /
         (positives * negatives);
}

Eigen::VectorXd ToClassifier(const Eigen::VectorXd& predictions,
                             const ClassifierRule& rule) {
  Eigen::VectorXd out(predictions.size());
  if (rule.kind == ClassifierRule::Kind::kThreshold) {
    for (Eigen::Index i = 0; i < predictions.size(); ++i) {
      out[i] = predictions[i] >= rule.threshold ? 1.0 : 0.0;
    }
    return out;
  }
  std::mt19937_64 rng(rule.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    const double p = predictions[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidInput("Bernoulli classifier needs predictions in [0, 1]");
    }
    out[i] = unif(rng) < p ? 1.0 : 0.0;
  }
  return out;
}

const char* EvalTargetName(EvalTarget target) {
  switch (target) {
    case EvalTarget::kObservable:
      return "observable";
    case EvalTarget::kCounterfactual:
      return "counterfactual";
    case EvalTarget::kOracle:
      return "oracle";
  }
  return "unknown";
}

EvalTarget ParseEvalTarget(const std::string& name) {
  if (name == "observable") return EvalTarget::kObservable;
  if (name == "counterfactual") return EvalTarget::kCounterfactual;
  if (name == "oracle") return EvalTarget::kOracle;
  throw InvalidInput("unknown evaluation target '" + name + "'");
}

Dataset OracleView(const Dataset& data) {
  if (!data.has_oracle()) {
    throw InvalidInput("oracle evaluation needs a y0 column");
  }
  ColumnRoles roles = data.roles();
  roles.d.reset();
  roles.y0.reset();
  roles.y1.reset();
  std::vector<Record> records = data.records();
  for (Record& r : records) {
    r.y = *r.y0;
    r.d.reset();
    r.y0.reset();
    r.y1.reset();
  }
  return Dataset(std::move(records), data.bounds(), std::move(roles));
}

double PerformanceProfile::Metric(const std::string& name) const {
  if (name == "mse") return mse;
  for (const auto& d : disparities) {
    if (d.label == name) return d.abs_value;
  }
  throw InvalidInput("profile has no metric '" + name + "'");
}

Evaluator::Evaluator(const Dataset& test, EvalTarget target,
                     std::vector<FairnessSpec> specs,
                     std::optional<PseudoOutcomes> pseudo, double alpha,
                     bool clip_proxy)
    : target_(target),
      specs_(std::move(specs)),
      pseudo_(std::move(pseudo)),
      alpha_(alpha),
      clip_proxy_(clip_proxy) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidInput("CI level alpha must lie in (0, 1)");
  }
  data_ = target == EvalTarget::kOracle ? OracleView(test) : test;
  const OutcomeMode spec_mode = target == EvalTarget::kCounterfactual
                                    ? OutcomeMode::kCounterfactual
                                    : OutcomeMode::kObservable;
  for (auto& s : specs_) s.mode = spec_mode;

  if (target == EvalTarget::kCounterfactual) {
    if (!pseudo_ || !pseudo_->phibar) {
      throw InvalidInput("counterfactual evaluation needs phi and phibar");
    }
    if (pseudo_->phi.size() != static_cast<Eigen::Index>(data_.size())) {
      throw InvalidInput("pseudo-outcomes do not match the test fold");
    }
    if (!data_.has_decision()) {
      throw InvalidInput("counterfactual evaluation needs a decision column");
    }
    outcome_ = pseudo_->phi;
  } else {
    outcome_ = data_.Y();
  }

  // AUC labels: observed outcomes (restricted to D = 0 in counterfactual
  // mode). Non-binary outcomes leave the AUC undefined.
  const Eigen::VectorXd y = data_.Y();
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (target == EvalTarget::kCounterfactual && *data_[i].d != 0) continue;
    auc_rows_.push_back(i);
  }
  auc_labels_.resize(static_cast<Eigen::Index>(auc_rows_.size()));
  for (size_t r = 0; r < auc_rows_.size(); ++r) {
    auc_labels_[static_cast<Eigen::Index>(r)] = y[auc_rows_[r]];
  }
}

PerformanceProfile Evaluator::Profile(int id, const Eigen::VectorXd& predictions,
                                      const Eigen::VectorXd& lambda) const {
  CheckLength(predictions, data_.size());
  PerformanceProfile p;
  p.id = id;
  p.lambda = lambda;
  p.n_test = data_.size();
  const OutcomeMode mode = target_ == EvalTarget::kCounterfactual
                               ? OutcomeMode::kCounterfactual
                               : OutcomeMode::kObservable;
  Estimate risk = EstimateRisk(predictions, data_, mode,
                               pseudo_ ? &*pseudo_ : nullptr, alpha_);
  p.mse = risk.value;
  p.mse_ci_half_width = risk.ci_half_width;

  Eigen::VectorXd scores(auc_labels_.size());
  for (size_t r = 0; r < auc_rows_.size(); ++r) {
    scores[static_cast<Eigen::Index>(r)] = predictions[auc_rows_[r]];
  }
  const bool binary = (auc_labels_.array() == 0.0 || auc_labels_.array() == 1.0).all();
  const double pos = auc_labels_.sum();
  p.auc = binary && pos > 0.0 && pos < static_cast<double>(auc_labels_.size())
              ? Auc(scores, auc_labels_)
              : kNaN;

  std::optional<Eigen::VectorXd> proxy;
  if (mode == OutcomeMode::kCounterfactual) proxy = outcome_;
  for (const auto& spec : specs_) {
    Estimate e =
        EstimateDisparity(predictions, spec, data_, proxy, alpha_, clip_proxy_);
    p.disparities.push_back(
        {spec.Label(), e.value, std::abs(e.value), e.ci_half_width});
  }
  return p;
}

std::vector<PerformanceProfile> ProfileAll(
    const Evaluator& evaluator,
    const std::vector<Eigen::VectorXd>& predictions,
    const std::vector<Eigen::VectorXd>& lambdas, int jobs) {
  if (!lambdas.empty() && lambdas.size() != predictions.size()) {
    throw InvalidInput("one penalty vector per prediction is required");
  }
  std::vector<PerformanceProfile> out(predictions.size());
  ParallelFor(out.size(), jobs, [&](size_t i) {
    out[i] = evaluator.Profile(static_cast<int>(i), predictions[i],
                               lambdas.empty() ? Eigen::VectorXd() : lambdas[i]);
  });
  return out;
}

int SelectMinNorm(const std::vector<PerformanceProfile>& profiles,
                  const std::vector<std::string>& metrics) {
  if (profiles.empty()) throw InvalidInput("no profiles to select from");
  if (metrics.empty()) throw InvalidInput("selection needs at least one metric");
  size_t best = 0;
  double best_norm = 0.0;
  for (size_t i = 0; i < profiles.size(); ++i) {
    double sq = 0.0;
    for (const auto& m : metrics) {
      double v = profiles[i].Metric(m);
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (i == 0) {
      best_norm = norm;
      continue;
    }
    const PerformanceProfile& a = profiles[i];
    const PerformanceProfile& b = profiles[best];
    bool better = norm < best_norm ||
                  (norm == best_norm &&
                   (a.mse < b.mse || (a.mse == b.mse && a.id < b.id)));
    if (better) {
      best = i;
      best_norm = norm;
    }
  }
  return profiles[best].id;
}

std::vector<std::vector<std::string>> SelectionSubsets(
    const std::vector<std::string>& labels) {
  const size_t t = labels.size();
  std::vector<std::vector<std::string>> out;
  for (size_t size = 0; size <= t; ++size) {
    // Masks with `size` bits, in increasing order of the mask's label order.
    std::vector<bool> pick(t, false);
    std::fill(pick.begin(), pick.begin() + static_cast<long>(size), true);
    do {
      std::vector<std::string> subset = {"mse"};
      for (size_t j = 0; j < t; ++j) {
        if (pick[j]) subset.push_back(labels[j]);
      }
      out.push_back(std::move(subset));
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  return out;
}

void WriteFrontierCsv(const std::string& path,
                      const std::vector<PerformanceProfile>& profiles,
                      const std::vector<std::string>& lambda_labels) {
  csv::Table table;
  table.header.push_back("model_id");
  for (const auto& l : lambda_labels) table.header.push_back("lambda_" + l);
  table.header.insert(table.header.end(), {"mse", "mse_ci", "auc"});
  if (!profiles.empty()) {
    for (const auto& d : profiles.front().disparities) {
      table.header.push_back(d.label);
      table.header.push_back("abs_" + d.label);
      table.header.push_back("ci_" + d.label);
    }
  }
  table.header.push_back("n_test");
  for (const auto& p : profiles) {
    std::vector<std::string> row = {std::to_string(p.id)};
    for (size_t j = 0; j < lambda_labels.size(); ++j) {
      const auto idx = static_cast<Eigen::Index>(j);
      row.push_back(csv::FormatDouble(idx < p.lambda.size() ? p.lambda[idx] : 0.0));
    }
    row.push_back(csv::FormatDouble(p.mse));
    row.push_back(csv::FormatDouble(p.mse_ci_half_width));
    row.push_back(std::isnan(p.auc) ? "nan" : csv::FormatDouble(p.auc));
    for (const auto& d : p.disparities) {
      row.push_back(csv::FormatDouble(d.signed_value));
      row.push_back(csv::FormatDouble(d.abs_value));
      row.push_back(csv::FormatDouble(d.ci_half_width));
    }
    row.push_back(std::to_string(p.n_test));
    table.rows.push_back(std::move(row));
  }
  csv::Write(path, table);
}

std::vector<PerformanceProfile> ReadFrontierCsv(const std::string& path) {
  csv::Table table = csv::Read(path);
  const auto& h = table.header;
  auto need = [&](const std::string& name) {
    int i = table.ColumnIndex(name);
    if (i < 0) throw InvalidInput(path + ": missing column '" + name + "'");
    return static_cast<size_t>(i);
  };
  const size_t id_col = need("model_id");
  const size_t mse_col = need("mse");
  const size_t ci_col = need("mse_ci");
  const size_t auc_col = need("auc");
  const size_t n_col = need("n_test");
  std::vector<size_t> lambda_cols;
  for (size_t i = 0; i < h.size(); ++i) {
    if (h[i].rfind("lambda_", 0) == 0) lambda_cols.push_back(i);
  }
  std::vector<std::string> labels;
  for (size_t i = auc_col + 1; i + 2 < n_col; i += 3) labels.push_back(h[i]);
  std::vector<PerformanceProfile> out;
  for (const auto& row : table.rows) {
    PerformanceProfile p;
    p.id = static_cast<int>(csv::ParseDouble(row[id_col], "model_id"));
    p.lambda.resize(static_cast<Eigen::Index>(lambda_cols.size()));
    for (size_t j = 0; j < lambda_cols.size(); ++j) {
      const std::string& field = row[lambda_cols[j]];
      p.lambda[static_cast<Eigen::Index>(j)] =
          field == "inf" ? std::numeric_limits<double>::infinity()
                         : csv::ParseDouble(field, h[lambda_cols[j]]);
    }
    p.mse = csv::ParseDouble(row[mse_col], "mse");
    p.mse_ci_half_width = csv::ParseDouble(row[ci_col], "mse_ci");
    p.auc = row[auc_col] == "nan" ? kNaN : csv::ParseDouble(row[auc_col], "auc");
    for (size_t j = 0; j < labels.size(); ++j) {
      const size_t base = auc_col + 1 + 3 * j;
      p.disparities.push_back({labels[j], csv::ParseDouble(row[base], h[base]),
                               csv::ParseDouble(row[base + 1], h[base + 1]),
                               csv::ParseDouble(row[base + 2], h[base + 2])});
    }
    p.n_test = static_cast<size_t>(csv::ParseDouble(row[n_col], "n_test"));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace fade

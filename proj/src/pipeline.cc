#include "fade/pipeline.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fade/csv.h"
#include "fade/errors.h"
#include "fade/glm.h"
#include "fade/parallel.h"

namespace fade {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace artifacts {
std::string FoldFile(Fold fold) {
  return std::string("fold_") + FoldName(fold) + ".csv";
}
}  // namespace artifacts

namespace {

Error StageMismatch(const std::string& message) {
  return Error(ErrorKind::kStageMismatch, message);
}

std::string OutPath(const RunConfig& config, const std::string& name) {
  return (fs::path(config.output_dir) / name).string();
}

std::string RequireArtifact(const RunConfig& config, const std::string& name,
                            const char* producer) {
  std::string path = OutPath(config, name);
  if (!fs::exists(path)) {
    throw StageMismatch("missing upstream artifact " + path + "; run the '" +
                        producer + "' stage first");
  }
  return path;
}

void EnsureOutputDir(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) {
    throw ConfigError("cannot create output directory " + config.output_dir +
                      ": " + ec.message());
  }
}

ColumnRoles DataRoles(const RunConfig& config) {
  return config.dgp ? sim::DgpRoles() : config.roles;
}

Bounds DataBounds(const RunConfig& config) {
  return config.dgp ? Bounds{0.0, 1.0} : config.bounds;
}

std::string ResolvePath(const std::string& path, const std::string& base) {
  if (path.empty() || base.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).string();
}

// ---------------------------------------------------------------------------
// Config parsing.

template <typename T>
T Get(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

Eigen::VectorXd ToVector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

void RejectUnknownKeys(const json& j, const std::set<std::string>& known,
                       const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

CellPredicate ParsePredicate(const json& j) {
  CellPredicate h{};
  if (!j.is_array() || j.size() != 2) {
    throw ConfigError("cell predicate must be [[a0y0, a0y1], [a1y0, a1y1]]");
  }
  for (int a = 0; a < 2; ++a) {
    if (!j[a].is_array() || j[a].size() != 2) {
      throw ConfigError("cell predicate rows need two entries");
    }
    for (int y = 0; y < 2; ++y) h[a][y] = j[a][y].get<int>() != 0;
  }
  return h;
}

sim::DgpSpec ParseDgp(const json& j, uint64_t seed) {
  sim::DgpSpec spec;
  spec.n = Get<size_t>(j, "n", spec.n);
  spec.seed = Get<uint64_t>(j, "seed", seed);
  spec.p_sensitive = Get<double>(j, "p_sensitive", spec.p_sensitive);
  spec.propensity_cap = Get<double>(j, "propensity_cap", spec.propensity_cap);
  if (j.contains("shift")) {
    auto v = j.at("shift").get<std::vector<double>>();
    if (v.size() != spec.shift.size()) throw ConfigError("dgp.shift needs 4 values");
    std::copy(v.begin(), v.end(), spec.shift.begin());
  }
  auto coef = [&](const char* key, sim::Coefficients& out) {
    if (!j.contains(key)) return;
    auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != out.size()) {
      throw ConfigError(std::string("dgp.") + key + " needs 5 values");
    }
    std::copy(v.begin(), v.end(), out.begin());
  };
  coef("decision", spec.decision);
  coef("outcome0", spec.outcome0);
  coef("outcome1", spec.outcome1);
  return spec;
}

BasisSourceConfig ParseBasisSource(const json& j, const std::string& base) {
  BasisSourceConfig s;
  s.kind = Get<std::string>(j, "kind", "");
  s.column = Get<std::string>(j, "column", "");
  s.features = Get<std::vector<std::string>>(j, "features", {});
  std::string link = Get<std::string>(j, "link", "logit");
  if (link == "logit") {
    s.link = Link::kLogit;
  } else if (link == "identity") {
    s.link = Link::kIdentity;
  } else {
    throw ConfigError("basis link must be logit or identity");
  }
  s.train_path = ResolvePath(Get<std::string>(j, "train", ""), base);
  s.test_path = ResolvePath(Get<std::string>(j, "test", ""), base);
  std::string fallback = s.kind == "mean" ? "mean" : s.column;
  s.name = Get<std::string>(j, "name", fallback);
  static const std::set<std::string> kinds = {"mean", "prior_score", "raw",
                                              "model", "predictions"};
  if (!kinds.count(s.kind)) {
    throw ConfigError("unknown basis source kind '" + s.kind + "'");
  }
  if (s.name.empty()) throw ConfigError("basis source of kind " + s.kind + " needs a name");
  return s;
}

FairnessSpec ParseFairness(const json& j) {
  FairnessSpec spec;
  try {
    spec.kind = ParseDisparityKind(Get<std::string>(j, "kind", ""));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  spec.name = Get<std::string>(j, "name", "");
  if (spec.kind == DisparityKind::kCustom) {
    if (spec.name.empty()) throw ConfigError("custom disparity needs a name");
    if (!j.contains("h0") || !j.contains("h1")) {
      throw ConfigError("custom disparity needs predicates h0 and h1");
    }
    CustomDisparity c;
    c.alpha0 = Get<double>(j, "alpha0", 1.0);
    c.alpha1 = Get<double>(j, "alpha1", 1.0);
    c.h0 = ParsePredicate(j.at("h0"));
    c.h1 = ParsePredicate(j.at("h1"));
    spec.custom = c;
  }
  return spec;
}

SolverJob ParseSolver(const json& j) {
  SolverJob job;
  std::string kind = Get<std::string>(j, "kind", "grid");
  if (kind == "grid") {
    job.kind = SolverJob::Kind::kGrid;
  } else if (kind == "risk_min") {
    job.kind = SolverJob::Kind::kRiskMin;
  } else if (kind == "unfair_min") {
    job.kind = SolverJob::Kind::kUnfairMin;
  } else if (kind == "seeded_grid") {
    job.kind = SolverJob::Kind::kSeededGrid;
  } else {
    throw ConfigError("unknown solver kind '" + kind + "'");
  }
  job.axes = Get<std::vector<std::vector<double>>>(j, "axes", {});
  if (j.contains("axis")) {
    if (!job.axes.empty()) throw ConfigError("give either solver.axis or solver.axes");
    // A single axis is shared by every fairness spec.
    job.axes.push_back(j.at("axis").get<std::vector<double>>());
  }
  if (job.kind == SolverJob::Kind::kUnfairMin) {
    job.unfair_epsilon = Get<double>(j, "epsilon", 0.0);
  } else if (j.contains("epsilon")) {
    std::vector<double> eps;
    for (const auto& e : j.at("epsilon")) {
      if (e.is_string() && e.get<std::string>() == "inf") {
        eps.push_back(std::numeric_limits<double>::infinity());
      } else {
        eps.push_back(e.get<double>());
      }
    }
    job.epsilon = ToVector(eps);
  }
  if (j.contains("alpha")) job.alpha = ToVector(j.at("alpha").get<std::vector<double>>());
  job.spread = Get<std::vector<double>>(j, "spread", job.spread);
  job.lambda0 = Get<double>(j, "lambda0", 0.0);
  if (j.contains("smoothing")) {
    auto rows = j.at("smoothing").get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd k(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw ConfigError("solver.smoothing must be square");
      for (size_t c = 0; c < rows.size(); ++c) {
        k(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    job.smoothing = k;
  }
  job.tolerances.kkt_tol = Get<double>(j, "kkt_tol", job.tolerances.kkt_tol);
  job.tolerances.risk_tol = Get<double>(j, "risk_tol", job.tolerances.risk_tol);
  job.tolerances.breakdown_tol =
      Get<double>(j, "breakdown_tol", job.tolerances.breakdown_tol);
  return job;
}

// ---------------------------------------------------------------------------
// Samples and artifacts.

Dataset Concat(const Dataset& first, const Dataset& second) {
  std::vector<Record> records = first.records();
  records.insert(records.end(), second.records().begin(),
                 second.records().end());
  return Dataset(std::move(records), first.bounds(), first.roles());
}

SplitData LoadFolds(const RunConfig& config) {
  SplitData folds;
  for (int f = 0; f < kNumFolds; ++f) {
    std::string path = RequireArtifact(
        config, artifacts::FoldFile(static_cast<Fold>(f)), "split");
    folds.folds[f] = LoadCsv(path, DataRoles(config), DataBounds(config));
  }
  return folds;
}

// The sample the weights are fit on (train) or evaluated on (test), and the
// fold its nuisances are trained on when not cross-fitting.
struct Samples {
  Dataset train_nuis, train_target, test_nuis, test_target;
};

Samples TargetSamples(const RunConfig& config, const SplitData& folds) {
  Samples s{folds[Fold::kTrainNuis], folds[Fold::kTrainTarget],
            folds[Fold::kTestNuis], folds[Fold::kTestTarget]};
  if (config.split.cross_fit_folds >= 2 &&
      config.mode == OutcomeMode::kCounterfactual) {
    s.train_target = Concat(s.train_nuis, s.train_target);
    s.test_target = Concat(s.test_nuis, s.test_target);
  }
  return s;
}

void WritePseudo(const std::string& path, const NuisanceFit& fit,
                 const PseudoOutcomes& pseudo) {
  csv::Table t;
  t.header = {"pi", "mu0", "nu0", "phi", "phibar"};
  for (Eigen::Index i = 0; i < pseudo.phi.size(); ++i) {
    t.rows.push_back({csv::FormatDouble(fit.pi_hat[i]),
                      csv::FormatDouble(fit.mu0_hat[i]),
                      csv::FormatDouble(fit.nu0_hat ? (*fit.nu0_hat)[i] : 0.0),
                      csv::FormatDouble(pseudo.phi[i]),
                      csv::FormatDouble(pseudo.phibar ? (*pseudo.phibar)[i] : 0.0)});
  }
  csv::Write(path, t);
}

PseudoOutcomes ReadPseudo(const std::string& path, size_t expected_rows) {
  csv::Table t = csv::Read(path);
  int phi = t.ColumnIndex("phi");
  int phibar = t.ColumnIndex("phibar");
  if (phi < 0 || phibar < 0) throw InvalidInput(path + ": missing phi/phibar");
  if (t.rows.size() != expected_rows) {
    throw StageMismatch(path + " has " + std::to_string(t.rows.size()) +
                        " rows but the target sample has " +
                        std::to_string(expected_rows) +
                        "; rerun the 'nuisance' stage");
  }
  PseudoOutcomes out;
  out.phi.resize(static_cast<Eigen::Index>(expected_rows));
  Eigen::VectorXd bar(static_cast<Eigen::Index>(expected_rows));
  for (size_t i = 0; i < expected_rows; ++i) {
    out.phi[static_cast<Eigen::Index>(i)] = csv::ParseDouble(t.rows[i][phi], path);
    bar[static_cast<Eigen::Index>(i)] = csv::ParseDouble(t.rows[i][phibar], path);
  }
  out.phibar = bar;
  return out;
}

struct PseudoPair {
  NuisanceFit fit;
  PseudoOutcomes pseudo;
  bool in_sample = false;
};

PseudoPair EstimatePseudo(const RunConfig& config, const Dataset& nuis,
                          const Dataset& target, bool is_train) {
  const NuisanceConfig& nc = config.nuisance;
  PseudoPair out;
  if (nc.external) {
    const auto& paths = is_train ? nc.train_paths : nc.test_paths;
    const Bounds& b = target.bounds();
    Eigen::VectorXd pi = IngestExternalScores(paths[0], ScoreKind::kPi,
                                              target.size(), b, nc.options.gamma);
    Eigen::VectorXd mu0 = IngestExternalScores(paths[1], ScoreKind::kMu0,
                                               target.size(), b, nc.options.gamma);
    std::optional<Eigen::VectorXd> nu0;
    if (!paths[2].empty()) {
      nu0 = IngestExternalScores(paths[2], ScoreKind::kNu0, target.size(), b,
                                 nc.options.gamma);
    }
    out.fit = MakeNuisanceFit(pi, mu0, nu0, nc.options.gamma, b,
                              target.binary_outcome(), Provenance::kExternal);
    out.pseudo = ComputePseudoOutcomes(out.fit, target, true);
  } else if (config.split.cross_fit_folds >= 2) {
    CrossFitResult r = CrossFit(target, config.split.cross_fit_folds, nc.options,
                                sim::SplitMix64(config.split.seed + (is_train ? 1 : 2)));
    out.fit = std::move(r.fit);
    out.pseudo = std::move(r.pseudo);
  } else {
    NuisanceModels models = NuisanceModels::Fit(nuis, nc.options);
    out.fit = models.Apply(target);
    out.pseudo = ComputePseudoOutcomes(out.fit, target, true);
  }
  return out;
}

// Base-predictor columns with every fitted quantity frozen from the learn
// fold, so the same functions can be assembled on any sample.
std::vector<BasisSource> FreezeSources(const RunConfig& config,
                                       const Dataset& learn) {
  const bool counterfactual = config.mode == OutcomeMode::kCounterfactual;
  Dataset fit_rows = counterfactual ? learn.Untreated() : learn;
  if (fit_rows.empty()) {
    throw InvalidInput("learn fold has no rows to train base predictors on");
  }
  const Bounds& b = learn.bounds();
  std::vector<BasisSource> out;
  for (const auto& s : config.basis) {
    if (s.kind == "mean") {
      BasisSource src = BasisSource::Mean(fit_rows.Y().mean());
      src.name = s.name;
      out.push_back(std::move(src));
    } else if (s.kind == "prior_score" || s.kind == "raw") {
      BasisSource src = s.kind == "raw" ? BasisSource::RawFeature(s.column)
                                        : BasisSource::PriorScore(s.column);
      src.name = s.name;
      out.push_back(std::move(src));
    } else if (s.kind == "model") {
      Eigen::MatrixXd design = FeatureMatrix(fit_rows, s.features);
      Eigen::VectorXd y = fit_rows.Y();
      double offset = 0.0, scale = 1.0;
      if (s.link == Link::kLogit) {
        offset = b.lower;
        scale = b.Width();
        y = ((y.array() - offset) / scale).matrix();
      }
      GlmModel model = FitGlm(design, y, s.link);
      model.features = s.features;
      out.push_back(BasisSource::Model(s.name, std::move(model), offset, scale));
    } else {
      // predictions: filled per sample.
      BasisSource src;
      src.kind = SourceKind::kValues;
      src.name = s.name;
      out.push_back(std::move(src));
    }
  }
  return out;
}

std::vector<BasisSource> BindPredictionFiles(const RunConfig& config,
                                             std::vector<BasisSource> sources,
                                             bool is_train) {
  for (size_t i = 0; i < sources.size(); ++i) {
    if (sources[i].kind != SourceKind::kValues) continue;
    const auto& cfg = config.basis[i];
    const std::string& path = is_train ? cfg.train_path : cfg.test_path;
    sources[i].values = csv::ReadColumn(path);
  }
  return sources;
}

json SourcesToJson(const std::vector<BasisSource>& sources) {
  json arr = json::array();
  for (const auto& s : sources) {
    json j;
    j["name"] = s.name;
    switch (s.kind) {
      case SourceKind::kMean:
        j["kind"] = "mean";
        j["value"] = *s.mean_value;
        break;
      case SourceKind::kPriorScore:
        j["kind"] = "prior_score";
        j["column"] = s.column;
        break;
      case SourceKind::kRawFeature:
        j["kind"] = "raw";
        j["column"] = s.column;
        break;
      case SourceKind::kValues:
        j["kind"] = "predictions";
        break;
      case SourceKind::kModel:
        j["kind"] = "model";
        j["link"] = s.model->link == Link::kLogit ? "logit" : "identity";
        j["features"] = s.model->features;
        j["coefficients"] = std::vector<double>(
            s.model->coefficients.data(),
            s.model->coefficients.data() + s.model->coefficients.size());
        j["offset"] = s.offset;
        j["scale"] = s.scale;
        break;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<BasisSource> SourcesFromJson(const json& arr) {
  std::vector<BasisSource> out;
  for (const auto& j : arr) {
    std::string kind = j.at("kind").get<std::string>();
    std::string name = j.at("name").get<std::string>();
    BasisSource s;
    if (kind == "mean") {
      s = BasisSource::Mean(j.at("value").get<double>());
    } else if (kind == "prior_score") {
      s = BasisSource::PriorScore(j.at("column").get<std::string>());
    } else if (kind == "raw") {
      s = BasisSource::RawFeature(j.at("column").get<std::string>());
    } else if (kind == "predictions") {
      s.kind = SourceKind::kValues;
    } else if (kind == "model") {
      GlmModel m;
      m.link = j.at("link").get<std::string>() == "logit" ? Link::kLogit
                                                          : Link::kIdentity;
      m.features = j.at("features").get<std::vector<std::string>>();
      m.coefficients = ToVector(j.at("coefficients").get<std::vector<double>>());
      m.converged = true;
      s = BasisSource::Model(name, std::move(m), j.at("offset").get<double>(),
                             j.at("scale").get<double>());
    } else {
      throw InvalidInput("models file: unknown source kind '" + kind + "'");
    }
    s.name = name;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<FairnessVector> TrainingFairness(
    const RunConfig& config, const Dataset& sample,
    const std::optional<Eigen::VectorXd>& proxy) {
  std::vector<FairnessVector> out;
  for (FairnessSpec spec : config.fairness) {
    spec.mode = config.mode;
    out.push_back(EvalFairness(spec, sample, proxy, config.clip_proxy));
  }
  return out;
}

std::vector<std::vector<double>> GridAxes(const RunConfig& config) {
  const size_t t = config.fairness.size();
  const auto& axes = config.solver.axes;
  if (axes.empty()) return std::vector<std::vector<double>>(t, DefaultLambdaAxis());
  if (axes.size() == 1 && t > 1) return std::vector<std::vector<double>>(t, axes[0]);
  return axes;
}

std::vector<FadeSolution> RunSolverJob(const RunConfig& config,
                                       const ProblemData& problem, int jobs,
                                       std::ostream* log) {
  const SolverJob& job = config.solver;
  switch (job.kind) {
    case SolverJob::Kind::kGrid: {
      LambdaGrid grid;
      grid.axes = GridAxes(config);
      return SolveGrid(problem, grid, job.lambda0, job.smoothing, jobs,
                       job.tolerances);
    }
    case SolverJob::Kind::kRiskMin:
      return {SolveRiskMin(problem, job.epsilon, job.tolerances)};
    case SolverJob::Kind::kUnfairMin: {
      Eigen::VectorXd alpha = job.alpha.size() > 0
                                  ? job.alpha
                                  : Eigen::VectorXd::Ones(problem.t());
      FadeSolution s =
          SolveUnfairMin(problem, job.unfair_epsilon, alpha, job.tolerances);
      if (s.at_unfairness_floor && log) {
        *log << "unfair-min: risk budget slack at the unfairness floor\n";
      }
      return {s};
    }
    case SolverJob::Kind::kSeededGrid: {
      FadeSolution seed = SolveRiskMin(problem, job.epsilon, job.tolerances);
      LambdaGrid grid = SeedGrid(seed, job.spread);
      if (log) {
        *log << "seeded grid: dual";
        for (Eigen::Index j = 0; j < seed.lambda.size(); ++j) {
          *log << ' ' << seed.lambda[j];
        }
        *log << ", " << grid.size() << " points\n";
      }
      return SolveGrid(problem, grid, job.lambda0, job.smoothing, jobs,
                       job.tolerances);
    }
  }
  return {};
}

std::vector<std::string> Labels(const RunConfig& config) {
  std::vector<std::string> labels;
  for (const auto& s : config.fairness) labels.push_back(s.Label());
  return labels;
}

void AppendLog(const RunConfig& config, const std::string& text) {
  std::ofstream out(OutPath(config, artifacts::kLog), std::ios::app);
  out << text;
}

class StageTimer {
 public:
  StageTimer(const RunConfig& config, std::string stage)
      : config_(config), stage_(std::move(stage)),
        start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - start_;
    std::ostringstream line;
    line << "stage " << stage_ << " " << elapsed.count() << " s\n";
    try {
      AppendLog(config_, line.str());
    } catch (...) {
    }
  }

 private:
  const RunConfig& config_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

// ---------------------------------------------------------------------------

EvalTarget RunConfig::ResolvedTarget() const {
  if (evaluation.target) return *evaluation.target;
  return mode == OutcomeMode::kCounterfactual ? EvalTarget::kCounterfactual
                                              : EvalTarget::kObservable;
}

void RunConfig::OverrideSeed(uint64_t new_seed) {
  seed = new_seed;
  split.seed = new_seed;
  if (dgp) dgp->seed = new_seed;
}

void RunConfig::Validate() const {
  if (dgp.has_value() == !csv_path.empty()) {
    throw ConfigError("input needs exactly one of a dgp spec or a csv path");
  }
  const ColumnRoles roles = DataRoles(*this);
  if (!dgp) {
    if (roles.a.empty() || roles.y.empty()) {
      throw ConfigError("roles.a and roles.y are required for csv input");
    }
    if (!(bounds.lower < bounds.upper)) {
      throw ConfigError("bounds must satisfy lower < upper");
    }
  } else {
    try {
      dgp->Validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (mode == OutcomeMode::kCounterfactual && !roles.d) {
    throw ConfigError("counterfactual mode requires a decision (D) column");
  }
  if (nuisance.external) {
    for (int i = 0; i < 2; ++i) {
      if (nuisance.train_paths[i].empty() || nuisance.test_paths[i].empty()) {
        throw ConfigError("external nuisances need pi and mu0 files for train and test");
      }
    }
  }
  if (!(nuisance.options.gamma >= 0.0 && nuisance.options.gamma < 1.0)) {
    throw ConfigError("nuisance.gamma must lie in [0, 1)");
  }
  if (split.cross_fit_folds < 1) throw ConfigError("split.cross_fit_folds must be >= 1");
  double total = 0.0;
  for (double f : split.fractions) {
    if (!(f >= 0.0)) throw ConfigError("split fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  if (basis.empty()) throw ConfigError("basis needs at least one source");
  std::set<std::string> names;
  const std::vector<std::string> allowed = DefaultFeatures(roles);
  auto known_column = [&](const std::string& c) {
    return std::find(allowed.begin(), allowed.end(), c) != allowed.end();
  };
  for (const auto& s : basis) {
    if (!names.insert(s.name).second) {
      throw ConfigError("duplicate basis column name '" + s.name + "'");
    }
    if ((s.kind == "raw" || s.kind == "prior_score") && !known_column(s.column)) {
      throw ConfigError("basis column '" + s.column + "' is not an a, x or s role");
    }
    if (s.kind == "model") {
      if (s.features.empty()) throw ConfigError("model basis '" + s.name + "' needs features");
      for (const auto& f : s.features) {
        if (!known_column(f)) {
          throw ConfigError("model feature '" + f + "' is not an a, x or s role");
        }
      }
    }
    if (s.kind == "predictions" && (s.train_path.empty() || s.test_path.empty())) {
      throw ConfigError("predictions basis '" + s.name + "' needs train and test files");
    }
  }

  const size_t t = fairness.size();
  if (t == 0) throw ConfigError("at least one fairness spec is required");
  std::set<std::string> labels;
  for (const auto& f : fairness) {
    if (!labels.insert(f.Label()).second) {
      throw ConfigError("duplicate fairness label '" + f.Label() + "'");
    }
  }
  const SolverJob& job = solver;
  if (job.kind == SolverJob::Kind::kGrid) {
    for (const auto& axis : job.axes) {
      if (axis.empty()) throw ConfigError("solver axes must be nonempty");
      for (double v : axis) {
        if (!std::isfinite(v) || v < 0.0) {
          throw ConfigError("solver axes must be finite and >= 0");
        }
      }
    }
    if (job.axes.size() > 1 && job.axes.size() != t) {
      throw ConfigError("solver.axes needs one axis per fairness spec");
    }
  }
  if (job.kind == SolverJob::Kind::kRiskMin ||
      job.kind == SolverJob::Kind::kSeededGrid) {
    if (job.epsilon.size() != static_cast<Eigen::Index>(t)) {
      throw ConfigError("solver.epsilon needs one cap per fairness spec");
    }
    if ((job.epsilon.array() < 0.0).any() || job.epsilon.hasNaN()) {
      throw ConfigError("solver.epsilon must be nonnegative");
    }
  }
  if (job.kind == SolverJob::Kind::kUnfairMin) {
    if (!(job.unfair_epsilon > 0.0) || !std::isfinite(job.unfair_epsilon)) {
      throw ConfigError("unfair-min epsilon must be positive");
    }
    if (job.alpha.size() > 0 &&
        (job.alpha.size() != static_cast<Eigen::Index>(t) ||
         (job.alpha.array() < 0.0).any())) {
      throw ConfigError("solver.alpha needs one nonnegative weight per fairness spec");
    }
  }
  if (!(job.lambda0 >= 0.0) || !std::isfinite(job.lambda0)) {
    throw ConfigError("solver.lambda0 must be finite and >= 0");
  }
  if (job.smoothing && job.smoothing->rows() != static_cast<Eigen::Index>(basis.size())) {
    throw ConfigError("solver.smoothing must be k x k for the basis size k");
  }
  if (!(evaluation.alpha > 0.0 && evaluation.alpha < 1.0)) {
    throw ConfigError("evaluation.alpha must lie in (0, 1)");
  }
  if (ResolvedTarget() == EvalTarget::kOracle && !roles.y0) {
    throw ConfigError("oracle evaluation needs a y0 column");
  }
  if (ResolvedTarget() == EvalTarget::kCounterfactual &&
      mode != OutcomeMode::kCounterfactual) {
    throw ConfigError("counterfactual evaluation needs mode = counterfactual");
  }
  if (evaluation.fresh_test_n && !dgp) {
    throw ConfigError("evaluation.fresh_test_n needs simulated input");
  }
}

RunConfig ParseRunConfig(std::string_view json_text, const std::string& base) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RejectUnknownKeys(j,
                    {"input", "roles", "bounds", "mode", "seed", "split",
                     "nuisance", "basis", "fairness", "clip_proxy", "solver",
                     "evaluation", "output"},
                    "config");
  RunConfig c;
  try {
    c.seed = Get<uint64_t>(j, "seed", 0);
    if (!j.contains("input")) throw ConfigError("config needs an input section");
    const json& in = j.at("input");
    if (in.contains("dgp")) c.dgp = ParseDgp(in.at("dgp"), c.seed);
    c.csv_path = ResolvePath(Get<std::string>(in, "csv", ""), base);

    if (j.contains("roles")) {
      const json& r = j.at("roles");
      c.roles.a = Get<std::string>(r, "a", "");
      c.roles.y = Get<std::string>(r, "y", "");
      if (r.contains("d")) c.roles.d = r.at("d").get<std::string>();
      c.roles.x = Get<std::vector<std::string>>(r, "x", {});
      c.roles.s = Get<std::vector<std::string>>(r, "s", {});
      if (r.contains("y0")) c.roles.y0 = r.at("y0").get<std::string>();
      if (r.contains("y1")) c.roles.y1 = r.at("y1").get<std::string>();
    }
    if (j.contains("bounds")) {
      auto b = j.at("bounds").get<std::vector<double>>();
      if (b.size() != 2) throw ConfigError("bounds must be [lower, upper]");
      c.bounds = {b[0], b[1]};
    }
    try {
      c.mode = ParseOutcomeMode(Get<std::string>(j, "mode", "observable"));
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }

    c.split.seed = c.seed;
    if (j.contains("split")) {
      const json& s = j.at("split");
      if (s.contains("fractions")) {
        auto f = s.at("fractions").get<std::vector<double>>();
        if (f.size() != kNumFolds) throw ConfigError("split.fractions needs 5 values");
        std::copy(f.begin(), f.end(), c.split.fractions.begin());
      }
      c.split.seed = Get<uint64_t>(s, "seed", c.seed);
      c.split.cross_fit_folds = Get<int>(s, "cross_fit_folds", 1);
    }

    if (j.contains("nuisance")) {
      const json& n = j.at("nuisance");
      c.nuisance.options.gamma = Get<double>(n, "gamma", kDefaultGamma);
      c.nuisance.options.features = Get<std::vector<std::string>>(n, "features", {});
      if (n.contains("irls")) {
        c.nuisance.options.irls.max_iter = Get<int>(n.at("irls"), "max_iter", 50);
        c.nuisance.options.irls.tol = Get<double>(n.at("irls"), "tol", 1e-8);
      }
      if (n.contains("external")) {
        c.nuisance.external = true;
        const json& e = n.at("external");
        auto read = [&](const char* sample, std::array<std::string, 3>& out) {
          if (!e.contains(sample)) return;
          const json& s = e.at(sample);
          out[0] = ResolvePath(Get<std::string>(s, "pi", ""), base);
          out[1] = ResolvePath(Get<std::string>(s, "mu0", ""), base);
          out[2] = ResolvePath(Get<std::string>(s, "nu0", ""), base);
        };
        read("train", c.nuisance.train_paths);
        read("test", c.nuisance.test_paths);
      }
    }

    if (j.contains("basis")) {
      for (const auto& b : j.at("basis")) c.basis.push_back(ParseBasisSource(b, base));
    }
    if (j.contains("fairness")) {
      for (const auto& f : j.at("fairness")) c.fairness.push_back(ParseFairness(f));
    }
    c.clip_proxy = Get<bool>(j, "clip_proxy", false);
    if (j.contains("solver")) c.solver = ParseSolver(j.at("solver"));
    if (j.contains("evaluation")) {
      const json& e = j.at("evaluation");
      c.evaluation.alpha = Get<double>(e, "alpha", kDefaultCiAlpha);
      std::string target = Get<std::string>(e, "target", "auto");
      if (target != "auto") {
        try {
          c.evaluation.target = ParseEvalTarget(target);
        } catch (const Error& err) {
          throw ConfigError(err.what());
        }
      }
      c.evaluation.truncate = Get<bool>(e, "truncate", true);
      if (e.contains("fresh_test_n")) {
        c.evaluation.fresh_test_n = e.at("fresh_test_n").get<size_t>();
      }
    }
    c.output_dir = ResolvePath(Get<std::string>(j, "output", c.output_dir), base);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseRunConfig(buf.str(), fs::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// Stages.

void StageSimulate(const RunConfig& config) {
  if (!config.dgp) throw ConfigError("simulate needs input.dgp in the config");
  EnsureOutputDir(config);
  StageTimer timer(config, "simulate");
  SaveCsv(sim::Generate(*config.dgp), OutPath(config, artifacts::kData));
}

void StageSplit(const RunConfig& config) {
  EnsureOutputDir(config);
  StageTimer timer(config, "split");
  Dataset data;
  if (config.dgp) {
    std::string path = RequireArtifact(config, artifacts::kData, "simulate");
    data = LoadCsv(path, sim::DgpRoles(), Bounds{0.0, 1.0});
  } else {
    data = LoadCsv(config.csv_path, config.roles, config.bounds);
  }
  if (config.mode == OutcomeMode::kCounterfactual && !data.has_decision()) {
    throw ConfigError("counterfactual mode requires a decision (D) column");
  }
  SplitData folds = Split(data, config.split);
  if (config.evaluation.fresh_test_n) {
    sim::DgpSpec fresh = *config.dgp;
    fresh.n = *config.evaluation.fresh_test_n;
    fresh.seed = sim::SplitMix64(config.dgp->seed);
    folds.folds[static_cast<int>(Fold::kTestTarget)] = sim::Generate(fresh);
  }
  for (int f = 0; f < kNumFolds; ++f) {
    SaveCsv(folds.folds[f], OutPath(config, artifacts::FoldFile(static_cast<Fold>(f))));
  }
}

void StageNuisance(const RunConfig& config) {
  EnsureOutputDir(config);
  StageTimer timer(config, "nuisance");
  if (config.mode != OutcomeMode::kCounterfactual) {
    AppendLog(config, "nuisance: observable mode, nothing to estimate\n");
    return;
  }
  SplitData folds = LoadFolds(config);
  Samples s = TargetSamples(config, folds);
  PseudoPair train = EstimatePseudo(config, s.train_nuis, s.train_target, true);
  PseudoPair test = EstimatePseudo(config, s.test_nuis, s.test_target, false);
  WritePseudo(OutPath(config, artifacts::kPseudoTrain), train.fit, train.pseudo);
  WritePseudo(OutPath(config, artifacts::kPseudoTest), test.fit, test.pseudo);
}

FitResult StageFit(const RunConfig& config, int jobs) {
  EnsureOutputDir(config);
  StageTimer timer(config, "fit");
  SplitData folds = LoadFolds(config);
  Samples s = TargetSamples(config, folds);
  const bool counterfactual = config.mode == OutcomeMode::kCounterfactual;
  std::optional<PseudoOutcomes> pseudo;
  if (counterfactual) {
    pseudo = ReadPseudo(RequireArtifact(config, artifacts::kPseudoTrain, "nuisance"),
                        s.train_target.size());
  }

  FitResult r;
  r.sources = FreezeSources(config, folds[Fold::kLearn]);
  for (const auto& src : r.sources) r.columns.push_back(src.name);
  r.labels = Labels(config);
  {
    json models;
    models["columns"] = r.columns;
    models["sources"] = SourcesToJson(r.sources);
    std::ofstream out(OutPath(config, artifacts::kModels));
    out << models.dump(2) << '\n';
  }

  BasisMatrix basis =
      Assemble(s.train_target, BindPredictionFiles(config, r.sources, true),
               config.mode, FoldName(Fold::kTrainTarget));
  std::optional<Eigen::VectorXd> proxy;
  if (counterfactual) proxy = pseudo->phi;
  std::vector<FairnessVector> g = TrainingFairness(config, s.train_target, proxy);
  Eigen::VectorXd target = counterfactual ? pseudo->phi : s.train_target.Y();
  Eigen::VectorXd second = counterfactual
                               ? *pseudo->phibar
                               : Eigen::VectorXd(s.train_target.Y().array().square());
  r.problem = BuildProblem(basis, target, g, second);

  std::ostringstream log;
  r.solutions = RunSolverJob(config, r.problem, jobs, &log);
  AppendLog(config, log.str());
  WriteSolutionsCsv(OutPath(config, artifacts::kSolutions), r.solutions,
                    r.labels, r.columns);
  return r;
}

std::vector<PerformanceProfile> StageEvaluate(
    const RunConfig& config, int jobs,
    const std::optional<std::string>& predictions_path) {
  EnsureOutputDir(config);
  StageTimer timer(config, "evaluate");
  SplitData folds = LoadFolds(config);
  Samples s = TargetSamples(config, folds);
  const EvalTarget target = config.ResolvedTarget();
  std::optional<PseudoOutcomes> pseudo;
  if (target == EvalTarget::kCounterfactual) {
    pseudo = ReadPseudo(RequireArtifact(config, artifacts::kPseudoTest, "nuisance"),
                        s.test_target.size());
  }
  Evaluator evaluator(s.test_target, target, config.fairness, pseudo,
                      config.evaluation.alpha, config.clip_proxy);

  std::vector<Eigen::VectorXd> predictions;
  std::vector<Eigen::VectorXd> lambdas;
  std::vector<std::string> lambda_labels;
  if (predictions_path) {
    std::vector<double> v = csv::ReadColumn(*predictions_path);
    Eigen::VectorXd f = ToVector(v);
    if (config.evaluation.truncate) {
      const Bounds& b = s.test_target.bounds();
      f = f.cwiseMax(b.lower).cwiseMin(b.upper);
    }
    predictions.push_back(std::move(f));
  } else {
    std::string models_path = RequireArtifact(config, artifacts::kModels, "fit");
    std::string solutions_path = RequireArtifact(config, artifacts::kSolutions, "fit");
    std::ifstream in(models_path);
    json models = json::parse(in);
    std::vector<BasisSource> sources = SourcesFromJson(models.at("sources"));
    SolutionTable table = ReadSolutionsCsv(solutions_path);
    BasisMatrix basis =
        Assemble(s.test_target, BindPredictionFiles(config, sources, false),
                 config.mode, FoldName(Fold::kTestTarget));
    if (HashColumnNames(table.columns) != basis.signature.columns) {
      throw StageMismatch("solutions were fit on a different basis; rerun 'fit'");
    }
    predictions.resize(table.betas.size());
    ParallelFor(predictions.size(), jobs, [&](size_t i) {
      predictions[i] = PredictAll(basis, table.betas[i], config.evaluation.truncate);
    });
    lambdas = table.lambdas;
    lambda_labels = table.labels;
  }
  std::vector<PerformanceProfile> profiles =
      ProfileAll(evaluator, predictions, lambdas, jobs);
  size_t negative = 0;
  for (const auto& p : profiles) negative += p.mse < 0.0 ? 1 : 0;
  if (negative > 0) {
    AppendLog(config, "warning: " + std::to_string(negative) +
                          " profiles have a negative estimated mse\n");
  }
  WriteFrontierCsv(OutPath(config, artifacts::kFrontier), profiles, lambda_labels);
  return profiles;
}

std::vector<SelectionEntry> SelectAll(
    const std::vector<PerformanceProfile>& profiles) {
  if (profiles.empty()) throw InvalidInput("frontier is empty");
  std::vector<std::string> labels;
  for (const auto& d : profiles.front().disparities) labels.push_back(d.label);
  std::vector<SelectionEntry> out;
  for (auto& metrics : SelectionSubsets(labels)) {
    SelectionEntry e;
    e.model_id = SelectMinNorm(profiles, metrics);
    for (const auto& p : profiles) {
      if (p.id != e.model_id) continue;
      double sq = 0.0;
      for (const auto& m : metrics) sq += p.Metric(m) * p.Metric(m);
      e.norm = std::sqrt(sq);
    }
    e.metrics = std::move(metrics);
    out.push_back(std::move(e));
  }
  return out;
}

void WriteSelectionJson(const std::string& path,
                        const std::vector<SelectionEntry>& selection,
                        const std::vector<PerformanceProfile>& profiles) {
  json arr = json::array();
  for (const auto& e : selection) {
    json j;
    j["metrics"] = e.metrics;
    j["model_id"] = e.model_id;
    j["norm"] = e.norm;
    for (const auto& p : profiles) {
      if (p.id != e.model_id) continue;
      j["lambda"] = std::vector<double>(p.lambda.data(), p.lambda.data() + p.lambda.size());
      j["mse"] = p.mse;
      j["auc"] = std::isnan(p.auc) ? json(nullptr) : json(p.auc);
      for (const auto& d : p.disparities) j[d.label] = d.abs_value;
    }
    arr.push_back(std::move(j));
  }
  json doc;
  doc["selection"] = std::move(arr);
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  out << doc.dump(2) << '\n';
}

std::vector<SelectionEntry> StageSelect(const RunConfig& config) {
  EnsureOutputDir(config);
  StageTimer timer(config, "select");
  std::vector<PerformanceProfile> profiles =
      ReadFrontierCsv(RequireArtifact(config, artifacts::kFrontier, "evaluate"));
  std::vector<SelectionEntry> selection = SelectAll(profiles);
  WriteSelectionJson(OutPath(config, artifacts::kSelection), selection, profiles);
  return selection;
}

RunResult Run(const RunConfig& config, int jobs) {
  config.Validate();
  EnsureOutputDir(config);
  {
    std::ofstream reset(OutPath(config, artifacts::kLog));
    reset << "fade run, seed " << config.seed << ", mode "
          << (config.mode == OutcomeMode::kCounterfactual ? "counterfactual"
                                                          : "observable")
          << ", target " << EvalTargetName(config.ResolvedTarget()) << '\n';
  }
  auto start = std::chrono::steady_clock::now();
  RunResult r;
  if (config.dgp) StageSimulate(config);
  StageSplit(config);
  StageNuisance(config);
  r.fit = StageFit(config, jobs);
  r.profiles = StageEvaluate(config, jobs);
  r.selection = SelectAll(r.profiles);
  WriteSelectionJson(OutPath(config, artifacts::kSelection), r.selection,
                     r.profiles);
  std::chrono::duration<double> total = std::chrono::steady_clock::now() - start;
  std::ostringstream line;
  line << "total " << total.count() << " s, " << r.profiles.size()
       << " profiles\n";
  AppendLog(config, line.str());
  return r;
}

}  // namespace fade

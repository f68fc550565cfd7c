#ifndef FADE_PIPELINE_H_
#define FADE_PIPELINE_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fade/basis.h"
#include "fade/dataset.h"
#include "fade/eval.h"
#include "fade/fairness.h"
#include "fade/nuisance.h"
#include "fade/sim.h"
#include "fade/solver.h"

namespace fade {

// Basis column as written in a run config.
//   mean         constant, fitted on the learn fold
//   prior_score  existing score column
//   raw          covariate column
//   model        GLM on `features`, trained on the learn fold (D = 0 rows in
//                counterfactual mode)
//   predictions  external headerless score files for the train and test
//                target samples
struct BasisSourceConfig {
  std::string kind;
  std::string name;
  std::string column;
  std::vector<std::string> features;
  Link link = Link::kLogit;
  std::string train_path;
  std::string test_path;
};

struct NuisanceConfig {
  bool external = false;
  // External score files, keyed by sample then ScoreKind order pi, mu0, nu0.
  std::array<std::string, 3> train_paths;
  std::array<std::string, 3> test_paths;
  NuisanceOptions options;
};

struct SolverJob {
  enum class Kind { kGrid, kRiskMin, kUnfairMin, kSeededGrid } kind = Kind::kGrid;
  // Empty means the default axis for every fairness spec.
  std::vector<std::vector<double>> axes;
  Eigen::VectorXd epsilon;         // risk-min caps
  double unfair_epsilon = 0.0;     // unfair-min risk level
  Eigen::VectorXd alpha;           // unfair-min weights; default all ones
  std::vector<double> spread = {0.5, 2.0};
  double lambda0 = 0.0;
  std::optional<Eigen::MatrixXd> smoothing;
  SolverTolerances tolerances;
};

struct EvaluationConfig {
  double alpha = kDefaultCiAlpha;
  // auto resolves to the run mode.
  std::optional<EvalTarget> target;
  bool truncate = true;
  // Simulated input only: replace the test target fold with a fresh draw of
  // this size (seed offset by one) so the oracle columns are large-sample.
  std::optional<size_t> fresh_test_n;
};

struct RunConfig {
  std::optional<sim::DgpSpec> dgp;
  std::string csv_path;
  ColumnRoles roles;
  Bounds bounds;
  OutcomeMode mode = OutcomeMode::kObservable;
  uint64_t seed = 0;
  SplitPlan split;
  NuisanceConfig nuisance;
  std::vector<BasisSourceConfig> basis;
  std::vector<FairnessSpec> fairness;
  bool clip_proxy = false;
  SolverJob solver;
  EvaluationConfig evaluation;
  std::string output_dir = "fade_out";

  EvalTarget ResolvedTarget() const;
  // Cross-field checks that need no data; throws kConfig.
  void Validate() const;
  // Replaces the run, simulation, split and cross-fit seeds.
  void OverrideSeed(uint64_t seed);
};

// Paths in the document are resolved against `base_dir` when relative.
RunConfig ParseRunConfig(std::string_view json_text,
                         const std::string& base_dir = "");
RunConfig LoadRunConfig(const std::string& path);

// In-memory result of the fit stage.
struct FitResult {
  std::vector<BasisSource> sources;  // frozen, ready to assemble any sample
  std::vector<std::string> columns;
  std::vector<std::string> labels;
  ProblemData problem;
  std::vector<FadeSolution> solutions;
};

struct SelectionEntry {
  std::vector<std::string> metrics;
  int model_id = 0;
  double norm = 0.0;
};

struct RunResult {
  FitResult fit;
  std::vector<PerformanceProfile> profiles;
  std::vector<SelectionEntry> selection;
};

// Stage functions. Each reads the artifacts of the previous stage from the
// output directory and throws kStageMismatch when one is missing.
void StageSimulate(const RunConfig& config);
void StageSplit(const RunConfig& config);
void StageNuisance(const RunConfig& config);
FitResult StageFit(const RunConfig& config, int jobs);
std::vector<PerformanceProfile> StageEvaluate(
    const RunConfig& config, int jobs,
    const std::optional<std::string>& predictions_path = std::nullopt);
std::vector<SelectionEntry> StageSelect(const RunConfig& config);

// All stages in memory, writing every artifact and run.log.
RunResult Run(const RunConfig& config, int jobs);

// Selection over mse plus each subset of the disparity labels.
std::vector<SelectionEntry> SelectAll(
    const std::vector<PerformanceProfile>& profiles);
void WriteSelectionJson(const std::string& path,
                        const std::vector<SelectionEntry>& selection,
                        const std::vector<PerformanceProfile>& profiles);

// Artifact file names inside the output directory.
namespace artifacts {
inline constexpr const char* kData = "data.csv";
inline constexpr const char* kPseudoTrain = "pseudo_train.csv";
inline constexpr const char* kPseudoTest = "pseudo_test.csv";
inline constexpr const char* kModels = "models.json";
inline constexpr const char* kSolutions = "solutions.csv";
inline constexpr const char* kFrontier = "frontier.csv";
inline constexpr const char* kSelection = "selection.json";
inline constexpr const char* kLog = "run.log";
std::string FoldFile(Fold fold);
}  // namespace artifacts

}  // namespace fade

#endif  // FADE_PIPELINE_H_

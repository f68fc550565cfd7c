// Command-line driver for the fairness-aware ensemble pipeline.
//
//   fade run       --config run.json [--jobs N] [--seed S] [--output DIR]
//   fade simulate | split | nuisance | fit | evaluate | select  (same flags)
//   fade evaluate  --config run.json --predictions scores.txt
//
// Exit codes: 0 ok, 2 config / input / stage error, 3 infeasible, 4 numeric.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fade/errors.h"
#include "fade/pipeline.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitNumeric = 4;

const char* KindName(fade::ErrorKind kind) {
  switch (kind) {
    case fade::ErrorKind::kInvalidInput:
      return "invalid_input";
    case fade::ErrorKind::kConfig:
      return "config";
    case fade::ErrorKind::kStageMismatch:
      return "stage_mismatch";
    case fade::ErrorKind::kInfeasible:
      return "infeasible";
    case fade::ErrorKind::kNumeric:
      return "numeric";
  }
  return "unknown";
}

int ExitCode(fade::ErrorKind kind) {
  switch (kind) {
    case fade::ErrorKind::kInfeasible:
      return kExitInfeasible;
    case fade::ErrorKind::kNumeric:
      return kExitNumeric;
    default:
      return kExitConfig;
  }
}

// One JSON object on stderr per failure.
int Report(const fade::Error& e) {
  nlohmann::json j;
  j["error"]["kind"] = KindName(e.kind());
  j["error"]["message"] = e.what();
  if (const auto* inf = dynamic_cast<const fade::InfeasibleError*>(&e)) {
    j["error"]["min_achievable_risk"] = inf->min_achievable_risk();
  }
  std::cerr << j.dump() << '\n';
  return ExitCode(e.kind());
}

struct GlobalFlags {
  std::string config;
  int jobs = 1;
  std::optional<uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> predictions;
};

fade::RunConfig LoadConfig(const GlobalFlags& flags) {
  fade::RunConfig config = fade::LoadRunConfig(flags.config);
  if (flags.seed) config.OverrideSeed(*flags.seed);
  if (flags.output) config.output_dir = *flags.output;
  config.Validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware ensemble weights: simulate, fit, evaluate, select"};
  app.require_subcommand(1);
  GlobalFlags flags;
  auto add_common = [&flags](CLI::App* sub) {
    sub->add_option("--config", flags.config, "Run configuration (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--jobs", flags.jobs, "Worker threads")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", flags.seed, "Override every seed in the config");
    sub->add_option("--output", flags.output, "Output directory");
  };
  CLI::App* run = app.add_subcommand("run", "All stages end to end");
  CLI::App* simulate = app.add_subcommand("simulate", "Draw the simulated dataset");
  CLI::App* split = app.add_subcommand("split", "Five-way sample split");
  CLI::App* nuisance = app.add_subcommand("nuisance", "Nuisances and pseudo-outcomes");
  CLI::App* fit = app.add_subcommand("fit", "Base predictors and weight solves");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Profiles on the test sample");
  CLI::App* select = app.add_subcommand("select", "Min-norm selection from a frontier");
  for (CLI::App* sub : {run, simulate, split, nuisance, fit, evaluate, select}) {
    add_common(sub);
  }
  evaluate->add_option("--predictions", flags.predictions,
                       "Headerless prediction file for the test sample")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    fade::RunConfig config = LoadConfig(flags);
    if (run->parsed()) {
      fade::RunResult r = fade::Run(config, flags.jobs);
      std::cout << "wrote " << r.profiles.size() << " profiles to "
                << config.output_dir << '\n';
    } else if (simulate->parsed()) {
      fade::StageSimulate(config);
    } else if (split->parsed()) {
      fade::StageSplit(config);
    } else if (nuisance->parsed()) {
      fade::StageNuisance(config);
    } else if (fit->parsed()) {
      auto r = fade::StageFit(config, flags.jobs);
      std::cout << "fit " << r.solutions.size() << " solutions\n";
    } else if (evaluate->parsed()) {
      auto profiles = fade::StageEvaluate(config, flags.jobs, flags.predictions);
      std::cout << "evaluated " << profiles.size() << " predictors\n";
    } else if (select->parsed()) {
      fade::StageSelect(config);
    }
  } catch (const fade::Error& e) {
    return Report(e);
  } catch (const std::exception& e) {
    return Report(fade::Error(fade::ErrorKind::kInvalidInput, e.what()));
  }
  return kExitOk;
}

#include "fade/fairness.h"

#include <cmath>

#include "fade/errors.h"

namespace fade {

const char* DisparityName(DisparityKind kind) {
  switch (kind) {
    case DisparityKind::kRate:
      return "rate";
    case DisparityKind::kFpr:
      return "fpr";
    case DisparityKind::kFnr:
      return "fnr";
    case DisparityKind::kCustom:
      return "custom";
  }
  return "unknown";
}

DisparityKind ParseDisparityKind(const std::string& name) {
  if (name == "rate") return DisparityKind::kRate;
  if (name == "fpr") return DisparityKind::kFpr;
  if (name == "fnr") return DisparityKind::kFnr;
  if (name == "custom") return DisparityKind::kCustom;
  throw InvalidInput("unknown disparity kind '" + name + "'");
}

OutcomeMode ParseOutcomeMode(const std::string& name) {
  if (name == "observable") return OutcomeMode::kObservable;
  if (name == "counterfactual") return OutcomeMode::kCounterfactual;
  throw InvalidInput("unknown outcome mode '" + name + "'");
}

std::string FairnessSpec::Label() const {
  return name.empty() ? std::string(DisparityName(kind)) : name;
}

GroupWeights FairnessGroupWeights(const FairnessSpec& spec,
                                  const Eigen::VectorXd& a,
                                  const Eigen::VectorXd& outcome) {
  const Eigen::ArrayXd av = a.array();
  const Eigen::ArrayXd y = outcome.array();
  GroupWeights w;
  switch (spec.kind) {
    case DisparityKind::kRate:
      w.first = (1.0 - av).matrix();
      w.second = av.matrix();
      break;
    case DisparityKind::kFpr:
      w.first = ((1.0 - y) * (1.0 - av)).matrix();
      w.second = ((1.0 - y) * av).matrix();
      break;
    case DisparityKind::kFnr:
      w.first = (y * av).matrix();
      w.second = (y * (1.0 - av)).matrix();
      break;
    case DisparityKind::kCustom: {
      if (!spec.custom) throw InvalidInput("custom disparity needs predicates");
      const CustomDisparity& c = *spec.custom;
      auto soft = [&](const CellPredicate& h) {
        Eigen::VectorXd v(av.size());
        for (Eigen::Index i = 0; i < av.size(); ++i) {
          int ai = av[i] > 0.5 ? 1 : 0;
          v[i] = y[i] * double(h[ai][1]) + (1.0 - y[i]) * double(h[ai][0]);
        }
        return v;
      };
      w.first = soft(c.h0);
      w.second = soft(c.h1);
      w.first_scale = c.alpha0;
      w.second_scale = c.alpha1;
      break;
    }
  }
  return w;
}

FairnessVector EvalFairness(const FairnessSpec& spec, const Dataset& data,
                            const std::optional<Eigen::VectorXd>& outcome_proxy,
                            bool clip_proxy) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  if (n == 0) throw InvalidInput("cannot evaluate fairness on an empty sample");
  Eigen::VectorXd outcome;
  if (spec.kind == DisparityKind::kRate) {
    outcome = Eigen::VectorXd::Zero(n);  // unused
  } else if (spec.mode == OutcomeMode::kObservable) {
    outcome = data.Y();
    if (outcome.minCoeff() < 0.0 || outcome.maxCoeff() > 1.0) {
      throw InvalidInput(std::string(DisparityName(spec.kind)) +
                         " disparity requires outcomes in [0, 1]");
    }
  } else {
    if (!outcome_proxy) {
      throw InvalidInput("counterfactual fairness requires an outcome proxy");
    }
    if (outcome_proxy->size() != n) {
      throw InvalidInput("outcome proxy length does not match the sample");
    }
    outcome = *outcome_proxy;
    if (clip_proxy) outcome = outcome.cwiseMax(0.0).cwiseMin(1.0);
  }

  GroupWeights w = FairnessGroupWeights(spec, data.A(), outcome);
  double mean_first = w.first.mean();
  double mean_second = w.second.mean();
  if (std::abs(mean_first) < 1e-12 || std::abs(mean_second) < 1e-12) {
    throw InvalidInput(std::string("empty (A, outcome) cell for ") +
                       spec.Label() + " disparity");
  }
  FairnessVector out;
  out.spec = spec;
  out.g = w.first_scale * w.first / mean_first -
          w.second_scale * w.second / mean_second;
  return out;
}

double Disparity(const FairnessVector& g, const Eigen::VectorXd& predictions) {
  if (g.g.size() != predictions.size()) {
    throw InvalidInput("prediction length does not match fairness vector");
  }
  return g.g.dot(predictions) / static_cast<double>(g.g.size());
}

}  // namespace fade

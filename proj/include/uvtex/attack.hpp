#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "uvtex/config.hpp"
#include "uvtex/metrics.hpp"
#include "uvtex/scenario.hpp"

namespace uvtex {

// Scenario epochs >= this value are reserved for held-out evaluation; the
// optimizer only ever consumes epochs below it.
inline constexpr std::uint64_t kEvalEpochBase = 1ull << 40;

struct BuiltProblem {
  EoptProblem problem;
  Eigen::VectorXd latent_lower;
  Eigen::VectorXd latent_upper;
};

// Loads the body, poses/GMM, backgrounds, and detectors named by the config
// and assembles the optimization problem.
BuiltProblem build_problem(const RunConfig& cfg);

struct LogLine {
  std::string phase;  // "pso" or "adam"
  int iter = 0;
  double loss = 0;
  double best_loss = 0;
  long wall_ms = 0;
};

std::string log_line_to_json_text(const LogLine& line);

struct AttackResult {
  Eigen::VectorXd z;
  Image patch;
  std::vector<LogLine> log;
  double pso_best_loss = 0;
  double final_loss = 0;
};

// Algorithm: PSO over the latent box on the Monte-Carlo loss, then Adam
// refinement seeded from the swarm best. Each log line is also streamed to
// `log_stream` when given.
AttackResult run_attack(const RunConfig& cfg, BuiltProblem& built,
                        std::ostream* log_stream = nullptr);

struct DetectorEval {
  std::vector<double> taus;
  std::vector<double> asr_at_tau;
  double map = 0.0;
};

struct EvalOutput {
  int frames = 0;
  double tau_iou = 0.5;
  double tau_conf = 0.5;
  std::vector<DetectorEval> detectors;
  std::vector<FrameEval> per_frame;  // detections of detector 0
};

// Renders `frames` held-out scenarios with the patch and scores every
// configured detector; the IoU sweep mirrors the reporting thresholds
// {0.01, 0.1, 0.3, 0.5}.
EvalOutput evaluate_patch(const RunConfig& cfg, const EoptProblem& problem,
                          const Image& patch, int frames,
                          std::uint64_t epoch = kEvalEpochBase);

std::string eval_to_json_text(const EvalOutput& out);

}  // namespace uvtex

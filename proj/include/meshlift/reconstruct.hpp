#pragma once

// Multiview mesh reconstruction: Adam on vertex positions against the
// rendering loss, interleaved with remeshing, run over a coarse-to-fine
// stage schedule.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "meshlift/region.hpp"
#include "meshlift/remesh.hpp"
#include "meshlift/render.hpp"

namespace meshlift {

struct StageConfig {
  int steps = 100;
  double target_edge_length = 0.05;
  int render_resolution = 256;
};

struct AdamConfig {
  double lr = 0.01;
  double lr_final = 0.001;  // linear decay target within each stage
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct RemeshConfig {
  int interval_steps = 10;
  double split_factor = 4.0 / 3.0;
  double collapse_factor = 4.0 / 5.0;
};

struct StageReport {
  int stage = 0;  // 1-based
  int steps = 0;
  double loss_start = 0;
  double loss_end = 0;
  Eigen::Index vertices = 0;
  Eigen::Index faces = 0;
  double seconds = 0;
  std::vector<double> losses;  // one per step
};

struct ReconstructionConfig {
  std::vector<StageConfig> stages;
  LossWeights weights;
  AdamConfig adam;
  RemeshConfig remesh;
  bool freeze_prior = true;
  double dilation = -1;  // < 0: twice the first stage's target edge length
  int seed_level = 3;
  int threads = 1;
  std::function<void(const StageReport&)> on_stage;

  /// Two stages of 100 steps: half then full resolution, edge lengths
  /// half_extent / 16 then half_extent / 32.
  static ReconstructionConfig defaults(double half_extent, int resolution);

  double effective_dilation() const;
  RemeshFactors remesh_factors() const;
  void check() const;
};

/// Non-finite loss that survived the learning-rate halving retry.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, Mesh last_valid) : Error(what), last_valid_(std::move(last_valid)) {}
  const Mesh& last_valid() const { return last_valid_; }

 private:
  Mesh last_valid_;
};

/// First and second moments, one row per vertex: [m | v].
struct AdamState {
  Payload moments;
  long step = 0;

  void reset(Eigen::Index vertices) {
    moments = Payload::Zero(vertices, 6);
    step = 0;
  }
};

/// Runs `stage.steps` iterations against `targets` (already at the stage's
/// resolution), remeshing at the start, every `remesh.interval_steps` steps
/// and once at the end. No remeshing happens when the interval exceeds the
/// step count.
Mesh optimize_stage(const Mesh& mesh, const MultiviewSet& targets, const StageConfig& stage,
                    const ReconstructionConfig& config, AdamState& adam, StageReport* report = nullptr);

/// Runs every stage, downsampling targets to each stage's resolution.
Mesh run_stages(const Mesh& initial, const MultiviewSet& targets, const ReconstructionConfig& config);

/// Throws EmptyTargetError when no target pixel has alpha above 0.5.
Mesh reconstruct_from_scratch(const MultiviewSet& targets, const ReconstructionConfig& config);

/// Starts from `prior`. With a region and `freeze_prior`, prior vertices
/// outside the dilated region box are frozen and, for added regions, a seed
/// sphere is appended as a separate shell.
Mesh reconstruct_incremental(const Mesh& prior, const MultiviewSet& targets, const ReconstructionConfig& config,
                             const EditRegion* region = nullptr);

}  // namespace meshlift

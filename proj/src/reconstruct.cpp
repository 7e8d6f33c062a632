#include "meshlift/reconstruct.hpp"

#include <chrono>
#include <cmath>

namespace meshlift {

ReconstructionConfig ReconstructionConfig::defaults(double half_extent, int resolution) {
  ReconstructionConfig c;
  c.stages = {{100, half_extent / 16.0, std::max(16, resolution / 2)}, {100, half_extent / 32.0, resolution}};
  return c;
}

double ReconstructionConfig::effective_dilation() const {
  if (dilation >= 0) return dilation;
  return stages.empty() ? 0.0 : 2.0 * stages.front().target_edge_length;
}

RemeshFactors ReconstructionConfig::remesh_factors() const {
  RemeshFactors f;
  f.split = remesh.split_factor;
  f.collapse = remesh.collapse_factor;
  return f;
}

void ReconstructionConfig::check() const {
  if (stages.empty()) throw ContractError("reconstruction needs at least one stage");
  for (const auto& s : stages) {
    if (s.steps < 1) throw ContractError("stage steps must be at least 1");
    if (!(s.target_edge_length > 0)) throw ContractError("stage target_edge_length must be positive");
    if (s.render_resolution < 16) throw ContractError("stage render_resolution must be at least 16");
  }
  if (!(adam.lr > 0) || adam.lr_final < 0) throw ContractError("learning rate must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1)) {
    throw ContractError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0)) throw ContractError("Adam eps must be positive");
  if (remesh.interval_steps < 1) throw ContractError("remesh interval must be at least 1");
  remesh_factors().check();
  weights.check();
  if (seed_level < 0 || seed_level > 7) throw ContractError("seed level must be in [0, 7]");
}

namespace {

bool all_frozen(const Mesh& mesh) {
  if (mesh.vertex_count() == 0) return true;
  return mesh.frozen.size() == mesh.vertex_count() && mesh.frozen.all();
}

void remesh_in_place(Mesh& mesh, AdamState& adam, double target, const RemeshFactors& factors) {
  if (mesh.empty() || all_frozen(mesh)) return;
  RemeshResult r = remesh_pass(mesh, target, factors, &adam.moments);
  mesh = std::move(r.mesh);
  adam.moments = std::move(r.payload);
}

void adam_update(Mesh& mesh, const RowPoints<double>& grad, AdamState& adam, const AdamConfig& cfg, double lr) {
  ++adam.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    if (mesh.is_frozen(v)) continue;
    for (int k = 0; k < 3; ++k) {
      const double g = grad(v, k);
      double& m = adam.moments(v, k);
      double& s = adam.moments(v, 3 + k);
      m = cfg.beta1 * m + (1 - cfg.beta1) * g;
      s = cfg.beta2 * s + (1 - cfg.beta2) * g * g;
      mesh.positions(v, k) -= lr * (m / c1) / (std::sqrt(s / c2) + cfg.eps);
    }
  }
}

bool has_foreground(const MultiviewSet& targets) {
  for (const auto& v : targets.views) {
    if ((v.alpha.data > 0.5).any()) return true;
  }
  return false;
}

}  // namespace

Mesh optimize_stage(const Mesh& mesh, const MultiviewSet& targets, const StageConfig& stage,
                    const ReconstructionConfig& config, AdamState& adam, StageReport* report) {
  const auto start = std::chrono::steady_clock::now();
  const RemeshFactors factors = config.remesh_factors();
  Mesh current = mesh;
  if (adam.moments.rows() != current.vertex_count()) adam.reset(current.vertex_count());
  StageReport local;
  StageReport& rep = report ? *report : local;
  rep.steps = stage.steps;
  rep.losses.clear();

  const bool idle = current.empty() || all_frozen(current);
  // An interval longer than the stage switches remeshing off entirely.
  const bool remeshing = !idle && config.remesh.interval_steps <= stage.steps;
  if (remeshing) remesh_in_place(current, adam, stage.target_edge_length, factors);

  Mesh checkpoint = current;
  AdamState checkpoint_adam = adam;
  bool retried = false;
  double lr_scale = 1.0;
  for (int step = 0; step < stage.steps; ++step) {
    if (idle) {
      if (step == 0) {
        rep.loss_start = loss_and_gradients(current, targets, config.weights, config.threads, false).loss;
        rep.losses.assign(static_cast<std::size_t>(stage.steps), rep.loss_start);
      }
      break;
    }
    if (step > 0 && step % config.remesh.interval_steps == 0) {
      remesh_in_place(current, adam, stage.target_edge_length, factors);
    }
    const LossResult r = loss_and_gradients(current, targets, config.weights, config.threads, true);
    if (!std::isfinite(r.loss) || !r.grad.allFinite()) {
      if (retried) {
        throw DivergedError("loss became non-finite at step " + std::to_string(step), checkpoint);
      }
      retried = true;
      lr_scale *= 0.5;
      current = checkpoint;
      adam = checkpoint_adam;
      continue;
    }
    if (rep.losses.empty()) rep.loss_start = r.loss;
    rep.losses.push_back(r.loss);
    checkpoint = current;
    checkpoint_adam = adam;
    const double frac = stage.steps > 1 ? static_cast<double>(step) / (stage.steps - 1) : 0.0;
    const double lr = lr_scale * (config.adam.lr + (config.adam.lr_final - config.adam.lr) * frac);
    adam_update(current, r.grad, adam, config.adam, lr);
  }
  if (remeshing) remesh_in_place(current, adam, stage.target_edge_length, factors);

  rep.loss_end = loss_and_gradients(current, targets, config.weights, config.threads, false).loss;
  if (!std::isfinite(rep.loss_end)) throw DivergedError("loss became non-finite after the last step", checkpoint);
  rep.vertices = current.vertex_count();
  rep.faces = current.face_count();
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return current;
}

Mesh run_stages(const Mesh& initial, const MultiviewSet& targets, const ReconstructionConfig& config) {
  config.check();
  targets.check();
  Mesh mesh = initial;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const StageConfig& stage = config.stages[i];
    const MultiviewSet stage_targets = downsample(targets, stage.render_resolution);
    AdamState adam;
    adam.reset(mesh.vertex_count());
    StageReport report;
    report.stage = static_cast<int>(i) + 1;
    mesh = optimize_stage(mesh, stage_targets, stage, config, adam, &report);
    if (config.on_stage) config.on_stage(report);
  }
  const ValidationReport v = validate(mesh, config.remesh_factors().area_epsilon);
  if (!v.ok()) throw Error("reconstruction produced an invalid mesh: " + v.summary());
  return mesh;
}

Mesh reconstruct_from_scratch(const MultiviewSet& targets, const ReconstructionConfig& config) {
  config.check();
  targets.check();
  if (!has_foreground(targets)) throw EmptyTargetError("every target alpha is empty");
  const Rig rig = targets.rig();
  const double h = rig[0].half_extent;
  Box3 box(Eigen::Vector3d::Constant(-0.5 * h), Eigen::Vector3d::Constant(0.5 * h));
  if (targets.size() >= 2) {
    std::vector<ImageD> masks;
    for (const auto& v : targets.views) masks.push_back(threshold_mask(v.alpha));
    const Box3 hull = carve_hull(masks, rig);
    if (hull.volume() > 0) box = hull;
  }
  const Mesh initial = icosphere<double>(box.center(), 0.5 * box.sizes().maxCoeff(), 3);
  return run_stages(initial, targets, config);
}

Mesh reconstruct_incremental(const Mesh& prior, const MultiviewSet& targets, const ReconstructionConfig& config,
                             const EditRegion* region) {
  config.check();
  targets.check();
  const ValidationReport pv = validate(prior);
  if (!pv.indices_ok() || !pv.non_finite_vertices.empty()) {
    throw ContractError("prior mesh is invalid: " + pv.summary());
  }
  Mesh start = prior;
  if (region) {
    region->check();
    const Rig rig = targets.rig();
    if (region->rig.size() != rig.size()) throw ContractError("region and targets use different rigs");
    for (std::size_t i = 0; i < rig.size(); ++i) {
      const auto& a = region->rig[i];
      const auto& b = rig[i];
      if (a.azimuth != b.azimuth || a.elevation != b.elevation || a.half_extent != b.half_extent ||
          a.resolution != b.resolution) {
        throw ContractError("region camera " + std::to_string(i) + " differs from the target camera");
      }
    }
    if (config.freeze_prior) start = freeze_outside(prior, *region, config.effective_dilation());
    if (region->mode == RegionMode::added && !region->empty()) {
      start = append(start, seed_sphere(*region, config.seed_level));
    }
  }
  return run_stages(start, targets, config);
}

}  // namespace meshlift

// Acceptance harness: one PASS/FAIL line per criterion.
//
//   meshlift_acceptance            run everything
//   meshlift_acceptance 1 7 8      run a subset (9 implies 2-6)

#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "meshlift/mesh_io.hpp"
#include "meshlift/metrics.hpp"
#include "meshlift/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace {

using namespace meshlift;
using namespace meshlift::testing;
using Clock = std::chrono::steady_clock;

constexpr int kResolution = 256;
constexpr std::uint64_t kSeed = 0;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const char* fmt, ...) __attribute__((format(printf, 3, 4)));
};

void Verdict::check(bool ok, const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  if (!detail.empty()) detail += "; ";
  detail += buf;
  if (!ok) {
    detail += " [fail]";
    pass = false;
  }
}

void report(int id, const char* name, const Verdict& v) {
  std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
  std::fflush(stdout);
}

/// Raw bytes of everything an output mesh carries.
std::string fingerprint(const Mesh& m) {
  std::string s;
  auto put = [&s](const void* p, std::size_t n) { s.append(static_cast<const char*>(p), n); };
  put(m.positions.data(), sizeof(double) * m.positions.size());
  put(m.faces.data(), sizeof(int) * m.faces.size());
  put(m.colors.data(), sizeof(double) * m.colors.size());
  put(m.uvs.data(), sizeof(double) * m.uvs.size());
  put(m.face_uvs.data(), sizeof(int) * m.face_uvs.size());
  return s;
}

std::string fingerprint(const ImageD& img) {
  return std::string(reinterpret_cast<const char*>(img.data.data()), sizeof(double) * img.data.size());
}

double diagonal(const Mesh& m) { return bounding_box(m).diagonal().norm(); }

/// Unnormalised chamfer as a fraction of the reference's bounding-box diagonal.
double chamfer_fraction(const Mesh& result, const Mesh& reference) {
  return chamfer(result, reference, 100000, kSeed, false).raw / diagonal(reference);
}

// ---- 1: gradient check ----

double loss_value(const Mesh& m, const MultiviewSet& targets, const LossWeights& w) {
  return loss_and_gradients(m, targets, w, 1, false).loss;
}

Verdict gradient_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1, 1);
  int good = 0;
  double worst_cos = 1, worst_median = 0;
  const int meshes = 50;
  for (int trial = 0; trial < meshes; ++trial) {
    // Level-1 icosphere (80 faces) with radial noise, then a random affine map.
    Mesh m = random_blob(rng, 1, 0.1);
    const Eigen::Matrix3d rot =
        Eigen::AngleAxisd(M_PI * u(rng), Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized()).toRotationMatrix();
    const Eigen::Vector3d scale(0.75 + 0.25 * u(rng), 0.75 + 0.25 * u(rng), 0.75 + 0.25 * u(rng));
    const Eigen::RowVector3d shift(0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng));
    m.positions = ((m.positions * scale.asDiagonal()) * rot.transpose()).rowwise() + shift;
    const Rig rig = standard_rig_six<double>(64, 1.4);
    const MultiviewSet targets = oracle_views(random_blob(rng, 2, 0.15), rig);
    const LossWeights w;
    const LossResult r = loss_and_gradients(m, targets, w);
    const double step = 1e-4 * diagonal(m);
    RowPoints<double> fd(m.vertex_count(), 3);
    Mesh probe = m;
    for (Eigen::Index v = 0; v < m.vertex_count(); ++v) {
      for (int k = 0; k < 3; ++k) {
        probe.positions(v, k) = m.positions(v, k) + step;
        const double up = loss_value(probe, targets, w);
        probe.positions(v, k) = m.positions(v, k) - step;
        const double down = loss_value(probe, targets, w);
        probe.positions(v, k) = m.positions(v, k);
        fd(v, k) = (up - down) / (2 * step);
      }
    }
    const double cosine = r.grad.cwiseProduct(fd).sum() / (r.grad.norm() * fd.norm());
    std::vector<double> rel;
    for (Eigen::Index i = 0; i < fd.size(); ++i) {
      const double floor = std::max(std::abs(fd.data()[i]), 1e-6 * fd.cwiseAbs().maxCoeff());
      rel.push_back(std::abs(r.grad.data()[i] - fd.data()[i]) / floor);
    }
    std::nth_element(rel.begin(), rel.begin() + rel.size() / 2, rel.end());
    const double median = rel[rel.size() / 2];
    worst_cos = std::min(worst_cos, cosine);
    worst_median = std::max(worst_median, median);
    good += cosine > 0.99 && median < 1e-2;
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.check(good == meshes, "%d/%d meshes within tolerance", good, meshes);
  v.check(worst_cos > 0.99, "worst cosine %.6f", worst_cos);
  v.check(worst_median < 1e-2, "worst median rel err %.2e", worst_median);
  v.check(secs < 300, "%.1f s", secs);
  return v;
}

// ---- 2-6: the oracle round trips, also replayed for determinism ----

struct Outputs {
  std::vector<std::string> prints;
};

ReconstructionConfig default_config(double half_extent, int threads) {
  ReconstructionConfig c = ReconstructionConfig::defaults(half_extent, kResolution);
  c.threads = threads;
  return c;
}

Mesh sphere_gt() { return unit_sphere(3); }
Mesh box_gt() { return cube(Eigen::Vector3d::Zero(), 1.0); }

const Eigen::Vector3d kPartCentre(0.0, 0.0, 1.1);
constexpr double kPartSide = 0.5;

Mesh part_gt() { return cube(kPartCentre, kPartSide); }
Mesh edited_gt() { return append(sphere_gt(), part_gt()); }

Verdict render_and_recover(int threads, Outputs& out) {
  Verdict v;
  const struct {
    const char* name;
    Mesh gt;
  } cases[] = {{"sphere", sphere_gt()}, {"box", box_gt()}};
  for (const auto& c : cases) {
    const double h = default_half_extent(c.gt);
    const MultiviewSet views = oracle_views(c.gt, standard_rig_six<double>(kResolution, h), threads);
    const auto t0 = Clock::now();
    const Mesh m = reconstruct_from_scratch(views, default_config(h, threads));
    const double secs = seconds_since(t0);
    out.prints.push_back(fingerprint(m));
    const double cd = chamfer_fraction(m, c.gt);
    const double iou = volume_iou(m, c.gt);
    v.check(cd < 0.02, "%s chamfer %.4f%% diag", c.name, 100 * cd);
    v.check(iou > 0.85, "%s IoU %.4f", c.name, iou);
    v.check(secs < 120, "%s %.1f s", c.name, secs);
  }
  return v;
}

/// Mean distance, in both directions, between the parts of two surfaces that
/// lie inside `box`.
double chamfer_inside(const Mesh& a, const Mesh& b, const Box3& box) {
  const std::size_t n = 200000;
  auto one_way = [&](const Mesh& from, const Mesh& to, std::uint64_t seed) {
    const RowPoints<double> pts = sample_surface(from, n, seed);
    const SurfaceDistance d(to);
    double sum = 0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const Eigen::Vector3d p = pts.row(i).transpose();
      if (!box.contains(p)) continue;
      sum += d.distance(p);
      ++count;
    }
    return count ? sum / double(count) : 0.0;
  };
  return 0.5 * (one_way(a, b, 1) + one_way(b, a, 2));
}

Verdict edit_locality(int threads, Outputs& out) {
  Verdict v;
  const Mesh prior = sphere_gt();
  const Mesh gt = edited_gt();
  const double h = default_half_extent(gt);
  const MultiviewSet views = oracle_views(gt, standard_rig_six<double>(kResolution, h), threads);
  const ReconstructionConfig cfg = default_config(h, threads);
  const EditResult r = run_edit(prior, views, cfg, BakeConfig{});
  out.prints.push_back(fingerprint(r.mesh));

  const Box3 part_box = bounding_box(part_gt());
  v.check(r.region.box.contains(kPartCentre), "region box contains the part centre");
  v.check(r.region.box.volume() <= 8 * part_box.volume(), "region box volume %.4f (part AABB %.4f)",
          r.region.box.volume(), part_box.volume());

  // Frozen prior vertices must survive bit for bit, in order.
  const Mesh frozen = freeze_outside(prior, r.region, cfg.effective_dilation());
  Eigen::Index next = 0;
  int kept = 0;
  for (Eigen::Index p = 0; p < prior.vertex_count(); ++p) {
    if (!frozen.frozen(p)) continue;
    while (next < r.mesh.vertex_count() && r.mesh.vertex(next) != prior.vertex(p)) ++next;
    if (next == r.mesh.vertex_count()) break;
    ++kept;
  }
  v.check(kept == frozen.frozen.count(), "%d/%ld frozen vertices bit-identical", kept,
          static_cast<long>(frozen.frozen.count()));

  const double cd = chamfer_inside(r.mesh, gt, r.region.box) / diagonal(gt);
  v.check(cd < 0.03, "chamfer inside region %.4f%% diag", 100 * cd);
  return v;
}

Verdict noop_edit(int threads, Outputs& out) {
  Verdict v;
  const Mesh prior = sphere_gt();
  const double h = default_half_extent(prior);
  const MultiviewSet views = oracle_views(prior, standard_rig_six<double>(kResolution, h), threads);
  const EditResult r = run_edit(prior, views, default_config(h, threads), BakeConfig{});
  out.prints.push_back(fingerprint(r.mesh));
  v.check(r.region.empty(), "region empty (%zu changed pixels)", r.region.changed_pixels());
  v.check(bit_identical(r.mesh.positions, prior.positions), "positions bit-identical");
  v.check(r.mesh.faces.rows() == prior.faces.rows() && (r.mesh.faces.array() == prior.faces.array()).all(),
          "faces identical");
  return v;
}

Verdict progressive(int threads, Outputs& out) {
  Verdict v;
  const Mesh gt = edited_gt();
  const double h = default_half_extent(gt);
  const Rig rig = standard_rig_six<double>(kResolution, h);
  const fs::path dir = temp_dir("acceptance_progressive_t" + std::to_string(threads));
  save_views(oracle_views(sphere_gt(), rig, threads), dir / "step1");
  save_views(oracle_views(gt, rig, threads), dir / "step2");
  {
    std::FILE* f = std::fopen((dir / "script.json").c_str(), "w");
    std::fputs(R"({"version": 1, "steps": [{"views": "step1/manifest.json"}, {"views": "step2/manifest.json"}]})",
               f);
    std::fclose(f);
  }
  auto config_for = [&](const MultiviewSet& views) {
    return default_config(views.views.front().camera.half_extent, threads);
  };
  const auto steps = run_progressive(read_step_script(dir / "script.json"), dir / "out", config_for, BakeConfig{});
  out.prints.push_back(fingerprint(steps.back().mesh));

  const MultiviewSet step1_views = load_views(dir / "step1" / "manifest.json");
  const Mesh direct = run_reconstruct(step1_views, config_for(step1_views), BakeConfig{});
  v.check(fingerprint(direct) == fingerprint(steps.front().mesh), "step 1 equals the from-scratch path");
  const double cd = chamfer_fraction(steps.back().mesh, gt);
  v.check(cd < 0.025, "final chamfer %.4f%% diag", 100 * cd);
  v.check(steps.back().components == 2, "%d components", steps.back().components);
  return v;
}

Mesh rainbow_sphere() {
  Mesh m = sphere_gt();
  m.colors.resize(m.vertex_count(), 3);
  for (Eigen::Index i = 0; i < m.vertex_count(); ++i) {
    const Eigen::Vector3d p = m.vertex(i);
    m.colors.row(i) << 0.5 + 0.45 * p.x(), 0.5 + 0.45 * std::sin(3 * p.y()), 0.5 + 0.45 * p.z() * p.z();
  }
  return m;
}

Verdict texture_round_trip(int threads, Outputs& out) {
  Verdict v;
  const Mesh src = rainbow_sphere();
  const double h = default_half_extent(src);
  const MultiviewSet views = oracle_views(src, standard_rig_six<double>(kResolution, h), threads);
  const Mesh bare = sphere_gt();
  auto score = [&](const char* name, const Mesh& baked, const ImageD* texture) {
    RenderOptions opt;
    opt.texture = texture;
    double worst_psnr = kPsnrCap, worst_ssim = 1;
    for (const auto& view : views.views) {
      const ViewRecord r = rasterize(baked, view.camera, opt);
      worst_psnr = std::min(worst_psnr, psnr(r.color, view.color, &view.alpha));
      worst_ssim = std::min(worst_ssim, ssim(r.color, view.color));
    }
    v.check(worst_psnr >= 25, "%s PSNR %.2f dB", name, worst_psnr);
    v.check(worst_ssim >= 0.9, "%s SSIM %.4f", name, worst_ssim);
  };
  BakeConfig cfg;
  cfg.threads = threads;
  const Mesh colored = bake_vertex_colors(bare, views, cfg);
  out.prints.push_back(fingerprint(colored));
  score("vertex", colored, nullptr);
  cfg.mode = BakeMode::atlas;
  const AtlasResult atlas = bake_atlas(bare, views, cfg);
  out.prints.push_back(fingerprint(atlas.mesh));
  out.prints.push_back(fingerprint(atlas.texture));
  score("atlas", atlas.mesh, &atlas.texture);
  return v;
}

// ---- 7: metric oracles ----

Verdict metric_oracles() {
  Verdict v;
  const Mesh s = unit_sphere(3);
  v.check(std::abs(chamfer(s, s).value) <= 1e-9, "chamfer(A,A) %.1e", chamfer(s, s).value);
  const double iou = volume_iou(cube(Eigen::Vector3d::Constant(0.5), 1.0), cube(Eigen::Vector3d(1.0, 0.5, 0.5), 1.0));
  v.check(std::abs(iou - 1.0 / 3.0) <= 0.01, "shifted-cube IoU %.5f", iou);

  const Mesh a = unit_sphere(2);
  Mesh b = unit_sphere(2);
  b.positions.col(0).array() += 0.1;
  const double lib = chamfer(a, b, 100000, kSeed, false).value;
  const double oracle = brute_force_chamfer(a, b, 500000, 4242);  // 10^6 samples over both sides
  v.check(std::abs(lib - oracle) <= 0.02 * oracle, "offset-sphere chamfer %.6f vs brute force %.6f", lib, oracle);

  const ImageD x(64, 64, 3, 0.5), y(64, 64, 3, 0.5 + 1.0 / 255.0);
  const double p = psnr(x, y);
  v.check(std::abs(p - 48.13) <= 0.01, "+1/255 PSNR %.4f dB", p);
  return v;
}

// ---- 8: remeshing fuzz ----

Verdict remesh_fuzz() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  const Rig rig = standard_rig_six<double>(32, 1.6);
  const std::vector<MultiviewSet> targets = {
      oracle_views(unit_sphere(2), rig), oracle_views(cube(Eigen::Vector3d::Zero(), 1.2), rig),
      oracle_views(append(unit_sphere(2), cube(Eigen::Vector3d(0, 0, 1.1), 0.5)), rig)};
  int failures = 0, diverged = 0;
  std::string first_failure;
  const int runs = 500;
  for (int run = 0; run < runs; ++run) {
    Mesh m = random_blob(rng, 1 + static_cast<int>(u(rng) * 2), 0.35 * u(rng));
    if (u(rng) < 0.3) {
      m.frozen.resize(m.vertex_count());
      for (Eigen::Index i = 0; i < m.vertex_count(); ++i) m.frozen(i) = u(rng) < 0.3;
    }
    ReconstructionConfig cfg = ReconstructionConfig::defaults(1.6, 32);
    cfg.adam.lr = 0.002 + 0.05 * u(rng);
    cfg.adam.lr_final = 0.1 * cfg.adam.lr;
    cfg.remesh.interval_steps = 1 + static_cast<int>(u(rng) * 5);
    StageConfig stage{4 + static_cast<int>(u(rng) * 12), 0.04 + 0.4 * u(rng), 32};
    AdamState adam;
    adam.reset(m.vertex_count());
    try {
      const Mesh r = optimize_stage(m, targets[run % targets.size()], stage, cfg, adam);
      const ValidationReport rep = validate(r);
      if (!rep.ok()) {
        ++failures;
        if (first_failure.empty()) first_failure = "run " + std::to_string(run) + ": " + rep.summary();
      }
    } catch (const DivergedError&) {
      ++diverged;
    }
  }
  Verdict v;
  v.check(failures == 0 && diverged == 0, "%d/%d runs valid, %d diverged%s%s", runs - failures - diverged, runs,
          diverged, first_failure.empty() ? "" : ", first: ", first_failure.c_str());
  v.check(true, "%.1f s", seconds_since(t0));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };
  std::printf("hardware threads: %u\n", std::thread::hardware_concurrency());
  bool all = true;
  auto record = [&](int id, const char* name, const Verdict& v) {
    report(id, name, v);
    all = all && v.pass;
  };

  if (want(1)) record(1, "gradient vs finite differences", gradient_check());

  using Round = Verdict (*)(int, Outputs&);
  const struct {
    int id;
    const char* name;
    Round fn;
  } rounds[] = {{2, "render and recover", render_and_recover},
                {3, "edit locality", edit_locality},
                {4, "no-op edit", noop_edit},
                {5, "progressive", progressive},
                {6, "texture round trip", texture_round_trip}};
  std::vector<Outputs> first(7);
  for (const auto& r : rounds) {
    if (want(r.id) || want(9)) {
      const auto t0 = Clock::now();
      Verdict v = r.fn(1, first[r.id]);
      v.check(true, "%.1f s total", seconds_since(t0));
      if (want(r.id)) record(r.id, r.name, v);
    }
  }

  if (want(7)) record(7, "metric oracles", metric_oracles());
  if (want(8)) record(8, "remeshing fuzz", remesh_fuzz());

  if (want(9)) {
    Verdict v;
    for (const auto& r : rounds) {
      for (int threads : {1, 8}) {
        Outputs again;
        r.fn(threads, again);
        v.check(again.prints == first[r.id].prints, "criterion %d rerun threads=%d %s", r.id, threads,
                again.prints == first[r.id].prints ? "identical" : "differs");
      }
    }
    record(9, "determinism", v);
  }
  return all ? 0 : 1;
}

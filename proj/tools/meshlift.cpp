// meshlift command-line front end.
//
// Exit codes: 0 success, 1 other engine error, 2 bad input, 3 diverged,
// 4 contract violation.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "meshlift/mesh_io.hpp"
#include "meshlift/metrics.hpp"
#include "meshlift/pipeline.hpp"

namespace {

using namespace meshlift;

enum ExitCode { kOk = 0, kError = 1, kBadInput = 2, kDiverged = 3, kContract = 4 };

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  int resolution = 0;
  std::string rig = "six";
  std::string out;
  std::vector<std::string> sets;
  int threads = 0;
};

Settings load_settings(const Globals& g) {
  Settings s = g.config_path.empty() ? Settings{} : Settings::read(g.config_path);
  for (const auto& kv : g.sets) s.set(kv);
  if (g.threads > 0) s.set("threads", std::to_string(g.threads));
  s.check_keys();
  return s;
}

std::uint64_t seed_of(const Globals& g, const Settings& s) {
  if (g.seed != 0 || !s.has("seed")) return g.seed;
  return static_cast<std::uint64_t>(std::stoull(s.values().at("seed")));
}

void require_out(const Globals& g) {
  if (g.out.empty()) throw InputError("--out is required");
}

ReconstructionConfig config_for(const Settings& s, const MultiviewSet& views) {
  ReconstructionConfig c = s.reconstruction(views.views.front().camera.half_extent, views.views.front().camera.resolution);
  c.on_stage = [](const StageReport& r) {
    std::printf("stage=%d steps=%d loss_start=%.9g loss_end=%.9g vertices=%ld faces=%ld seconds=%.3f\n", r.stage,
                r.steps, r.loss_start, r.loss_end, static_cast<long>(r.vertices), static_cast<long>(r.faces),
                r.seconds);
    std::fflush(stdout);
  };
  return c;
}

int cmd_render(const Globals& g, const std::string& mesh_path, double half_extent, bool depth,
               const std::string& normals) {
  require_out(g);
  const Settings s = load_settings(g);
  const Mesh mesh = read_obj(mesh_path);
  const ValidationReport v = validate(mesh);
  if (!v.indices_ok()) throw InputError("mesh '" + mesh_path + "' is malformed: " + v.summary());
  const int res = g.resolution > 0 ? g.resolution : 512;
  const double h = half_extent > 0 ? half_extent : default_half_extent(mesh);
  RenderOptions opt;
  if (normals == "vertex") {
    opt.normals = NormalSource::vertex;
  } else if (normals == "face") {
    opt.normals = NormalSource::face;
  } else if (normals == "crease") {
    opt.normals = NormalSource::crease;
  } else {
    throw InputError("--normals must be vertex, face or crease");
  }
  const int threads = s.has("threads") ? std::stoi(s.values().at("threads")) : 1;
  const MultiviewSet views = render_conditions(mesh, make_rig(g.rig, res, h), opt, threads);
  const ViewManifest m = save_views(views, g.out, depth);
  std::printf("views=%zu resolution=%d half_extent=%.17g manifest=%s\n", m.views.size(), m.resolution,
              m.half_extent, (fs::path(g.out) / "manifest.json").string().c_str());
  return kOk;
}

int cmd_reconstruct(const Globals& g, const std::string& manifest, const std::string& init,
                    const std::string& region_path) {
  require_out(g);
  const Settings s = load_settings(g);
  const MultiviewSet views = load_views(fs::path(manifest));
  const ReconstructionConfig cfg = config_for(s, views);
  Mesh out;
  if (init.empty()) {
    if (!region_path.empty()) throw InputError("--region needs --init");
    out = run_reconstruct(views, cfg, s.bake());
  } else {
    const Mesh prior = read_obj(init);
    std::optional<EditRegion> region;
    if (!region_path.empty()) region = read_region(region_path, views.rig());
    BakeConfig b = s.bake();
    b.mode = BakeMode::vertex_colors;
    Mesh m = reconstruct_incremental(prior, views, cfg, region ? &*region : nullptr);
    m.frozen.resize(0);
    out = bake_vertex_colors(m, views, b);
  }
  write_obj(g.out, out);
  std::printf("mesh=%s vertices=%ld faces=%ld\n", g.out.c_str(), static_cast<long>(out.vertex_count()),
              static_cast<long>(out.face_count()));
  return kOk;
}

int cmd_edit(const Globals& g, const std::string& prior_path, const std::string& manifest) {
  require_out(g);
  const Settings s = load_settings(g);
  const Mesh prior = read_obj(prior_path);
  const MultiviewSet views = load_views(fs::path(manifest));
  const EditResult r = run_edit(prior, views, config_for(s, views), s.bake());
  write_obj(g.out, r.mesh);
  const auto& lo = r.region.box.min();
  const auto& hi = r.region.box.max();
  std::printf("region_mode=%s region_min=%.6g,%.6g,%.6g region_max=%.6g,%.6g,%.6g changed_pixels=%zu\n",
              to_string(r.region.mode), lo.x(), lo.y(), lo.z(), hi.x(), hi.y(), hi.z(), r.region.changed_pixels());
  std::printf("mesh=%s vertices=%ld faces=%ld\n", g.out.c_str(), static_cast<long>(r.mesh.vertex_count()),
              static_cast<long>(r.mesh.face_count()));
  return kOk;
}

int cmd_progressive(const Globals& g, const std::string& script_path) {
  require_out(g);
  const Settings s = load_settings(g);
  const StepScript script = read_step_script(script_path);
  const auto steps = run_progressive(
      script, g.out, [&](const MultiviewSet& v) { return config_for(s, v); }, s.bake());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    std::printf("step=%zu vertices=%ld faces=%ld components=%d\n", i + 1,
                static_cast<long>(steps[i].mesh.vertex_count()), static_cast<long>(steps[i].mesh.face_count()),
                steps[i].components);
  }
  return kOk;
}

int cmd_bake(const Globals& g, const std::string& mesh_path, const std::string& manifest, const std::string& mode) {
  require_out(g);
  Settings s = load_settings(g);
  if (!mode.empty()) s.set("bake_mode", mode);
  BakeConfig b = s.bake();
  const Mesh mesh = read_obj(mesh_path);
  const MultiviewSet views = load_views(fs::path(manifest));
  if (b.mode == BakeMode::vertex_colors) {
    write_obj(g.out, bake_vertex_colors(mesh, views, b));
  } else {
    const AtlasResult r = bake_atlas(mesh, views, b);
    const fs::path out(g.out);
    const std::string tex = out.stem().string() + "_albedo.png";
    write_png((out.parent_path() / tex).string(), r.texture);
    write_obj(g.out, r.mesh, tex);
    std::printf("charts=%d texture=%s\n", r.charts, tex.c_str());
  }
  std::printf("mesh=%s\n", g.out.c_str());
  return kOk;
}

int cmd_eval(const Globals& g, const std::vector<std::string>& meshes, const std::vector<std::string>& images,
             const std::string& mask_path) {
  const Settings s = load_settings(g);
  // Every metric key appears once; metrics that were not requested are null.
  nlohmann::json report = {{"chamfer", nullptr}, {"chamfer_raw", nullptr}, {"chamfer_scale", nullptr},
                            {"volume_iou", nullptr}, {"psnr", nullptr},    {"ssim", nullptr}};
  if (meshes.size() == 2) {
    const Mesh a = read_obj(meshes[0]);
    const Mesh b = read_obj(meshes[1]);
    const ChamferResult c = chamfer(a, b, s.chamfer_samples(), seed_of(g, s), true);
    report["chamfer"] = c.value;
    report["chamfer_raw"] = c.raw;
    report["chamfer_scale"] = c.scale;
    report["volume_iou"] = volume_iou(a, b, s.iou_grid());
  } else if (!meshes.empty()) {
    throw InputError("--mesh needs exactly two paths");
  }
  if (images.size() == 2) {
    const ImageD img = read_png(images[0]);
    const ImageD ref = read_png(images[1]);
    std::optional<ImageD> mask;
    if (!mask_path.empty()) mask = read_png(mask_path);
    report["psnr"] = psnr(img, ref, mask ? &*mask : nullptr);
    report["ssim"] = ssim(img, ref);
  } else if (!images.empty()) {
    throw InputError("--image needs exactly two paths");
  }
  if (meshes.empty() && images.empty()) throw InputError("eval needs --mesh A B and/or --image IMG REF");
  const std::string text = report.dump(2) + "\n";
  if (!g.out.empty()) {
    std::FILE* f = std::fopen(g.out.c_str(), "w");
    if (!f) throw InputError("cannot write '" + g.out + "'");
    std::fputs(text.c_str(), f);
    std::fclose(f);
  }
  std::fputs(text.c_str(), stdout);
  return kOk;
}

int cmd_alpha_extract(const Globals& g, const std::string& color_path, int threshold) {
  require_out(g);
  if (threshold < 0 || threshold > 255) throw InputError("--threshold must be in [0, 255]");
  const ImageD color = read_png(color_path);
  ImageD alpha(color.width, color.height, 1);
  for (Eigen::Index p = 0; p < color.pixel_count(); ++p) {
    double lo = 1.0;
    for (int k = 0; k < color.channels; ++k) lo = std::min(lo, color.at(p, k));
    const long level = std::lround(lo * 255.0);
    alpha.at(p) = level < 255 - threshold ? 1.0 : 0.0;
  }
  write_png(g.out, alpha);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meshlift: multiview mesh reconstruction, editing and baking"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value config file");
  app.add_option("--seed", g.seed, "seed for every stochastic component");
  app.add_option("--res", g.resolution, "render resolution");
  app.add_option("--rig", g.rig, "camera rig: six or eight");
  app.add_option("--out", g.out, "output path");
  app.add_option("--set", g.sets, "override a config key (key=value)");
  app.add_option("--threads", g.threads, "worker threads");
  app.fallthrough();

  std::string mesh_path, manifest, init, region, prior, script, mode, mask, color;
  std::vector<std::string> meshes, images;
  double half_extent = 0;
  bool depth = false;
  std::string normals = "crease";
  int threshold = 10;

  auto* render = app.add_subcommand("render", "render condition views of a mesh");
  render->add_option("mesh", mesh_path)->required();
  render->add_option("--half-extent", half_extent, "ortho half extent (default: fit 90%)");
  render->add_flag("--depth", depth, "also write 16-bit depth maps");
  render->add_option("--normals", normals, "vertex, face or crease");

  auto* reconstruct = app.add_subcommand("reconstruct", "reconstruct a mesh from a view manifest");
  reconstruct->add_option("manifest", manifest)->required();
  reconstruct->add_option("--init", init, "prior mesh for incremental reconstruction");
  reconstruct->add_option("--region", region, "region JSON (with --init)");

  auto* edit = app.add_subcommand("edit", "apply an edit given the post-edit views");
  edit->add_option("prior", prior)->required();
  edit->add_option("manifest", manifest)->required();

  auto* progressive = app.add_subcommand("progressive", "run a multi-step part-by-part script");
  progressive->add_option("script", script)->required();

  auto* bake = app.add_subcommand("bake", "bake view colours onto a mesh");
  bake->add_option("mesh", mesh_path)->required();
  bake->add_option("manifest", manifest)->required();
  bake->add_option("--mode", mode, "vertex or atlas");

  auto* eval = app.add_subcommand("eval", "metrics report as JSON");
  eval->add_option("--mesh", meshes, "two meshes: result and reference")->expected(2);
  eval->add_option("--image", images, "two images: result and reference")->expected(2);
  eval->add_option("--mask", mask, "foreground mask for PSNR");

  auto* alpha = app.add_subcommand("alpha-extract", "alpha mask from a white-background colour image");
  alpha->add_option("color", color)->required();
  alpha->add_option("--threshold", threshold, "white tolerance in 8-bit levels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }

  try {
    if (*render) return cmd_render(g, mesh_path, half_extent, depth, normals);
    if (*reconstruct) return cmd_reconstruct(g, manifest, init, region);
    if (*edit) return cmd_edit(g, prior, manifest);
    if (*progressive) return cmd_progressive(g, script);
    if (*bake) return cmd_bake(g, mesh_path, manifest, mode);
    if (*eval) return cmd_eval(g, meshes, images, mask);
    if (*alpha) return cmd_alpha_extract(g, color, threshold);
  } catch (const DivergedError& e) {
    std::fprintf(stderr, "meshlift: diverged: %s\n", e.what());
    return kDiverged;
  } catch (const InputError& e) {
    std::fprintf(stderr, "meshlift: bad input: %s\n", e.what());
    return kBadInput;
  } catch (const StructuralError& e) {
    std::fprintf(stderr, "meshlift: bad input: %s\n", e.what());
    return kBadInput;
  } catch (const EmptyTargetError& e) {
    std::fprintf(stderr, "meshlift: bad input: %s\n", e.what());
    return kBadInput;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "meshlift: contract violation: %s\n", e.what());
    return kContract;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "meshlift: bad input: %s\n", e.what());
    return kBadInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "meshlift: error: %s\n", e.what());
    return kError;
  }
  return kError;
}

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "meshlift/mesh_io.hpp"
#include "meshlift/pipeline.hpp"
#include "test_util.hpp"

namespace {

using namespace meshlift;
using namespace meshlift::testing;
using nlohmann::json;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

ViewManifest golden() {
  ViewManifest m;
  m.resolution = 256;
  m.half_extent = 1.25;
  m.views.push_back({0, 0, "view_00_color.png", "view_00_normal.png", "view_00_alpha.png", std::nullopt});
  m.views.push_back({90, 15, "view_01_color.png", "view_01_normal.png", "view_01_alpha.png", "view_01_depth.png"});
  return m;
}

TEST(Manifest, ReadsTheGoldenFile) {
  EXPECT_EQ(read_manifest(fs::path(MESHLIFT_TEST_DATA) / "golden_manifest.json"), golden());
}

TEST(Manifest, WritesTheGoldenFieldNames) {
  const json want = json::parse(slurp(fs::path(MESHLIFT_TEST_DATA) / "golden_manifest.json"));
  EXPECT_EQ(json::parse(manifest_to_json(golden())), want);
}

TEST(Manifest, RoundTrip) {
  const ViewManifest m = golden();
  EXPECT_EQ(manifest_from_json(manifest_to_json(m)), m);
}

TEST(Manifest, UnknownFieldsIgnored) {
  json j = json::parse(manifest_to_json(golden()));
  j["generator"] = "someone else";
  j["views"][0]["prompt"] = "a chair";
  EXPECT_EQ(manifest_from_json(j.dump()), golden());
}

void expect_input_error_naming(const std::string& text, const std::string& field) {
  try {
    manifest_from_json(text);
    ADD_FAILURE() << "no error for missing " << field;
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
  }
}

TEST(Manifest, MissingOrMistypedFieldsNameTheField) {
  json j = json::parse(manifest_to_json(golden()));
  json a = j;
  a["rig"].erase("half_extent");
  expect_input_error_naming(a.dump(), "half_extent");
  json b = j;
  b["views"][1]["azimuth"] = "ninety";
  expect_input_error_naming(b.dump(), "azimuth");
  json c = j;
  c["views"][0].erase("alpha_path");
  expect_input_error_naming(c.dump(), "alpha_path");
  expect_input_error_naming("{not json", "manifest");
}

TEST(SaveViews, WritesEveryRasterAndReloads) {
  const fs::path dir = temp_dir("save_views");
  const MultiviewSet views = oracle_views(unit_sphere(2), standard_rig_six<double>(48, 1.2));
  const ViewManifest m = save_views(views, dir);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(dir)) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 18u);
  EXPECT_EQ(read_manifest(dir / "manifest.json"), m);

  const MultiviewSet back = load_views(dir / "manifest.json");
  ASSERT_EQ(back.size(), views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& a = views.views[i];
    const auto& b = back.views[i];
    EXPECT_EQ(b.camera.azimuth, a.camera.azimuth);
    EXPECT_EQ(b.camera.elevation, a.camera.elevation);
    EXPECT_EQ(b.camera.half_extent, a.camera.half_extent);
    EXPECT_EQ(b.camera.resolution, a.camera.resolution);
    EXPECT_LE((a.alpha.data - b.alpha.data).abs().maxCoeff(), 0.5 / 255 + 1e-12);
    EXPECT_LE((a.color.data - b.color.data).abs().maxCoeff(), 0.5 / 255 + 1e-12);
    // 8-bit (n + 1) / 2 costs at most one level per channel on decode.
    EXPECT_LE((a.normal.data - b.normal.data).abs().maxCoeff(), 1.0 / 255 + 1e-12);
  }
}

TEST(SaveViews, DepthRoundTrip) {
  const fs::path dir = temp_dir("save_depth");
  const MultiviewSet views = oracle_views(unit_sphere(2), standard_rig_six<double>(32, 1.2));
  const ViewManifest m = save_views(views, dir, true);
  ASSERT_TRUE(m.views[0].depth_path.has_value());
  const MultiviewSet back = load_views(dir / "manifest.json");
  const ImageD& a = views.views[0].depth;
  const ImageD& b = back.views[0].depth;
  for (Eigen::Index p = 0; p < a.pixel_count(); ++p) {
    if (std::isfinite(a.at(p))) {
      EXPECT_NEAR(a.at(p), b.at(p), 4 * 1.2 / 65535.0);
    } else {
      EXPECT_FALSE(std::isfinite(b.at(p)));
    }
  }
}

TEST(LoadViews, MissingImageIsInputError) {
  const fs::path dir = temp_dir("missing_png");
  save_views(oracle_views(unit_sphere(1), standard_rig_six<double>(16, 1.2)), dir);
  fs::remove(dir / "view_03_normal.png");
  try {
    load_views(dir / "manifest.json");
    ADD_FAILURE();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("normal_path"), std::string::npos) << e.what();
  }
}

TEST(LoadViews, WrongSizeImageIsInputError) {
  const fs::path dir = temp_dir("wrong_size");
  save_views(oracle_views(unit_sphere(1), standard_rig_six<double>(16, 1.2)), dir);
  write_png((dir / "view_02_alpha.png").string(), ImageD(8, 8, 1));
  EXPECT_THROW(load_views(dir / "manifest.json"), InputError);
}

TEST(Region, JsonRoundTrip) {
  const fs::path dir = temp_dir("region");
  const Rig rig = standard_rig_six<double>(64, 1.3);
  const EditRegion r = mask_diff(oracle_views(unit_sphere(2), rig),
                                 oracle_views(append(unit_sphere(2), cube({0.6, 0.3, 0.4}, 0.5)), rig));
  write_region(dir / "region.json", r);
  const EditRegion back = read_region(dir / "region.json", rig);
  EXPECT_EQ(back.mode, r.mode);
  EXPECT_TRUE(back.box.min().isApprox(r.box.min()));
  EXPECT_TRUE(back.box.max().isApprox(r.box.max()));
  ASSERT_EQ(back.masks.size(), r.masks.size());
  for (std::size_t i = 0; i < r.masks.size(); ++i) EXPECT_TRUE((back.masks[i].data == r.masks[i].data).all());
  const json j = json::parse(slurp(dir / "region.json"));
  for (const char* key : {"mode", "bounding_box", "masks"}) EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Region, BadModeIsInputError) {
  const Rig rig = standard_rig_six<double>(16, 1.0);
  const std::string text = R"({"mode": "grown", "bounding_box": {"min": [0,0,0], "max": [1,1,1]}, "masks": []})";
  EXPECT_THROW(region_from_json(text, ".", rig), InputError);
}

TEST(StepScript, PathsResolveAgainstTheScript) {
  const fs::path dir = temp_dir("script");
  spit(dir / "script.json", R"({"version": 1, "global_reference": "ref.png",
    "steps": [{"views": "a/manifest.json"}, {"views": "b/manifest.json", "region": "b/region.json"}]})");
  const StepScript s = read_step_script(dir / "script.json");
  ASSERT_EQ(s.steps.size(), 2u);
  EXPECT_EQ(s.global_reference, "ref.png");
  EXPECT_EQ(s.steps[0].views, dir / "a/manifest.json");
  EXPECT_FALSE(s.steps[0].region.has_value());
  EXPECT_EQ(*s.steps[1].region, dir / "b/region.json");
}

TEST(StepScript, MissingStepsIsInputError) {
  const fs::path dir = temp_dir("script_bad");
  spit(dir / "script.json", R"({"version": 1})");
  EXPECT_THROW(read_step_script(dir / "script.json"), InputError);
}

TEST(Settings, ParsesCommentsAndOverrides) {
  Settings s = Settings::parse("# schedule\nlr = 0.02\n\nstage.2.steps = 7\nlambda=3\n");
  s.set("lambda=5");
  const ReconstructionConfig c = s.reconstruction(1.0, 128);
  EXPECT_EQ(c.adam.lr, 0.02);
  EXPECT_EQ(c.stages[1].steps, 7);
  EXPECT_EQ(c.weights.lambda_smooth, 5.0);
  EXPECT_EQ(c.stages[0].steps, ReconstructionConfig::defaults(1.0, 128).stages[0].steps);
}

TEST(Settings, UnknownKeyIsInputError) {
  EXPECT_THROW(Settings::parse("learning_rate = 0.1\n").check_keys(), InputError);
  EXPECT_THROW(Settings::parse("stage.x.steps = 1\n").check_keys(), InputError);
  EXPECT_THROW(Settings::parse("lr = fast\n").reconstruction(1, 64), InputError);
  EXPECT_THROW(Settings::parse("just words\n"), InputError);
}

TEST(Settings, BakeKeys) {
  const BakeConfig b = Settings::parse("bake_mode = atlas\natlas_resolution = 512\n").bake();
  EXPECT_EQ(b.mode, BakeMode::atlas);
  EXPECT_EQ(b.atlas_resolution, 512);
  EXPECT_THROW(Settings::parse("bake_mode = paint\n").bake(), InputError);
}

TEST(DefaultHalfExtent, FillsNinetyPercent) {
  EXPECT_NEAR(default_half_extent(unit_sphere(2)), 1.0 / 0.9, 1e-12);
}

// Command-line tool

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun cli(const std::string& args) {
  const fs::path dir = fs::temp_directory_path();
  const std::string tag = std::to_string(::getpid());
  const fs::path o = dir / ("meshlift_cli_stdout_" + tag), e = dir / ("meshlift_cli_stderr_" + tag);
  const std::string cmd = std::string(MESHLIFT_CLI) + " " + args + " > " + o.string() + " 2> " + e.string();
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

/// Renders a small sphere set once for the CLI tests.
fs::path sphere_views() {
  static const fs::path dir = [] {
    const fs::path d = temp_dir("cli_views");
    write_obj(d / "sphere.obj", unit_sphere(2));
    const CliRun r = cli("render " + q(d / "sphere.obj") + " --res 48 --out " + q(d / "views"));
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

TEST(Cli, RenderWritesAManifest) {
  const fs::path d = sphere_views();
  const ViewManifest m = read_manifest(d / "views" / "manifest.json");
  EXPECT_EQ(m.views.size(), 6u);
  EXPECT_EQ(m.resolution, 48);
  EXPECT_NEAR(m.half_extent, 1.0 / 0.9, 1e-12);
}

TEST(Cli, SuccessLeavesStderrEmpty) {
  const fs::path d = sphere_views();
  const CliRun r = cli("eval --mesh " + q(d / "sphere.obj") + " " + q(d / "sphere.obj"));
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(r.err.empty()) << r.err;
}

TEST(Cli, EvalReportsEveryKeyOnce) {
  const fs::path d = sphere_views();
  const CliRun r = cli("eval --mesh " + q(d / "sphere.obj") + " " + q(d / "sphere.obj"));
  ASSERT_EQ(r.code, 0);
  const json j = json::parse(r.out);
  for (const char* key : {"chamfer", "chamfer_raw", "chamfer_scale", "volume_iou", "psnr", "ssim"}) {
    std::size_t count = 0;
    for (std::size_t pos = 0; (pos = r.out.find(std::string("\"") + key + "\"", pos)) != std::string::npos; ++pos) ++count;
    EXPECT_EQ(count, 1u) << key;
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_NEAR(j["chamfer"].get<double>(), 0.0, 1e-9);
  EXPECT_NEAR(j["volume_iou"].get<double>(), 1.0, 1e-3);
  EXPECT_TRUE(j["psnr"].is_null());

  const fs::path img = d / "views" / "view_00_color.png";
  const json k = json::parse(cli("eval --image " + q(img) + " " + q(img)).out);
  EXPECT_EQ(k["psnr"].get<double>(), 99.0);
  EXPECT_NEAR(k["ssim"].get<double>(), 1.0, 1e-12);
  EXPECT_TRUE(k["chamfer"].is_null());
}

TEST(Cli, AlphaExtract) {
  const fs::path d = temp_dir("cli_alpha");
  ImageD c(4, 1, 3, 1.0);
  c(1, 0, 0) = 244.0 / 255;  // 255 - 11: foreground at threshold 10
  c(2, 0, 1) = 246.0 / 255;  // 255 - 9: still background
  c(3, 0, 2) = 0.0;
  write_png((d / "c.png").string(), c);
  const CliRun r = cli("alpha-extract " + q(d / "c.png") + " --out " + q(d / "a.png"));
  ASSERT_EQ(r.code, 0) << r.err;
  const ImageD a = read_png((d / "a.png").string());
  EXPECT_EQ(a.channels, 1);
  EXPECT_EQ(a.at(0), 0.0);
  EXPECT_EQ(a.at(1), 1.0);
  EXPECT_EQ(a.at(2), 0.0);
  EXPECT_EQ(a.at(3), 1.0);
}

TEST(Cli, BadInputExitsTwo) {
  const fs::path d = temp_dir("cli_bad");
  EXPECT_EQ(cli("reconstruct " + q(d / "nope.json") + " --out " + q(d / "o.obj")).code, 2);
  spit(d / "broken.json", R"({"version": 1, "rig": {"resolution": 32}, "views": []})");
  const CliRun r = cli("reconstruct " + q(d / "broken.json") + " --out " + q(d / "o.obj"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("half_extent"), std::string::npos) << r.err;
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("eval --mesh " + q(d / "x.obj") + " --set nonsense=1").code, 2);
}

TEST(Cli, ContractViolationExitsFour) {
  const fs::path d = temp_dir("cli_contract");
  write_png((d / "a.png").string(), ImageD(32, 32, 3, 0.5));
  write_png((d / "b.png").string(), ImageD(32, 16, 3, 0.5));
  const CliRun r = cli("eval --image " + q(d / "a.png") + " " + q(d / "b.png"));
  EXPECT_EQ(r.code, 4);
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, BadConfigValueIsBadInput) {
  const fs::path d = sphere_views();
  const CliRun r = cli("bake " + q(d / "sphere.obj") + " " + q(d / "views" / "manifest.json") +
                       " --mode atlas --set atlas_resolution=300 --out " + q(d / "baked.obj"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("atlas_resolution"), std::string::npos) << r.err;
}

TEST(Cli, DivergenceExitsThree) {
  const fs::path d = sphere_views();
  const CliRun r = cli("reconstruct " + q(d / "views" / "manifest.json") +
                    " --set stages=1 --set steps=3 --set lambda=inf --out " + q(d / "diverged.obj"));
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Cli, ProgressiveSingleStepEqualsReconstruct) {
  const fs::path d = sphere_views();
  const std::string quick = " --set stages=1 --set steps=6 --seed 3";
  const CliRun a = cli("reconstruct " + q(d / "views" / "manifest.json") + quick + " --out " + q(d / "direct.obj"));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("stage=1 steps=6"), std::string::npos) << a.out;
  spit(d / "one_step.json", R"({"version": 1, "steps": [{"views": "views/manifest.json"}]})");
  const CliRun b = cli("progressive " + q(d / "one_step.json") + quick + " --out " + q(d / "prog"));
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(d / "prog" / "step_01.obj"), slurp(d / "direct.obj"));
  EXPECT_EQ(slurp(d / "prog" / "final.obj"), slurp(d / "direct.obj"));
}

TEST(Cli, BakeAtlasWritesTextureAndMaterial) {
  const fs::path d = sphere_views();
  const CliRun r = cli("bake " + q(d / "sphere.obj") + " " + q(d / "views" / "manifest.json") +
                    " --mode atlas --set atlas_resolution=256 --out " + q(d / "textured.obj"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d / "textured_albedo.png"));
  EXPECT_TRUE(fs::exists(d / "textured.mtl"));
  const Mesh m = read_obj(d / "textured.obj");
  EXPECT_TRUE(m.has_uvs());
}

}  // namespace

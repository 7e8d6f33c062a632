#include "meshlift/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "meshlift/mesh_io.hpp"

namespace meshlift {

using nlohmann::json;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(what + " is not valid JSON: " + e.what());
  }
}

template <typename T>
T field(const json& j, const std::string& name, const std::string& where) {
  if (!j.is_object() || !j.contains(name)) throw InputError(where + ": missing field '" + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw InputError(where + ": field '" + name + "' has the wrong type");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Rig ViewManifest::rig() const {
  Rig rig;
  for (const auto& v : views) {
    Camera c;
    c.azimuth = v.azimuth;
    c.elevation = v.elevation;
    c.resolution = resolution;
    c.half_extent = half_extent;
    rig.cameras.push_back(c);
  }
  return rig;
}

std::string manifest_to_json(const ViewManifest& m) {
  json j;
  j["version"] = m.version;
  j["rig"] = {{"resolution", m.resolution}, {"half_extent", m.half_extent}};
  j["views"] = json::array();
  for (const auto& v : m.views) {
    json e = {{"azimuth", v.azimuth},
              {"elevation", v.elevation},
              {"color_path", v.color_path},
              {"normal_path", v.normal_path},
              {"alpha_path", v.alpha_path}};
    if (v.depth_path) e["depth_path"] = *v.depth_path;
    j["views"].push_back(e);
  }
  return j.dump(2) + "\n";
}

ViewManifest manifest_from_json(const std::string& text) {
  const json j = parse_json(text, "manifest");
  ViewManifest m;
  m.version = field<int>(j, "version", "manifest");
  if (m.version < 1) throw InputError("manifest: field 'version' must be >= 1");
  const json rig = field<json>(j, "rig", "manifest");
  m.resolution = field<int>(rig, "resolution", "manifest.rig");
  m.half_extent = field<double>(rig, "half_extent", "manifest.rig");
  const json views = field<json>(j, "views", "manifest");
  if (!views.is_array() || views.empty()) throw InputError("manifest: field 'views' must be a non-empty array");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const std::string where = "manifest.views[" + std::to_string(i) + "]";
    ViewEntry e;
    e.azimuth = field<double>(views[i], "azimuth", where);
    e.elevation = field<double>(views[i], "elevation", where);
    e.color_path = field<std::string>(views[i], "color_path", where);
    e.normal_path = field<std::string>(views[i], "normal_path", where);
    e.alpha_path = field<std::string>(views[i], "alpha_path", where);
    if (views[i].contains("depth_path")) e.depth_path = field<std::string>(views[i], "depth_path", where);
    m.views.push_back(e);
  }
  try {
    m.rig().check();
  } catch (const ContractError& e) {
    throw InputError(std::string("manifest: field 'rig' is invalid: ") + e.what());
  }
  return m;
}

ViewManifest read_manifest(const fs::path& path) { return manifest_from_json(slurp(path)); }

void write_manifest(const fs::path& path, const ViewManifest& m) { spit(path, manifest_to_json(m)); }

ImageD encode_depth(const ImageD& depth, double half_extent) {
  ImageD out(depth.width, depth.height, 1);
  for (Eigen::Index p = 0; p < depth.pixel_count(); ++p) {
    const double d = depth.at(p);
    out.at(p) = std::isfinite(d) ? std::clamp(0.5 + d / (4 * half_extent), 0.0, 65534.0 / 65535.0) : 1.0;
  }
  return out;
}

ImageD decode_depth(const ImageD& encoded, double half_extent) {
  ImageD out(encoded.width, encoded.height, 1);
  for (Eigen::Index p = 0; p < encoded.pixel_count(); ++p) {
    const double v = encoded.at(p);
    out.at(p) = v >= 1.0 ? std::numeric_limits<double>::infinity() : (v - 0.5) * 4 * half_extent;
  }
  return out;
}

MultiviewSet load_views(const ViewManifest& m, const fs::path& base_dir) {
  const Rig rig = m.rig();
  MultiviewSet set;
  for (std::size_t i = 0; i < m.views.size(); ++i) {
    const auto& e = m.views[i];
    const std::string where = "manifest.views[" + std::to_string(i) + "]";
    ViewRecord v;
    v.camera = rig[i];
    auto load = [&](const std::string& rel, const std::string& name, int channels) {
      ImageD img;
      try {
        img = read_png((base_dir / rel).string());
      } catch (const InputError& err) {
        throw InputError(where + ": field '" + name + "': " + err.what());
      }
      if (img.width != m.resolution || img.height != m.resolution) {
        throw InputError(where + ": field '" + name + "' image is " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) + ", expected " + std::to_string(m.resolution));
      }
      if (img.channels != channels) {
        if (channels == 1 && img.channels == 3) {
          ImageD gray(img.width, img.height, 1);
          for (Eigen::Index p = 0; p < img.pixel_count(); ++p) gray.at(p) = img.at(p, 0);
          return gray;
        }
        if (channels == 3 && img.channels == 1) {
          ImageD rgb(img.width, img.height, 3);
          for (Eigen::Index p = 0; p < img.pixel_count(); ++p) rgb.set_rgb(p, Eigen::Vector3d::Constant(img.at(p)));
          return rgb;
        }
      }
      return img;
    };
    try {
      v.color = load(e.color_path, "color_path", 3);
      v.normal = decode_normals(load(e.normal_path, "normal_path", 3));
      v.alpha = load(e.alpha_path, "alpha_path", 1);
      if (e.depth_path) v.depth = decode_depth(load(*e.depth_path, "depth_path", 1), m.half_extent);
    } catch (const InputError& err) {
      const std::string msg = err.what();
      if (msg.rfind("manifest", 0) == 0) throw;
      throw InputError(where + ": " + msg);
    }
    for (Eigen::Index p = 0; p < v.alpha.pixel_count(); ++p) {
      if (v.alpha.at(p) == 0) v.normal.set_rgb(p, Eigen::Vector3d::Zero());
    }
    set.views.push_back(std::move(v));
  }
  return set;
}

MultiviewSet load_views(const fs::path& manifest_path) {
  return load_views(read_manifest(manifest_path), manifest_path.parent_path());
}

ViewManifest save_views(const MultiviewSet& views, const fs::path& dir, bool with_depth) {
  views.check();
  fs::create_directories(dir);
  ViewManifest m;
  m.resolution = views.views.front().camera.resolution;
  m.half_extent = views.views.front().camera.half_extent;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const ViewRecord& v = views.views[i];
    char stem[32];
    std::snprintf(stem, sizeof(stem), "view_%02zu", i);
    ViewEntry e;
    e.azimuth = v.camera.azimuth;
    e.elevation = v.camera.elevation;
    e.color_path = std::string(stem) + "_color.png";
    e.normal_path = std::string(stem) + "_normal.png";
    e.alpha_path = std::string(stem) + "_alpha.png";
    write_png((dir / e.color_path).string(), v.color);
    write_png((dir / e.normal_path).string(), encode_normals(v.normal));
    write_png((dir / e.alpha_path).string(), v.alpha);
    if (with_depth && v.has_depth()) {
      e.depth_path = std::string(stem) + "_depth.png";
      write_png((dir / *e.depth_path).string(), encode_depth(v.depth, m.half_extent), 16);
    }
    m.views.push_back(e);
  }
  write_manifest(dir / "manifest.json", m);
  return m;
}

std::string region_to_json(const EditRegion& region, const std::vector<std::string>& mask_paths) {
  json j;
  j["mode"] = to_string(region.mode);
  const auto& lo = region.box.min();
  const auto& hi = region.box.max();
  j["bounding_box"] = {{"min", {lo.x(), lo.y(), lo.z()}}, {"max", {hi.x(), hi.y(), hi.z()}}};
  j["masks"] = mask_paths;
  return j.dump(2) + "\n";
}

EditRegion region_from_json(const std::string& text, const fs::path& base_dir, const Rig& rig) {
  const json j = parse_json(text, "region");
  EditRegion r;
  r.rig = rig;
  r.mode = region_mode_from_string(field<std::string>(j, "mode", "region"));
  const json box = field<json>(j, "bounding_box", "region");
  const auto lo = field<std::vector<double>>(box, "min", "region.bounding_box");
  const auto hi = field<std::vector<double>>(box, "max", "region.bounding_box");
  if (lo.size() != 3 || hi.size() != 3) throw InputError("region.bounding_box: min and max need 3 numbers");
  r.box = Box3(Eigen::Vector3d(lo[0], lo[1], lo[2]), Eigen::Vector3d(hi[0], hi[1], hi[2]));
  if ((r.box.min().array() > r.box.max().array()).any()) throw InputError("region.bounding_box: min exceeds max");
  const auto masks = field<std::vector<std::string>>(j, "masks", "region");
  if (masks.size() != rig.size()) {
    throw InputError("region: field 'masks' has " + std::to_string(masks.size()) + " entries for " +
                     std::to_string(rig.size()) + " views");
  }
  for (std::size_t i = 0; i < masks.size(); ++i) {
    ImageD m = read_png((base_dir / masks[i]).string());
    ImageD bin(m.width, m.height, 1);
    for (Eigen::Index p = 0; p < m.pixel_count(); ++p) bin.at(p) = m.at(p, 0) > 0.5 ? 1.0 : 0.0;
    r.masks.push_back(std::move(bin));
  }
  try {
    r.check();
  } catch (const ContractError& e) {
    throw InputError(std::string("region: ") + e.what());
  }
  return r;
}

EditRegion read_region(const fs::path& path, const Rig& rig) {
  return region_from_json(slurp(path), path.parent_path(), rig);
}

void write_region(const fs::path& path, const EditRegion& region) {
  const fs::path dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < region.masks.size(); ++i) {
    const std::string name = path.stem().string() + "_mask_" + std::to_string(i) + ".png";
    write_png((dir / name).string(), region.masks[i]);
    names.push_back(name);
  }
  spit(path, region_to_json(region, names));
}

StepScript read_step_script(const fs::path& path) {
  const json j = parse_json(slurp(path), "step script");
  const fs::path base = path.parent_path();
  StepScript s;
  s.version = field<int>(j, "version", "step script");
  if (j.contains("global_reference") && !j["global_reference"].is_null()) {
    s.global_reference = field<std::string>(j, "global_reference", "step script");
  }
  const json steps = field<json>(j, "steps", "step script");
  if (!steps.is_array() || steps.empty()) throw InputError("step script: field 'steps' must be a non-empty array");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::string where = "step script.steps[" + std::to_string(i) + "]";
    StepSpec spec;
    spec.views = base / field<std::string>(steps[i], "views", where);
    if (steps[i].contains("region") && !steps[i]["region"].is_null()) {
      spec.region = base / field<std::string>(steps[i], "region", where);
    }
    s.steps.push_back(spec);
  }
  return s;
}

// ---------------------------------------------------------------------------
// settings

const std::vector<std::string>& Settings::known_keys() {
  static const std::vector<std::string> keys = {
      "stages",         "steps",           "lr",           "lr_final",         "beta1",
      "beta2",          "eps",             "w_normal",     "w_alpha",          "lambda",
      "remesh_interval", "split_factor",   "collapse_factor", "freeze_prior",  "dilation",
      "seed_level",     "threads",         "bake_mode",    "atlas_resolution", "seam_padding",
      "min_view_cosine", "chamfer_samples", "iou_grid",    "seed"};
  return keys;
}

Settings Settings::parse(const std::string& text) {
  Settings s;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("config line " + std::to_string(n) + ": expected key = value");
    s.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return s;
}

Settings Settings::read(const fs::path& path) { return parse(slurp(path)); }

void Settings::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InputError("setting '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Settings::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw InputError("empty setting key");
  values_[key] = value;
}

void Settings::check_keys() const {
  const auto& known = known_keys();
  for (const auto& [k, v] : values_) {
    if (std::find(known.begin(), known.end(), k) != known.end()) continue;
    // stage.<i>.steps | edge_length | resolution
    if (k.rfind("stage.", 0) == 0) {
      const auto dot = k.find('.', 6);
      if (dot != std::string::npos) {
        const std::string idx = k.substr(6, dot - 6), what = k.substr(dot + 1);
        const bool digits = !idx.empty() && std::all_of(idx.begin(), idx.end(), ::isdigit);
        if (digits && (what == "steps" || what == "edge_length" || what == "resolution")) continue;
      }
    }
    throw InputError("unknown config key '" + k + "'");
  }
}

double Settings::number(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw InputError("config key '" + key + "' needs a number, got '" + it->second + "'");
  }
}

int Settings::integer(const std::string& key, int fallback) const {
  const double v = number(key, fallback);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw InputError("config key '" + key + "' needs an integer");
  return static_cast<int>(v);
}

ReconstructionConfig Settings::reconstruction(double half_extent, int resolution) const {
  check_keys();
  ReconstructionConfig c = ReconstructionConfig::defaults(half_extent, resolution);
  const int n = integer("stages", static_cast<int>(c.stages.size()));
  if (n < 1 || n > 8) throw InputError("config key 'stages' must be in [1, 8]");
  if (n != static_cast<int>(c.stages.size())) {
    c.stages.clear();
    for (int i = 0; i < n; ++i) {
      const int shift = n - 1 - i;
      c.stages.push_back({100, half_extent / (16.0 * std::pow(2.0, i)), std::max(16, resolution >> shift)});
    }
  }
  const int steps = integer("steps", -1);
  for (std::size_t i = 0; i < c.stages.size(); ++i) {
    const std::string p = "stage." + std::to_string(i + 1) + ".";
    if (steps > 0) c.stages[i].steps = steps;
    c.stages[i].steps = integer(p + "steps", c.stages[i].steps);
    c.stages[i].target_edge_length = number(p + "edge_length", c.stages[i].target_edge_length);
    c.stages[i].render_resolution = integer(p + "resolution", c.stages[i].render_resolution);
  }
  c.adam.lr = number("lr", c.adam.lr);
  c.adam.lr_final = number("lr_final", c.adam.lr_final);
  c.adam.beta1 = number("beta1", c.adam.beta1);
  c.adam.beta2 = number("beta2", c.adam.beta2);
  c.adam.eps = number("eps", c.adam.eps);
  c.weights.w_normal = number("w_normal", c.weights.w_normal);
  c.weights.w_alpha = number("w_alpha", c.weights.w_alpha);
  c.weights.lambda_smooth = number("lambda", c.weights.lambda_smooth);
  c.remesh.interval_steps = integer("remesh_interval", c.remesh.interval_steps);
  c.remesh.split_factor = number("split_factor", c.remesh.split_factor);
  c.remesh.collapse_factor = number("collapse_factor", c.remesh.collapse_factor);
  c.freeze_prior = integer("freeze_prior", c.freeze_prior ? 1 : 0) != 0;
  c.dilation = number("dilation", c.dilation);
  c.seed_level = integer("seed_level", c.seed_level);
  c.threads = integer("threads", c.threads);
  try {
    c.check();
  } catch (const ContractError& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

BakeConfig Settings::bake() const {
  BakeConfig b;
  if (auto it = values_.find("bake_mode"); it != values_.end()) {
    if (it->second == "vertex" || it->second == "vertex_colors") {
      b.mode = BakeMode::vertex_colors;
    } else if (it->second == "atlas") {
      b.mode = BakeMode::atlas;
    } else {
      throw InputError("config key 'bake_mode' must be vertex or atlas");
    }
  }
  b.atlas_resolution = integer("atlas_resolution", b.atlas_resolution);
  b.seam_padding = integer("seam_padding", b.seam_padding);
  b.min_view_cosine = number("min_view_cosine", b.min_view_cosine);
  b.threads = integer("threads", b.threads);
  try {
    b.check();
  } catch (const ContractError& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return b;
}

std::size_t Settings::chamfer_samples() const {
  const int n = integer("chamfer_samples", 100000);
  if (n < 1) throw InputError("config key 'chamfer_samples' must be positive");
  return static_cast<std::size_t>(n);
}

int Settings::iou_grid() const {
  const int n = integer("iou_grid", 128);
  if (n < 1) throw InputError("config key 'iou_grid' must be positive");
  return n;
}

// ---------------------------------------------------------------------------
// drivers

double default_half_extent(const Mesh& mesh) {
  double r = 0;
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) r = std::max(r, mesh.vertex(v).norm());
  return r > 0 ? r / 0.9 : 1.0;
}

Rig make_rig(const std::string& name, int resolution, double half_extent) {
  if (name == "six") return standard_rig_six<double>(resolution, half_extent);
  if (name == "eight") return training_rig_eight<double>(resolution, half_extent);
  throw InputError("unknown rig '" + name + "' (expected six or eight)");
}

namespace {

Mesh bake_mesh(const Mesh& mesh, const MultiviewSet& views, const BakeConfig& bake) {
  if (mesh.empty()) return mesh;
  BakeConfig b = bake;
  b.mode = BakeMode::vertex_colors;
  return bake_vertex_colors(mesh, views, b);
}

}  // namespace

EditResult run_edit(const Mesh& prior, const MultiviewSet& views, const ReconstructionConfig& config,
                    const BakeConfig& bake, const EditRegion* region) {
  views.check();
  EditResult result;
  if (region) {
    result.region = *region;
  } else {
    RenderOptions opt;
    opt.with_depth = false;
    const MultiviewSet before = render_conditions(prior, views.rig(), opt, config.threads);
    result.region = mask_diff(before, views);
  }
  Mesh mesh = reconstruct_incremental(prior, views, config, &result.region);
  // the freeze flags are a working annotation, not part of the output
  mesh.frozen.resize(0);
  result.mesh = bake_mesh(mesh, views, bake);
  return result;
}

Mesh run_reconstruct(const MultiviewSet& views, const ReconstructionConfig& config, const BakeConfig& bake) {
  return bake_mesh(reconstruct_from_scratch(views, config), views, bake);
}

std::vector<ProgressiveStep> run_progressive(
    const StepScript& script, const fs::path& out_dir,
    const std::function<ReconstructionConfig(const MultiviewSet&)>& config_for, const BakeConfig& bake) {
  if (script.steps.empty()) throw InputError("step script has no steps");
  fs::create_directories(out_dir);
  std::vector<ProgressiveStep> steps;
  Rig first_rig;
  for (std::size_t i = 0; i < script.steps.size(); ++i) {
    const StepSpec& spec = script.steps[i];
    const MultiviewSet views = load_views(spec.views);
    const Rig rig = views.rig();
    if (i == 0) {
      first_rig = rig;
    } else {
      bool same = rig.size() == first_rig.size();
      for (std::size_t k = 0; same && k < rig.size(); ++k) {
        same = rig[k].azimuth == first_rig[k].azimuth && rig[k].elevation == first_rig[k].elevation &&
               rig[k].resolution == first_rig[k].resolution && rig[k].half_extent == first_rig[k].half_extent;
      }
      if (!same) throw InputError("step " + std::to_string(i + 1) + " uses a different rig than step 1");
    }
    const ReconstructionConfig config = config_for(views);
    ProgressiveStep step;
    if (i == 0) {
      // the first step's prior is the empty mesh, whose renders are white images
      step.mesh = run_reconstruct(views, config, bake);
    } else {
      std::optional<EditRegion> region;
      if (spec.region) region = read_region(*spec.region, rig);
      EditResult r = run_edit(steps.back().mesh, views, config, bake, region ? &*region : nullptr);
      step.mesh = std::move(r.mesh);
      step.region = std::move(r.region);
    }
    step.components = connected_components(step.mesh).second;
    char name[32];
    std::snprintf(name, sizeof(name), "step_%02zu.obj", i + 1);
    write_obj((out_dir / name).string(), step.mesh);
    steps.push_back(std::move(step));
  }
  write_obj((out_dir / "final.obj").string(), steps.back().mesh);
  return steps;
}

}  // namespace meshlift

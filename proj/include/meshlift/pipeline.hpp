#pragma once

// File contracts (view manifests, step scripts, region blocks, key-value
// configs) and the end-to-end drivers behind the command-line tool.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "meshlift/reconstruct.hpp"
#include "meshlift/region.hpp"
#include "meshlift/texture.hpp"

namespace meshlift {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;

struct ViewEntry {
  double azimuth = 0;
  double elevation = 0;
  std::string color_path;
  std::string normal_path;
  std::string alpha_path;
  std::optional<std::string> depth_path;

  friend bool operator==(const ViewEntry&, const ViewEntry&) = default;
};

struct ViewManifest {
  int version = kManifestVersion;
  int resolution = 512;
  double half_extent = 1;
  std::vector<ViewEntry> views;

  Rig rig() const;
  friend bool operator==(const ViewManifest&, const ViewManifest&) = default;
};

std::string manifest_to_json(const ViewManifest& m);
/// Unknown fields are ignored; missing or mistyped required fields throw
/// InputError naming the field.
ViewManifest manifest_from_json(const std::string& text);
ViewManifest read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const ViewManifest& m);

/// Loads every raster of a manifest (paths relative to `base_dir`).
/// Normals are decoded from the (n + 1) / 2 encoding; background normals
/// become zero.
MultiviewSet load_views(const ViewManifest& m, const fs::path& base_dir);
MultiviewSet load_views(const fs::path& manifest_path);

/// Writes color/normal/alpha PNGs (and 16-bit depth when requested and
/// present) plus manifest.json into `dir`.
ViewManifest save_views(const MultiviewSet& views, const fs::path& dir, bool with_depth = false);

/// Depth PNG encoding: value = 0.5 + depth / (4 h), background = 1.
ImageD encode_depth(const ImageD& depth, double half_extent);
ImageD decode_depth(const ImageD& encoded, double half_extent);

std::string region_to_json(const EditRegion& region, const std::vector<std::string>& mask_paths);
/// Reads a region block; masks resolved relative to `base_dir` against `rig`.
EditRegion region_from_json(const std::string& text, const fs::path& base_dir, const Rig& rig);
EditRegion read_region(const fs::path& path, const Rig& rig);
void write_region(const fs::path& path, const EditRegion& region);

struct StepSpec {
  fs::path views;                 // manifest path
  std::optional<fs::path> region;  // region JSON path
};

struct StepScript {
  int version = kManifestVersion;
  std::optional<std::string> global_reference;  // provenance only
  std::vector<StepSpec> steps;
};

/// Paths inside the script are resolved relative to the script's directory.
StepScript read_step_script(const fs::path& path);

/// Flat `key = value` settings (blank lines and # comments allowed).
class Settings {
 public:
  static Settings parse(const std::string& text);
  static Settings read(const fs::path& path);

  /// Later values win. Accepts "key=value".
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Reconstruction defaults for this rig with every recognised key applied.
  ReconstructionConfig reconstruction(double half_extent, int resolution) const;
  BakeConfig bake() const;
  std::size_t chamfer_samples() const;
  int iou_grid() const;
  /// Throws InputError on keys no command understands.
  void check_keys() const;

  static const std::vector<std::string>& known_keys();

 private:
  double number(const std::string& key, double fallback) const;
  int integer(const std::string& key, int fallback) const;

  std::map<std::string, std::string> values_;
};

/// Half extent that makes the origin-centred bounding sphere fill 90% of the frame.
double default_half_extent(const Mesh& mesh);

Rig make_rig(const std::string& name, int resolution, double half_extent);

struct EditResult {
  Mesh mesh;  // baked
  EditRegion region;
};

/// Renders the prior with the views' cameras, localises the change,
/// reconstructs incrementally and bakes vertex colours. A precomputed
/// region replaces the mask difference.
EditResult run_edit(const Mesh& prior, const MultiviewSet& views, const ReconstructionConfig& config,
                    const BakeConfig& bake, const EditRegion* region = nullptr);

/// From-scratch reconstruction followed by a vertex-colour bake.
Mesh run_reconstruct(const MultiviewSet& views, const ReconstructionConfig& config, const BakeConfig& bake);

struct ProgressiveStep {
  Mesh mesh;
  EditRegion region;  // empty for the first step
  int components = 0;
};

/// Step one reconstructs from scratch; later steps run the edit loop on the
/// previous result. Every step mesh is written to `out_dir/step_NN.obj`
/// before the next one starts, and `final.obj` at the end.
std::vector<ProgressiveStep> run_progressive(
    const StepScript& script, const fs::path& out_dir,
    const std::function<ReconstructionConfig(const MultiviewSet&)>& config_for, const BakeConfig& bake);

}  // namespace meshlift

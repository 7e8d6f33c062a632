#pragma once

#include <string>

#include "meshlift/mesh.hpp"

namespace meshlift {

/// Wavefront OBJ: `v x y z [r g b]`, `vt u v`, and `f` records in any of the
/// v, v/vt, v//vn, v/vt/vn forms (polygons are fan-triangulated, negative
/// indices are relative). Normals are ignored on read. Throws InputError.
Mesh read_obj(const std::string& path);

/// Positions are written with 17 significant digits so a write/read cycle
/// is exact. Colours use the 6-float vertex extension; UVs are written when
/// present, and `texture_file` (if non-empty) is referenced through a
/// companion .mtl file.
void write_obj(const std::string& path, const Mesh& mesh, const std::string& texture_file = "");

}  // namespace meshlift

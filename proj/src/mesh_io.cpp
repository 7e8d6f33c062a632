#include "meshlift/mesh_io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

namespace meshlift {

namespace {

double parse_double(const std::string& token, const std::string& path, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw InputError(path + ":" + std::to_string(line) + ": bad number '" + token + "'");
  }
}

/// 0-based index from a 1-based or negative OBJ reference.
int resolve(const std::string& token, std::size_t count, const std::string& path, int line) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || value == 0) {
    throw InputError(path + ":" + std::to_string(line) + ": bad index '" + token + "'");
  }
  const long idx = value > 0 ? value - 1 : static_cast<long>(count) + value;
  if (idx < 0 || idx >= static_cast<long>(count)) {
    throw InputError(path + ":" + std::to_string(line) + ": index " + token + " out of range");
  }
  return static_cast<int>(idx);
}

}  // namespace

Mesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open mesh '" + path + "'");
  std::vector<std::array<double, 3>> pos, col;
  std::vector<char> has_col;
  std::vector<std::array<double, 2>> tex;
  std::vector<std::array<int, 3>> faces, face_tex;
  bool any_tex_face = false, all_tex_face = true;
  std::string text;
  int line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (const auto hash = text.find('#'); hash != std::string::npos) text.resize(hash);
    std::istringstream ls(text);
    std::string tag;
    if (!(ls >> tag)) continue;
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tag == "v") {
      if (tok.size() != 3 && tok.size() != 4 && tok.size() != 6 && tok.size() != 7) {
        throw InputError(path + ":" + std::to_string(line_no) + ": vertex needs 3 or 6 numbers");
      }
      pos.push_back({parse_double(tok[0], path, line_no), parse_double(tok[1], path, line_no),
                     parse_double(tok[2], path, line_no)});
      if (tok.size() >= 6) {
        const std::size_t o = tok.size() == 7 ? 4 : 3;
        col.push_back({parse_double(tok[o], path, line_no), parse_double(tok[o + 1], path, line_no),
                       parse_double(tok[o + 2], path, line_no)});
        has_col.push_back(1);
      } else {
        col.push_back({1.0, 1.0, 1.0});
        has_col.push_back(0);
      }
    } else if (tag == "vt") {
      if (tok.size() < 2) throw InputError(path + ":" + std::to_string(line_no) + ": vt needs 2 numbers");
      tex.push_back({parse_double(tok[0], path, line_no), parse_double(tok[1], path, line_no)});
    } else if (tag == "f") {
      if (tok.size() < 3) throw InputError(path + ":" + std::to_string(line_no) + ": face needs 3 vertices");
      std::vector<int> vi, ti;
      for (const auto& t : tok) {
        const auto s1 = t.find('/');
        vi.push_back(resolve(t.substr(0, s1), pos.size(), path, line_no));
        if (s1 != std::string::npos) {
          const auto s2 = t.find('/', s1 + 1);
          const std::string vt = t.substr(s1 + 1, s2 == std::string::npos ? std::string::npos : s2 - s1 - 1);
          if (!vt.empty()) ti.push_back(resolve(vt, tex.size(), path, line_no));
        }
      }
      const bool textured = ti.size() == vi.size();
      any_tex_face = any_tex_face || textured;
      all_tex_face = all_tex_face && textured;
      for (std::size_t k = 1; k + 1 < vi.size(); ++k) {
        faces.push_back({vi[0], vi[k], vi[k + 1]});
        face_tex.push_back(textured ? std::array<int, 3>{ti[0], ti[k], ti[k + 1]} : std::array<int, 3>{0, 0, 0});
      }
    }
  }

  Mesh mesh;
  mesh.positions.resize(static_cast<Eigen::Index>(pos.size()), 3);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    mesh.positions.row(static_cast<Eigen::Index>(i)) << pos[i][0], pos[i][1], pos[i][2];
  }
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    mesh.faces.row(static_cast<Eigen::Index>(i)) << faces[i][0], faces[i][1], faces[i][2];
  }
  if (std::find(has_col.begin(), has_col.end(), 1) != has_col.end()) {
    mesh.colors.resize(static_cast<Eigen::Index>(col.size()), 3);
    for (std::size_t i = 0; i < col.size(); ++i) {
      mesh.colors.row(static_cast<Eigen::Index>(i)) << col[i][0], col[i][1], col[i][2];
    }
  }
  if (any_tex_face && all_tex_face && !faces.empty()) {
    mesh.uvs.resize(static_cast<Eigen::Index>(tex.size()), 2);
    for (std::size_t i = 0; i < tex.size(); ++i) mesh.uvs.row(static_cast<Eigen::Index>(i)) << tex[i][0], tex[i][1];
    mesh.face_uvs.resize(mesh.faces.rows(), 3);
    for (std::size_t i = 0; i < face_tex.size(); ++i) {
      mesh.face_uvs.row(static_cast<Eigen::Index>(i)) << face_tex[i][0], face_tex[i][1], face_tex[i][2];
    }
  }
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    if (!mesh.positions.row(v).allFinite()) throw InputError(path + ": vertex " + std::to_string(v) + " is not finite");
  }
  return mesh;
}

void write_obj(const std::string& path, const Mesh& mesh, const std::string& texture_file) {
  check_indices(mesh);
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw InputError("cannot write mesh '" + path + "'");
  const bool uv = mesh.has_uvs();
  if (uv && !texture_file.empty()) {
    const std::filesystem::path p(path);
    const std::string mtl = p.stem().string() + ".mtl";
    std::fprintf(f, "mtllib %s\nusemtl baked\n", mtl.c_str());
    std::FILE* m = std::fopen((p.parent_path() / mtl).string().c_str(), "w");
    if (!m) {
      std::fclose(f);
      throw InputError("cannot write material file for '" + path + "'");
    }
    std::fprintf(m, "newmtl baked\nKd 1 1 1\nmap_Kd %s\n", texture_file.c_str());
    std::fclose(m);
  }
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    if (mesh.has_colors()) {
      std::fprintf(f, "v %.17g %.17g %.17g %.17g %.17g %.17g\n", mesh.positions(v, 0), mesh.positions(v, 1),
                   mesh.positions(v, 2), mesh.colors(v, 0), mesh.colors(v, 1), mesh.colors(v, 2));
    } else {
      std::fprintf(f, "v %.17g %.17g %.17g\n", mesh.positions(v, 0), mesh.positions(v, 1), mesh.positions(v, 2));
    }
  }
  if (uv) {
    for (Eigen::Index t = 0; t < mesh.uvs.rows(); ++t) std::fprintf(f, "vt %.17g %.17g\n", mesh.uvs(t, 0), mesh.uvs(t, 1));
  }
  for (Eigen::Index i = 0; i < mesh.face_count(); ++i) {
    if (uv) {
      std::fprintf(f, "f %d/%d %d/%d %d/%d\n", mesh.faces(i, 0) + 1, mesh.face_uvs(i, 0) + 1, mesh.faces(i, 1) + 1,
                   mesh.face_uvs(i, 1) + 1, mesh.faces(i, 2) + 1, mesh.face_uvs(i, 2) + 1);
    } else {
      std::fprintf(f, "f %d %d %d\n", mesh.faces(i, 0) + 1, mesh.faces(i, 1) + 1, mesh.faces(i, 2) + 1);
    }
  }
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw InputError("failed writing mesh '" + path + "'");
}

}  // namespace meshlift

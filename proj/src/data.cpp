#include "toothseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "toothseg/geometry.hpp"

namespace toothseg {

void Scan::validate() const {
  points.validate();
  const int n = size();
  if (face_vertex_coords.rows() != n || face_vertex_coords.cols() != 9 ||
      face_vertex_normals.rows() != n || face_vertex_normals.cols() != 9)
    throw PreconditionError("Scan: face data must be N x 9");
  if (static_cast<int>(instance_ids.size()) != n ||
      static_cast<int>(categories.size()) != n)
    throw PreconditionError("Scan: label length mismatch");
  for (int i = 0; i < n; ++i) {
    if (instance_ids[i] < 0 || instance_ids[i] > 16)
      throw PreconditionError("Scan: instance id out of range");
    if (categories[i] < 0 || categories[i] > 16)
      throw PreconditionError("Scan: category out of range");
    if ((instance_ids[i] == 0) != (categories[i] == 0))
      throw PreconditionError("Scan: gingiva instance/category mismatch at point " +
                              std::to_string(i));
  }
}

int fdi_to_category(int fdi, bool mirror_categories) {
  if (fdi == 0) return 0;
  if (fdi >= 11 && fdi <= 18) return fdi - 10;
  if (fdi >= 21 && fdi <= 28) return mirror_categories ? fdi - 20 : fdi - 12;
  throw IngestError("fdi_to_category: unsupported FDI code " + std::to_string(fdi));
}

namespace {

struct ObjMesh {
  Mat vertices;                       // V x 3
  Mat vn;                             // optional vn records
  std::vector<std::array<int, 3>> faces;        // vertex indices
  std::vector<std::array<int, 3>> face_normals;  // vn indices or -1
};

ObjMesh parse_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open mesh file: " + path);

  std::vector<std::array<double, 3>> verts, norms;
  ObjMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      std::array<double, 3> v{};
      if (!(ss >> v[0] >> v[1] >> v[2]))
        throw IngestError(path + ": malformed vertex at line " + std::to_string(line_no));
      verts.push_back(v);
    } else if (tag == "vn") {
      std::array<double, 3> v{};
      if (!(ss >> v[0] >> v[1] >> v[2]))
        throw IngestError(path + ": malformed normal at line " + std::to_string(line_no));
      norms.push_back(v);
    } else if (tag == "f") {
      std::vector<int> vi, ni;
      std::string tok;
      while (ss >> tok) {
        int v = 0, n = -1;
        const auto s1 = tok.find('/');
        if (s1 == std::string::npos) {
          v = std::stoi(tok);
        } else {
          v = std::stoi(tok.substr(0, s1));
          const auto s2 = tok.find('/', s1 + 1);
          if (s2 != std::string::npos && s2 + 1 < tok.size())
            n = std::stoi(tok.substr(s2 + 1));
        }
        vi.push_back(v - 1);
        ni.push_back(n > 0 ? n - 1 : -1);
      }
      if (vi.size() < 3)
        throw IngestError(path + ": face with fewer than 3 vertices at line " +
                          std::to_string(line_no));
      for (std::size_t t = 2; t < vi.size(); ++t) {  // fan triangulation
        mesh.faces.push_back({vi[0], vi[t - 1], vi[t]});
        mesh.face_normals.push_back({ni[0], ni[t - 1], ni[t]});
      }
    }
  }
  if (verts.empty()) throw IngestError(path + ": no vertices");
  mesh.vertices.resize(verts.size(), 3);
  for (std::size_t i = 0; i < verts.size(); ++i)
    mesh.vertices.row(i) << verts[i][0], verts[i][1], verts[i][2];
  mesh.vn.resize(norms.size(), 3);
  for (std::size_t i = 0; i < norms.size(); ++i)
    mesh.vn.row(i) << norms[i][0], norms[i][1], norms[i][2];
  for (auto& f : mesh.faces)
    for (int v : f)
      if (v < 0 || v >= mesh.vertices.rows())
        throw IngestError(path + ": face references missing vertex");
  return mesh;
}

}  // namespace

Scan load_scan(const std::string& mesh_path, const std::string& label_path,
               bool mirror_categories) {
  ObjMesh mesh = parse_obj(mesh_path);
  const int n = static_cast<int>(mesh.vertices.rows());

  std::ifstream lf(label_path);
  if (!lf) throw IngestError("cannot open label file: " + label_path);
  nlohmann::json j;
  try {
    lf >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(label_path + ": " + e.what());
  }
  if (!j.contains("labels") || !j.contains("instances"))
    throw IngestError(label_path + ": missing \"labels\" or \"instances\" array");
  std::vector<int> fdi = j["labels"].get<std::vector<int>>();
  std::vector<int> raw_inst = j["instances"].get<std::vector<int>>();
  if (static_cast<int>(fdi.size()) != n || static_cast<int>(raw_inst.size()) != n)
    throw IngestError(label_path + ": label arrays do not match vertex count of " +
                      mesh_path);

  Scan scan;
  scan.points.coords = mesh.vertices;

  // Per-vertex normals: average of referenced vn records when present,
  // otherwise area-weighted face normals.
  Mat normals = Mat::Zero(n, 3);
  std::vector<char> has_vn(n, 0);
  std::vector<int> ref_face(n, -1);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      const int v = face[k];
      if (ref_face[v] < 0) ref_face[v] = static_cast<int>(f);
      const int vn_idx = mesh.face_normals[f][k];
      if (vn_idx >= 0 && vn_idx < mesh.vn.rows()) {
        normals.row(v) += mesh.vn.row(vn_idx);
        has_vn[v] = 1;
      }
    }
  }
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    Eigen::Vector3d a = mesh.vertices.row(face[0]);
    Eigen::Vector3d b = mesh.vertices.row(face[1]);
    Eigen::Vector3d c = mesh.vertices.row(face[2]);
    const Eigen::Vector3d fn = (b - a).cross(c - a);  // length = 2 * area
    for (int k = 0; k < 3; ++k)
      if (!has_vn[face[k]]) normals.row(face[k]) += fn.transpose();
  }
  for (int i = 0; i < n; ++i) {
    const double len = normals.row(i).norm();
    normals.row(i) = len > 1e-12 ? (normals.row(i) / len).eval()
                                 : Eigen::RowVector3d(0, 0, 1);
  }
  scan.points.normals = normals;

  scan.face_vertex_coords.resize(n, 9);
  scan.face_vertex_normals.resize(n, 9);
  for (int i = 0; i < n; ++i) {
    if (ref_face[i] < 0)
      throw IngestError(mesh_path + ": vertex " + std::to_string(i) +
                        " has no incident face");
    const auto& face = mesh.faces[ref_face[i]];
    for (int k = 0; k < 3; ++k) {
      scan.face_vertex_coords.block<1, 3>(i, 3 * k) = mesh.vertices.row(face[k]);
      scan.face_vertex_normals.block<1, 3>(i, 3 * k) = normals.row(face[k]);
    }
  }

  // Tooth positions from FDI codes; each source instance group maps onto its
  // majority position so ids land in [0, 16].
  std::vector<int> positions(n);
  scan.categories.resize(n);
  for (int i = 0; i < n; ++i) {
    positions[i] = fdi_to_category(fdi[i], false);
    scan.categories[i] = fdi_to_category(fdi[i], mirror_categories);
  }
  std::map<int, std::map<int, int>> votes;  // source instance -> position counts
  for (int i = 0; i < n; ++i)
    if (raw_inst[i] != 0) votes[raw_inst[i]][positions[i]]++;
  std::map<int, int> inst_to_pos;
  for (auto& [src, counts] : votes) {
    int best_pos = 0, best_count = -1;
    for (auto& [pos, count] : counts) {
      if (pos == 0) continue;
      if (count > best_count) {
        best_count = count;
        best_pos = pos;
      }
    }
    inst_to_pos[src] = best_pos;
  }
  scan.instance_ids.resize(n);
  for (int i = 0; i < n; ++i) {
    if (raw_inst[i] == 0 || scan.categories[i] == 0) {
      scan.instance_ids[i] = 0;
      scan.categories[i] = 0;
    } else {
      scan.instance_ids[i] = inst_to_pos[raw_inst[i]];
      if (scan.instance_ids[i] == 0) scan.categories[i] = 0;
    }
  }
  scan.validate();
  return scan;
}

Scan downsample_scan(const Scan& scan, int target, std::uint64_t /*seed*/) {
  if (target < 1) throw PreconditionError("downsample_scan: target >= 1 required");
  if (scan.size() <= target) return scan;

  std::vector<int> keep = farthest_point_sample(scan.points, target, 0);
  Scan out;
  out.points.coords.resize(target, 3);
  out.points.normals.resize(target, 3);
  out.face_vertex_coords.resize(target, 9);
  out.face_vertex_normals.resize(target, 9);
  out.instance_ids.resize(target);
  out.categories.resize(target);
  for (int i = 0; i < target; ++i) {
    const int src = keep[i];
    out.points.coords.row(i) = scan.points.coords.row(src);
    out.points.normals.row(i) = scan.points.normals.row(src);
    out.face_vertex_coords.row(i) = scan.face_vertex_coords.row(src);
    out.face_vertex_normals.row(i) = scan.face_vertex_normals.row(src);
    out.instance_ids[i] = scan.instance_ids[src];
    out.categories[i] = scan.categories[src];
  }
  return out;
}

Mat build_input_features(const Scan& scan) {
  const int n = scan.size();
  if (scan.face_vertex_coords.rows() != n || scan.face_vertex_normals.rows() != n)
    throw PreconditionError("build_input_features: missing face data");
  Mat x(n, 24);
  x.middleCols(0, 3) = scan.points.coords;
  x.middleCols(3, 3) = scan.points.normals;
  x.middleCols(6, 9) = scan.face_vertex_coords;
  x.middleCols(15, 9) = scan.face_vertex_normals;
  if (!x.allFinite())
    throw PreconditionError("build_input_features: non-finite values");
  return x;
}

std::vector<GroundTruthInstance> scan_instances(const Scan& scan) {
  std::map<int, GroundTruthInstance> by_id;
  for (int i = 0; i < scan.size(); ++i) {
    const int id = scan.instance_ids[i];
    if (id == 0) continue;
    auto& inst = by_id[id];
    if (inst.mask.empty()) inst.mask.assign(scan.size(), 0);
    inst.mask[i] = 1;
    inst.category = scan.categories[i];
  }
  std::vector<GroundTruthInstance> out;
  for (auto& [id, inst] : by_id) out.push_back(std::move(inst));
  return out;
}

std::vector<std::string> list_files(const std::string& dir, const std::string& ext) {
  namespace fs = std::filesystem;
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) throw IngestError("not a directory: " + dir);
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ext)
      out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace toothseg

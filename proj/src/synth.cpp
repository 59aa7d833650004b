#include <cmath>
#include <random>

#include "toothseg/data.hpp"
#include "toothseg/geometry.hpp"

namespace toothseg {

namespace {

// Portable uniform in [0,1): fixed bit recipe on top of the standardized
// mt19937_64 stream, so generated scans are byte-identical across platforms.
double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double gauss(std::mt19937_64& rng) {
  double u1 = u01(rng);
  while (u1 <= 1e-300) u1 = u01(rng);
  const double u2 = u01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

struct ToothShape {
  double half_width;    // tangential
  double half_depth;    // radial
  double half_height;   // vertical
};

// Crown half-axes by position within a quadrant (1 = central incisor,
// 8 = third molar).
ToothShape tooth_shape(int pos_in_quadrant) {
  switch (pos_in_quadrant) {
    case 1: return {3.6, 3.0, 5.2};
    case 2: return {2.8, 2.8, 4.8};
    case 3: return {3.2, 3.4, 5.2};
    case 4: return {3.0, 3.8, 4.4};
    case 5: return {2.9, 3.8, 4.2};
    case 6: return {4.4, 4.6, 3.8};
    case 7: return {4.2, 4.4, 3.6};
    default: return {4.0, 4.2, 3.2};
  }
}

double tooth_gap_width(int pos_in_quadrant) {
  return 2.0 * tooth_shape(pos_in_quadrant).half_width + 1.6;
}

// Sample a point on |x/a|^e + |y/b|^e + |z/c|^e = 1 along a random direction
// together with its outward unit normal.
void superellipsoid_point(std::mt19937_64& rng, double a, double b, double c,
                          double e, Eigen::Vector3d* point, Eigen::Vector3d* normal) {
  Eigen::Vector3d dir;
  do {
    dir = {gauss(rng), gauss(rng), gauss(rng)};
  } while (dir.norm() < 1e-6);
  dir.normalize();
  const double f = std::pow(std::abs(dir.x() / a), e) +
                   std::pow(std::abs(dir.y() / b), e) +
                   std::pow(std::abs(dir.z() / c), e);
  const double r = std::pow(f, -1.0 / e);
  *point = r * dir;
  const auto dcomp = [e](double v, double axis) {
    return e * std::pow(std::abs(v / axis), e - 1.0) *
           (v >= 0.0 ? 1.0 : -1.0) / axis;
  };
  *normal = {dcomp(point->x(), a), dcomp(point->y(), b), dcomp(point->z(), c)};
  normal->normalize();
}

}  // namespace

Scan generate_synthetic_arch(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);

  // Tooth positions present: fill the right quadrant (1..8) and the left
  // quadrant (9..16) alternately from the midline outward, then drop the
  // explicitly missing ones. Gaps stay open.
  std::vector<int> present;
  {
    const int right = (config.n_teeth + 1) / 2;
    const int left = config.n_teeth / 2;
    for (int p = 1; p <= right; ++p) present.push_back(p);
    for (int p = 1; p <= left; ++p) present.push_back(8 + p);
    for (int m : config.missing)
      std::erase(present, m);
    std::sort(present.begin(), present.end());
  }

  // Arch: circular arc of radius chosen so all 8 quadrant slots fit.
  double arc_half_len = 1.0;
  {
    double acc = 0.0;
    for (int p = 1; p <= 8; ++p) acc += tooth_gap_width(p);
    arc_half_len = acc;
  }
  const double radius = 1.05 * arc_half_len / 1.35;  // half-opening 1.35 rad
  const double gum_z = 0.0;

  struct Slot {
    int position;
    Eigen::Vector3d center;
    double phi;
    ToothShape shape;
  };
  std::vector<Slot> slots;
  for (int pos : present) {
    const int q = pos <= 8 ? pos : pos - 8;   // position within quadrant
    const double side = pos <= 8 ? 1.0 : -1.0;
    double s = 0.0;
    for (int i = 1; i < q; ++i) s += tooth_gap_width(i);
    s += 0.5 * tooth_gap_width(q);
    const double phi = side * s / radius;
    const ToothShape shape = tooth_shape(q);
    Slot slot;
    slot.position = pos;
    slot.phi = phi;
    slot.shape = shape;
    slot.center = {radius * std::sin(phi), radius * std::cos(phi),
                   gum_z + 0.72 * shape.half_height};
    // Mild positional scatter models malposed teeth.
    slot.center.x() += 0.35 * gauss(rng);
    slot.center.y() += 0.35 * gauss(rng);
    slots.push_back(slot);
  }

  const int n_total = config.points_per_scan;
  double width_sum = 0.0;
  for (const auto& s : slots) width_sum += s.shape.half_width;
  const int teeth_points_target = static_cast<int>(0.62 * n_total);

  std::vector<Eigen::Vector3d> coords, normals;
  std::vector<int> ids;
  coords.reserve(n_total);

  for (const auto& slot : slots) {
    int quota = static_cast<int>(teeth_points_target * slot.shape.half_width / width_sum);
    quota = std::max(quota, 24);
    const double cphi = std::cos(slot.phi), sphi = std::sin(slot.phi);
    for (int k = 0; k < quota; ++k) {
      Eigen::Vector3d p, nrm;
      // Keep only crown points above the gum line.
      int guard = 0;
      do {
        superellipsoid_point(rng, slot.shape.half_width, slot.shape.half_depth,
                             slot.shape.half_height, 3.0, &p, &nrm);
        ++guard;
      } while (slot.center.z() + p.z() < gum_z + 0.35 && guard < 64);
      // Rotate the tangential axis onto the local arch direction.
      const Eigen::Vector3d rp(p.x() * cphi + p.y() * sphi,
                               -p.x() * sphi + p.y() * cphi, p.z());
      const Eigen::Vector3d rn(nrm.x() * cphi + nrm.y() * sphi,
                               -nrm.x() * sphi + nrm.y() * cphi, nrm.z());
      coords.push_back(slot.center + rp);
      normals.push_back(rn);
      ids.push_back(slot.position);
    }
  }

  // Gum: a rippled band following the arch below the crowns.
  const double phi_max = arc_half_len / radius + 0.08;
  while (static_cast<int>(coords.size()) < n_total) {
    const double phi = (2.0 * u01(rng) - 1.0) * phi_max;
    const double off = (2.0 * u01(rng) - 1.0) * 9.0;
    const double r = radius + off;
    const double z = gum_z - 0.12 * std::abs(off) + 0.25 * gauss(rng) -
                     0.4 * u01(rng);
    coords.push_back({r * std::sin(phi), r * std::cos(phi), z});
    Eigen::Vector3d nrm(0.15 * gauss(rng), 0.15 * gauss(rng), 1.0);
    nrm.normalize();
    normals.push_back(nrm);
    ids.push_back(0);
  }

  Scan scan;
  const int n = static_cast<int>(coords.size());
  scan.points.coords.resize(n, 3);
  scan.points.normals.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d c = coords[i];
    if (config.jitter > 0.0)
      c += config.jitter * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
    scan.points.coords.row(i) = c.transpose();
    scan.points.normals.row(i) = normals[i].transpose();
  }
  scan.instance_ids = ids;
  scan.categories = ids;  // synthetic categories coincide with positions

  // Pseudo-faces: each point with its two nearest neighbors, so the
  // 24-channel input layout stays well defined without a source mesh.
  NeighborIndex nn = knn_indices(scan.points, scan.points.coords, std::min(3, n));
  scan.face_vertex_coords.resize(n, 9);
  scan.face_vertex_normals.resize(n, 9);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      const int src = nn.indices(i, std::min(k, static_cast<int>(nn.indices.cols()) - 1));
      scan.face_vertex_coords.block<1, 3>(i, 3 * k) = scan.points.coords.row(src);
      scan.face_vertex_normals.block<1, 3>(i, 3 * k) = scan.points.normals.row(src);
    }
  }
  scan.validate();
  return scan;
}

std::vector<Scan> generate_synthetic_corpus(const SynthConfig& base, int num_scans) {
  std::vector<Scan> scans;
  scans.reserve(num_scans);
  for (int i = 0; i < num_scans; ++i) {
    SynthConfig cfg = base;
    cfg.seed = base.seed + 97ULL * i;
    switch (i % 4) {
      case 0: cfg.n_teeth = 14; cfg.missing.clear(); break;
      case 1: cfg.n_teeth = 15; cfg.missing.clear(); break;  // one wisdom tooth
      case 2: cfg.n_teeth = 16; cfg.missing.clear(); break;  // both wisdom teeth
      default: cfg.n_teeth = 14; cfg.missing = {4}; break;   // premolar gap
    }
    scans.push_back(generate_synthetic_arch(cfg));
  }
  return scans;
}

}  // namespace toothseg

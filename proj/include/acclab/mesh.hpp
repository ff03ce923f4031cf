#pragma once

#include "acclab/lattice.hpp"

#include <array>
#include <filesystem>
#include <memory>
#include <optional>

namespace acclab {

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Region { Atomistic, Continuum };
enum class MeshFamily { Radial, Algebraic };

struct MeshPlan {
  std::int64_t K = 4;     // atoms per side of the hexagonal atomistic region
  double hK = 1.0;        // element size next to the atomistic region
  double alpha = 1.5;     // grading exponent of h(r) = hK (r/K)^alpha (Radial forces 1)
  MeshFamily family = MeshFamily::Algebraic;
  double min_angle_deg = 20.0;

  double effective_alpha() const { return family == MeshFamily::Radial ? 1.0 : alpha; }
  double size_at(double r) const;
};

MeshFamily parse_mesh_family(const std::string& s);
std::string to_string(MeshFamily f);

struct MeshTriangle {
  std::array<Vec2i, 3> v;            // lattice coordinates, counter-clockwise
  std::array<std::int64_t, 3> node;  // node ids
  Region region = Region::Continuum;
  double area = 0;
  double diameter = 0;
  std::array<Vec2, 3> grad;          // cartesian gradients of the barycentric functions
};

struct MeshEdge {
  std::int64_t tri_plus = -1, tri_minus = -1;
  std::int64_t node_a = -1, node_b = -1;
  double length = 0;
};

// Sub-interval of a traced segment inside one (periodic image of a) triangle.
struct TraceSegment {
  std::int64_t triangle = -1;
  Vec2i shift;
  double t0 = 0, t1 = 0;
  double chi = 1.0;  // 1/2 when the sub-segment lies on an edge shared by two triangles
};

struct TraceCrossing {
  double t = 0;
  bool through_vertex = false;
  double weight = 1.0;  // 1/2 for vertex hits
};

struct BondTrace {
  std::vector<TraceSegment> segments;
  std::vector<TraceCrossing> crossings;
  double covered() const;
};

// Exact clip of p + t d, t in [0,1], against a closed triangle; t-values as rationals.
struct ClipResult {
  bool hit = false;          // closed intersection nonempty
  bool positive = false;     // intersection has positive length
  bool on_edge = false;      // positive-length overlap lies on an edge line
  std::int64_t lo_num = 0, lo_den = 1, hi_num = 1, hi_den = 1;
  double t0() const { return static_cast<double>(lo_num) / static_cast<double>(lo_den); }
  double t1() const { return static_cast<double>(hi_num) / static_cast<double>(hi_den); }
  double length() const;
};

ClipResult clip_segment(Vec2i p, Vec2i d, const std::array<Vec2i, 3>& tri);

class CoupledMesh {
 public:
  struct Candidate {
    std::int64_t triangle;
    Vec2i shift;
  };
  struct Location {
    std::int64_t triangle = -1;
    Vec2i shift;
    std::array<double, 3> weights{};
  };

  CoupledMesh(std::shared_ptr<const LatticeDomain> domain, std::vector<std::array<Vec2i, 3>> tris,
              std::vector<Region> regions, std::optional<MeshPlan> plan = std::nullopt);

  const LatticeDomain& domain() const { return *domain_; }
  std::shared_ptr<const LatticeDomain> domain_ptr() const { return domain_; }
  const std::optional<MeshPlan>& plan() const { return plan_; }
  const std::vector<MeshTriangle>& triangles() const { return tris_; }
  const std::vector<MeshEdge>& edges() const { return edges_; }
  std::int64_t num_nodes() const { return static_cast<std::int64_t>(node_lattice_.size()); }
  std::int64_t node_lattice_index(std::int64_t node) const { return node_lattice_[static_cast<std::size_t>(node)]; }
  Vec2i node_coords(std::int64_t node) const { return node_coords_[static_cast<std::size_t>(node)]; }
  std::int64_t node_of_lattice(std::int64_t lattice_idx) const;
  bool has_atomistic_region() const { return has_atomistic_; }
  double total_area() const;
  double min_angle_deg() const;

  std::vector<Candidate> candidates(Vec2i lo, Vec2i hi) const;
  // Closed segment p -> p + d meets the closed atomistic region (periodically).
  bool touches_atomistic(Vec2i p, Vec2i d) const;
  BondTrace trace(Vec2i p, Vec2i d) const;
  Location locate(Vec2i x) const;

 private:
  void build_edges();
  void build_locator();

  std::shared_ptr<const LatticeDomain> domain_;
  std::optional<MeshPlan> plan_;
  std::vector<MeshTriangle> tris_;
  std::vector<MeshEdge> edges_;
  std::vector<std::int64_t> node_lattice_;
  std::vector<Vec2i> node_coords_;
  std::vector<std::int64_t> lattice_node_;
  bool has_atomistic_ = false;

  // uniform bins in lattice coordinates
  std::int64_t bin_size_ = 3;
  Vec2i bin_lo_, bin_hi_;
  std::int64_t nbi_ = 0, nbj_ = 0;
  std::vector<std::vector<Candidate>> bins_;
};

// Full unit triangulation of the period cell; every triangle gets `region`.
CoupledMesh micro_triangulation(const LatticeDomain& domain, Region region = Region::Atomistic);
// Hexagonal atomistic core of side K at the origin plus graded hexagonal rings out to
// the boundary of the hexagonal cell.
CoupledMesh build_graded_mesh(const LatticeDomain& domain, const MeshPlan& plan);

BondTrace trace_bond(const CoupledMesh& mesh, const Bond& b);
double bond_density_check(const std::array<Vec2i, 3>& T, Vec2i r);
// Mesh-size law ratio h_T / h(r_T) for continuum triangles.
std::vector<double> mesh_size_ratios(const CoupledMesh& mesh);

// (sum over continuum-continuum edges of h_f |[grad]|^p)^(1/p); p <= 0 means infinity.
double jump_seminorm(const CoupledMesh& mesh, const std::vector<Mat2>& element_gradients, double p);

void write_mesh(const CoupledMesh& mesh, const std::filesystem::path& base);

}  // namespace acclab

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdsf/camera.hpp"
#include "sdsf/depth_norm.hpp"
#include "sdsf/diffusion.hpp"
#include "sdsf/rng.hpp"
#include "sdsf/tensor.hpp"

namespace sdsf {

// Procedural stand-in for a captioned multi-view object corpus. Five shape
// families rendered to normal/depth/albedo views by ray marching analytic
// distance fields; the family name doubles as the prompt and its label id
// conditions the priors (0 stays reserved for the unconditional branch).
enum class ShapeCategory { Sphere, Box, Torus, Capsule, Pair };

std::string category_name(ShapeCategory c);
int category_label(ShapeCategory c);
ShapeCategory category_from_label(int label);

struct ShapeSpec {
  ShapeCategory category = ShapeCategory::Sphere;
  std::array<double, 3> center{0.0, 0.0, 0.0};
  double radius = 0.3;                               // sphere; pair's sphere half
  std::array<double, 3> half_extent{0.3, 0.3, 0.3};  // box; pair's box half
  double major = 0.24;                               // torus radii, axis along y
  double minor = 0.08;
  double cap_radius = 0.1;  // capsule along y
  double cap_half = 0.2;
  std::array<double, 3> center2{0.0, 0.0, 0.0};  // pair's second body
  std::array<double, 3> color{0.7, 0.7, 0.7};
  std::array<double, 3> color2{0.3, 0.3, 0.3};
  bool two_tone = false;  // split at the primary body's height
};

// Signed distance to the shape's surface, negative inside.
double shape_sdf(const ShapeSpec& s, const std::array<double, 3>& p);
std::array<double, 3> shape_albedo(const ShapeSpec& s, const std::array<double, 3>& p);

// Scales every length in the spec; colors and category stay put.
ShapeSpec scale_shape(const ShapeSpec& s, double factor);

// Draws a spec whose surface stays strictly inside the half-extent-l cube at
// l = 0.5. Boxes come out as origin-centered near-cubes, the class the
// geometry acceptance run trains on.
ShapeSpec sample_shape(ShapeCategory cat, Rng& rng);

struct GroundTruthView {
  Tensor nd;      // [4,res,res]: camera-space normal xyz, reverse depth remapped to [-1,1]
  Tensor albedo;  // [3,res,res] in [0,1], black background
  Tensor mask;    // [1,res,res] hard coverage
};

// Sphere-traces the analytic field. Normals come from central differences of
// the distance field, depth from the view-axis offset against the object
// center. Background pixels carry (0,0,1) and the far plane.
GroundTruthView render_ground_truth(const ShapeSpec& s, const CameraPose& cam, int res,
                                    const DepthConvention& conv = {});

struct ViewRecord {
  std::string shape_id;
  int view_index = 0;
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double distance = 1.7;
  double fov_deg = 60.0;
  int label = 1;
  std::string nd_path;  // all three relative to the corpus root
  std::string albedo_path;
  std::string meta_path;

  CameraPose pose() const;
};

struct ShapeRecord {
  std::string id;
  int label = 1;
  ShapeSpec spec;
};

struct DatasetManifest {
  std::string root;  // filled on generate/load, never serialized
  int resolution = 32;
  std::vector<ShapeRecord> shapes;
  std::vector<ViewRecord> views;      // 24 per shape, ring order
  std::map<int, std::string> labels;  // id -> family name, a bijection
};

struct CorpusConfig {
  std::size_t n_shapes = 8;
  std::uint64_t seed = 1;
  int resolution = 32;
  std::optional<ShapeCategory> only;  // restrict to one family (class corpora)
  double min_distance = 1.4;
  double max_distance = 2.0;
  double min_elevation = 5.0;
  double max_elevation = 30.0;
};

// Writes the corpus under root and returns the manifest it also saves as
// root/manifest.json. Each shape gets 24 views on an azimuth ring (15 degree
// steps plus a per-shape offset) sharing one elevation and distance draw.
// Deterministic in the seed, byte for byte, independent of thread count.
DatasetManifest generate_corpus(const std::string& root, const CorpusConfig& cfg);
DatasetManifest load_manifest(const std::string& root);

// One view as a diffusion sample: the stored nd image plus pose and label.
DiffusionSample load_nd_sample(const DatasetManifest& m, std::size_t view_index);
// Albedo variant: image is the albedo remapped to [-1,1], depth carries the
// reverse-depth condition in [0,1].
DiffusionSample load_albedo_sample(const DatasetManifest& m, std::size_t view_index);

// Groups every shape's 24-view ring into 6 disjoint quads with azimuth gaps
// of exactly 90 degrees (ring indices k, k+6, k+12, k+18), shuffled. Entries
// index into m.views.
std::vector<std::array<std::size_t, 4>> quad_batches(const DatasetManifest& m, Rng& rng);

// Every view loaded once, ordered so each consecutive run of four is one
// quad from quad_batches. Feed straight to the four-view trainer.
std::vector<DiffusionSample> load_quad_samples(const DatasetManifest& m, Rng& rng);
std::vector<DiffusionSample> load_albedo_samples(const DatasetManifest& m);

}  // namespace sdsf

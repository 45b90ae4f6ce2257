#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "sdsf/dataset.hpp"
#include "sdsf/png_io.hpp"
#include "sdsf/tensor_io.hpp"
#include "sdsf/threads.hpp"

namespace sdsf {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string zero_padded(const char* prefix, int n, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, digits, n);
  return buf;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
  if (!out) throw std::runtime_error("dataset: failed to write " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("dataset: failed to open " + path);
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return body;
}

json spec_to_json(const ShapeSpec& s) {
  return json{{"category", category_name(s.category)},
              {"center", s.center},
              {"radius", s.radius},
              {"half_extent", s.half_extent},
              {"major", s.major},
              {"minor", s.minor},
              {"cap_radius", s.cap_radius},
              {"cap_half", s.cap_half},
              {"center2", s.center2},
              {"color", s.color},
              {"color2", s.color2},
              {"two_tone", s.two_tone}};
}

ShapeSpec spec_from_json(const json& j) {
  ShapeSpec s;
  const std::string name = j.at("category").get<std::string>();
  bool found = false;
  for (int label = 1; label <= 5; ++label) {
    const ShapeCategory c = category_from_label(label);
    if (category_name(c) == name) {
      s.category = c;
      found = true;
      break;
    }
  }
  if (!found) throw std::runtime_error("dataset: unknown category '" + name + "' in manifest");
  j.at("center").get_to(s.center);
  j.at("radius").get_to(s.radius);
  j.at("half_extent").get_to(s.half_extent);
  j.at("major").get_to(s.major);
  j.at("minor").get_to(s.minor);
  j.at("cap_radius").get_to(s.cap_radius);
  j.at("cap_half").get_to(s.cap_half);
  j.at("center2").get_to(s.center2);
  j.at("color").get_to(s.color);
  j.at("color2").get_to(s.color2);
  j.at("two_tone").get_to(s.two_tone);
  return s;
}

void write_albedo_png(const std::string& path, const Tensor& albedo) {
  const int res = static_cast<int>(albedo.dim(1));
  const auto& a = albedo.value();
  const std::size_t hw = static_cast<std::size_t>(res) * res;
  std::vector<std::uint8_t> px(hw * 3);
  for (std::size_t i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(a[c * hw + i], 0.0, 1.0);
      px[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  write_png(path, px.data(), res, res, 3);
}

// View indices of one shape, in ring order, verified to be a full 24-ring.
std::vector<std::size_t> ring_indices(const DatasetManifest& m, const std::string& shape_id) {
  std::vector<std::size_t> ring;
  for (std::size_t i = 0; i < m.views.size(); ++i)
    if (m.views[i].shape_id == shape_id) ring.push_back(i);
  if (ring.size() != 24)
    throw std::invalid_argument("dataset: shape " + shape_id + " does not have a 24-view ring");
  std::sort(ring.begin(), ring.end(), [&m](std::size_t a, std::size_t b) {
    return m.views[a].view_index < m.views[b].view_index;
  });
  for (int k = 0; k < 24; ++k)
    if (m.views[ring[k]].view_index != k)
      throw std::invalid_argument("dataset: shape " + shape_id + " has gaps in its view ring");
  return ring;
}

}  // namespace

CameraPose ViewRecord::pose() const {
  return make_pose(azimuth_deg, elevation_deg, distance, fov_deg);
}

DatasetManifest generate_corpus(const std::string& root, const CorpusConfig& cfg) {
  if (cfg.n_shapes == 0) throw std::invalid_argument("generate_corpus: n_shapes must be positive");
  if (cfg.resolution <= 0) throw std::invalid_argument("generate_corpus: resolution must be positive");
  if (!(cfg.min_distance <= cfg.max_distance) || !(cfg.min_elevation <= cfg.max_elevation))
    throw std::invalid_argument("generate_corpus: empty camera range");

  fs::create_directories(root);

  DatasetManifest m;
  m.root = root;
  m.resolution = cfg.resolution;
  for (int label = 1; label <= 5; ++label)
    m.labels[label] = category_name(category_from_label(label));
  m.shapes.resize(cfg.n_shapes);
  m.views.resize(cfg.n_shapes * 24);

  const Rng master(cfg.seed);
  // Each shape draws from its own child stream, so the schedule of random
  // numbers never depends on how shapes are split across threads.
  parallel_for(cfg.n_shapes, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::string id = zero_padded("shape-", static_cast<int>(i), 4);
      Rng rng = master.child(id);
      const ShapeCategory cat =
          cfg.only ? *cfg.only : category_from_label(1 + static_cast<int>(i % 5));
      const ShapeSpec spec = sample_shape(cat, rng);
      const int label = category_label(cat);
      m.shapes[i] = ShapeRecord{id, label, spec};

      const double offset = rng.uniform(0.0, 15.0);
      const double elevation = rng.uniform(cfg.min_elevation, cfg.max_elevation);
      const double distance = rng.uniform(cfg.min_distance, cfg.max_distance);

      fs::create_directories(fs::path(root) / id);
      for (int k = 0; k < 24; ++k) {
        ViewRecord v;
        v.shape_id = id;
        v.view_index = k;
        v.azimuth_deg = offset + 15.0 * k;
        v.elevation_deg = elevation;
        v.distance = distance;
        v.fov_deg = 60.0;
        v.label = label;
        const std::string stem = id + "/" + zero_padded("view-", k, 2);
        v.nd_path = stem + ".nd.sdtf";
        v.albedo_path = stem + ".albedo.png";
        v.meta_path = stem + ".meta.json";

        const GroundTruthView gt = render_ground_truth(spec, v.pose(), cfg.resolution);
        save_sdtf(root + "/" + v.nd_path, gt.nd);
        write_albedo_png(root + "/" + v.albedo_path, gt.albedo);

        const json meta{{"shape", id},
                        {"view", k},
                        {"label", label},
                        {"category", category_name(cat)},
                        {"azimuth_deg", v.azimuth_deg},
                        {"elevation_deg", v.elevation_deg},
                        {"distance", v.distance},
                        {"fov_deg", v.fov_deg},
                        {"resolution", cfg.resolution}};
        write_text(root + "/" + v.meta_path, meta.dump(2) + "\n");

        m.views[i * 24 + k] = std::move(v);
      }
    }
  });

  json shapes = json::array();
  for (const auto& s : m.shapes)
    shapes.push_back(json{{"id", s.id}, {"label", s.label}, {"spec", spec_to_json(s.spec)}});
  json views = json::array();
  for (const auto& v : m.views)
    views.push_back(json{{"shape", v.shape_id},
                         {"view", v.view_index},
                         {"azimuth_deg", v.azimuth_deg},
                         {"elevation_deg", v.elevation_deg},
                         {"distance", v.distance},
                         {"fov_deg", v.fov_deg},
                         {"label", v.label},
                         {"nd", v.nd_path},
                         {"albedo", v.albedo_path},
                         {"meta", v.meta_path}});
  json labels;
  for (const auto& [id, name] : m.labels) labels[std::to_string(id)] = name;
  const json manifest{{"resolution", m.resolution},
                      {"labels", labels},
                      {"shapes", shapes},
                      {"views", views}};
  write_text(root + "/manifest.json", manifest.dump(2) + "\n");
  return m;
}

DatasetManifest load_manifest(const std::string& root) {
  json j;
  try {
    j = json::parse(read_text(root + "/manifest.json"));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("dataset: manifest.json is not valid JSON: " + std::string(e.what()));
  }
  DatasetManifest m;
  m.root = root;
  m.resolution = j.at("resolution").get<int>();
  for (const auto& [key, name] : j.at("labels").items())
    m.labels[std::stoi(key)] = name.get<std::string>();
  for (const auto& s : j.at("shapes")) {
    ShapeRecord rec;
    rec.id = s.at("id").get<std::string>();
    rec.label = s.at("label").get<int>();
    rec.spec = spec_from_json(s.at("spec"));
    m.shapes.push_back(std::move(rec));
  }
  for (const auto& v : j.at("views")) {
    ViewRecord rec;
    rec.shape_id = v.at("shape").get<std::string>();
    rec.view_index = v.at("view").get<int>();
    rec.azimuth_deg = v.at("azimuth_deg").get<double>();
    rec.elevation_deg = v.at("elevation_deg").get<double>();
    rec.distance = v.at("distance").get<double>();
    rec.fov_deg = v.at("fov_deg").get<double>();
    rec.label = v.at("label").get<int>();
    rec.nd_path = v.at("nd").get<std::string>();
    rec.albedo_path = v.at("albedo").get<std::string>();
    rec.meta_path = v.at("meta").get<std::string>();
    m.views.push_back(std::move(rec));
  }
  return m;
}

DiffusionSample load_nd_sample(const DatasetManifest& m, std::size_t view_index) {
  if (view_index >= m.views.size())
    throw std::invalid_argument("load_nd_sample: view index out of range");
  const ViewRecord& v = m.views[view_index];
  DiffusionSample s;
  s.image = load_sdtf(m.root + "/" + v.nd_path);
  if (s.image.rank() != 3 || s.image.dim(0) != 4)
    throw std::runtime_error("load_nd_sample: " + v.nd_path + " is not a 4-channel image");
  s.label = v.label;
  s.cam = v.pose();
  return s;
}

DiffusionSample load_albedo_sample(const DatasetManifest& m, std::size_t view_index) {
  if (view_index >= m.views.size())
    throw std::invalid_argument("load_albedo_sample: view index out of range");
  const ViewRecord& v = m.views[view_index];
  const PngImage png = read_png(m.root + "/" + v.albedo_path);
  if (png.channels != 3)
    throw std::runtime_error("load_albedo_sample: " + v.albedo_path + " is not RGB");
  const std::size_t h = static_cast<std::size_t>(png.height);
  const std::size_t w = static_cast<std::size_t>(png.width);

  DiffusionSample s;
  s.image = Tensor::zeros({3, h, w});
  auto img = s.image.value_mut();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img[c * h * w + y * w + x] =
            2.0 * (png.at(static_cast<int>(x), static_cast<int>(y), static_cast<int>(c)) / 255.0) -
            1.0;

  const Tensor nd = load_sdtf(m.root + "/" + v.nd_path);
  if (nd.rank() != 3 || nd.dim(0) != 4 || nd.dim(1) != h || nd.dim(2) != w)
    throw std::runtime_error("load_albedo_sample: " + v.nd_path + " does not match the albedo size");
  s.depth = Tensor::zeros({1, h, w});
  auto dep = s.depth.value_mut();
  const auto& ndv = nd.value();
  for (std::size_t i = 0; i < h * w; ++i) dep[i] = 0.5 * (ndv[3 * h * w + i] + 1.0);

  s.label = v.label;
  s.cam = v.pose();
  return s;
}

std::vector<std::array<std::size_t, 4>> quad_batches(const DatasetManifest& m, Rng& rng) {
  std::vector<std::array<std::size_t, 4>> quads;
  for (const auto& shape : m.shapes) {
    const std::vector<std::size_t> ring = ring_indices(m, shape.id);
    for (int j = 0; j < 6; ++j)
      quads.push_back({ring[j], ring[j + 6], ring[j + 12], ring[j + 18]});
  }
  // Fisher-Yates on our own stream; std::shuffle is implementation-defined.
  for (std::size_t i = quads.size(); i > 1; --i)
    std::swap(quads[i - 1], quads[rng.next_u64() % i]);
  return quads;
}

std::vector<DiffusionSample> load_quad_samples(const DatasetManifest& m, Rng& rng) {
  const auto quads = quad_batches(m, rng);
  std::vector<DiffusionSample> out;
  out.reserve(quads.size() * 4);
  for (const auto& q : quads)
    for (const std::size_t idx : q) out.push_back(load_nd_sample(m, idx));
  return out;
}

std::vector<DiffusionSample> load_albedo_samples(const DatasetManifest& m) {
  std::vector<DiffusionSample> out;
  out.reserve(m.views.size());
  for (std::size_t i = 0; i < m.views.size(); ++i) out.push_back(load_albedo_sample(m, i));
  return out;
}

}  // namespace sdsf

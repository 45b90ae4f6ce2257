#pragma once

#include <string>
#include <vector>

#include "sdsf/camera.hpp"
#include "sdsf/geometry.hpp"
#include "sdsf/tensor.hpp"

namespace sdsf {

struct RasterOut {
  Tensor attr;  // [K,res,res] interpolated vertex attributes, zero far outside coverage
  Tensor mask;  // [1,res,res] soft silhouette coverage in [0,1]
};

// Soft differentiable rasterizer. Surface pixels get perspective-correct
// vertex attributes; coverage is a sigmoid over the screen-space distance to
// the nearest visible silhouette edge, so the mask stays differentiable in
// the vertex positions. Pixels just outside the silhouette borrow attributes
// from the nearest edge, which keeps soft composites sensible at the rim.
// sigma is in screen units (screen spans [0,1]); far from any silhouette the
// mask snaps to exact 0/1. Gradients flow to positions and attributes.
// Throws if the mesh is empty or the camera sits inside its bounding sphere.
RasterOut rasterize(const TriangleMesh& mesh, const Tensor& attrs, const CameraPose& cam,
                    int res, double sigma);

inline double default_sigma(int res) { return 1.5 / static_cast<double>(res); }

struct GBuffer {
  Tensor normal;  // [3,H,W] camera space, unit where covered, background (0,0,1)
  Tensor depth;   // [1,H,W] reverse depth in [0,1], background 0
  Tensor albedo;  // [3,H,W] background 0
  Tensor rgb;     // [3,H,W] shaded color, background 0
  Tensor mask;    // [1,H,W] soft coverage
  Tensor fg;      // raw foreground layers before compositing; layout set by the producer
};

GBuffer background_gbuffer(int res);

// Meshes the field and renders camera-space normals plus reverse depth, one
// GBuffer per pose. fg layout: channels 0..2 normal, 3 reverse depth.
// An empty level set yields background buffers. sigma <= 0 picks the default.
std::vector<GBuffer> render_normal_depth(const TetField& field, const TetGrid& grid,
                                         const std::vector<CameraPose>& cams, int res,
                                         double sigma = 0.0);

// m*fg + (1-m)*bg; the blend the diffusion priors see. mask is [1,H,W].
Tensor soft_composite(const Tensor& fg, const Tensor& mask, const Tensor& bg);

// Foreground where mask > 0.5, background elsewhere. The indicator is
// detached, so gradients reach only the kept foreground values.
Tensor hard_composite(const Tensor& fg, const Tensor& mask, const Tensor& bg);

// Constant per-channel image, e.g. the (0,0,1) normal background.
Tensor channel_const(const std::vector<double>& chan, int h, int w);

// <stem>.normal.png, .depth.png, .albedo.png, .rgb.png, .mask.png
// normals map [-1,1] to [0,255], everything else [0,1].
void write_gbuffer_pngs(const GBuffer& gb, const std::string& stem);

// All channels in one container, exact values.
void save_gbuffer_sdtf(const GBuffer& gb, const std::string& path);

}  // namespace sdsf

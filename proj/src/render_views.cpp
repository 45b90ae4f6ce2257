#include <cmath>
#include <stdexcept>
#include <vector>

#include "sdsf/png_io.hpp"
#include "sdsf/render.hpp"
#include "sdsf/tensor_io.hpp"

namespace sdsf {

namespace {

std::size_t image_h(const Tensor& t) { return t.dim(t.rank() - 2); }
std::size_t image_w(const Tensor& t) { return t.dim(t.rank() - 1); }

// mask as [H,W] values so it broadcasts over channels
Tensor mask_plane(const Tensor& mask) {
  return reshape(mask, {image_h(mask), image_w(mask)});
}

}  // namespace

Tensor channel_const(const std::vector<double>& chan, int h, int w) {
  const std::size_t npx = static_cast<std::size_t>(h) * w;
  std::vector<double> v(chan.size() * npx);
  for (std::size_t c = 0; c < chan.size(); ++c)
    std::fill(v.begin() + c * npx, v.begin() + (c + 1) * npx, chan[c]);
  return Tensor::from_data({chan.size(), static_cast<std::size_t>(h),
                            static_cast<std::size_t>(w)},
                           std::move(v));
}

Tensor soft_composite(const Tensor& fg, const Tensor& mask, const Tensor& bg) {
  Tensor m = mask_plane(mask);
  return add(mul(fg, m), mul(bg, sub(1.0, m)));
}

Tensor hard_composite(const Tensor& fg, const Tensor& mask, const Tensor& bg) {
  const auto& mv = mask.value();
  std::vector<double> h(mv.size()), hn(mv.size());
  for (std::size_t i = 0; i < mv.size(); ++i) {
    h[i] = mv[i] > 0.5 ? 1.0 : 0.0;
    hn[i] = 1.0 - h[i];
  }
  Shape plane = {image_h(mask), image_w(mask)};
  Tensor hi = Tensor::from_data(plane, std::move(h));
  Tensor lo = Tensor::from_data(plane, std::move(hn));
  return add(mul(fg, hi), mul(bg, lo));
}

GBuffer background_gbuffer(int res) {
  GBuffer gb;
  gb.normal = channel_const({0.0, 0.0, 1.0}, res, res);
  gb.depth = Tensor::zeros({1, static_cast<std::size_t>(res),
                            static_cast<std::size_t>(res)});
  gb.albedo = Tensor::zeros({3, static_cast<std::size_t>(res),
                             static_cast<std::size_t>(res)});
  gb.rgb = Tensor::zeros({3, static_cast<std::size_t>(res),
                          static_cast<std::size_t>(res)});
  gb.mask = Tensor::zeros({1, static_cast<std::size_t>(res),
                           static_cast<std::size_t>(res)});
  gb.fg = Tensor::zeros({4, static_cast<std::size_t>(res),
                         static_cast<std::size_t>(res)});
  return gb;
}

std::vector<GBuffer> render_normal_depth(const TetField& field, const TetGrid& grid,
                                         const std::vector<CameraPose>& cams, int res,
                                         double sigma) {
  if (sigma <= 0.0) sigma = default_sigma(res);
  const double r = std::sqrt(3.0) * grid.l;
  for (const auto& cam : cams)
    if (!(cam.distance > r))
      throw std::invalid_argument(
          "render: camera distance must exceed the scene bounding radius");

  TriangleMesh mesh = marching_tets(field, grid);
  if (mesh.empty()) {
    std::vector<GBuffer> out;
    for (std::size_t i = 0; i < cams.size(); ++i) out.push_back(background_gbuffer(res));
    return out;
  }
  vertex_normals(mesh);

  std::vector<GBuffer> out;
  out.reserve(cams.size());
  for (const auto& cam : cams) {
    // camera-space normals: n * R^T
    std::vector<double> rt(9);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) rt[i * 3 + j] = cam.rot[j * 3 + i];
    Tensor n_cam = matmul(mesh.normals, Tensor::from_data({3, 3}, rt));

    // reverse depth is affine in position: z = d - w, w = -R2.(p - eye)
    std::vector<double> r2 = {cam.rot[6], cam.rot[7], cam.rot[8]};
    Tensor zc = matmul(mesh.positions, Tensor::from_data({3, 1}, r2));
    double r2eye = cam.rot[6] * cam.eye[0] + cam.rot[7] * cam.eye[1] +
                   cam.rot[8] * cam.eye[2];
    Tensor w = add(neg(zc), r2eye);
    Tensor z = add(neg(w), cam.distance);
    Tensor rev = add(mul(z, 1.0 / (2.0 * r)), 0.5);

    Tensor attrs = concat({n_cam, rev}, 1);
    RasterOut ro = rasterize(mesh, attrs, cam, res, sigma);

    // interpolation shortens normals; renormalize before compositing
    Tensor n_fg = normalize_axis(slice(ro.attr, 0, 0, 3), 0);
    Tensor d_fg = clamp(slice(ro.attr, 0, 3, 4), 0.0, 1.0);

    GBuffer gb;
    gb.mask = ro.mask;
    gb.fg = concat({n_fg, d_fg}, 0);
    gb.normal = hard_composite(n_fg, ro.mask, channel_const({0.0, 0.0, 1.0}, res, res));
    gb.depth = hard_composite(d_fg, ro.mask,
                              Tensor::zeros({1, static_cast<std::size_t>(res),
                                             static_cast<std::size_t>(res)}));
    gb.albedo = Tensor::zeros({3, static_cast<std::size_t>(res),
                               static_cast<std::size_t>(res)});
    gb.rgb = Tensor::zeros({3, static_cast<std::size_t>(res),
                            static_cast<std::size_t>(res)});
    out.push_back(std::move(gb));
  }
  return out;
}

namespace {

void export_channel(const Tensor& t, const std::string& path, double lo, double hi) {
  const std::size_t c = t.dim(0), h = image_h(t), w = image_w(t);
  const std::size_t npx = h * w;
  const auto& v = t.value();
  std::vector<std::uint8_t> px(npx * c);
  for (std::size_t i = 0; i < npx; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      double x = (v[k * npx + i] - lo) / (hi - lo);
      x = std::min(1.0, std::max(0.0, x));
      px[i * c + k] = static_cast<std::uint8_t>(std::lround(x * 255.0));
    }
  write_png(path, px.data(), static_cast<int>(w), static_cast<int>(h),
            static_cast<int>(c));
}

}  // namespace

void write_gbuffer_pngs(const GBuffer& gb, const std::string& stem) {
  export_channel(gb.normal, stem + ".normal.png", -1.0, 1.0);
  export_channel(gb.depth, stem + ".depth.png", 0.0, 1.0);
  export_channel(gb.albedo, stem + ".albedo.png", 0.0, 1.0);
  export_channel(gb.rgb, stem + ".rgb.png", 0.0, 1.0);
  export_channel(gb.mask, stem + ".mask.png", 0.0, 1.0);
}

void save_gbuffer_sdtf(const GBuffer& gb, const std::string& path) {
  save_checkpoint(path,
                  {{"normal", gb.normal},
                   {"depth", gb.depth},
                   {"albedo", gb.albedo},
                   {"rgb", gb.rgb},
                   {"mask", gb.mask},
                   {"fg", gb.fg}},
                  "{\"kind\":\"gbuffer\"}");
}

}  // namespace sdsf

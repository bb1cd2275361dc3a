#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mth/data/augment.hpp"
#include "mth/data/manifest.hpp"
#include "mth/types.hpp"

namespace mth {

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

struct Image8 {
  int width = 0, height = 0, channels = 0;
  std::vector<uint8_t> data;  // row-major, interleaved
};

namespace detail {

struct PngWriteCtx {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteCtx() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngReadCtx {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadCtx() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

}  // namespace detail

inline void write_png(const std::string& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png: expected 1 or 3 channels");
  detail::PngWriteCtx ctx;
  ctx.fp = std::fopen(path.c_str(), "wb");
  if (!ctx.fp) throw std::runtime_error("write_png: cannot open " + path);
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info || setjmp(png_jmpbuf(ctx.png)))
    throw std::runtime_error("write_png: libpng failure for " + path);
  png_init_io(ctx.png, ctx.fp);
  png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  size_t stride = static_cast<size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(img.data.data() + static_cast<size_t>(y) * stride);
  png_write_image(ctx.png, rows.data());
  png_write_end(ctx.png, nullptr);
}

inline Image8 read_png(const std::string& path) {
  detail::PngReadCtx ctx;
  ctx.fp = std::fopen(path.c_str(), "rb");
  if (!ctx.fp) throw std::runtime_error("read_png: cannot open " + path);
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info || setjmp(png_jmpbuf(ctx.png)))
    throw std::runtime_error("read_png: libpng failure for " + path);
  png_init_io(ctx.png, ctx.fp);
  png_read_info(ctx.png, ctx.info);
  png_set_expand(ctx.png);
  png_set_strip_16(ctx.png);
  png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);
  Image8 img;
  img.width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  img.height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  img.channels = static_cast<int>(png_get_channels(ctx.png, ctx.info));
  size_t stride = png_get_rowbytes(ctx.png, ctx.info);
  img.data.resize(stride * static_cast<size_t>(img.height));
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] = img.data.data() + static_cast<size_t>(y) * stride;
  png_read_image(ctx.png, rows.data());
  return img;
}

// ---------------------------------------------------------------------------
// Frame records: frame_&06d.{png,parts.png,depth.f32,joints.json}
// ---------------------------------------------------------------------------

inline std::string frame_prefix(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d", index);
  return buf;
}

inline void save_frame(const std::string& dir, int index, const Sample& s) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string prefix = dir + "/" + frame_prefix(index);

  Image8 rgb{s.width, s.height, 3, {}};
  rgb.data.resize(static_cast<size_t>(s.width) * s.height * 3);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      for (int c = 0; c < 3; ++c)
        rgb.data[(static_cast<size_t>(y) * s.width + x) * 3 + static_cast<size_t>(c)] =
            static_cast<uint8_t>(std::lround(
                std::clamp(s.image.at(c, y, x), 0.0f, 1.0f) * 255.0f));
  write_png(prefix + ".png", rgb);

  Image8 parts{s.width, s.height, 1, {}};
  parts.data.resize(static_cast<size_t>(s.width) * s.height);
  for (size_t i = 0; i < s.part_mask.numel(); ++i) parts.data[i] = s.part_mask[i];
  write_png(prefix + ".parts.png", parts);

  std::ofstream df(prefix + ".depth.f32", std::ios::binary);
  if (!df) throw std::runtime_error("save_frame: cannot write " + prefix + ".depth.f32");
  std::vector<float> depth_raw(s.depth.numel());
  for (size_t i = 0; i < s.depth.numel(); ++i)
    depth_raw[i] = std::isfinite(s.depth[i]) ? s.depth[i]
                                             : std::numeric_limits<float>::quiet_NaN();
  df.write(reinterpret_cast<const char*>(depth_raw.data()),
           static_cast<std::streamsize>(depth_raw.size() * sizeof(float)));

  nlohmann::json j;
  j["subject_id"] = s.subject_id;
  j["frame_id"] = s.frame_id;
  j["intrinsics"] = {{"fx", s.intrinsics.fx},
                     {"fy", s.intrinsics.fy},
                     {"cx", s.intrinsics.cx},
                     {"cy", s.intrinsics.cy}};
  nlohmann::json j2 = nlohmann::json::array(), j3 = nlohmann::json::array(),
                 vis = nlohmann::json::array();
  for (int k = 0; k < kNumJoints; ++k) {
    j2.push_back({s.joints2d[static_cast<size_t>(k)].x, s.joints2d[static_cast<size_t>(k)].y});
    j3.push_back({s.joints3d[static_cast<size_t>(k)].x, s.joints3d[static_cast<size_t>(k)].y,
                  s.joints3d[static_cast<size_t>(k)].z});
    vis.push_back(s.visible[static_cast<size_t>(k)]);
  }
  j["joints2d"] = j2;
  j["joints3d"] = j3;
  j["visible"] = vis;
  std::ofstream jf(prefix + ".joints.json");
  jf << j.dump(1) << "\n";
}

/// Read one raw frame record. Errors name the record and the missing or
/// broken modality.
inline Sample load_frame(const std::string& root, const std::string& frame_path) {
  namespace fs = std::filesystem;
  std::string prefix = root + "/" + frame_path;
  auto require = [&](const std::string& suffix, const std::string& modality) {
    std::string p = prefix + suffix;
    if (!fs::exists(p))
      throw std::runtime_error("record " + frame_path + ": missing " + modality +
                               " file (" + p + ")");
    return p;
  };

  Sample s;
  Image8 rgb = read_png(require(".png", "image"));
  if (rgb.channels != 3)
    throw std::runtime_error("record " + frame_path + ": image is not RGB");
  s.width = rgb.width;
  s.height = rgb.height;
  s.image = Tensor<float>({3, s.height, s.width});
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      for (int c = 0; c < 3; ++c)
        s.image.at(c, y, x) =
            rgb.data[(static_cast<size_t>(y) * s.width + x) * 3 + static_cast<size_t>(c)] /
            255.0f;

  Image8 parts = read_png(require(".parts.png", "part labels"));
  if (parts.channels != 1 || parts.width != s.width || parts.height != s.height)
    throw std::runtime_error("record " + frame_path + ": part labels malformed");
  s.part_mask = Tensor<uint8_t>({s.height, s.width});
  for (size_t i = 0; i < s.part_mask.numel(); ++i) {
    if (parts.data[i] >= kNumParts)
      throw std::runtime_error("record " + frame_path + ": part label out of range");
    s.part_mask[i] = parts.data[i];
  }

  std::ifstream df(require(".depth.f32", "depth"), std::ios::binary);
  std::vector<float> depth_raw(static_cast<size_t>(s.width) * s.height);
  df.read(reinterpret_cast<char*>(depth_raw.data()),
          static_cast<std::streamsize>(depth_raw.size() * sizeof(float)));
  if (df.gcount() != static_cast<std::streamsize>(depth_raw.size() * sizeof(float)))
    throw std::runtime_error("record " + frame_path + ": depth file truncated");
  s.depth = Tensor<float>({s.height, s.width});
  for (size_t i = 0; i < depth_raw.size(); ++i)
    s.depth[i] = std::isnan(depth_raw[i]) ? kBackgroundDepth : depth_raw[i];

  std::ifstream jf(require(".joints.json", "joints"));
  nlohmann::json j;
  try {
    jf >> j;
    s.subject_id = j.at("subject_id").get<std::string>();
    s.frame_id = j.value("frame_id", std::string());
    if (!j.contains("intrinsics"))
      throw std::runtime_error("intrinsics absent");
    s.intrinsics.fx = j["intrinsics"].at("fx").get<double>();
    s.intrinsics.fy = j["intrinsics"].at("fy").get<double>();
    s.intrinsics.cx = j["intrinsics"].at("cx").get<double>();
    s.intrinsics.cy = j["intrinsics"].at("cy").get<double>();
    for (int k = 0; k < kNumJoints; ++k) {
      s.joints2d[static_cast<size_t>(k)] = {j.at("joints2d").at(k).at(0).get<double>(),
                                            j.at("joints2d").at(k).at(1).get<double>()};
      s.joints3d[static_cast<size_t>(k)] = {j.at("joints3d").at(k).at(0).get<double>(),
                                            j.at("joints3d").at(k).at(1).get<double>(),
                                            j.at("joints3d").at(k).at(2).get<double>()};
      s.visible[static_cast<size_t>(k)] =
          j.contains("visible") ? j["visible"].at(k).get<bool>() : true;
    }
  } catch (const std::exception& e) {
    throw std::runtime_error("record " + frame_path + ": joints record corrupt: " +
                             e.what());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Crop + resize
// ---------------------------------------------------------------------------

struct BBox {
  double x = 0, y = 0, w = 0, h = 0;
};

inline BBox mask_bbox(const Tensor<uint8_t>& mask) {
  int h = mask.dim(0), w = mask.dim(1);
  int minx = w, miny = h, maxx = -1, maxy = -1;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask.at(y, x) != kBackgroundPart) {
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
      }
  if (maxx < 0) throw std::runtime_error("mask_bbox: no foreground pixels");
  return {static_cast<double>(minx), static_cast<double>(miny),
          static_cast<double>(maxx - minx + 1), static_cast<double>(maxy - miny + 1)};
}

/// dst = scale * src + offset; square window centered on the box with a
/// relative margin on each side, resized to target x target.
struct CropAffine {
  double scale = 1, off_x = 0, off_y = 0;
  Vec2 apply(const Vec2& p) const { return {scale * p.x + off_x, scale * p.y + off_y}; }
  Vec2 invert(const Vec2& p) const {
    return {(p.x - off_x) / scale, (p.y - off_y) / scale};
  }
};

inline CropAffine compute_crop_affine(const BBox& box, double margin, int target) {
  double side = std::max(box.w, box.h) * (1.0 + 2.0 * margin);
  double cx = box.x + box.w / 2.0, cy = box.y + box.h / 2.0;
  CropAffine a;
  a.scale = target / side;
  a.off_x = target / 2.0 - a.scale * cx;
  a.off_y = target / 2.0 - a.scale * cy;
  return a;
}

inline Sample crop_and_resize(const Sample& raw, const BBox& box, double margin,
                              int target) {
  CropAffine t = compute_crop_affine(box, margin, target);
  Sample out;
  out.width = out.height = target;
  out.subject_id = raw.subject_id;
  out.frame_id = raw.frame_id;
  out.intrinsics.fx = raw.intrinsics.fx * t.scale;
  out.intrinsics.fy = raw.intrinsics.fy * t.scale;
  out.intrinsics.cx = t.scale * raw.intrinsics.cx + t.off_x;
  out.intrinsics.cy = t.scale * raw.intrinsics.cy + t.off_y;
  out.image = Tensor<float>({3, target, target});
  out.part_mask = Tensor<uint8_t>({target, target});
  out.depth = Tensor<float>({target, target}, kBackgroundDepth);
  for (int y = 0; y < target; ++y)
    for (int x = 0; x < target; ++x) {
      Vec2 src = t.invert({x + 0.5, y + 0.5});
      int sx = static_cast<int>(std::floor(src.x));
      int sy = static_cast<int>(std::floor(src.y));
      if (sx >= 0 && sx < raw.width && sy >= 0 && sy < raw.height) {
        out.part_mask.at(y, x) = raw.part_mask.at(sy, sx);
        out.depth.at(y, x) = raw.depth.at(sy, sx);
      }
      for (int c = 0; c < 3; ++c)
        out.image.at(c, y, x) = detail::bilinear_sample(raw.image, c, src.x, src.y);
    }
  for (int j = 0; j < kNumJoints; ++j) {
    Vec2 p = t.apply(raw.joints2d[static_cast<size_t>(j)]);
    out.joints2d[static_cast<size_t>(j)] = p;
    double z = raw.joints3d[static_cast<size_t>(j)].z;
    out.joints3d[static_cast<size_t>(j)] = back_project(out.intrinsics, p.x, p.y, z);
    out.visible[static_cast<size_t>(j)] = raw.visible[static_cast<size_t>(j)] &&
                                          p.x >= 0 && p.x < target && p.y >= 0 &&
                                          p.y < target;
  }
  restamp_visible_joints(out);
  return out;
}

struct LoadOptions {
  int target_resolution = 256;
  double margin = 0.10;
};

/// Load every frame of a split, cropped around the person and resized, in
/// manifest order.
inline std::vector<Sample> load_surreal_format(const std::string& root,
                                               const DatasetManifest& manifest,
                                               Split split,
                                               const LoadOptions& options = {}) {
  std::vector<Sample> out;
  for (const auto& entry : manifest.entries) {
    if (entry.split != split) continue;
    Sample raw = load_frame(root, entry.frame_path);
    raw.subject_id = entry.subject_id;
    BBox box = mask_bbox(raw.part_mask);
    out.push_back(crop_and_resize(raw, box, options.margin, options.target_resolution));
  }
  return out;
}

}  // namespace mth

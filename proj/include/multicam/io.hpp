// Copyright 2026 The multicam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <png.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "multicam/batch.hpp"
#include "multicam/cameras.hpp"
#include "multicam/errors.hpp"
#include "multicam/ndarray.hpp"

namespace multicam::io {

using Json = nlohmann::json;

// ---------------------------------------------------------------- PFM

namespace detail {

inline float swap_bytes(float v) {
  auto u = std::bit_cast<std::uint32_t>(v);
  u = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
  return std::bit_cast<float>(u);
}

}  // namespace detail

/// Read a PFM file into (C, H, W) with rows top to bottom. Only little-endian files are accepted.
inline NdArray<float> load_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  std::size_t channels = 0;
  if (magic == "Pf") channels = 1;
  else if (magic == "PF") channels = 3;
  else throw FormatError(path.string() + ": not a PFM file (bad magic '" + magic + "')");
  long long w = 0, h = 0;
  double scale = 0;
  if (!(in >> w >> h >> scale) || w <= 0 || h <= 0 || scale == 0 || !std::isfinite(scale)) {
    throw FormatError(path.string() + ": corrupt PFM header");
  }
  if (scale > 0) throw FormatError(path.string() + ": big-endian PFM files are not supported");
  if (in.get() != '\n') throw FormatError(path.string() + ": corrupt PFM header");
  const auto W = static_cast<std::size_t>(w), H = static_cast<std::size_t>(h);
  std::vector<float> raw(W * H * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != raw.size() * sizeof(float)) throw FormatError(path.string() + ": truncated PFM data");
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : raw) v = detail::swap_bytes(v);
  }
  NdArray<float> out(Shape{channels, H, W});
  for (std::size_t r = 0; r < H; ++r) {
    const std::size_t src_row = H - 1 - r;
    for (std::size_t c = 0; c < W; ++c) {
      for (std::size_t k = 0; k < channels; ++k) out[(k * H + r) * W + c] = raw[(src_row * W + c) * channels + k];
    }
  }
  return out;
}

/// Write (C, H, W) with C in {1, 3} as a little-endian PFM.
inline void save_pfm(const std::filesystem::path& path, const NdArray<float>& img) {
  if (img.ndim() != 3 || (img.dim(0) != 1 && img.dim(0) != 3)) {
    throw ShapeError("save_pfm: image must be (1, H, W) or (3, H, W), got " + shape_str(img.shape()));
  }
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  std::vector<float> raw(W * H * C);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      for (std::size_t k = 0; k < C; ++k) raw[((H - 1 - r) * W + c) * C + k] = img[(k * H + r) * W + c];
    }
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : raw) v = detail::swap_bytes(v);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << (C == 1 ? "Pf" : "PF") << '\n' << W << ' ' << H << '\n' << "-1.0" << '\n';
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!out) throw FormatError("failed writing " + path.string());
}

/// Depth map (H, W) from a single-channel PFM; 0 marks invalid pixels.
inline NdArray<double> load_depth(const std::filesystem::path& path) {
  NdArray<float> d = load_pfm(path);
  if (d.dim(0) != 1) throw FormatError(path.string() + ": depth PFM must have one channel");
  return d.index(0, 0).cast<double>();
}

/// Write a depth map (H, W); invalid or non-finite values are stored as 0.
inline void save_depth(const std::filesystem::path& path, const NdArray<double>& depth, const Mask* valid = nullptr) {
  if (depth.ndim() != 2) throw ShapeError("save_depth: depth must be (H, W), got " + shape_str(depth.shape()));
  NdArray<float> out(Shape{1, depth.dim(0), depth.dim(1)});
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double v = depth[i];
    out[i] = (valid && !(*valid)[i]) || !std::isfinite(v) ? 0.0f : static_cast<float>(v);
  }
  save_pfm(path, out);
}

// ---------------------------------------------------------------- PNG

/// 8-bit PNG to (C, H, W) in [0, 1]; C is 1 (gray), 2 (gray+alpha), 3 (RGB) or 4 (RGBA).
inline NdArray<double> load_image(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  image.format &= PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA;
  const std::size_t C = PNG_IMAGE_SAMPLE_CHANNELS(image.format);
  const std::size_t H = image.height, W = image.width;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(path.string() + ": " + image.message);
  }
  NdArray<double> out(Shape{C, H, W});
  for (std::size_t p = 0; p < H * W; ++p) {
    for (std::size_t k = 0; k < C; ++k) out[k * H * W + p] = buf[p * C + k] / 255.0;
  }
  return out;
}

/// Write (C, H, W) values in [0, 1] as an 8-bit PNG (values are clamped and rounded).
inline void save_image(const std::filesystem::path& path, const NdArray<double>& img) {
  if (img.ndim() != 3 || img.dim(0) < 1 || img.dim(0) > 4) {
    throw ShapeError("save_image: image must be (C, H, W) with C in 1..4, got " + shape_str(img.shape()));
  }
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(W);
  image.height = static_cast<png_uint_32>(H);
  static constexpr png_uint_32 formats[] = {PNG_FORMAT_GRAY, PNG_FORMAT_GA, PNG_FORMAT_RGB, PNG_FORMAT_RGBA};
  image.format = formats[C - 1];
  std::vector<png_byte> buf(H * W * C);
  for (std::size_t p = 0; p < H * W; ++p) {
    for (std::size_t k = 0; k < C; ++k) {
      const double v = img[k * H * W + p];
      buf[p * C + k] = static_cast<png_byte>(std::lround(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0) * 255.0));
    }
  }
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw FormatError(path.string() + ": " + image.message);
  }
}

// ---------------------------------------------------------------- cameras

/// Camera JSON:
///
///   {
///     "model": "opencv_fisheye",
///     "coords": "pixel",              // or "normalized"
///     "image_size": [480, 640],       // [H, W], required for pixel coords
///     "intrinsics": {"fx": 300, "fy": 300, "cx": 320, "cy": 240, "distortion": [k0, k1, k2, k3]},
///     "extrinsics": {"R": [9 numbers, row-major], "T": [3 numbers]},   // world to camera
///     "limits": {"dist_min": 1e-8, "theta_max": 3.14159}
///   }
///
/// Extra intrinsics per model: opencv "radial" (6) and "tangential" (2); opencv_fisheye
/// "distortion" (4); backward_forward_polynomial_fisheye "forward_poly" and "backward_poly";
/// kitti360_fisheye "distortion" (2) and "xi". The cube model has no intrinsics.
struct CameraFile {
  Camera<double> camera;
  Pose<double> pose;
};

namespace detail {

inline const Json& require(const Json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(where + ": missing field '" + key + "'");
  return j.at(key);
}

inline double number(const Json& j, const std::string& what) {
  if (!j.is_number()) throw FormatError(what + " must be a number");
  return j.get<double>();
}

inline std::vector<double> numbers(const Json& j, const std::string& what, std::size_t expected = 0) {
  if (!j.is_array()) throw FormatError(what + " must be an array of numbers");
  std::vector<double> v;
  for (const Json& x : j) v.push_back(number(x, what));
  if (expected != 0 && v.size() != expected) {
    throw FormatError(what + " must have " + std::to_string(expected) + " values, got " + std::to_string(v.size()));
  }
  if (v.empty()) throw FormatError(what + " must not be empty");
  return v;
}

inline void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  std::vector<std::string> extra;
  for (const auto& [k, _] : j.items()) {
    if (!allowed.contains(k)) extra.push_back(k);
  }
  if (extra.empty()) return;
  std::string msg = where + ": unexpected field";
  msg += extra.size() > 1 ? "s" : "";
  for (std::size_t i = 0; i < extra.size(); ++i) msg += (i ? ", '" : " '") + extra[i] + "'";
  throw FormatError(msg);
}

inline std::vector<std::pair<std::string, std::size_t>> intrinsic_arrays(CameraKind kind) {
  switch (kind) {
    case CameraKind::OpenCV: return {{"radial", 6}, {"tangential", 2}};
    case CameraKind::OpenCVFisheye: return {{"distortion", 4}};
    case CameraKind::BackwardForwardPolynomialFisheye: return {{"forward_poly", 0}, {"backward_poly", 0}};
    case CameraKind::Kitti360Fisheye: return {{"distortion", 2}};
    default: return {};
  }
}

inline NdArray<double> row(const std::vector<double>& v) { return NdArray<double>(Shape{v.size()}, v); }

}  // namespace detail

inline CameraFile camera_from_json(const Json& j, const std::string& where = "camera") {
  if (!j.is_object()) throw FormatError(where + ": expected a JSON object");
  detail::reject_unknown(j, {"model", "coords", "image_size", "intrinsics", "extrinsics", "limits"}, where);
  const Json& model = detail::require(j, "model", where);
  if (!model.is_string()) throw FormatError(where + ": 'model' must be a string");
  CameraKind kind;
  try {
    kind = kind_from_name(model.get<std::string>());
  } catch (const CameraError& e) {
    throw FormatError(where + ": " + e.what());
  }

  typename Camera<double>::ParamMap params;
  if (is_affine(kind)) {
    const std::string coords = j.contains("coords") ? j.at("coords").get<std::string>() : "normalized";
    if (coords != "pixel" && coords != "normalized") throw FormatError(where + ": 'coords' must be \"pixel\" or \"normalized\"");
    const Json& intr = detail::require(j, "intrinsics", where);
    std::set<std::string> allowed{"fx", "fy", "cx", "cy"};
    for (const auto& [name, _] : detail::intrinsic_arrays(kind)) allowed.insert(name);
    if (kind == CameraKind::Kitti360Fisheye) allowed.insert("xi");
    detail::reject_unknown(intr, allowed, where + " intrinsics for model '" + std::string(kind_name(kind)) + "'");
    const auto get = [&](const char* k) { return detail::number(detail::require(intr, k, where + " intrinsics"), k); };
    NdArray<double> K = intrinsics_matrix(get("fx"), get("fy"), get("cx"), get("cy"));
    if (coords == "pixel") {
      const auto hw = detail::numbers(detail::require(j, "image_size", where), "image_size", 2);
      if (hw[0] < 1 || hw[1] < 1 || hw[0] != std::floor(hw[0]) || hw[1] != std::floor(hw[1])) {
        throw FormatError(where + ": image_size must be two positive integers");
      }
      K = normalized_from_pixel_intrinsics(K, ImageSize{static_cast<std::size_t>(hw[0]), static_cast<std::size_t>(hw[1])});
    } else if (j.contains("image_size")) {
      detail::numbers(j.at("image_size"), "image_size", 2);
    }
    params.emplace("affine", Camera<double>::affine_from_intrinsics(K));
    for (const auto& [name, dim] : detail::intrinsic_arrays(kind)) {
      params.emplace(name, detail::row(detail::numbers(detail::require(intr, name, where + " intrinsics"), name, dim)));
    }
    if (kind == CameraKind::Kitti360Fisheye) params.emplace("xi", detail::row({get("xi")}));
  } else {
    if (j.contains("intrinsics") && !j.at("intrinsics").empty()) throw FormatError(where + ": model 'cube' takes no intrinsics");
  }

  CameraLimits<double> limits;
  if (j.contains("limits")) {
    const Json& lim = j.at("limits");
    std::set<std::string> allowed{std::string(limit_name(kind))};
    if (has_theta_max(kind)) allowed.insert("theta_max");
    detail::reject_unknown(lim, allowed, where + " limits for model '" + std::string(kind_name(kind)) + "'");
    if (lim.contains(limit_name(kind))) limits.limit = detail::number(lim.at(limit_name(kind)), std::string(limit_name(kind)));
    if (lim.contains("theta_max")) limits.theta_max = detail::number(lim.at("theta_max"), "theta_max");
  }

  Pose<double> pose = Pose<double>::identity();
  if (j.contains("extrinsics")) {
    const Json& ex = j.at("extrinsics");
    detail::reject_unknown(ex, {"R", "T"}, where + " extrinsics");
    const auto R = detail::numbers(detail::require(ex, "R", where + " extrinsics"), "R", 9);
    const auto T = detail::numbers(detail::require(ex, "T", where + " extrinsics"), "T", 3);
    try {
      pose = Pose<double>::make(NdArray<double>(Shape{3, 3}, R), NdArray<double>(Shape{3}, T), 1e-5);
    } catch (const ShapeError&) {
      throw FormatError(where + ": extrinsic R is not a rotation (orthonormal with det +1 within 1e-5)");
    }
  }
  try {
    return {Camera<double>::make(kind, std::move(params), limits), pose};
  } catch (const CameraError& e) {
    throw FormatError(where + ": " + e.what());
  }
}

/// Serialize a scalar camera with normalized intrinsics.
inline Json camera_to_json(const Camera<double>& cam, const Pose<double>& pose = Pose<double>::identity()) {
  if (!cam.shape().empty()) throw ShapeError("camera_to_json: only scalar cameras can be saved");
  Json j;
  j["model"] = std::string(kind_name(cam.kind()));
  if (is_affine(cam.kind())) {
    j["coords"] = "normalized";
    const auto& a = cam.param("affine");
    Json intr;
    intr["fx"] = a[0];
    intr["fy"] = a[1];
    intr["cx"] = a[2];
    intr["cy"] = a[3];
    for (const auto& [name, _] : detail::intrinsic_arrays(cam.kind())) intr[name] = cam.param(name).vec();
    if (cam.kind() == CameraKind::Kitti360Fisheye) intr["xi"] = cam.param("xi")[0];
    j["intrinsics"] = intr;
  }
  Json lim;
  lim[std::string(limit_name(cam.kind()))] = cam.param(limit_name(cam.kind()))[0];
  if (has_theta_max(cam.kind())) lim["theta_max"] = cam.param("theta_max")[0];
  j["limits"] = lim;
  j["extrinsics"] = {{"R", pose.R().vec()}, {"T", pose.T().vec()}};
  return j;
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline CameraFile load_camera(const std::filesystem::path& path) {
  return camera_from_json(read_json(path), path.string());
}

inline void save_camera(const std::filesystem::path& path, const Camera<double>& cam,
                        const Pose<double>& pose = Pose<double>::identity()) {
  write_json(path, camera_to_json(cam, pose));
}

// ---------------------------------------------------------------- run manifest

/// Record of one CLI run, written next to its outputs.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> inputs;
  std::vector<std::string> outputs;
  Json options = Json::object();

  /// UTC timestamp from SOURCE_DATE_EPOCH when set, otherwise the current time.
  static std::string timestamp() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
      try {
        t = static_cast<std::time_t>(std::stoll(env));
      } catch (...) {
        throw FormatError("SOURCE_DATE_EPOCH must be an integer");
      }
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
  }

  Json to_json() const {
    return {{"command", command}, {"inputs", inputs}, {"outputs", outputs}, {"options", options}, {"timestamp", timestamp()}};
  }

  void write(const std::filesystem::path& path) const { write_json(path, to_json()); }
};

}  // namespace multicam::io

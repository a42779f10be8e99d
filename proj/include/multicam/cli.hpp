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

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "multicam/cameras.hpp"
#include "multicam/io.hpp"
#include "multicam/warping.hpp"

namespace multicam::cli {

namespace fs = std::filesystem;

/// Bad command-line usage detected after parsing; maps to exit code 2.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline ImageSize parse_hw(const std::string& s) {
  static const std::regex re(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw ArgumentError("--hw must look like HxW, got '" + s + "'");
  const ImageSize hw{std::stoul(m[1]), std::stoul(m[2])};
  if (hw.height == 0 || hw.width == 0) throw ArgumentError("--hw extents must be positive");
  return hw;
}

inline std::string hw_str(const ImageSize& hw) { return std::to_string(hw.height) + "x" + std::to_string(hw.width); }

inline DepthSemantic parse_semantic(const std::string& s) {
  if (s == "natural") return DepthSemantic::Natural;
  if (s == "z") return DepthSemantic::ZDepth;
  if (s == "ray") return DepthSemantic::AlongRay;
  throw ArgumentError("--semantic must be natural, z or ray");
}

inline Mat3<double> parse_rotation(const std::vector<double>& v) {
  if (v.size() != 9) throw ArgumentError("--rotation takes 9 numbers (row-major)");
  Mat3<double> r;
  for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = v[static_cast<std::size_t>(i)];
  if (!(r.transpose() * r - Mat3<double>::Identity()).isZero(1e-5) || std::abs(r.determinant() - 1) > 1e-5) {
    throw ArgumentError("--rotation is not a rotation matrix");
  }
  return r;
}

inline fs::path manifest_path_for(const fs::path& out) {
  return fs::path(out.string() + ".manifest.json");
}

inline ImageSize image_hw(const NdArray<double>& img) { return {img.dim(-2), img.dim(-1)}; }

inline NdArray<double> mask_image(const Mask& m) {
  NdArray<double> out(concat_shapes({1}, m.shape()));
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 1.0 : 0.0;
  return out;
}

// Per-pixel hypotheses (1, H, W) from depth PFMs stacked to (D, H, W).
inline DepthHypotheses<double> hypotheses_from_depths(const std::vector<std::string>& paths, DepthSemantic sem) {
  std::vector<NdArray<double>> maps;
  for (const auto& p : paths) maps.push_back(io::load_depth(p));
  for (const auto& m : maps) {
    if (m.shape() != maps.front().shape()) throw FormatError("depth maps have different sizes");
  }
  return DepthHypotheses<double>::pixelwise(stack(maps, 0), sem);
}

inline void write_warp_png(const fs::path& path, const NdArray<double>& img, std::vector<std::string>& outputs) {
  io::save_image(path, img);
  outputs.push_back(path.string());
}

/// Parse and run one CLI invocation. Returns 0 on success, 1 on data errors and 2 on usage errors.
inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Camera-model-agnostic warping tools", "multicam"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  io::RunManifest manifest;
  std::function<void()> action;

  // resample
  struct {
    std::string src, src_image, trg, out, hw, manifest;
    std::vector<double> rotation;
  } rs;
  auto* resample = app.add_subcommand("resample", "Resample an image between central cameras sharing a center");
  resample->add_option("--src", rs.src, "Source camera JSON")->required();
  resample->add_option("--src-image", rs.src_image, "Source image (PNG)")->required();
  resample->add_option("--trg", rs.trg, "Target camera JSON")->required();
  resample->add_option("--hw", rs.hw, "Target size HxW (default: source image size)");
  resample->add_option("--rotation", rs.rotation, "x_src = R x_trg, 9 numbers row-major (default: from the extrinsics)")
      ->expected(9);
  resample->add_option("--out", rs.out, "Output PNG")->required();
  resample->add_option("--manifest", rs.manifest, "Run manifest path (default: <out>.manifest.json)");
  resample->callback([&] {
    action = [&] {
      const io::CameraFile src = io::load_camera(rs.src), trg = io::load_camera(rs.trg);
      const NdArray<double> img = io::load_image(rs.src_image);
      const ImageSize hw = rs.hw.empty() ? image_hw(img) : parse_hw(rs.hw);
      const Mat3<double> rot = rs.rotation.empty() ? relative_pose(trg.pose, src.pose).rotation(0) : parse_rotation(rs.rotation);
      const ResampleResult<double> r = resample_by_intrinsics(src.camera, trg.camera, rot, img, hw);
      io::save_image(rs.out, r.image);
      manifest.inputs = {{"src", rs.src}, {"src_image", rs.src_image}, {"trg", rs.trg}};
      manifest.outputs = {rs.out};
      manifest.options = {{"hw", hw_str(hw)}, {"rotation", Pose<double>::from_eigen(rot, Vec3<double>::Zero()).R().vec()}};
      manifest.write(rs.manifest.empty() ? manifest_path_for(rs.out) : fs::path(rs.manifest));
    };
  });

  // rectify
  struct {
    std::string cam0, cam1, image0, image1, mode = "side_by_side", out_dir;
  } rc;
  auto* rectify = app.add_subcommand("rectify", "Rectify a stereo pair");
  rectify->add_option("--cam0", rc.cam0, "First camera JSON")->required();
  rectify->add_option("--image0", rc.image0, "First image (PNG)")->required();
  rectify->add_option("--cam1", rc.cam1, "Second camera JSON")->required();
  rectify->add_option("--image1", rc.image1, "Second image (PNG)")->required();
  rectify->add_option("--mode", rc.mode, "side_by_side or on_top")->check(CLI::IsMember({"side_by_side", "on_top"}));
  rectify->add_option("--out", rc.out_dir, "Output directory")->required();
  rectify->callback([&] {
    action = [&] {
      const io::CameraFile c0 = io::load_camera(rc.cam0), c1 = io::load_camera(rc.cam1);
      const NdArray<double> i0 = io::load_image(rc.image0), i1 = io::load_image(rc.image1);
      const RectifyMode mode = rc.mode == "on_top" ? RectifyMode::OnTop : RectifyMode::SideBySide;
      const RectifyResult<double> r = stereo_rectify(c0.camera, c0.pose, c1.camera, c1.pose, mode, i0, i1);
      fs::create_directories(rc.out_dir);
      const fs::path dir(rc.out_dir);
      io::save_image(dir / "rect0.png", r.rect0.image);
      io::save_image(dir / "rect1.png", r.rect1.image);
      io::save_camera(dir / "rect0.json", c0.camera, r.pose0);
      io::save_camera(dir / "rect1.json", c1.camera, r.pose1);
      manifest.inputs = {{"cam0", rc.cam0}, {"cam1", rc.cam1}, {"image0", rc.image0}, {"image1", rc.image1}};
      manifest.outputs = {(dir / "rect0.png").string(), (dir / "rect1.png").string(), (dir / "rect0.json").string(),
                          (dir / "rect1.json").string()};
      const auto flat = [](const Mat3<double>& m) { return Pose<double>::from_eigen(m, Vec3<double>::Zero()).R().vec(); };
      manifest.options = {{"mode", rc.mode}, {"rot0", flat(r.rot0)}, {"rot1", flat(r.rot1)}, {"degenerate", r.degenerate}};
      manifest.write(dir / "manifest.json");
    };
  });

  // sweep
  struct {
    std::string trg, out_dir, hw, semantic = "natural";
    std::vector<std::string> srcs, src_images, depths;
    double dmin = 0, dmax = 0;
    std::size_t count = 0;
    bool linear = false;
  } sw;
  auto* sweep = app.add_subcommand("sweep", "Warp sources into the target view under depth hypotheses");
  sweep->add_option("--trg", sw.trg, "Target camera JSON")->required();
  sweep->add_option("--src", sw.srcs, "Source camera JSON (repeatable)")->required();
  sweep->add_option("--src-image", sw.src_images, "Source image PNG, one per --src")->required();
  auto* dmin = sweep->add_option("--dmin", sw.dmin, "Nearest hypothesis");
  auto* dmax = sweep->add_option("--dmax", sw.dmax, "Farthest hypothesis");
  auto* count = sweep->add_option("--count", sw.count, "Number of hypotheses");
  sweep->add_flag("--linear", sw.linear, "Space hypotheses linearly in depth (default: in inverse depth)");
  auto* depth = sweep->add_option("--depth", sw.depths, "Per-pixel hypothesis PFM (repeatable)");
  depth->excludes(dmin)->excludes(dmax)->excludes(count);
  sweep->add_option("--hw", sw.hw, "Target size HxW (default: first source image size)");
  sweep->add_option("--semantic", sw.semantic, "Hypothesis meaning: natural, z or ray")
      ->check(CLI::IsMember({"natural", "z", "ray"}));
  sweep->add_option("--out", sw.out_dir, "Output directory")->required();
  sweep->callback([&] {
    action = [&] {
      if (sw.srcs.size() != sw.src_images.size()) throw ArgumentError("sweep: need one --src-image per --src");
      const DepthSemantic sem = parse_semantic(sw.semantic);
      DepthHypotheses<double> hyp;
      if (!sw.depths.empty()) {
        hyp = hypotheses_from_depths(sw.depths, sem);
      } else {
        if (sw.count == 0 || !(sw.dmin > 0) || !(sw.dmax >= sw.dmin)) {
          throw ArgumentError("sweep: need --dmin > 0, --dmax >= --dmin and --count >= 1, or --depth");
        }
        hyp = DepthHypotheses<double>::constant(depth_samples(sw.dmin, sw.dmax, sw.count, !sw.linear), sem);
      }
      const io::CameraFile trg = io::load_camera(sw.trg);
      std::vector<AnyCamera<double>> cams;
      std::vector<Pose<double>> rels;
      std::vector<NdArray<double>> imgs;
      for (std::size_t i = 0; i < sw.srcs.size(); ++i) {
        const io::CameraFile s = io::load_camera(sw.srcs[i]);
        cams.emplace_back(s.camera);
        rels.push_back(relative_pose(trg.pose, s.pose));
        imgs.push_back(io::load_image(sw.src_images[i]));
      }
      std::optional<ImageSize> hw;
      if (!sw.hw.empty()) hw = parse_hw(sw.hw);
      else if (!hyp.per_pixel) hw = image_hw(imgs.front());
      const SweepResult<double> r = sweep_hypotheses(trg.camera, cams, rels, imgs, hyp, hw);
      fs::create_directories(sw.out_dir);
      const fs::path dir(sw.out_dir);
      const std::size_t S = r.warped.dim(0), D = r.warped.dim(1);
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t d = 0; d < D; ++d) {
          char name[64];
          std::snprintf(name, sizeof name, "sweep_s%02zu_d%03zu.png", s, d);
          write_warp_png(dir / name, r.warped.index(0, s).index(0, d), manifest.outputs);
        }
      }
      manifest.inputs = {{"trg", sw.trg}};
      for (std::size_t i = 0; i < sw.srcs.size(); ++i) {
        manifest.inputs["src" + std::to_string(i)] = sw.srcs[i];
        manifest.inputs["src_image" + std::to_string(i)] = sw.src_images[i];
      }
      for (std::size_t i = 0; i < sw.depths.size(); ++i) manifest.inputs["depth" + std::to_string(i)] = sw.depths[i];
      manifest.options = {{"count", hyp.count()}, {"semantic", sw.semantic}};
      if (sw.depths.empty()) {
        manifest.options["dmin"] = sw.dmin;
        manifest.options["dmax"] = sw.dmax;
        manifest.options["spacing"] = sw.linear ? "linear" : "inverse";
        manifest.options["hypotheses"] = hyp.values.vec();
      }
      manifest.write(dir / "manifest.json");
    };
  });

  // warp
  struct {
    std::string trg, src, src_image, depth, out, mask_out, semantic = "natural", manifest;
  } wp;
  auto* warp = app.add_subcommand("warp", "Backward-warp one source image with a target depth map");
  warp->add_option("--trg", wp.trg, "Target camera JSON")->required();
  warp->add_option("--src", wp.src, "Source camera JSON")->required();
  warp->add_option("--src-image", wp.src_image, "Source image PNG")->required();
  warp->add_option("--depth", wp.depth, "Target depth PFM")->required();
  warp->add_option("--semantic", wp.semantic, "Depth meaning: natural, z or ray")->check(CLI::IsMember({"natural", "z", "ray"}));
  warp->add_option("--out", wp.out, "Output PNG")->required();
  warp->add_option("--mask-out", wp.mask_out, "Validity mask PNG");
  warp->add_option("--manifest", wp.manifest, "Run manifest path (default: <out>.manifest.json)");
  warp->callback([&] {
    action = [&] {
      const io::CameraFile trg = io::load_camera(wp.trg), src = io::load_camera(wp.src);
      const NdArray<double> img = io::load_image(wp.src_image);
      const auto hyp = hypotheses_from_depths({wp.depth}, parse_semantic(wp.semantic));
      const WarpResult<double> r = backward_warp(trg.camera, src.camera, relative_pose(trg.pose, src.pose), img, hyp);
      io::save_image(wp.out, r.warped.index(0, 0));
      manifest.outputs = {wp.out};
      if (!wp.mask_out.empty()) {
        io::save_image(wp.mask_out, mask_image(r.valid.index(0, 0)));
        manifest.outputs.push_back(wp.mask_out);
      }
      manifest.inputs = {{"trg", wp.trg}, {"src", wp.src}, {"src_image", wp.src_image}, {"depth", wp.depth}};
      manifest.options = {{"semantic", wp.semantic}};
      manifest.write(wp.manifest.empty() ? manifest_path_for(wp.out) : fs::path(wp.manifest));
    };
  });

  // fuse
  struct {
    std::string trg, depth, out, mask_out, manifest;
    std::vector<std::string> srcs, src_depths;
    double tau1 = 0, tau2 = 0.01;
    std::size_t min_views = 1;
  } fu;
  auto* fuse = app.add_subcommand("fuse", "Fuse a target depth map with consistent source depth maps");
  fuse->add_option("--trg", fu.trg, "Target camera JSON")->required();
  fuse->add_option("--depth", fu.depth, "Target depth PFM")->required();
  fuse->add_option("--src", fu.srcs, "Source camera JSON (repeatable)")->required();
  fuse->add_option("--src-depth", fu.src_depths, "Source depth PFM, one per --src")->required();
  fuse->add_option("--tau1", fu.tau1, "Reprojection threshold in normalized units (default: one target pixel)");
  fuse->add_option("--tau2", fu.tau2, "Relative depth threshold");
  fuse->add_option("--min-views", fu.min_views, "Minimum number of agreeing views, target included");
  fuse->add_option("--out", fu.out, "Fused depth PFM")->required();
  fuse->add_option("--mask-out", fu.mask_out, "Validity mask PNG (default: <out>.mask.png)");
  fuse->add_option("--manifest", fu.manifest, "Run manifest path (default: <out>.manifest.json)");
  fuse->callback([&] {
    action = [&] {
      if (fu.srcs.size() != fu.src_depths.size()) throw ArgumentError("fuse: need one --src-depth per --src");
      const io::CameraFile trg = io::load_camera(fu.trg);
      const NdArray<double> d = io::load_depth(fu.depth);
      const double tau1 = fu.tau1 > 0 ? fu.tau1 : 2.0 / static_cast<double>(d.dim(-1));
      const ConsistencyThresholds<double> tau{tau1, fu.tau2};
      try {
        tau.validate();
      } catch (const ShapeError& e) {
        throw ArgumentError(e.what());
      }
      std::vector<Camera<double>> cams;
      std::vector<Pose<double>> rels;
      std::vector<NdArray<double>> depths;
      for (std::size_t i = 0; i < fu.srcs.size(); ++i) {
        const io::CameraFile s = io::load_camera(fu.srcs[i]);
        cams.push_back(s.camera);
        rels.push_back(relative_pose(trg.pose, s.pose));
        depths.push_back(io::load_depth(fu.src_depths[i]));
      }
      const FusionResult<double> r = fuse_depths_mvsnet(trg.camera, cams, rels, d, depths, tau, fu.min_views);
      const std::string mask_out = fu.mask_out.empty() ? fu.out + ".mask.png" : fu.mask_out;
      io::save_depth(fu.out, r.fused, &r.valid);
      io::save_image(mask_out, mask_image(r.valid));
      manifest.inputs = {{"trg", fu.trg}, {"depth", fu.depth}};
      for (std::size_t i = 0; i < fu.srcs.size(); ++i) {
        manifest.inputs["src" + std::to_string(i)] = fu.srcs[i];
        manifest.inputs["src_depth" + std::to_string(i)] = fu.src_depths[i];
      }
      manifest.outputs = {fu.out, mask_out};
      manifest.options = {{"tau1", tau1}, {"tau2", fu.tau2}, {"min_views", fu.min_views}};
      manifest.write(fu.manifest.empty() ? manifest_path_for(fu.out) : fs::path(fu.manifest));
    };
  });

  // rays
  struct {
    std::string cam, hw, out, manifest;
    bool z_normalized = false;
  } ry;
  auto* rays = app.add_subcommand("rays", "Write the ray-direction image of a camera as a 3-channel PFM");
  rays->add_option("--cam", ry.cam, "Camera JSON")->required();
  rays->add_option("--hw", ry.hw, "Image size HxW")->required();
  rays->add_flag("--z-normalized", ry.z_normalized, "Scale directions to z = 1 instead of unit length");
  rays->add_option("--out", ry.out, "Output PFM")->required();
  rays->add_option("--manifest", ry.manifest, "Run manifest path (default: <out>.manifest.json)");
  rays->callback([&] {
    action = [&] {
      const ImageSize hw = parse_hw(ry.hw);
      const io::CameraFile c = io::load_camera(ry.cam);
      const RayBundle<double> r = get_camera_rays(c.camera, hw, !ry.z_normalized);
      NdArray<float> img(Shape{3, hw.height, hw.width});
      for (std::size_t p = 0; p < hw.height * hw.width; ++p) {
        for (std::size_t k = 0; k < 3; ++k) img[k * hw.height * hw.width + p] = r.valid[p] ? static_cast<float>(r.dirs[3 * p + k]) : 0.0f;
      }
      io::save_pfm(ry.out, img);
      manifest.inputs = {{"cam", ry.cam}};
      manifest.outputs = {ry.out};
      manifest.options = {{"hw", hw_str(hw)}, {"unit_vec", !ry.z_normalized}};
      manifest.write(ry.manifest.empty() ? manifest_path_for(ry.out) : fs::path(ry.manifest));
    };
  });

  // augment
  struct {
    std::string cam, image, hw, out, cam_out, manifest;
    std::uint64_t seed = 0;
    double scale_min = 0.25, flip_probability = 0.5;
  } ag;
  auto* augment = app.add_subcommand("augment", "Random resized crop and flip of a camera and its image");
  augment->add_option("--cam", ag.cam, "Camera JSON")->required();
  augment->add_option("--image", ag.image, "Image PNG")->required();
  augment->add_option("--hw", ag.hw, "Output size HxW (default: input size)");
  augment->add_option("--seed", ag.seed, "Random seed")->required();
  augment->add_option("--scale-min", ag.scale_min, "Smallest crop area fraction");
  augment->add_option("--flip-probability", ag.flip_probability, "Probability of a horizontal flip");
  augment->add_option("--out", ag.out, "Output PNG")->required();
  augment->add_option("--cam-out", ag.cam_out, "Output camera JSON")->required();
  augment->add_option("--manifest", ag.manifest, "Run manifest path (default: <out>.manifest.json)");
  augment->callback([&] {
    action = [&] {
      const io::CameraFile c = io::load_camera(ag.cam);
      const NdArray<double> img = io::load_image(ag.image);
      const ImageSize hw = ag.hw.empty() ? image_hw(img) : parse_hw(ag.hw);
      CropFlipParams<double> params;
      params.scale_min = ag.scale_min;
      params.flip_probability = ag.flip_probability;
      CropFlipChoice<double> choice;
      try {
        choice = sample_crop_flip<double>(image_hw(img), ag.seed, params);
      } catch (const ShapeError& e) {
        throw ArgumentError(e.what());
      }
      const CropFlipOutput<double> r = resized_crop_flip(c.camera, img, choice, hw);
      io::save_image(ag.out, r.images);
      io::save_camera(ag.cam_out, r.camera, c.pose);
      manifest.inputs = {{"cam", ag.cam}, {"image", ag.image}};
      manifest.outputs = {ag.out, ag.cam_out};
      const auto& w = choice.window;
      manifest.options = {{"seed", ag.seed},
                          {"hw", hw_str(hw)},
                          {"window_lrtb", {w.left, w.right, w.top, w.bottom}},
                          {"flip", choice.flip}};
      manifest.write(ag.manifest.empty() ? manifest_path_for(ag.out) : fs::path(ag.manifest));
    };
  });

  std::vector<std::string> storage = args;
  storage.insert(storage.begin(), "multicam");
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  for (CLI::App* sub : app.get_subcommands()) manifest.command = sub->get_name();
  try {
    action();
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace multicam::cli

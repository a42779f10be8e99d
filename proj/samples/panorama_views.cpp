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

// Build a synthetic panorama and resample it into a cube map and a rotated pinhole view.
//
//   panorama_views [output_dir]

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "multicam/io.hpp"
#include "multicam/warping.hpp"

using namespace multicam;

int main(int argc, char** argv) {
  const std::filesystem::path out = argc > 1 ? argv[1] : "panorama_views";
  std::filesystem::create_directories(out);

  // Panorama pixels: columns follow the polar angle, rows the azimuth.
  const Camera<double> pano = Camera<double>::equirectangular(equirectangular_full_sphere_intrinsics<double>());
  const ImageSize pano_hw{512, 256};
  const auto rays = get_camera_rays(pano, pano_hw);
  NdArray<double> img(Shape{3, pano_hw.height, pano_hw.width});
  const std::size_t n = pano_hw.height * pano_hw.width;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rays.dirs[3 * i], y = rays.dirs[3 * i + 1], z = rays.dirs[3 * i + 2];
    const double checker = (std::sin(8 * std::atan2(x, z)) * std::sin(8 * std::acos(-y)) > 0) ? 1.0 : 0.3;
    img[i] = checker * (0.5 + 0.5 * x);
    img[n + i] = checker * (0.5 + 0.5 * y);
    img[2 * n + i] = checker * (0.5 + 0.5 * z);
  }
  io::save_image(out / "panorama.png", img);

  const std::size_t face = 128;
  const auto cube = resample_by_intrinsics(pano, Camera<double>::cube(), Mat3<double>(Mat3<double>::Identity()), img,
                                           ImageSize{6 * face, face});
  io::save_image(out / "cube_faces.png", cube.image);

  // Look 40 degrees to the right and 15 degrees up; x_pano = R x_view.
  const Mat3<double> R = (Eigen::AngleAxisd(0.7, Vec3<double>::UnitY()) * Eigen::AngleAxisd(0.26, Vec3<double>::UnitX())).toRotationMatrix();
  const Camera<double> view = Camera<double>::pinhole(intrinsics_matrix(0.8, 0.8 * 4 / 3, 0.0, 0.0));
  const auto persp = resample_by_intrinsics(pano, view, R, img, ImageSize{240, 320});
  io::save_image(out / "pinhole_view.png", persp.image);

  std::printf("wrote panorama.png, cube_faces.png and pinhole_view.png to %s\n", out.string().c_str());
  return 0;
}

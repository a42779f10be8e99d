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

// Load a camera file (or use a built-in fisheye), project a few points and trace them back.
//
//   camera_basics [camera.json]

#include <cstdio>

#include "multicam/cameras.hpp"
#include "multicam/io.hpp"

using namespace multicam;

int main(int argc, char** argv) {
  Camera<double> cam = Camera<double>::opencv_fisheye(intrinsics_matrix(0.6, 0.6, 0.0, 0.0),
                                                      NdArray<double>(Shape{4}, {0.02, -0.004, 0.0008, -0.0001}));
  if (argc > 1) {
    try {
      cam = io::load_camera(argv[1]).camera;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "%s\n", e.what());
      return 1;
    }
  }
  std::printf("model %s, pixel dim %zu\n", std::string(kind_name(cam.kind())).c_str(), cam.pixel_dim());

  const NdArray<double> pts(Shape{4, 3}, {0, 0, 2, 1, 0.5, 3, -2, 1, 1, 0.3, -0.2, -4});
  const auto proj = project_to_pixel(cam, pts, true);
  const auto rays = pixel_to_ray(cam, proj.pix, true);
  const std::size_t pd = cam.pixel_dim();
  for (std::size_t i = 0; i < 4; ++i) {
    std::printf("x = (%5.2f %5.2f %5.2f)  pix = (", pts[3 * i], pts[3 * i + 1], pts[3 * i + 2]);
    for (std::size_t k = 0; k < pd; ++k) std::printf("%s%8.5f", k ? " " : "", proj.pix[pd * i + k]);
    std::printf(")  dist = %6.3f  %s", proj.depth[i], proj.valid[i] ? "valid" : "invalid");
    if (proj.valid[i] && rays.valid[i]) {
      double err = 0;
      for (std::size_t k = 0; k < 3; ++k) {
        err = std::max(err, std::abs(rays.origin[3 * i + k] + proj.depth[i] * rays.dirs[3 * i + k] - pts[3 * i + k]));
      }
      std::printf("  reconstruction error %.1e", err);
    }
    std::printf("\n");
  }

  const ImageSize hw = cam.kind() == CameraKind::Cube ? ImageSize{48, 8} : ImageSize{6, 8};
  const auto grid = get_camera_rays(cam, hw);
  std::size_t valid = 0;
  for (std::size_t i = 0; i < grid.valid.size(); ++i) valid += grid.valid[i];
  std::printf("%zu of %zu pixel rays valid on a %zux%zu grid\n", valid, grid.valid.size(), hw.height, hw.width);
  return 0;
}

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

// Plane sweep between two synthetic pinhole views of a textured plane: prints the mean
// photometric error for each depth hypothesis.
//
//   plane_sweep [true_depth]

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "multicam/warping.hpp"

using namespace multicam;

namespace {

double texture(double x, double y) { return 0.5 + 0.25 * std::sin(3.1 * x + 0.7 * y) * std::cos(2.3 * y - 0.4 * x); }

// Image of the plane z = depth (world frame) seen from a camera at `center` looking down +z.
NdArray<double> render(const Camera<double>& cam, const ImageSize& hw, const Vec3<double>& center, double depth) {
  const auto rays = get_camera_rays(cam, hw, false);
  NdArray<double> img(Shape{1, hw.height, hw.width});
  for (std::size_t i = 0; i < hw.height * hw.width; ++i) {
    const double t = depth - center.z();
    img[i] = texture(center.x() + t * rays.dirs[3 * i], center.y() + t * rays.dirs[3 * i + 1]);
  }
  return img;
}

}  // namespace

int main(int argc, char** argv) {
  const double truth = argc > 1 ? std::atof(argv[1]) : 3.3;
  if (!(truth > 1 && truth < 10)) {
    std::fprintf(stderr, "true depth must lie in (1, 10)\n");
    return 2;
  }
  const ImageSize hw{96, 128};
  const Camera<double> cam = Camera<double>::pinhole(intrinsics_matrix(1.0, 4.0 / 3, 0.0, 0.0));
  const Vec3<double> c_src(0.3, 0, 0);
  const Pose<double> trg = Pose<double>::identity();
  const Pose<double> src = Pose<double>::from_eigen(Mat3<double>::Identity(), -c_src);

  const NdArray<double> depths = depth_samples(1.0, 10.0, 24, true);
  const auto sweep = sweep_hypotheses(cam, std::vector<AnyCamera<double>>{cam}, {relative_pose(trg, src)},
                                      {render(cam, hw, c_src, truth)}, DepthHypotheses<double>::constant(depths), hw);
  const NdArray<double> target = render(cam, hw, Vec3<double>::Zero(), truth);

  const std::size_t n = hw.height * hw.width;
  std::size_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t d = 0; d < depths.size(); ++d) {
    double err = 0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!sweep.valid[d * n + i]) continue;
      err += std::abs(sweep.warped[d * n + i] - target[i]);
      ++cnt;
    }
    err /= double(std::max<std::size_t>(cnt, 1));
    std::printf("depth %6.3f  error %.4f  (%zu pixels)\n", depths[d], err, cnt);
    if (err < best_err) {
      best_err = err;
      best = d;
    }
  }
  std::printf("best hypothesis %.3f, true depth %.3f\n", depths[best], truth);
  return 0;
}

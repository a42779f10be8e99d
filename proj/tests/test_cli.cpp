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

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>

#include "camera_fixtures.hpp"
#include "multicam/cli.hpp"
#include "multicam/io.hpp"
#include "scene_fixtures.hpp"

namespace multicam {
namespace {

namespace fs = std::filesystem;
using testing::Rng;
using testing::uniform;
using Cam = Camera<double>;
using P = Pose<double>;

NdArray<double> eye3() { return intrinsics_matrix(1.0, 1.0, 0.0, 0.0); }
Cam erp() { return Cam::equirectangular(equirectangular_full_sphere_intrinsics<double>()); }

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

std::uint32_t bits(float v) { return std::bit_cast<std::uint32_t>(v); }

std::string le_bytes(float v) {
  const std::uint32_t u = bits(v);
  std::string s(4, '\0');
  for (int i = 0; i < 4; ++i) s[static_cast<std::size_t>(i)] = static_cast<char>((u >> (8 * i)) & 0xff);
  return s;
}

std::string be_bytes(float v) {
  std::string s = le_bytes(v);
  return {s.rbegin(), s.rend()};
}

struct RunOutput {
  int code;
  std::string out, err;
};

RunOutput run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_command(args, out, err);
  return {code, out.str(), err.str()};
}

/// Smooth gray image (1, H, W) already on the 8-bit grid.
NdArray<double> test_image(std::size_t h, std::size_t w, std::size_t channels = 1) {
  NdArray<double> img(Shape{channels, h, w});
  for (std::size_t k = 0; k < channels; ++k)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const double v = 0.5 + 0.3 * std::sin(0.21 * double(c) + 0.5 * double(k)) * std::cos(0.13 * double(r));
        img[(k * h + r) * w + c] = std::round(v * 255) / 255;
      }
  return img;
}

NdArray<double> quantized(const NdArray<double>& img) {
  NdArray<double> q = img;
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::lround(std::clamp(q[i], 0.0, 1.0) * 255.0) / 255.0;
  return q;
}

class TempDirTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() /
          ("multicam_" + std::string(info->test_suite_name()) + "_" + info->name() + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override {
    ::unsetenv("SOURCE_DATE_EPOCH");
    if (!HasFailure()) fs::remove_all(dir);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  fs::path dir;
};

// ---------------------------------------------------------------- PFM

using Pfm = TempDirTest;

TEST_F(Pfm, RoundTripIsBitExact) {
  Rng g(1);
  for (std::size_t C : {1u, 3u}) {
    NdArray<float> img(Shape{C, 5, 7});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(uniform(g, -1e3, 1e3));
    img[0] = std::numeric_limits<float>::denorm_min();
    img[1] = -0.0f;
    img[2] = std::numeric_limits<float>::infinity();
    io::save_pfm(path("a.pfm"), img);
    const NdArray<float> back = io::load_pfm(path("a.pfm"));
    ASSERT_EQ(back.shape(), img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(bits(back[i]), bits(img[i])) << i;
  }
}

TEST_F(Pfm, HeaderAndBottomUpRows) {
  NdArray<float> img(Shape{1, 2, 3});
  for (std::size_t i = 0; i < 6; ++i) img[i] = static_cast<float>(i);
  io::save_pfm(path("a.pfm"), img);
  std::string expected = "Pf\n3 2\n-1.0\n";
  for (float v : {3.f, 4.f, 5.f, 0.f, 1.f, 2.f}) expected += le_bytes(v);
  EXPECT_EQ(read_bytes(path("a.pfm")), expected);

  NdArray<float> rgb(Shape{3, 1, 2});
  for (std::size_t i = 0; i < 6; ++i) rgb[i] = static_cast<float>(i);
  io::save_pfm(path("b.pfm"), rgb);
  expected = "PF\n2 1\n-1.0\n";
  for (float v : {0.f, 2.f, 4.f, 1.f, 3.f, 5.f}) expected += le_bytes(v);
  EXPECT_EQ(read_bytes(path("b.pfm")), expected);
}

TEST_F(Pfm, ReadsHandWrittenLittleEndianFile) {
  std::string s = "Pf\n2 2\n-1.000000\n";
  for (float v : {1.5f, 2.5f, -3.f, 4.f}) s += le_bytes(v);
  write_bytes(path("a.pfm"), s);
  const NdArray<float> img = io::load_pfm(path("a.pfm"));
  ASSERT_EQ(img.shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(img[0], -3.f);
  EXPECT_EQ(img[1], 4.f);
  EXPECT_EQ(img[2], 1.5f);
  EXPECT_EQ(img[3], 2.5f);
}

TEST_F(Pfm, BigEndianFileRejected) {
  std::string s = "Pf\n2 1\n1.0\n";
  for (float v : {1.f, 2.f}) s += be_bytes(v);
  write_bytes(path("be.pfm"), s);
  try {
    io::load_pfm(path("be.pfm"));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("big-endian"), std::string::npos) << e.what();
  }
}

TEST_F(Pfm, CorruptFilesRejected) {
  write_bytes(path("magic.pfm"), "P6\n2 1\n-1.0\n");
  EXPECT_THROW(io::load_pfm(path("magic.pfm")), FormatError);
  write_bytes(path("header.pfm"), "Pf\ntwo 1\n-1.0\n");
  EXPECT_THROW(io::load_pfm(path("header.pfm")), FormatError);
  write_bytes(path("zero.pfm"), "Pf\n0 1\n-1.0\n");
  EXPECT_THROW(io::load_pfm(path("zero.pfm")), FormatError);
  write_bytes(path("scale.pfm"), "Pf\n1 1\n0\n" + le_bytes(1.f));
  EXPECT_THROW(io::load_pfm(path("scale.pfm")), FormatError);
  write_bytes(path("short.pfm"), "Pf\n2 2\n-1.0\n" + le_bytes(1.f));
  EXPECT_THROW(io::load_pfm(path("short.pfm")), FormatError);
  EXPECT_THROW(io::load_pfm(path("missing.pfm")), FormatError);
  EXPECT_THROW(io::save_pfm(path("c2.pfm"), NdArray<float>(Shape{2, 1, 1})), ShapeError);
}

TEST_F(Pfm, DepthStoresInvalidAsZero) {
  NdArray<double> d(Shape{2, 2}, {1.25, 2.0, std::numeric_limits<double>::quiet_NaN(), 4.0});
  Mask valid(Shape{2, 2}, {1, 0, 1, 1});
  io::save_depth(path("d.pfm"), d, &valid);
  const NdArray<double> back = io::load_depth(path("d.pfm"));
  ASSERT_EQ(back.shape(), (Shape{2, 2}));
  EXPECT_EQ(back[0], 1.25);
  EXPECT_EQ(back[1], 0.0);
  EXPECT_EQ(back[2], 0.0);
  EXPECT_EQ(back[3], 4.0);

  io::save_pfm(path("rgb.pfm"), NdArray<float>(Shape{3, 2, 2}));
  EXPECT_THROW(io::load_depth(path("rgb.pfm")), FormatError);
  EXPECT_THROW(io::save_depth(path("x.pfm"), NdArray<double>(Shape{1, 2, 2})), ShapeError);
}

// ---------------------------------------------------------------- PNG

using Png = TempDirTest;

TEST_F(Png, RoundTripReproducesQuantizedValues) {
  Rng g(2);
  for (std::size_t C = 1; C <= 4; ++C) {
    NdArray<double> img(Shape{C, 6, 9});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::floor(uniform(g, 0, 256)) / 255;
    io::save_image(path("a.png"), img);
    const NdArray<double> back = io::load_image(path("a.png"));
    ASSERT_EQ(back.shape(), img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(back[i], img[i]) << C << " " << i;
  }
}

TEST_F(Png, ValuesAreClampedAndRounded) {
  NdArray<double> img(Shape{1, 1, 4}, {-0.5, 1.5, 0.5, 100.2 / 255});
  io::save_image(path("a.png"), img);
  const NdArray<double> back = io::load_image(path("a.png"));
  EXPECT_EQ(back[0], 0.0);
  EXPECT_EQ(back[1], 1.0);
  EXPECT_EQ(back[2], 128.0 / 255);
  EXPECT_EQ(back[3], 100.0 / 255);
}

TEST_F(Png, BadInputsRejected) {
  write_bytes(path("text.png"), "not a png");
  EXPECT_THROW(io::load_image(path("text.png")), FormatError);
  EXPECT_THROW(io::load_image(path("missing.png")), FormatError);
  EXPECT_THROW(io::save_image(path("a.png"), NdArray<double>(Shape{5, 2, 2})), ShapeError);
  EXPECT_THROW(io::save_image(path("a.png"), NdArray<double>(Shape{2, 2})), ShapeError);
}

// ---------------------------------------------------------------- camera JSON

using CameraJson = TempDirTest;

io::Json parse(const std::string& s) { return io::Json::parse(s); }

std::string format_error(const io::Json& j) {
  try {
    io::camera_from_json(j);
  } catch (const FormatError& e) {
    return e.what();
  }
  return {};
}

TEST_F(CameraJson, IdentityPinholeLoadsAsScalarCamera) {
  write_bytes(path("pin.json"), R"({"model": "pinhole", "intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0}})");
  const io::CameraFile f = io::load_camera(path("pin.json"));
  EXPECT_EQ(f.camera.kind(), CameraKind::Pinhole);
  EXPECT_TRUE(f.camera.shape().empty());
  EXPECT_EQ(f.camera.param("affine").vec(), (std::vector<double>{1, 1, 0, 0}));
  EXPECT_EQ(f.pose.R().vec(), P::identity().R().vec());
  const auto p = testing::project_one(f.camera, {0.3, -0.2, 2});
  EXPECT_TRUE(p.valid);
  EXPECT_DOUBLE_EQ(p.pix.x(), 0.15);
  EXPECT_DOUBLE_EQ(p.pix.y(), -0.1);
}

TEST_F(CameraJson, ExtraIntrinsicsAreNamed) {
  const std::string msg = format_error(parse(
      R"({"model": "pinhole", "intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0, "distortion": [0.1, 0, 0, 0]}})"));
  EXPECT_NE(msg.find("distortion"), std::string::npos) << msg;
  const std::string top = format_error(parse(R"({"model": "cube", "lens": 3})"));
  EXPECT_NE(top.find("lens"), std::string::npos) << top;
}

TEST_F(CameraJson, PixelIntrinsicsAreNormalized) {
  const double fx = 90, fy = 110, cx = 70, cy = 30;
  const std::size_t H = 64, W = 128;
  const io::CameraFile f = io::camera_from_json(parse(
      R"({"model": "pinhole", "coords": "pixel", "image_size": [64, 128], "intrinsics": {"fx": 90, "fy": 110, "cx": 70, "cy": 30}})"));
  Rng g(3);
  for (int i = 0; i < 20; ++i) {
    const Vec3<double> x = testing::random_point_in_view(CameraKind::Pinhole, g);
    const double u = fx * x.x() / x.z() + cx, v = fy * x.y() / x.z() + cy;
    const auto p = testing::project_one(f.camera, x);
    EXPECT_NEAR(p.pix.x(), 2 * u / double(W) - 1, 1e-12);
    EXPECT_NEAR(p.pix.y(), 2 * v / double(H) - 1, 1e-12);
  }
  EXPECT_NE(format_error(parse(R"({"model": "pinhole", "coords": "pixel", "intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0}})"))
                .find("image_size"),
            std::string::npos);
}

TEST_F(CameraJson, SaveLoadPreservesBehaviorForEveryKind) {
  Rng g(4);
  for (CameraKind kind : kAllCameraKinds) {
    const Cam cam = testing::random_camera(kind, g);
    const P pose = P::from_eigen(testing::random_rotation(g), testing::random_vec(g));
    io::save_camera(path("a.json"), cam, pose);
    const io::CameraFile once = io::load_camera(path("a.json"));
    io::save_camera(path("b.json"), once.camera, once.pose);
    const io::CameraFile twice = io::load_camera(path("b.json"));
    EXPECT_EQ(read_bytes(path("a.json")), read_bytes(path("b.json"))) << kind_name(kind);
    EXPECT_EQ(twice.camera.kind(), kind);
    EXPECT_LE(testing::max_abs_diff(twice.pose.R(), pose.R()), 1e-15);
    EXPECT_LE(testing::max_abs_diff(twice.pose.T(), pose.T()), 1e-15);
    for (int i = 0; i < 100; ++i) {
      const Vec3<double> x = testing::random_point_in_view(kind, g);
      const auto a = testing::project_one(cam, x), b = testing::project_one(twice.camera, x);
      ASSERT_EQ(a.valid, b.valid) << kind_name(kind);
      EXPECT_LE((a.pix - b.pix).norm(), 1e-9) << kind_name(kind);
      EXPECT_LE(std::abs(a.depth - b.depth), 1e-9) << kind_name(kind);
    }
  }
}

TEST_F(CameraJson, LimitsAreKept) {
  const Cam cam = Cam::pinhole(eye3(), -5);
  io::save_camera(path("a.json"), cam);
  const io::CameraFile f = io::load_camera(path("a.json"));
  EXPECT_EQ(f.camera.param("z_min")[0], -5.0);
  const io::CameraFile e = io::camera_from_json(
      parse(R"({"model": "equirectangular", "intrinsics": {"fx": 0.6, "fy": 0.3, "cx": -1, "cy": 0}, "limits": {"dist_min": 0.5}})"));
  EXPECT_EQ(e.camera.param("dist_min")[0], 0.5);
  EXPECT_NE(format_error(parse(R"({"model": "pinhole", "intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0}, "limits": {"dist_min": 1}})"))
                .find("dist_min"),
            std::string::npos);
}

TEST_F(CameraJson, SampleFilesLoad) {
  std::set<CameraKind> kinds;
  for (const auto& e : fs::directory_iterator(MULTICAM_SAMPLE_CAMERAS)) {
    if (e.path().extension() != ".json") continue;
    SCOPED_TRACE(e.path().string());
    const io::CameraFile f = io::load_camera(e.path());
    EXPECT_EQ(std::string(kind_name(f.camera.kind())), e.path().stem().string());
    kinds.insert(f.camera.kind());
    const auto r = testing::ray_one(f.camera, Vec3<double>(0.1, -0.05, 1));
    EXPECT_TRUE(r.valid);
    const auto p = testing::project_one(f.camera, r.origin + 2 * r.dir);
    EXPECT_TRUE(p.valid);
  }
  EXPECT_EQ(kinds.size(), std::size(kAllCameraKinds));
}

TEST_F(CameraJson, InvalidFilesRejected) {
  const std::string pin = R"("model": "pinhole", "intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0})";
  EXPECT_FALSE(format_error(parse(R"({"model": "fisheye62", "intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0}})")).empty());
  EXPECT_NE(format_error(parse(R"({"model": "pinhole", "intrinsics": {"fx": 1, "fy": 1, "cx": 0}})")).find("cy"), std::string::npos);
  EXPECT_NE(format_error(parse(R"({"intrinsics": {}})")).find("model"), std::string::npos);
  EXPECT_NE(format_error(parse(R"({"model": "opencv_fisheye", "intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0}})")).find("distortion"),
            std::string::npos);
  EXPECT_FALSE(format_error(parse(R"({"model": "opencv_fisheye", "intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0, "distortion": [0, 0]}})")).empty());
  EXPECT_FALSE(format_error(parse("{" + pin + R"(, "extrinsics": {"R": [1.01, 0, 0, 0, 1, 0, 0, 0, 1], "T": [0, 0, 0]}})")).empty());
  EXPECT_FALSE(format_error(parse("{" + pin + R"(, "extrinsics": {"R": [-1, 0, 0, 0, 1, 0, 0, 0, 1], "T": [0, 0, 0]}})")).empty());
  EXPECT_TRUE(format_error(parse("{" + pin + R"(, "extrinsics": {"R": [1.000001, 0, 0, 0, 1, 0, 0, 0, 1], "T": [0, 0, 0]}})")).empty());
  EXPECT_FALSE(format_error(parse("{" + pin + R"(, "coords": "metric"})")).empty());
  EXPECT_FALSE(format_error(parse(R"({"model": "cube", "intrinsics": {"fx": 1}})")).empty());
  EXPECT_FALSE(format_error(parse("[1, 2]")).empty());
  write_bytes(path("broken.json"), "{\"model\": ");
  EXPECT_THROW(io::load_camera(path("broken.json")), FormatError);
  EXPECT_THROW(io::camera_to_json(Cam::pinhole(eye3().expand({2, 3, 3}))), ShapeError);
}

// ---------------------------------------------------------------- manifest

using Manifest = TempDirTest;

TEST_F(Manifest, TimestampHonorsSourceDateEpoch) {
  ::setenv("SOURCE_DATE_EPOCH", "0", 1);
  EXPECT_EQ(io::RunManifest::timestamp(), "1970-01-01T00:00:00Z");
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  EXPECT_EQ(io::RunManifest::timestamp(), "2023-11-14T22:13:20Z");
  ::setenv("SOURCE_DATE_EPOCH", "soon", 1);
  EXPECT_THROW(io::RunManifest::timestamp(), FormatError);
}

TEST_F(Manifest, WrittenNextToOutputs) {
  ::setenv("SOURCE_DATE_EPOCH", "0", 1);
  io::save_camera(path("cam.json"), Cam::pinhole(eye3()));
  ASSERT_EQ(run({"rays", "--cam", path("cam.json"), "--hw", "2x3", "--out", path("rays.pfm")}).code, 0);
  const io::Json m = io::read_json(cli::manifest_path_for(path("rays.pfm")));
  EXPECT_EQ(m.at("command"), "rays");
  EXPECT_EQ(m.at("inputs").at("cam"), path("cam.json"));
  EXPECT_EQ(m.at("outputs"), io::Json::array({path("rays.pfm")}));
  EXPECT_EQ(m.at("options").at("hw"), "2x3");
  EXPECT_EQ(m.at("options").at("unit_vec"), true);
  EXPECT_EQ(m.at("timestamp"), "1970-01-01T00:00:00Z");

  ASSERT_EQ(run({"rays", "--cam", path("cam.json"), "--hw", "2x3", "--out", path("r2.pfm"), "--manifest", path("m.json")}).code, 0);
  EXPECT_TRUE(fs::exists(path("m.json")));
  EXPECT_FALSE(fs::exists(cli::manifest_path_for(path("r2.pfm"))));
}

// ---------------------------------------------------------------- command line

class Cli : public TempDirTest {
 protected:
  void SetUp() override {
    TempDirTest::SetUp();
    ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  }

  /// Two pinhole views of a textured plane, one unit apart along x.
  void write_stereo_pair() {
    const Cam pin = Cam::pinhole(intrinsics_matrix(1.2, 1.2, 0.0, 0.0));
    const testing::Scene scene = testing::Scene::plane(4);
    const ImageSize hw{24, 32};
    pose0 = testing::pose_at({0, 0, 0});
    pose1 = testing::pose_at({0.5, 0, 0});
    io::save_camera(path("cam0.json"), pin, pose0);
    io::save_camera(path("cam1.json"), pin, pose1);
    const testing::Rendering r0 = testing::render(pin, pose0, hw, scene), r1 = testing::render(pin, pose1, hw, scene);
    io::save_image(path("img0.png"), r0.image);
    io::save_image(path("img1.png"), r1.image);
    io::save_depth(path("depth0.pfm"), r0.depth, &r0.valid);
    io::save_depth(path("depth1.pfm"), r1.depth, &r1.valid);
  }

  P pose0 = P::identity(), pose1 = P::identity();
};

TEST_F(Cli, ExitCodes) {
  io::save_camera(path("cam.json"), Cam::pinhole(eye3()));
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"teleport"}).code, 2);
  EXPECT_EQ(run({"rays", "--cam", path("cam.json")}).code, 2);
  EXPECT_EQ(run({"rays", "--cam", path("cam.json"), "--hw", "12", "--out", path("r.pfm")}).code, 2);
  EXPECT_EQ(run({"rays", "--cam", path("cam.json"), "--hw", "0x4", "--out", path("r.pfm")}).code, 2);
  EXPECT_EQ(run({"rays", "--cam", path("nope.json"), "--hw", "2x2", "--out", path("r.pfm")}).code, 1);
  EXPECT_EQ(run({"rectify", "--cam0", path("cam.json"), "--image0", "a.png", "--cam1", path("cam.json"), "--image1", "b.png",
                 "--mode", "diagonal", "--out", path("o")})
                .code,
            2);
  const RunOutput bad = run({"rays", "--cam", path("nope.json"), "--hw", "2x2", "--out", path("r.pfm")});
  EXPECT_NE(bad.err.find("nope.json"), std::string::npos) << bad.err;
  const RunOutput help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  for (const char* sub : {"resample", "rectify", "sweep", "warp", "fuse", "rays", "augment"}) {
    EXPECT_NE(help.out.find(sub), std::string::npos) << sub;
  }
  EXPECT_EQ(run({"sweep", "--help"}).code, 0);
}

TEST_F(Cli, RaysOfSinglePixelCamera) {
  io::save_camera(path("cam.json"), Cam::pinhole(eye3()));
  ASSERT_EQ(run({"rays", "--cam", path("cam.json"), "--hw", "1x1", "--out", path("r.pfm")}).code, 0);
  const NdArray<float> r = io::load_pfm(path("r.pfm"));
  ASSERT_EQ(r.shape(), (Shape{3, 1, 1}));
  EXPECT_EQ(r[0], 0.0f);
  EXPECT_EQ(r[1], 0.0f);
  EXPECT_EQ(r[2], 1.0f);
}

TEST_F(Cli, RaysMatchLibrary) {
  Rng g(5);
  for (CameraKind kind : {CameraKind::OpenCVFisheye, CameraKind::Equirectangular, CameraKind::Pinhole}) {
    const Cam cam = testing::random_camera(kind, g);
    io::save_camera(path("cam.json"), cam);
    for (bool z : {false, true}) {
      if (z && kind == CameraKind::Equirectangular) continue;
      std::vector<std::string> args{"rays", "--cam", path("cam.json"), "--hw", "5x7", "--out", path("r.pfm")};
      if (z) args.push_back("--z-normalized");
      ASSERT_EQ(run(args).code, 0);
      const NdArray<float> img = io::load_pfm(path("r.pfm"));
      const RayBundle<double> lib = get_camera_rays(cam, {5, 7}, !z);
      for (std::size_t p = 0; p < 35; ++p) {
        for (std::size_t k = 0; k < 3; ++k) {
          const float expect = lib.valid[p] ? static_cast<float>(lib.dirs[3 * p + k]) : 0.0f;
          EXPECT_EQ(img[k * 35 + p], expect) << kind_name(kind) << " " << p;
        }
      }
    }
  }
}

TEST_F(Cli, ResampleMatchesLibrary) {
  const Cam src = erp();
  const Cam trg = Cam::opencv_fisheye(intrinsics_matrix(0.6, 0.6, 0.0, 0.0), testing::row({0.01, 0, 0, 0}));
  io::save_camera(path("erp.json"), src);
  io::save_camera(path("fish.json"), trg);
  io::save_image(path("pano.png"), test_image(64, 128, 3));
  const NdArray<double> pano = io::load_image(path("pano.png"));

  ASSERT_EQ(run({"resample", "--src", path("erp.json"), "--src-image", path("pano.png"), "--trg", path("fish.json"), "--hw",
                 "20x30", "--out", path("out.png")})
                .code,
            0);
  const auto lib = resample_by_intrinsics(src, trg, Mat3<double>::Identity().eval(), pano, ImageSize{20, 30});
  const NdArray<double> out = io::load_image(path("out.png"));
  ASSERT_EQ(out.shape(), (Shape{3, 20, 30}));
  EXPECT_EQ(testing::max_abs_diff(out, quantized(lib.image)), 0.0);

  const Mat3<double> rot = testing::rotation_about({0, 1, 0}, 0.7);
  std::vector<std::string> args{"resample", "--src", path("erp.json"), "--src-image", path("pano.png"), "--trg", path("fish.json"),
                                "--hw", "20x30", "--out", path("rot.png"), "--rotation"};
  for (int i = 0; i < 9; ++i) {
    std::ostringstream os;
    os.precision(17);
    os << rot(i / 3, i % 3);
    args.push_back(os.str());
  }
  ASSERT_EQ(run(args).code, 0);
  const auto lib_rot = resample_by_intrinsics(src, trg, rot, pano, ImageSize{20, 30});
  EXPECT_LE(testing::max_abs_diff(io::load_image(path("rot.png")), quantized(lib_rot.image)), 1.0 / 255 + 1e-12);

  args.back() = "2";
  EXPECT_EQ(run(args).code, 2);
}

TEST_F(Cli, ResampleUsesExtrinsicRotation) {
  const Cam src = erp(), trg = Cam::pinhole(eye3());
  const Mat3<double> c2w = testing::rotation_about({0, 1, 0}, 0.5);
  io::save_camera(path("erp.json"), src, testing::pose_at({0, 0, 0}));
  io::save_camera(path("pin.json"), trg, testing::pose_at({0, 0, 0}, c2w));
  io::save_image(path("pano.png"), test_image(32, 64));
  ASSERT_EQ(run({"resample", "--src", path("erp.json"), "--src-image", path("pano.png"), "--trg", path("pin.json"), "--out",
                 path("out.png")})
                .code,
            0);
  const auto lib = resample_by_intrinsics(src, trg, c2w, io::load_image(path("pano.png")), ImageSize{32, 64});
  EXPECT_EQ(testing::max_abs_diff(io::load_image(path("out.png")), quantized(lib.image)), 0.0);
}

TEST_F(Cli, SingleHypothesisSweepEqualsWarp) {
  write_stereo_pair();
  const NdArray<double> two = NdArray<double>::full(Shape{24, 32}, 2.0);
  io::save_depth(path("two.pfm"), two);
  ASSERT_EQ(run({"sweep", "--trg", path("cam0.json"), "--src", path("cam1.json"), "--src-image", path("img1.png"), "--count", "1",
                 "--dmin", "2", "--dmax", "2", "--out", path("sweep")})
                .code,
            0);
  ASSERT_EQ(run({"warp", "--trg", path("cam0.json"), "--src", path("cam1.json"), "--src-image", path("img1.png"), "--depth",
                 path("two.pfm"), "--out", path("warp.png")})
                .code,
            0);
  EXPECT_EQ(read_bytes(path("sweep/sweep_s00_d000.png")), read_bytes(path("warp.png")));
  EXPECT_FALSE(fs::exists(path("sweep/sweep_s00_d001.png")));

  ASSERT_EQ(run({"sweep", "--trg", path("cam0.json"), "--src", path("cam1.json"), "--src-image", path("img1.png"), "--depth",
                 path("two.pfm"), "--out", path("sweep_pp")})
                .code,
            0);
  EXPECT_EQ(read_bytes(path("sweep_pp/sweep_s00_d000.png")), read_bytes(path("warp.png")));
}

TEST_F(Cli, SweepWritesNumberedStack) {
  write_stereo_pair();
  ASSERT_EQ(run({"sweep", "--trg", path("cam0.json"), "--src", path("cam1.json"), "--src-image", path("img1.png"), "--src",
                 path("cam0.json"), "--src-image", path("img0.png"), "--dmin", "1", "--dmax", "8", "--count", "3", "--hw", "12x16",
                 "--out", path("sweep")})
                .code,
            0);
  const io::Json m = io::read_json(path("sweep/manifest.json"));
  EXPECT_EQ(m.at("outputs").size(), 6u);
  EXPECT_EQ(m.at("options").at("spacing"), "inverse");
  const std::vector<double> hyp = m.at("options").at("hypotheses").get<std::vector<double>>();
  ASSERT_EQ(hyp.size(), 3u);
  EXPECT_NEAR(hyp[0], 1.0, 1e-12);
  EXPECT_NEAR(hyp[1], 1 / (0.5 * (1 + 1 / 8.0)), 1e-12);
  EXPECT_NEAR(hyp[2], 8.0, 1e-12);

  const io::CameraFile c0 = io::load_camera(path("cam0.json")), c1 = io::load_camera(path("cam1.json"));
  const std::vector<AnyCamera<double>> cams{AnyCamera<double>(c1.camera), AnyCamera<double>(c0.camera)};
  const std::vector<P> rels{relative_pose(c0.pose, c1.pose), relative_pose(c0.pose, c0.pose)};
  const std::vector<NdArray<double>> imgs{io::load_image(path("img1.png")), io::load_image(path("img0.png"))};
  const auto lib = sweep_hypotheses(c0.camera, cams, rels, imgs,
                                    DepthHypotheses<double>::constant(depth_samples(1.0, 8.0, 3, true)), ImageSize{12, 16});
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t d = 0; d < 3; ++d) {
      char name[64];
      std::snprintf(name, sizeof name, "sweep/sweep_s%02zu_d%03zu.png", s, d);
      const NdArray<double> png = io::load_image(path(name));
      EXPECT_EQ(testing::max_abs_diff(png, quantized(lib.warped.index(0, s).index(0, d))), 0.0) << name;
    }
  }

  ASSERT_EQ(run({"sweep", "--trg", path("cam0.json"), "--src", path("cam1.json"), "--src-image", path("img1.png"), "--dmin", "1",
                 "--dmax", "8", "--count", "3", "--linear", "--out", path("lin")})
                .code,
            0);
  EXPECT_NEAR(io::read_json(path("lin/manifest.json")).at("options").at("hypotheses")[1].get<double>(), 4.5, 1e-12);
}

TEST_F(Cli, SweepArgumentErrors) {
  write_stereo_pair();
  io::save_depth(path("two.pfm"), NdArray<double>::full(Shape{24, 32}, 2.0));
  const std::vector<std::string> base{"sweep", "--trg", path("cam0.json"), "--src", path("cam1.json"), "--src-image", path("img1.png"),
                                      "--out", path("s")};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return run(a).code;
  };
  EXPECT_EQ(with({"--depth", path("two.pfm"), "--dmin", "1"}), 2);
  EXPECT_EQ(with({"--dmin", "1", "--dmax", "2", "--count", "0"}), 2);
  EXPECT_EQ(with({"--dmin", "3", "--dmax", "2", "--count", "2"}), 2);
  EXPECT_EQ(with({"--dmin", "0", "--dmax", "2", "--count", "2"}), 2);
  EXPECT_EQ(with({}), 2);
  EXPECT_EQ(with({"--src", path("cam0.json"), "--dmin", "1", "--dmax", "2", "--count", "2"}), 2);
  EXPECT_EQ(with({"--semantic", "depthish", "--dmin", "1", "--dmax", "2", "--count", "2"}), 2);
  EXPECT_EQ(with({"--dmin", "1", "--dmax", "2", "--count", "2"}), 0);
}

TEST_F(Cli, WarpMatchesLibrary) {
  write_stereo_pair();
  ASSERT_EQ(run({"warp", "--trg", path("cam0.json"), "--src", path("cam1.json"), "--src-image", path("img1.png"), "--depth",
                 path("depth0.pfm"), "--out", path("w.png"), "--mask-out", path("w_mask.png")})
                .code,
            0);
  const io::CameraFile c0 = io::load_camera(path("cam0.json")), c1 = io::load_camera(path("cam1.json"));
  const NdArray<double> depth = io::load_depth(path("depth0.pfm"));
  const auto lib = backward_warp(c0.camera, c1.camera, relative_pose(c0.pose, c1.pose), io::load_image(path("img1.png")),
                                 DepthHypotheses<double>::pixelwise(depth.unsqueeze(0)));
  EXPECT_EQ(testing::max_abs_diff(io::load_image(path("w.png")), quantized(lib.warped.index(0, 0))), 0.0);
  const NdArray<double> mask = io::load_image(path("w_mask.png"));
  std::size_t valid = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    EXPECT_EQ(mask[i], lib.valid[i] ? 1.0 : 0.0);
    valid += lib.valid[i];
  }
  EXPECT_GT(valid, mask.size() / 2);

  // The warped source agrees with the rendered target where valid.
  const NdArray<double> img0 = io::load_image(path("img0.png")), warped = io::load_image(path("w.png"));
  double worst = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (lib.valid[i]) worst = std::max(worst, std::abs(img0[i] - warped[i]));
  EXPECT_LT(worst, 0.05);
}

TEST_F(Cli, RectifyMatchesLibrary) {
  write_stereo_pair();
  ASSERT_EQ(run({"rectify", "--cam0", path("cam0.json"), "--image0", path("img0.png"), "--cam1", path("cam1.json"), "--image1",
                 path("img1.png"), "--out", path("rect")})
                .code,
            0);
  for (const char* f : {"rect0.png", "rect1.png", "rect0.json", "rect1.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir / "rect" / f)) << f;
  }
  const io::CameraFile c0 = io::load_camera(path("cam0.json")), c1 = io::load_camera(path("cam1.json"));
  const auto lib = stereo_rectify(c0.camera, c0.pose, c1.camera, c1.pose, RectifyMode::SideBySide, io::load_image(path("img0.png")),
                                  io::load_image(path("img1.png")));
  EXPECT_EQ(testing::max_abs_diff(io::load_image(path("rect/rect0.png")), quantized(lib.rect0.image)), 0.0);
  EXPECT_EQ(testing::max_abs_diff(io::load_image(path("rect/rect1.png")), quantized(lib.rect1.image)), 0.0);
  const io::CameraFile r0 = io::load_camera(path("rect/rect0.json")), r1 = io::load_camera(path("rect/rect1.json"));
  EXPECT_LE(testing::max_abs_diff(r0.pose.R(), lib.pose0.R()), 1e-15);
  EXPECT_LE(testing::max_abs_diff(r1.pose.T(), lib.pose1.T()), 1e-15);
  // The baseline of the rectified pair lies along the camera x axis.
  const Vec3<double> b = r1.pose.translation(0) - r0.pose.translation(0);
  EXPECT_NEAR(std::abs(b.x()), 0.5, 1e-12);
  EXPECT_NEAR(b.y(), 0, 1e-12);
  EXPECT_NEAR(b.z(), 0, 1e-12);
  EXPECT_EQ(io::read_json(path("rect/manifest.json")).at("options").at("mode"), "side_by_side");
}

TEST_F(Cli, FuseIdenticalSourceReproducesTarget) {
  write_stereo_pair();
  ASSERT_EQ(run({"fuse", "--trg", path("cam0.json"), "--depth", path("depth0.pfm"), "--src", path("cam0.json"), "--src-depth",
                 path("depth0.pfm"), "--min-views", "2", "--out", path("fused.pfm")})
                .code,
            0);
  const NdArray<double> d = io::load_depth(path("depth0.pfm")), fused = io::load_depth(path("fused.pfm"));
  const NdArray<double> mask = io::load_image(path("fused.pfm.mask.png"));
  for (std::size_t i = 0; i < d.size(); ++i) {
    ASSERT_GT(d[i], 0);
    EXPECT_NEAR(fused[i], d[i], 1e-6 * d[i]) << i;
    EXPECT_EQ(mask[i], 1.0) << i;
  }
  const io::Json m = io::read_json(path("fused.pfm.manifest.json"));
  EXPECT_NEAR(m.at("options").at("tau1").get<double>(), 2.0 / 32, 1e-15);
  EXPECT_EQ(m.at("options").at("min_views"), 2);
}

TEST_F(Cli, FuseWithSecondView) {
  write_stereo_pair();
  ASSERT_EQ(run({"fuse", "--trg", path("cam0.json"), "--depth", path("depth0.pfm"), "--src", path("cam1.json"), "--src-depth",
                 path("depth1.pfm"), "--tau2", "0.001", "--min-views", "2", "--out", path("fused.pfm"), "--mask-out", path("m.png")})
                .code,
            0);
  const io::CameraFile c0 = io::load_camera(path("cam0.json")), c1 = io::load_camera(path("cam1.json"));
  const std::vector<Cam> srcs{c1.camera};
  const auto lib = fuse_depths_mvsnet(c0.camera, srcs, {relative_pose(c0.pose, c1.pose)}, io::load_depth(path("depth0.pfm")),
                                     {io::load_depth(path("depth1.pfm"))}, ConsistencyThresholds<double>{2.0 / 32, 0.001}, 2);
  const NdArray<double> fused = io::load_depth(path("fused.pfm")), mask = io::load_image(path("m.png"));
  std::size_t valid = 0;
  for (std::size_t i = 0; i < fused.size(); ++i) {
    EXPECT_EQ(mask[i], lib.valid[i] ? 1.0 : 0.0);
    EXPECT_EQ(fused[i], lib.valid[i] ? static_cast<double>(static_cast<float>(lib.fused[i])) : 0.0);
    valid += lib.valid[i];
  }
  EXPECT_GT(valid, fused.size() / 2);

  EXPECT_EQ(run({"fuse", "--trg", path("cam0.json"), "--depth", path("depth0.pfm"), "--src", path("cam1.json"), "--out",
                 path("f.pfm")})
                .code,
            2);
  EXPECT_EQ(run({"fuse", "--trg", path("cam0.json"), "--depth", path("depth0.pfm"), "--src", path("cam1.json"), "--src-depth",
                 path("depth1.pfm"), "--tau2", "-1", "--out", path("f.pfm")})
                .code,
            2);
  EXPECT_EQ(run({"fuse", "--trg", path("cam0.json"), "--depth", path("depth0.pfm"), "--src", path("cam1.json"), "--src-depth",
                 path("missing.pfm"), "--out", path("f.pfm")})
                .code,
            1);
}

TEST_F(Cli, AugmentIsDeterministicAndMatchesLibrary) {
  Rng g(6);
  const Cam cam = testing::random_camera(CameraKind::OpenCVFisheye, g);
  io::save_camera(path("cam.json"), cam);
  io::save_image(path("img.png"), test_image(40, 60, 3));
  const auto args = [&](const std::string& seed, const std::string& tag) {
    return std::vector<std::string>{"augment", "--cam", path("cam.json"), "--image", path("img.png"), "--seed", seed, "--hw", "20x30",
                                    "--flip-probability", "1", "--out", path(tag + ".png"), "--cam-out", path(tag + ".json")};
  };
  ASSERT_EQ(run(args("7", "a")).code, 0);
  ASSERT_EQ(run(args("7", "b")).code, 0);
  EXPECT_EQ(read_bytes(path("a.png")), read_bytes(path("b.png")));
  EXPECT_EQ(read_bytes(path("a.json")), read_bytes(path("b.json")));

  CropFlipParams<double> params;
  params.flip_probability = 1;
  const auto choice = sample_crop_flip<double>(ImageSize{40, 60}, 7, params);
  EXPECT_TRUE(choice.flip);
  const auto lib = resized_crop_flip(cam, io::load_image(path("img.png")), choice, ImageSize{20, 30});
  EXPECT_EQ(testing::max_abs_diff(io::load_image(path("a.png")), quantized(lib.images)), 0.0);
  const io::CameraFile out = io::load_camera(path("a.json"));
  EXPECT_LE(testing::max_abs_diff(out.camera.param("affine"), lib.camera.param("affine")), 1e-15);
  EXPECT_EQ(out.camera.param("distortion").vec(), lib.camera.param("distortion").vec());

  EXPECT_EQ(run({"augment", "--cam", path("cam.json"), "--image", path("img.png"), "--seed", "1", "--scale-min", "2", "--out",
                 path("c.png"), "--cam-out", path("c.json")})
                .code,
            2);
}

TEST_F(Cli, RerunsAreByteIdentical) {
  write_stereo_pair();
  io::save_camera(path("erp.json"), erp());
  io::save_image(path("pano.png"), test_image(16, 32));
  const std::vector<std::vector<std::string>> commands{
      {"resample", "--src", path("erp.json"), "--src-image", path("pano.png"), "--trg", path("cam0.json"), "--hw", "8x8", "--out",
       path("out/resample.png")},
      {"rectify", "--cam0", path("cam0.json"), "--image0", path("img0.png"), "--cam1", path("cam1.json"), "--image1", path("img1.png"),
       "--out", path("out/rect")},
      {"sweep", "--trg", path("cam0.json"), "--src", path("cam1.json"), "--src-image", path("img1.png"), "--dmin", "2", "--dmax", "6",
       "--count", "4", "--out", path("out/sweep")},
      {"warp", "--trg", path("cam0.json"), "--src", path("cam1.json"), "--src-image", path("img1.png"), "--depth", path("depth0.pfm"),
       "--out", path("out/warp.png"), "--mask-out", path("out/warp_mask.png")},
      {"fuse", "--trg", path("cam0.json"), "--depth", path("depth0.pfm"), "--src", path("cam1.json"), "--src-depth",
       path("depth1.pfm"), "--out", path("out/fused.pfm")},
      {"rays", "--cam", path("erp.json"), "--hw", "6x12", "--out", path("out/rays.pfm")},
      {"augment", "--cam", path("cam0.json"), "--image", path("img0.png"), "--seed", "11", "--out", path("out/aug.png"), "--cam-out",
       path("out/aug.json")},
  };
  fs::create_directories(path("out"));
  for (const auto& cmd : commands) {
    fs::remove_all(path("out"));
    fs::create_directories(path("out"));
    ASSERT_EQ(run(cmd).code, 0) << cmd[0];
    std::map<std::string, std::string> first;
    for (const auto& e : fs::recursive_directory_iterator(path("out")))
      if (e.is_regular_file()) first[e.path().string()] = read_bytes(e.path());
    EXPECT_GE(first.size(), 2u) << cmd[0];
    ASSERT_EQ(run(cmd).code, 0) << cmd[0];
    std::size_t seen = 0;
    for (const auto& e : fs::recursive_directory_iterator(path("out"))) {
      if (!e.is_regular_file()) continue;
      ++seen;
      EXPECT_EQ(read_bytes(e.path()), first[e.path().string()]) << cmd[0] << " " << e.path();
    }
    EXPECT_EQ(seen, first.size()) << cmd[0];
  }
}

TEST_F(Cli, BinaryExitStatus) {
  const auto status = [&](const std::string& args) {
    const int s = std::system((std::string(MULTICAM_CLI_PATH) + " " + args + " > " + path("log.txt") + " 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("--help"), 0);
  EXPECT_NE(read_bytes(path("log.txt")).find("resample"), std::string::npos);
  EXPECT_EQ(status(""), 2);
  EXPECT_EQ(status("rays --hw 2x2 --out " + path("r.pfm")), 2);
  EXPECT_EQ(status("rays --cam " + path("none.json") + " --hw 2x2 --out " + path("r.pfm")), 1);
  io::save_camera(path("cam.json"), Cam::pinhole(eye3()));
  EXPECT_EQ(status("rays --cam " + path("cam.json") + " --hw 2x2 --out " + path("r.pfm")), 0);
  EXPECT_EQ(io::load_pfm(path("r.pfm")).shape(), (Shape{3, 2, 2}));
}

}  // namespace
}  // namespace multicam

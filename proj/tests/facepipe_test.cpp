/*
 * Copyright 2026 The rlface Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <opencv2/imgproc.hpp>

#include "rlface/facepipe/align.hpp"
#include "rlface/facepipe/detection.hpp"
#include "rlface/facepipe/mtcnn.hpp"
#include "test_util.hpp"

namespace rlface::facepipe {
namespace {

const std::filesystem::path kFixtures = RLFACE_FIXTURES;
const std::filesystem::path kMtcnn = std::filesystem::path(RLFACE_SOURCE_DIR) / "assets" / "mtcnn";

FaceDetection with_conf(double c) {
  FaceDetection d = testutil::synthetic_detection({100, 100}, {128, 100});
  d.confidence = c;
  return d;
}

TEST(Gate, AcceptsSingleConfidentFace) {
  auto g = gate_detections({with_conf(0.99)});
  ASSERT_TRUE(g.accepted);
  EXPECT_EQ(g.accepted->confidence, 0.99);
}

TEST(Gate, RejectsLowConfidence) {
  auto g = gate_detections({with_conf(0.97)});
  EXPECT_FALSE(g.accepted);
  EXPECT_EQ(g.reason, "low confidence");
  EXPECT_TRUE(gate_detections({with_conf(0.98)}).accepted);
}

TEST(Gate, RejectsMultipleFaces) {
  auto g = gate_detections({with_conf(0.99), with_conf(0.99)});
  EXPECT_FALSE(g.accepted);
  EXPECT_EQ(g.reason, "multiple faces");
  EXPECT_EQ(gate_detections({}).reason, "no face");
}

TEST(Align, HorizontalEyesClosedForm) {
  cv::Mat img = testutil::smooth_image(300, 300);
  auto det = testutil::synthetic_detection({100, 100}, {128, 100});
  auto a = align_and_crop(img, det);
  EXPECT_EQ(a.crop.side_px, 100);
  EXPECT_EQ(a.crop.image.cols, 100);
  EXPECT_EQ(a.crop.image.rows, 100);
  EXPECT_NEAR(a.origin.x, 64.0, 1e-9);
  EXPECT_NEAR(a.origin.y, 57.0, 1e-9);
  auto l = a.map(det.left_eye()), r = a.map(det.right_eye());
  EXPECT_NEAR(l.x, 36.0, 1e-9);
  EXPECT_NEAR(l.y, 43.0, 1e-9);
  EXPECT_NEAR(r.x, 64.0, 1e-9);
  EXPECT_NEAR(r.y, 43.0, 1e-9);
  // Content check: crop pixel (36, 43) equals source pixel (100, 100).
  EXPECT_EQ(a.crop.image.at<cv::Vec3b>(43, 36), img.at<cv::Vec3b>(100, 100));
}

TEST(Align, VerticalEyesRotateNinetyDegrees) {
  cv::Mat img = testutil::smooth_image(120, 120);
  auto det = testutil::synthetic_detection({0, 0}, {0, 28});
  auto a = align_and_crop(img, det);
  EXPECT_NEAR(a.angle_deg, 90.0, 1e-9);
  EXPECT_EQ(a.crop.side_px, 100);
  auto l = a.map(det.left_eye()), r = a.map(det.right_eye());
  EXPECT_NEAR(l.x, 36.0, 1e-9);
  EXPECT_NEAR(l.y, 43.0, 1e-9);
  EXPECT_NEAR(r.x, 64.0, 1e-9);
  EXPECT_NEAR(r.y, 43.0, 1e-9);
}

TEST(Align, CoincidentEyesRejected) {
  cv::Mat img = testutil::smooth_image(50, 50);
  auto det = testutil::synthetic_detection({20, 20}, {20, 20});
  try {
    align_and_crop(img, det);
    FAIL() << "expected rejection";
  } catch (const Rejection& e) {
    EXPECT_EQ(e.reason(), "degenerate landmarks");
  }
}

TEST(Align, OutOfFramePaddedByEdgeReplication) {
  cv::Mat img(40, 40, CV_8UC3, cv::Scalar(10, 20, 30));
  img.col(0).setTo(cv::Scalar(200, 100, 50));
  auto det = testutil::synthetic_detection({2, 20}, {30, 20});
  auto a = align_and_crop(img, det);
  // Crop column 0 maps to source x = -34; replication copies source column 0.
  EXPECT_EQ(a.crop.image.at<cv::Vec3b>(50, 0), cv::Vec3b(200, 100, 50));
}

TEST(Align, EyeBlobsLandOnCanonicalPositions) {
  for (double angle : {0.0, 17.0, -35.0, 90.0, 180.0}) {
    const double rad = angle * CV_PI / 180.0;
    const Point l{150, 160};
    const Point r{l.x + 40 * std::cos(rad), l.y + 40 * std::sin(rad)};
    cv::Mat img = testutil::eye_blob_image(320, 320, l, r);
    auto a = align_and_crop(img, testutil::synthetic_detection(l, r));
    const int s = a.crop.side_px;
    auto [cl, cr] = testutil::blob_centroids(a.crop.image);
    EXPECT_NEAR(cl.x, 0.36 * s, 1.0) << angle;
    EXPECT_NEAR(cl.y, 0.43 * s, 1.0) << angle;
    EXPECT_NEAR(cr.x, 0.64 * s, 1.0) << angle;
    EXPECT_NEAR(cr.y, 0.43 * s, 1.0) << angle;
  }
}

TEST(Align, RotationEquivariance) {
  cv::Mat img = testutil::smooth_image(400, 400);
  const Point l{180, 200}, r{222, 206};
  auto base = align_and_crop(img, testutil::synthetic_detection(l, r));
  for (double angle : {12.0, -30.0, 75.0}) {
    cv::Matx23d rot = cv::getRotationMatrix2D(cv::Point2f(200, 200), angle, 1.0);
    cv::Mat rotated;
    cv::warpAffine(img, rotated, cv::Mat(rot), img.size(), cv::INTER_LINEAR, cv::BORDER_REPLICATE);
    auto apply = [&](const Point& p) {
      return Point{rot(0, 0) * p.x + rot(0, 1) * p.y + rot(0, 2), rot(1, 0) * p.x + rot(1, 1) * p.y + rot(1, 2)};
    };
    auto moved = align_and_crop(rotated, testutil::synthetic_detection(apply(l), apply(r)));
    ASSERT_EQ(moved.crop.side_px, base.crop.side_px);
    // Ignore a 2 px border where the double resampling touches the frame.
    cv::Rect inner(2, 2, base.crop.side_px - 4, base.crop.side_px - 4);
    cv::Mat diff;
    cv::absdiff(base.crop.image(inner), moved.crop.image(inner), diff);
    const double mad = cv::mean(diff.reshape(1))[0] / 255.0;
    EXPECT_LT(mad, 2.0 / 255.0) << angle;
  }
}

TEST(Frontal, CenteredFacePasses) {
  auto det = testutil::synthetic_detection({100, 100}, {140, 100});
  EXPECT_TRUE(frontal_check(det).pass);
}

TEST(Frontal, ProfileWithNoseOutsideFails) {
  auto det = testutil::synthetic_detection({100, 100}, {140, 100});
  det.landmarks[kNose] = {90, 125};
  auto f = frontal_check(det);
  EXPECT_FALSE(f.pass);
  EXPECT_EQ(f.reason, "nose not between eyes");
}

TEST(Frontal, EyeOnBoxEdgeFails) {
  auto det = testutil::synthetic_detection({100, 100}, {140, 100});
  det.box.x = det.left_eye().x;
  det.box.w = 80;
  EXPECT_FALSE(frontal_check(det).pass);
}

TEST(Frontal, NoseCheckUsesLevelledFrame) {
  // Face rolled by 90 degrees: eyes stacked vertically, nose to the side.
  auto det = testutil::synthetic_detection({100, 100}, {100, 140});
  det.landmarks[kNose] = {80, 120};
  det.box = {60, 80, 60, 80};
  EXPECT_TRUE(frontal_check(det).pass);
}

TEST(WidthFilter, InclusiveBoundary) {
  FaceCrop c;
  c.side_px = 64;
  EXPECT_TRUE(width_filter(c));
  c.side_px = 63;
  EXPECT_FALSE(width_filter(c));
  c.side_px = 500;
  EXPECT_TRUE(width_filter(c));
}

TEST(Decode, UndecodableRejected) {
  const auto path = std::filesystem::temp_directory_path() / "rlface_not_an_image.jpg";
  std::ofstream(path) << "<html>nope</html>";
  EXPECT_THROW(decode_image(path), Rejection);
}

class MtcnnTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    detector_ = new MtcnnDetector(kMtcnn);
    std::ifstream in(kFixtures / "faces" / "reference_detections.json");
    reference_ = new nlohmann::json(nlohmann::json::parse(in));
  }
  static void TearDownTestSuite() {
    delete detector_;
    delete reference_;
  }
  static std::vector<FaceDetection> run(const std::string& rel) { return detector_->detect(decode_image(kFixtures / rel)); }
  static std::vector<FaceDetection> reference(const std::string& rel) {
    std::vector<FaceDetection> out;
    for (const auto& d : reference_->at(rel)) {
      FaceDetection f;
      const auto& b = d["box"];
      f.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>() - b[0].get<double>(),
               b[3].get<double>() - b[1].get<double>()};
      f.confidence = d["confidence"].get<double>();
      for (int k = 0; k < 5; ++k) f.landmarks[k] = {d["landmarks"][k][0].get<double>(), d["landmarks"][k][1].get<double>()};
      out.push_back(f);
    }
    return out;
  }
  static inline MtcnnDetector* detector_ = nullptr;
  static inline nlohmann::json* reference_ = nullptr;
};

void expect_matches_reference(const std::vector<FaceDetection>& got, const std::vector<FaceDetection>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (const auto& w : want) {
    // Pair by nearest box centre; detection order is by area.
    const FaceDetection* best = nullptr;
    double best_d = 1e18;
    for (const auto& g : got) {
      const double d = std::hypot(g.box.x + g.box.w / 2 - w.box.x - w.box.w / 2, g.box.y + g.box.h / 2 - w.box.y - w.box.h / 2);
      if (d < best_d) best_d = d, best = &g;
    }
    ASSERT_NE(best, nullptr);
    EXPECT_NEAR(best->confidence, w.confidence, 1e-3);
    for (int k = 0; k < 5; ++k) {
      EXPECT_NEAR(best->landmarks[k].x, w.landmarks[k].x, 0.5) << k;
      EXPECT_NEAR(best->landmarks[k].y, w.landmarks[k].y, 0.5) << k;
    }
    EXPECT_NEAR(best->box.x, w.box.x, 1.0);
    EXPECT_NEAR(best->box.y, w.box.y, 1.0);
  }
}

TEST_F(MtcnnTest, PortraitHasOneConfidentFace) {
  auto dets = run("faces/portrait.jpg");
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_GT(dets[0].confidence, 0.98);
  expect_matches_reference(dets, reference("faces/portrait.jpg"));
  EXPECT_TRUE(frontal_check(dets[0]).pass);
}

TEST_F(MtcnnTest, BlankImageHasNoFace) { EXPECT_TRUE(run("faces/blank_gray.png").empty()); }

TEST_F(MtcnnTest, TwoPersonPhotoHasTwoFaces) {
  auto dets = run("faces/two_people.jpg");
  EXPECT_EQ(dets.size(), 2u);
  expect_matches_reference(dets, reference("faces/two_people.jpg"));
  EXPECT_EQ(gate_detections(dets).reason, "multiple faces");
}

TEST_F(MtcnnTest, PipelineImagesMatchReference) {
  for (int i = 0; i < 12; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "pipeline/images/person_%02d.jpg", i);
    auto dets = run(name);
    for (const auto& d : dets) check_invariants(d, 360, 360);
    SCOPED_TRACE(name);
    expect_matches_reference(dets, reference(name));
  }
}

TEST_F(MtcnnTest, EyesRedetectedOnCropNearCanonicalPositions) {
  cv::Mat img = decode_image(kFixtures / "faces" / "portrait.jpg");
  auto det = gate_detections(detector_->detect(img));
  ASSERT_TRUE(det.accepted);
  auto a = align_and_crop(img, *det.accepted);
  // Pad the crop so the detector sees some context around the face.
  cv::Mat padded;
  const int pad = a.crop.side_px / 2;
  cv::copyMakeBorder(a.crop.image, padded, pad, pad, pad, pad, cv::BORDER_REPLICATE);
  auto again = gate_detections(detector_->detect(padded), 0.9);
  ASSERT_TRUE(again.accepted) << again.reason;
  const double s = a.crop.side_px;
  EXPECT_NEAR((again.accepted->left_eye().x - pad) / s, 0.36, 0.03);
  EXPECT_NEAR((again.accepted->left_eye().y - pad) / s, 0.43, 0.03);
  EXPECT_NEAR((again.accepted->right_eye().x - pad) / s, 0.64, 0.03);
  EXPECT_NEAR((again.accepted->right_eye().y - pad) / s, 0.43, 0.03);
}

TEST(MtcnnAsset, MissingWeightsNamed) {
  try {
    MtcnnDetector d("/nonexistent/mtcnn");
    FAIL();
  } catch (const MissingArtifact& e) {
    EXPECT_NE(std::string(e.what()).find("pnet.rlw"), std::string::npos);
  }
}

}  // namespace
}  // namespace rlface::facepipe

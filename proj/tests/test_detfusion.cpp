#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tgx/detfusion.hpp"
#include "tgx/graph_io.hpp"

using namespace tgx;
namespace fs = std::filesystem;

namespace {

DetectionRecord det(Detector d, Box b, std::string object_id = "0", double score = 0.9) {
  return DetectionRecord{"img", std::move(object_id), d, b, score};
}

FeatureArray flat_image(std::size_t size, float value = 0.5f) {
  FeatureArray img = FeatureArray::zeros({1, 3, size, size});
  std::fill(img.values.begin(), img.values.end(), value);
  return img;
}

Box random_box(Rng& rng, double size = 50.0) {
  std::uniform_real_distribution<double> u(0.0, size);
  const double x = u(rng), y = u(rng);
  return {x, y, x + 1.0 + u(rng), y + 1.0 + u(rng)};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tgx_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int brute_force_target(const Box& y, const Box& r, const Box& gt) {
  const Box u{std::min(y.x1, r.x1), std::min(y.y1, r.y1), std::max(y.x2, r.x2), std::max(y.y2, r.y2)};
  const auto iou = [&](const Box& b) {
    const double iw = std::max(0.0, std::min(b.x2, gt.x2) - std::max(b.x1, gt.x1));
    const double ih = std::max(0.0, std::min(b.y2, gt.y2) - std::max(b.y1, gt.y1));
    const double inter = iw * ih;
    return inter / ((b.x2 - b.x1) * (b.y2 - b.y1) + (gt.x2 - gt.x1) * (gt.y2 - gt.y1) - inter);
  };
  const double a = iou(y), b = iou(r), c = iou(u);
  int best = 0;
  double best_v = a;
  if (b > best_v) best = 1, best_v = b;
  if (c > best_v) best = 2;
  return best;
}

}  // namespace

TEST(BoxIou, IdenticalAndDisjoint) {
  EXPECT_EQ(box_iou({0, 0, 2, 2}, {0, 0, 2, 2}), 1.0);
  EXPECT_EQ(box_iou({0, 0, 1, 1}, {2, 2, 3, 3}), 0.0);
  EXPECT_EQ(box_iou({0, 0, 1, 1}, {1, 0, 2, 1}), 0.0);
}

TEST(BoxIou, HalfOverlap) { EXPECT_NEAR(box_iou({0, 0, 2, 2}, {1, 0, 3, 2}), 2.0 / 6.0, 1e-15); }

TEST(BoxIou, DegenerateBoxThrows) {
  EXPECT_THROW(box_iou({0, 0, 0, 1}, {0, 0, 1, 1}), std::invalid_argument);
  EXPECT_THROW(box_iou({0, 0, 1, 1}, {2, 2, 1, 3}), std::invalid_argument);
}

TEST(BoxIou, InvariantsOnRandomBoxes) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const Box a = random_box(rng), b = random_box(rng);
    const double ab = box_iou(a, b);
    EXPECT_EQ(ab, box_iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    const bool disjoint = std::min(a.x2, b.x2) <= std::max(a.x1, b.x1) ||
                          std::min(a.y2, b.y2) <= std::max(a.y1, b.y1);
    EXPECT_EQ(ab == 0.0, disjoint);
    EXPECT_EQ(ab == 1.0, a == b);
    EXPECT_EQ(box_iou(a, a), 1.0);
  }
}

TEST(UnionBox, Examples) {
  EXPECT_EQ(union_box({1, 2, 3, 4}, {1, 2, 3, 4}), (Box{1, 2, 3, 4}));
  EXPECT_EQ(union_box({0, 0, 10, 10}, {2, 3, 4, 5}), (Box{0, 0, 10, 10}));
  EXPECT_EQ(union_box({0, 0, 1, 1}, {2, 2, 3, 3}), (Box{0, 0, 3, 3}));
}

TEST(UnionBox, ContainsBothInputs) {
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    const Box a = random_box(rng), b = random_box(rng);
    const Box u = union_box(a, b);
    EXPECT_TRUE(u.x1 <= a.x1 && u.y1 <= a.y1 && u.x2 >= a.x2 && u.y2 >= a.y2);
    EXPECT_TRUE(u.x1 <= b.x1 && u.y1 <= b.y1 && u.x2 >= b.x2 && u.y2 >= b.y2);
    EXPECT_GE(box_iou(u, a), a.area() / u.area());
    EXPECT_GE(box_iou(u, b), b.area() / u.area());
  }
}

TEST(CropResize, IntegerAlignedCropIsExact) {
  FeatureArray img = FeatureArray::zeros({1, 1, 128, 128});
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<float>(i % 251) / 251.0f;
  const FeatureArray out = crop_resize(img, {0, 0, 128, 128}, 128);
  EXPECT_EQ(out.values, img.values);
}

TEST(CropResize, ConstantRegion) {
  const FeatureArray out = crop_resize(flat_image(20, 0.3f), {2.5, 3.0, 17.25, 11.0}, 9);
  for (float v : out.values) EXPECT_FLOAT_EQ(v, 0.3f);
}

TEST(CropResize, CheckerboardMatchesSeparableBilinear) {
  FeatureArray img = FeatureArray::zeros({1, 1, 2, 2});
  img.values = {0.0f, 1.0f, 1.0f, 0.0f};
  const FeatureArray out = crop_resize(img, {0, 0, 2, 2}, 4);
  const auto coord = [](std::size_t u) { return std::clamp((u + 0.5) * 0.5 - 0.5, 0.0, 1.0); };
  for (std::size_t v = 0; v < 4; ++v)
    for (std::size_t u = 0; u < 4; ++u) {
      const double fx = coord(u), fy = coord(v);
      const double top = (1 - fx) * 0.0 + fx * 1.0;
      const double bot = (1 - fx) * 1.0 + fx * 0.0;
      EXPECT_NEAR(out.at(0, 0, v, u), (1 - fy) * top + fy * bot, 1e-6);
    }
}

TEST(CropResize, BoxOutsideImageThrows) {
  EXPECT_THROW(crop_resize(flat_image(8), {10, 10, 12, 12}, 4), std::invalid_argument);
}

TEST(DetectionGraph, BothDetectorsGiveThreeNodes) {
  const auto s = build_detection_graph(det(Detector::Yolo, {2, 2, 10, 10}),
                                       det(Detector::Retina, {4, 4, 14, 14}), flat_image(16),
                                       {3, 3, 12, 12}, 8);
  EXPECT_EQ(s.graph.num_nodes(), 3u);
  EXPECT_EQ(s.graph.edges, (std::vector<Edge>{{0, 2}, {1, 2}}));
  EXPECT_EQ(s.graph.edge_features, (std::vector<float>{0.0f, 1.0f}));
  EXPECT_EQ(s.node_classes, (std::vector<int>{kYoloClass, kRetinaClass, kUnionClass}));
  EXPECT_EQ(s.node_boxes[2], (Box{2, 2, 14, 14}));
  EXPECT_EQ(s.graph.node_features.shape, (Shape{3, 3, 8, 8}));
  EXPECT_EQ(s.graph.graph_label, s.target);
}

TEST(DetectionGraph, SingleDetectorGetsDuplicateUnion) {
  const auto s = build_detection_graph(det(Detector::Yolo, {2, 2, 10, 10}), std::nullopt,
                                       flat_image(16), {3, 3, 12, 12}, 4);
  EXPECT_EQ(s.graph.num_nodes(), 2u);
  EXPECT_EQ(s.graph.num_edges(), 1u);
  EXPECT_EQ(s.node_boxes[1], s.node_boxes[0]);
  EXPECT_EQ(s.target, kYoloClass);
  EXPECT_FALSE(s.box_for_class(kRetinaClass).has_value());
}

TEST(DetectionGraph, ExactRetinaBoxWins) {
  const Box gt{4, 4, 12, 12};
  const auto s = build_detection_graph(det(Detector::Yolo, {0, 0, 9, 9}), det(Detector::Retina, gt),
                                       flat_image(16), gt, 4);
  EXPECT_EQ(s.target, kRetinaClass);
}

TEST(ArgmaxIouTarget, TiesPreferLowerClass) {
  EXPECT_EQ(argmax_iou_target({0, 1, 2}, {0.5, 0.5, 0.5}), 0);
  EXPECT_EQ(argmax_iou_target({1, 2}, {0.7, 0.7}), 1);
  EXPECT_EQ(argmax_iou_target({0, 1, 2}, {0.5, 0.6, 0.6}), 1);
}

TEST(Confusion, PerfectPredictionsGiveIdentity) {
  const std::vector<int> t{0, 1, 2, 2, 1, 0, 2};
  const auto n = normalize_confusion(confusion_matrix(t, t, 3));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(n[i][j], i == j ? 1.0 : 0.0);
}

TEST(Confusion, RetinaRowReconstruction) {
  const auto n = normalize_confusion({{17, 5, 0}});
  char text[64];
  std::snprintf(text, sizeof(text), "%.4f %.4f %.4f", n[0][0], n[0][1], n[0][2]);
  EXPECT_STREQ(text, "0.7727 0.2273 0.0000");
}

TEST(Confusion, EmptyRowStaysZero) {
  const auto n = normalize_confusion({{0, 0, 0}, {1, 1, 2}});
  EXPECT_EQ(n[0], (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(n[1], (std::vector<double>{0.25, 0.25, 0.5}));
}

TEST(Confusion, RowsSumToOne) {
  Rng rng(3);
  std::uniform_int_distribution<int> cls(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> p(40), t(40);
    for (std::size_t i = 0; i < 40; ++i) p[i] = cls(rng), t[i] = cls(rng);
    for (const auto& row : normalize_confusion(confusion_matrix(p, t, 3))) {
      const double s = row[0] + row[1] + row[2];
      EXPECT_TRUE(std::abs(s - 1.0) < 1e-12 || s == 0.0);
    }
  }
}

TEST(AvgIou, SelectionEqualToGtScoresOne) {
  const Box gt{1, 1, 9, 9};
  const auto s = build_detection_graph(det(Detector::Yolo, gt), det(Detector::Retina, {0, 0, 5, 5}),
                                       flat_image(12), gt, 4);
  const auto rows = avg_iou_report({s}, {kYoloClass});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].avg_iou, 1.0);
  EXPECT_EQ(rows[0].model, "YOLOv11");
  EXPECT_EQ(rows[1].model, "RetinaNet");
  EXPECT_EQ(rows[2].model, "TGraphX");
}

TEST(AvgIou, MeanOverSamples) {
  const Box gt{0, 0, 10, 10};
  const auto a = build_detection_graph(det(Detector::Yolo, {0, 0, 5, 10}), std::nullopt, flat_image(12), gt, 4);
  const auto b = build_detection_graph(det(Detector::Yolo, {0, 0, 7, 10}), std::nullopt, flat_image(12), gt, 4);
  EXPECT_NEAR(avg_iou_report({a, b}, {kYoloClass, kYoloClass})[2].avg_iou, 0.6, 1e-15);
  // Retina never fired: its row counts IoU 0.
  EXPECT_EQ(avg_iou_report({a, b}, {kYoloClass, kYoloClass})[1].avg_iou, 0.0);
}

TEST(AvgIou, EmptyOrMismatchedInputThrows) {
  EXPECT_THROW(avg_iou_report({}, {}), std::invalid_argument);
  const auto a = build_detection_graph(det(Detector::Yolo, {0, 0, 5, 10}), std::nullopt, flat_image(12),
                                       {0, 0, 10, 10}, 4);
  EXPECT_THROW(avg_iou_report({a}, {kRetinaClass}), std::invalid_argument);
}

TEST(FusionReport, OraclePredictionsAndLayout) {
  SynthConfig cfg;
  cfg.samples = 20;
  cfg.image_size = 48;
  std::vector<DetectionGraphSample> samples;
  std::vector<int> targets;
  for (const auto& s : generate_synthetic(cfg)) {
    samples.push_back(build_detection_graph(det(Detector::Yolo, s.yolo), det(Detector::Retina, s.retina),
                                            render_synthetic_image(s.image), s.gt, 4));
    targets.push_back(samples.back().target);
  }
  const FusionReport r = make_fusion_report(samples, targets);
  EXPECT_EQ(r.accuracy, 1.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.normalized_confusion[i][j], i == j ? 1.0 : 0.0);
  const std::string table = fusion_report_table(r);
  EXPECT_NE(table.find("Index"), std::string::npos);
  EXPECT_NE(table.find("Test Avg IoU"), std::string::npos);
  EXPECT_NE(table.find("True: Retina"), std::string::npos);
  EXPECT_NE(table.find("TGraphX"), std::string::npos);
  const std::string jsonl = fusion_report_jsonl(r);
  EXPECT_EQ(std::count(jsonl.begin(), jsonl.end(), '\n'), 7);
}

TEST(Grouping, ObjectIdsAndGreedyMatching) {
  const std::vector<GroundTruthRecord> gt{{"a", "1", {0, 0, 10, 10}}, {"a", "2", {20, 20, 30, 30}}};
  std::vector<DetectionRecord> dets{
      {"a", "", Detector::Yolo, {21, 21, 31, 31}, 0.8},
      {"a", "", Detector::Yolo, {1, 1, 11, 11}, 0.7},
      {"a", "", Detector::Retina, {2, 2, 9, 9}, 0.9},
      {"a", "2", Detector::Retina, {19, 19, 29, 29}, 0.6},
      {"a", "", Detector::Retina, {50, 50, 60, 60}, 0.9},
  };
  const auto groups = group_detections(dets, gt);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].object_id, "1");
  EXPECT_EQ(groups[0].yolo->box, (Box{1, 1, 11, 11}));
  EXPECT_EQ(groups[0].retina->box, (Box{2, 2, 9, 9}));
  EXPECT_EQ(groups[1].yolo->box, (Box{21, 21, 31, 31}));
  EXPECT_EQ(groups[1].retina->box, (Box{19, 19, 29, 29}));
}

TEST(Grouping, UnknownObjectAndDuplicateGtAreDataErrors) {
  const std::vector<GroundTruthRecord> gt{{"a", "1", {0, 0, 10, 10}}};
  EXPECT_THROW(group_detections({{"a", "9", Detector::Yolo, {0, 0, 1, 1}, 0.5}}, gt), DataError);
  EXPECT_THROW(group_detections({}, {gt[0], gt[0]}), DataError);
}

TEST(Ingestion, MissingOrMalformedFilesAreDataErrors) {
  const fs::path dir = scratch_dir("ingest");
  EXPECT_THROW(read_detections(dir / "absent.jsonl"), DataError);
  std::ofstream(dir / "bad.jsonl") << R"({"image_id":"a","model":"ssd","x1":0,"y1":0,"x2":1,"y2":1})" << "\n";
  EXPECT_THROW(read_detections(dir / "bad.jsonl"), DataError);
  std::ofstream(dir / "flat.jsonl") << R"({"image_id":"a","object_id":"1","x1":0,"y1":0,"x2":0,"y2":1})" << "\n";
  EXPECT_THROW(read_ground_truth(dir / "flat.jsonl"), DataError);
  fs::remove_all(dir);
}

TEST(Images, PpmRoundTripAndPng) {
  const fs::path dir = scratch_dir("images");
  FeatureArray img = FeatureArray::zeros({1, 3, 3, 2});
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<float>(i * 15) / 255.0f;
  write_ppm(dir / "a.ppm", img);
  const FeatureArray back = read_image(dir / "a.ppm");
  ASSERT_EQ(back.shape, img.shape);
  for (std::size_t i = 0; i < img.values.size(); ++i) EXPECT_NEAR(back.values[i], img.values[i], 1e-6);

  const auto bytes =
      base64_decode("iVBORw0KGgoAAAANSUhEUgAAAAIAAAABCAIAAAB7QOjdAAAADUlEQVR4nGP4zwAE/wEHAAH/4iOeWQAAAABJRU5ErkJggg==");
  std::ofstream(dir / "b.png", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  const FeatureArray png = read_image(dir / "b.png");
  ASSERT_EQ(png.shape, (Shape{1, 3, 1, 2}));
  EXPECT_EQ(png.at(0, 0, 0, 0), 1.0f);
  EXPECT_EQ(png.at(0, 2, 0, 0), 0.0f);
  EXPECT_EQ(png.at(0, 2, 0, 1), 1.0f);
  EXPECT_THROW(read_image(dir / "missing.png"), DataError);
  fs::remove_all(dir);
}

TEST(Synthetic, ConstructedTargetsMatchBruteForce) {
  SynthConfig cfg;
  cfg.samples = 1000;
  cfg.seed = 5;
  std::array<std::size_t, 3> counts{};
  for (const auto& s : generate_synthetic(cfg)) {
    EXPECT_EQ(s.target, brute_force_target(s.yolo, s.retina, s.gt));
    ++counts[s.target];
  }
  EXPECT_EQ(counts, (std::array<std::size_t, 3>{200, 200, 600}));
}

TEST(Synthetic, JitterTargetsMatchBruteForce) {
  SynthConfig cfg;
  cfg.samples = 1000;
  cfg.mode = SynthMode::Jitter;
  for (const auto& s : generate_synthetic(cfg)) EXPECT_EQ(s.target, brute_force_target(s.yolo, s.retina, s.gt));
}

TEST(Synthetic, ZeroNoiseTiesGoToYolo) {
  SynthConfig cfg;
  cfg.samples = 50;
  cfg.mode = SynthMode::Jitter;
  cfg.yolo_noise = cfg.retina_noise = 0.0;
  for (const auto& s : generate_synthetic(cfg)) {
    EXPECT_EQ(s.yolo, s.gt);
    EXPECT_EQ(s.retina, s.gt);
    EXPECT_EQ(s.target, kYoloClass);
  }
}

TEST(Synthetic, TighterRetinaWinsMajority) {
  SynthConfig cfg;
  cfg.samples = 400;
  cfg.mode = SynthMode::Jitter;
  cfg.yolo_noise = 0.2;
  cfg.retina_noise = 0.03;
  std::size_t retina = 0;
  for (const auto& s : generate_synthetic(cfg)) {
    const int t = brute_force_target(s.yolo, s.retina, s.gt);
    EXPECT_EQ(s.target, t);
    retina += t == kRetinaClass;
  }
  EXPECT_GT(retina, cfg.samples / 2);
}

TEST(Synthetic, FixedSeedFilesAreByteIdentical) {
  SynthConfig cfg;
  cfg.samples = 40;
  cfg.seed = 9;
  const fs::path a = scratch_dir("synth_a"), b = scratch_dir("synth_b");
  const auto sizes = write_synthetic_dataset(a, cfg);
  write_synthetic_dataset(b, cfg);
  EXPECT_EQ(sizes, (std::array<std::size_t, 3>{28, 6, 6}));
  for (const char* split : {"train", "val", "test"})
    for (const char* file : {"detections.jsonl", "ground_truth.jsonl", "images.jsonl"}) {
      const std::string x = slurp(a / split / file);
      EXPECT_FALSE(x.empty());
      EXPECT_EQ(x, slurp(b / split / file)) << split << "/" << file;
    }
  const auto samples = load_detection_split(a / "train", 8);
  EXPECT_EQ(samples.size(), 28u);
  EXPECT_EQ(to_graph_dataset(samples).size(), 28u);
  fs::remove_all(a);
  fs::remove_all(b);
}

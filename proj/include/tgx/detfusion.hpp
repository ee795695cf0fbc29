#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tgx/graph.hpp"

namespace tgx {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  bool valid() const { return x1 < x2 && y1 < y2; }
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool operator==(const Box&) const = default;
};

double box_iou(const Box& a, const Box& b);
Box union_box(const Box& a, const Box& b);
// Intersection with [0, width] x [0, height]; may be degenerate.
Box clip_box(const Box& box, double width, double height);

// Node classes of a detection graph; also the prediction classes.
enum class Detector : int { Yolo = 0, Retina = 1 };
inline constexpr int kYoloClass = 0;
inline constexpr int kRetinaClass = 1;
inline constexpr int kUnionClass = 2;
inline constexpr std::size_t kFusionClasses = 3;
inline constexpr std::size_t kDefaultNodeSize = 128;

Detector parse_detector(const std::string& text);
std::string to_string(Detector d);

struct DetectionRecord {
  std::string image_id;
  std::string object_id;  // empty when detections must be matched to ground truth
  Detector model = Detector::Yolo;
  Box box;
  double score = 1.0;
};

struct GroundTruthRecord {
  std::string image_id;
  std::string object_id;
  Box box;
};

// Bilinear resize of the clipped box region to out x out. Output pixel u
// samples the source at x1 + (u + 0.5) * w / out - 0.5 (pixel centers at
// integer + 0.5), clamped to the image.
FeatureArray crop_resize(const FeatureArray& image, const Box& box, std::size_t out = kDefaultNodeSize);

struct DetectionGraphSample {
  std::string image_id;
  std::string object_id;
  Graph graph;                   // node_labels hold the node classes
  std::vector<int> node_classes;  // same as graph.node_labels
  std::vector<Box> node_boxes;
  std::vector<double> node_iou;  // IoU of each node box with gt
  Box gt;
  int target = 0;

  // Box of the node with class `c`, if present.
  std::optional<Box> box_for_class(int c) const;
};

// Nodes: present detectors in class order, then the union node (last). Each
// detector node sends one edge to the union node whose scalar feature is the
// detector's class id. The target is the argmax-IoU node class; ties go to
// the lower class.
DetectionGraphSample build_detection_graph(const std::optional<DetectionRecord>& yolo,
                                           const std::optional<DetectionRecord>& retina,
                                           const FeatureArray& image, const Box& gt,
                                           std::size_t node_size = kDefaultNodeSize);

// Argmax-IoU label over present classes (lower class wins ties).
int argmax_iou_target(const std::vector<int>& classes, const std::vector<double>& ious);

using ConfusionCounts = std::vector<std::vector<std::size_t>>;
ConfusionCounts confusion_matrix(const std::vector<int>& predictions, const std::vector<int>& targets,
                                 std::size_t classes);
std::vector<std::vector<double>> normalize_confusion(const ConfusionCounts& counts);

struct IouReportRow {
  std::size_t index = 0;
  std::string model;
  double avg_iou = 0.0;
};

// Rows YOLOv11, RetinaNet, TGraphX. A detector that did not fire on a sample
// contributes IoU 0 to its own row; the TGraphX row uses the box of the node
// whose class was predicted.
std::vector<IouReportRow> avg_iou_report(const std::vector<DetectionGraphSample>& samples,
                                         const std::vector<int>& predictions);

struct FusionReport {
  std::size_t samples = 0;
  double accuracy = 0.0;
  ConfusionCounts confusion;
  std::vector<std::vector<double>> normalized_confusion;
  std::vector<IouReportRow> iou_rows;
};

FusionReport make_fusion_report(const std::vector<DetectionGraphSample>& samples,
                                const std::vector<int>& predictions);
// JSONL records: one "summary", one "confusion" per true class, one "avg_iou" per row.
std::string fusion_report_jsonl(const FusionReport& report);
std::string fusion_report_table(const FusionReport& report);

// ---- ingestion ----

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path);
std::vector<GroundTruthRecord> read_ground_truth(const std::filesystem::path& path);

struct ObjectGroup {
  std::string image_id;
  std::string object_id;
  Box gt;
  std::optional<DetectionRecord> yolo;
  std::optional<DetectionRecord> retina;
};

// Groups detections by object. Records carrying an object_id join that object
// directly; the rest are matched per image and detector greedily by
// descending IoU with the ground-truth boxes (IoU > 0 required). Objects no
// detector fired on are dropped. Output sorted by (image_id, object_id).
std::vector<ObjectGroup> group_detections(const std::vector<DetectionRecord>& detections,
                                          const std::vector<GroundTruthRecord>& ground_truth);

// ---- images ----

// [1, 3, H, W] with values in [0, 1].
FeatureArray read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const FeatureArray& image);
FeatureArray read_png(const std::filesystem::path& path);
FeatureArray read_image(const std::filesystem::path& path);

// Parameters of a rendered synthetic scene: a noisy background and one
// rectangular "car" with a dark frame.
struct SyntheticImageSpec {
  std::size_t width = 96;
  std::size_t height = 96;
  std::uint64_t seed = 0;
  Box car;
  std::array<double, 3> color{0.8, 0.2, 0.2};
};

FeatureArray render_synthetic_image(const SyntheticImageSpec& spec);

// images.jsonl: {"image_id", "path"} (relative to the file) or
// {"image_id", "synthetic": {...}}.
class ImageSource {
 public:
  static ImageSource from_index(const std::filesystem::path& path);
  void add_synthetic(const std::string& image_id, const SyntheticImageSpec& spec);
  void add_path(const std::string& image_id, const std::filesystem::path& path);

  FeatureArray load(const std::string& image_id) const;
  bool contains(const std::string& image_id) const;

 private:
  std::map<std::string, std::filesystem::path> paths_;
  std::map<std::string, SyntheticImageSpec> synthetic_;
};

// Reads detections.jsonl, ground_truth.jsonl and images.jsonl from `dir`.
std::vector<DetectionGraphSample> load_detection_split(const std::filesystem::path& dir,
                                                       std::size_t node_size = kDefaultNodeSize);

GraphDataset to_graph_dataset(const std::vector<DetectionGraphSample>& samples);

// ---- synthetic data ----

enum class SynthMode { Jitter, Constructed };
SynthMode parse_synth_mode(const std::string& text);
std::string to_string(SynthMode m);

struct SynthConfig {
  std::size_t samples = 1000;
  std::uint64_t seed = 1;
  SynthMode mode = SynthMode::Constructed;
  std::size_t image_size = 96;
  double yolo_noise = 0.1;    // jitter std as a fraction of box size
  double retina_noise = 0.1;
  std::array<double, 3> class_balance{0.2, 0.2, 0.6};  // constructed mode: yolo, retina, union
  double min_margin = 0.05;  // constructed mode: best IoU minus runner-up
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  void validate() const;
};

struct SynthSample {
  std::string image_id;
  SyntheticImageSpec image;
  Box gt;
  Box yolo;
  Box retina;
  int target = 0;
};

std::vector<SynthSample> generate_synthetic(const SynthConfig& config);

// Train/val/test sample counts: floor of each fraction, the rest to test.
std::array<std::size_t, 3> synthetic_split_sizes(const SynthConfig& config);

// Renders each sample and builds its detection graph in memory.
std::vector<DetectionGraphSample> synthetic_detection_graphs(const std::vector<SynthSample>& samples,
                                                             std::size_t node_size = kDefaultNodeSize);

// Writes train/, val/, test/ under `out`, each holding the three JSONL files.
// Returns the sample count per split.
std::array<std::size_t, 3> write_synthetic_dataset(const std::filesystem::path& out,
                                                   const SynthConfig& config);

}  // namespace tgx

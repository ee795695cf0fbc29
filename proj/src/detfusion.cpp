#include "tgx/detfusion.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tgx/random.hpp"

namespace tgx {

using nlohmann::json;

namespace {

const char* const kClassNames[kFusionClasses] = {"YOLO", "Retina", "Union"};
const char* const kReportModels[kFusionClasses] = {"YOLOv11", "RetinaNet", "TGraphX"};

void require_valid(const Box& b, const char* what) {
  if (!b.valid() || !std::isfinite(b.x1) || !std::isfinite(b.y1) || !std::isfinite(b.x2) ||
      !std::isfinite(b.y2)) {
    std::ostringstream os;
    os << what << ": degenerate box (" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2 << ")";
    throw std::invalid_argument(os.str());
  }
}

std::string format_fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

double box_iou(const Box& a, const Box& b) {
  require_valid(a, "box_iou");
  require_valid(b, "box_iou");
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  // Larger area plus the uncovered part of the smaller one: symmetric, and
  // exact when one box contains the other.
  const double aa = a.area(), ab = b.area();
  return inter / (std::max(aa, ab) + (std::min(aa, ab) - inter));
}

Box union_box(const Box& a, const Box& b) {
  require_valid(a, "union_box");
  require_valid(b, "union_box");
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
}

Box clip_box(const Box& box, double width, double height) {
  return {std::clamp(box.x1, 0.0, width), std::clamp(box.y1, 0.0, height),
          std::clamp(box.x2, 0.0, width), std::clamp(box.y2, 0.0, height)};
}

Detector parse_detector(const std::string& text) {
  if (text == "yolo") return Detector::Yolo;
  if (text == "retina") return Detector::Retina;
  throw std::invalid_argument("unknown detector model: " + text);
}

std::string to_string(Detector d) { return d == Detector::Yolo ? "yolo" : "retina"; }

FeatureArray crop_resize(const FeatureArray& image, const Box& box, std::size_t out) {
  const Shape& s = image.shape;
  if (s[0] != 1 || s[2] == 0 || s[3] == 0) {
    throw std::invalid_argument("crop_resize: expected a non-empty image [1, C, H, W]");
  }
  if (out == 0) throw std::invalid_argument("crop_resize: output size must be positive");
  const Box c = clip_box(box, static_cast<double>(s[3]), static_cast<double>(s[2]));
  if (!c.valid()) throw std::invalid_argument("crop_resize: box has zero area inside the image");
  FeatureArray result = FeatureArray::zeros(Shape{1, s[1], out, out});
  const double step_x = c.width() / static_cast<double>(out);
  const double step_y = c.height() / static_cast<double>(out);
  const double max_x = static_cast<double>(s[3] - 1);
  const double max_y = static_cast<double>(s[2] - 1);
  struct Tap {
    std::size_t i0, i1;
    double f;
  };
  const auto taps = [](double start, double step, double max, std::size_t n) {
    std::vector<Tap> t(n);
    for (std::size_t u = 0; u < n; ++u) {
      const double src = std::clamp(start + (static_cast<double>(u) + 0.5) * step - 0.5, 0.0, max);
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      const std::size_t i1 = std::min(i0 + 1, static_cast<std::size_t>(max));
      t[u] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto tx = taps(c.x1, step_x, max_x, out);
  const auto ty = taps(c.y1, step_y, max_y, out);
  for (std::size_t ch = 0; ch < s[1]; ++ch) {
    for (std::size_t v = 0; v < out; ++v) {
      const Tap& y = ty[v];
      for (std::size_t u = 0; u < out; ++u) {
        const Tap& x = tx[u];
        const double top = (1 - x.f) * image.at(0, ch, y.i0, x.i0) + x.f * image.at(0, ch, y.i0, x.i1);
        const double bot = (1 - x.f) * image.at(0, ch, y.i1, x.i0) + x.f * image.at(0, ch, y.i1, x.i1);
        result.at(0, ch, v, u) = static_cast<float>((1 - y.f) * top + y.f * bot);
      }
    }
  }
  return result;
}

std::optional<Box> DetectionGraphSample::box_for_class(int c) const {
  for (std::size_t i = 0; i < node_classes.size(); ++i) {
    if (node_classes[i] == c) return node_boxes[i];
  }
  return std::nullopt;
}

int argmax_iou_target(const std::vector<int>& classes, const std::vector<double>& ious) {
  if (classes.empty() || classes.size() != ious.size()) {
    throw std::invalid_argument("argmax_iou_target: classes and IoUs must align and be non-empty");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < classes.size(); ++i) {
    if (ious[i] > ious[best] || (ious[i] == ious[best] && classes[i] < classes[best])) best = i;
  }
  return classes[best];
}

DetectionGraphSample build_detection_graph(const std::optional<DetectionRecord>& yolo,
                                           const std::optional<DetectionRecord>& retina,
                                           const FeatureArray& image, const Box& gt,
                                           std::size_t node_size) {
  if (!yolo && !retina) throw std::invalid_argument("build_detection_graph: no detection");
  require_valid(gt, "build_detection_graph: ground truth");
  DetectionGraphSample s;
  s.gt = gt;
  const DetectionRecord& any = yolo ? *yolo : *retina;
  s.image_id = any.image_id;
  s.object_id = any.object_id;
  if (yolo) {
    require_valid(yolo->box, "build_detection_graph: yolo box");
    s.node_classes.push_back(kYoloClass);
    s.node_boxes.push_back(yolo->box);
  }
  if (retina) {
    require_valid(retina->box, "build_detection_graph: retina box");
    s.node_classes.push_back(kRetinaClass);
    s.node_boxes.push_back(retina->box);
  }
  s.node_classes.push_back(kUnionClass);
  s.node_boxes.push_back(yolo && retina ? union_box(yolo->box, retina->box) : any.box);
  for (const Box& b : s.node_boxes) s.node_iou.push_back(box_iou(b, gt));
  s.target = argmax_iou_target(s.node_classes, s.node_iou);

  const std::size_t n = s.node_boxes.size();
  const std::size_t channels = image.shape[1];
  Graph& g = s.graph;
  g.node_features = FeatureArray::zeros(Shape{n, channels, node_size, node_size});
  const std::size_t row = channels * node_size * node_size;
  for (std::size_t i = 0; i < n; ++i) {
    const FeatureArray crop = crop_resize(image, s.node_boxes[i], node_size);
    std::copy(crop.values.begin(), crop.values.end(), g.node_features.values.begin() + i * row);
  }
  g.edge_feature_dim = 1;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    g.edges.push_back({i, n - 1});
    g.edge_features.push_back(static_cast<float>(s.node_classes[i]));
  }
  g.node_labels = s.node_classes;
  g.graph_label = s.target;
  g.node_values = s.node_iou;
  graph_validate(g);
  return s;
}

ConfusionCounts confusion_matrix(const std::vector<int>& predictions, const std::vector<int>& targets,
                                 std::size_t classes) {
  if (predictions.size() != targets.size()) {
    throw std::invalid_argument("confusion_matrix: predictions and targets differ in length");
  }
  ConfusionCounts counts(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int t = targets[i], p = predictions[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= classes ||
        static_cast<std::size_t>(p) >= classes) {
      throw std::invalid_argument("confusion_matrix: class id out of range");
    }
    ++counts[t][p];
  }
  return counts;
}

std::vector<std::vector<double>> normalize_confusion(const ConfusionCounts& counts) {
  std::vector<std::vector<double>> out;
  for (const auto& row : counts) {
    const double total = static_cast<double>(std::accumulate(row.begin(), row.end(), std::size_t{0}));
    std::vector<double> r(row.size(), 0.0);
    if (total > 0) {
      for (std::size_t j = 0; j < row.size(); ++j) r[j] = static_cast<double>(row[j]) / total;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<IouReportRow> avg_iou_report(const std::vector<DetectionGraphSample>& samples,
                                         const std::vector<int>& predictions) {
  if (samples.empty()) throw std::invalid_argument("avg_iou_report: empty sample set");
  if (predictions.size() != samples.size()) {
    throw std::invalid_argument("avg_iou_report: one prediction per sample required");
  }
  std::array<double, 3> sums{0, 0, 0};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    for (const int c : {kYoloClass, kRetinaClass}) {
      if (const auto b = s.box_for_class(c)) sums[c] += box_iou(*b, s.gt);
    }
    const auto chosen = s.box_for_class(predictions[i]);
    if (!chosen) {
      throw std::invalid_argument("avg_iou_report: predicted class " + std::to_string(predictions[i]) +
                                  " is not a node of sample " + std::to_string(i));
    }
    sums[2] += box_iou(*chosen, s.gt);
  }
  std::vector<IouReportRow> rows;
  for (std::size_t k = 0; k < 3; ++k) {
    rows.push_back({k + 1, kReportModels[k], sums[k] / static_cast<double>(samples.size())});
  }
  return rows;
}

FusionReport make_fusion_report(const std::vector<DetectionGraphSample>& samples,
                                const std::vector<int>& predictions) {
  FusionReport r;
  r.samples = samples.size();
  r.iou_rows = avg_iou_report(samples, predictions);
  std::vector<int> targets;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    targets.push_back(samples[i].target);
    correct += predictions[i] == samples[i].target;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  r.confusion = confusion_matrix(predictions, targets, kFusionClasses);
  r.normalized_confusion = normalize_confusion(r.confusion);
  return r;
}

std::string fusion_report_jsonl(const FusionReport& report) {
  std::string out;
  out += json{{"record", "summary"}, {"samples", report.samples}, {"accuracy", report.accuracy}}.dump() + "\n";
  for (std::size_t t = 0; t < report.confusion.size(); ++t) {
    out += json{{"record", "confusion"},
                {"true_class", kClassNames[t]},
                {"counts", report.confusion[t]},
                {"normalized", report.normalized_confusion[t]}}
               .dump() +
           "\n";
  }
  for (const auto& row : report.iou_rows) {
    out += json{{"record", "avg_iou"}, {"index", row.index}, {"model", row.model}, {"avg_iou", row.avg_iou}}
               .dump() +
           "\n";
  }
  return out;
}

std::string fusion_report_table(const FusionReport& report) {
  std::ostringstream os;
  os << "Samples: " << report.samples << "  Accuracy: " << format_fixed(report.accuracy, 4) << "\n\n";
  os << "Normalized confusion matrix (rows: true class, columns: predicted)\n";
  os << std::left << std::setw(16) << "";
  for (const char* name : kClassNames) os << std::setw(14) << (std::string("Pred: ") + name);
  os << "\n";
  for (std::size_t t = 0; t < report.normalized_confusion.size(); ++t) {
    os << std::setw(16) << (std::string("True: ") + kClassNames[t]);
    for (const double v : report.normalized_confusion[t]) os << std::setw(14) << format_fixed(v, 4);
    os << "\n";
  }
  os << "\n" << std::setw(8) << "Index" << std::setw(12) << "Model" << "Test Avg IoU\n";
  for (const auto& row : report.iou_rows) {
    os << std::setw(8) << row.index << std::setw(12) << row.model << format_fixed(row.avg_iou, 6) << "\n";
  }
  return os.str();
}

// ---- ingestion ----

namespace {

template <typename F>
void for_each_json_line(const std::filesystem::path& path, F&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

Box box_from_json(const json& j) {
  Box b{j.at("x1").get<double>(), j.at("y1").get<double>(), j.at("x2").get<double>(),
        j.at("y2").get<double>()};
  require_valid(b, "record");
  return b;
}

std::string id_from_json(const json& j, const char* key) {
  if (!j.contains(key)) return "";
  const json& v = j.at(key);
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path) {
  std::vector<DetectionRecord> out;
  for_each_json_line(path, [&](const json& j) {
    DetectionRecord r;
    r.image_id = id_from_json(j, "image_id");
    if (r.image_id.empty()) throw std::invalid_argument("missing image_id");
    r.object_id = id_from_json(j, "object_id");
    r.model = parse_detector(j.at("model").get<std::string>());
    r.box = box_from_json(j);
    r.score = j.value("score", 1.0);
    if (!(r.score >= 0.0 && r.score <= 1.0)) throw std::invalid_argument("score outside [0, 1]");
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<GroundTruthRecord> read_ground_truth(const std::filesystem::path& path) {
  std::vector<GroundTruthRecord> out;
  for_each_json_line(path, [&](const json& j) {
    GroundTruthRecord r;
    r.image_id = id_from_json(j, "image_id");
    r.object_id = id_from_json(j, "object_id");
    if (r.image_id.empty() || r.object_id.empty()) {
      throw std::invalid_argument("ground truth needs image_id and object_id");
    }
    r.box = box_from_json(j);
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<ObjectGroup> group_detections(const std::vector<DetectionRecord>& detections,
                                          const std::vector<GroundTruthRecord>& ground_truth) {
  std::map<std::pair<std::string, std::string>, ObjectGroup> groups;
  for (const auto& gt : ground_truth) {
    const auto key = std::make_pair(gt.image_id, gt.object_id);
    if (groups.count(key)) throw DataError("duplicate ground truth for " + gt.image_id + "/" + gt.object_id);
    groups[key] = ObjectGroup{gt.image_id, gt.object_id, gt.box, std::nullopt, std::nullopt};
  }
  const auto slot = [](ObjectGroup& g, Detector d) -> std::optional<DetectionRecord>& {
    return d == Detector::Yolo ? g.yolo : g.retina;
  };
  const auto assign = [&](ObjectGroup& g, const DetectionRecord& det) {
    auto& s = slot(g, det.model);
    if (!s || det.score > s->score) {
      DetectionRecord r = det;
      r.object_id = g.object_id;
      s = r;
    }
  };
  // Detections carrying an object id.
  std::map<std::string, std::vector<std::size_t>> unassigned;  // image -> detection indices
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& det = detections[i];
    if (det.object_id.empty()) {
      unassigned[det.image_id].push_back(i);
      continue;
    }
    const auto it = groups.find({det.image_id, det.object_id});
    if (it == groups.end()) {
      throw DataError("detection for unknown object " + det.image_id + "/" + det.object_id);
    }
    assign(it->second, det);
  }
  // Greedy IoU matching for the rest, per image and detector.
  for (const auto& [image_id, indices] : unassigned) {
    for (const Detector model : {Detector::Yolo, Detector::Retina}) {
      struct Pair {
        double iou;
        std::size_t det;
        ObjectGroup* group;
      };
      std::vector<Pair> pairs;
      for (const std::size_t i : indices) {
        if (detections[i].model != model) continue;
        for (auto it = groups.lower_bound({image_id, ""});
             it != groups.end() && it->first.first == image_id; ++it) {
          if (slot(it->second, model)) continue;
          const double iou = box_iou(detections[i].box, it->second.gt);
          if (iou > 0) pairs.push_back({iou, i, &it->second});
        }
      }
      std::stable_sort(pairs.begin(), pairs.end(),
                       [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
      std::set<std::size_t> used;
      for (const Pair& p : pairs) {
        if (used.count(p.det) || slot(*p.group, model)) continue;
        assign(*p.group, detections[p.det]);
        used.insert(p.det);
      }
    }
  }
  std::vector<ObjectGroup> out;
  for (auto& [key, g] : groups) {
    if (g.yolo || g.retina) out.push_back(std::move(g));
  }
  return out;
}

// ---- images ----

namespace {

std::string next_ppm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok += c;
  }
  return tok;
}

}  // namespace

FeatureArray read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  const std::string magic = next_ppm_token(in);
  if (magic != "P6" && magic != "P3") throw DataError(path.string() + ": not a PPM (P3/P6) file");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_ppm_token(in));
    h = std::stoul(next_ppm_token(in));
    maxval = std::stoul(next_ppm_token(in));
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw DataError(path.string() + ": unsupported PPM dimensions or maxval");
  }
  FeatureArray img = FeatureArray::zeros(Shape{1, 3, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        int v = 0;
        if (magic == "P6") {
          const int byte = in.get();
          if (byte == EOF) throw DataError(path.string() + ": truncated PPM data");
          v = byte;
        } else {
          const std::string tok = next_ppm_token(in);
          if (tok.empty()) throw DataError(path.string() + ": truncated PPM data");
          v = std::stoi(tok);
        }
        img.at(0, c, y, x) = static_cast<float>(v) / static_cast<float>(maxval);
      }
    }
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const FeatureArray& image) {
  const Shape& s = image.shape;
  if (s[0] != 1 || s[1] != 3) throw std::invalid_argument("write_ppm: expected [1, 3, H, W]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << s[3] << " " << s[2] << "\n255\n";
  for (std::size_t y = 0; y < s[2]; ++y) {
    for (std::size_t x = 0; x < s[3]; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(image.at(0, c, y, x)), 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
}

FeatureArray read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw DataError("cannot decode PNG " + path.string() + ": " + message);
  }
  const std::size_t w = png.width, h = png.height;
  FeatureArray img = FeatureArray::zeros(Shape{1, 3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(0, c, y, x) = static_cast<float>(buffer[(y * w + x) * 3 + c]) / 255.0f;
  return img;
}

FeatureArray read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm" || ext == ".pnm") return read_ppm(path);
  throw DataError("unsupported image format: " + path.string());
}

FeatureArray render_synthetic_image(const SyntheticImageSpec& spec) {
  if (spec.width == 0 || spec.height == 0) throw std::invalid_argument("synthetic image: zero size");
  FeatureArray img = FeatureArray::zeros(Shape{1, 3, spec.height, spec.width});
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> noise(-0.12, 0.12);
  constexpr double kFrame = 2.0;
  const Box inner{spec.car.x1 + kFrame, spec.car.y1 + kFrame, spec.car.x2 - kFrame, spec.car.y2 - kFrame};
  const auto inside = [](const Box& b, double x, double y) {
    return x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
  };
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      const double cx = static_cast<double>(x) + 0.5, cy = static_cast<double>(y) + 0.5;
      for (std::size_t c = 0; c < 3; ++c) {
        double v = 0.4;
        if (inside(inner, cx, cy)) {
          v = spec.color[c];
        } else if (inside(spec.car, cx, cy)) {
          v = 0.05;
        }
        img.at(0, c, y, x) = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
      }
    }
  }
  return img;
}

namespace {

json synthetic_to_json(const SyntheticImageSpec& s) {
  return json{{"width", s.width},
              {"height", s.height},
              {"seed", s.seed},
              {"car", {s.car.x1, s.car.y1, s.car.x2, s.car.y2}},
              {"color", s.color}};
}

SyntheticImageSpec synthetic_from_json(const json& j) {
  SyntheticImageSpec s;
  s.width = j.at("width").get<std::size_t>();
  s.height = j.at("height").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  const auto car = j.at("car").get<std::vector<double>>();
  if (car.size() != 4) throw std::invalid_argument("synthetic car box needs 4 numbers");
  s.car = {car[0], car[1], car[2], car[3]};
  s.color = j.at("color").get<std::array<double, 3>>();
  return s;
}

}  // namespace

ImageSource ImageSource::from_index(const std::filesystem::path& path) {
  ImageSource src;
  const auto base = path.parent_path();
  for_each_json_line(path, [&](const json& j) {
    const std::string id = id_from_json(j, "image_id");
    if (id.empty()) throw std::invalid_argument("missing image_id");
    if (j.contains("synthetic")) {
      src.add_synthetic(id, synthetic_from_json(j.at("synthetic")));
    } else if (j.contains("path")) {
      std::filesystem::path p = j.at("path").get<std::string>();
      src.add_path(id, p.is_absolute() ? p : base / p);
    } else {
      throw std::invalid_argument("image record needs 'path' or 'synthetic'");
    }
  });
  return src;
}

void ImageSource::add_synthetic(const std::string& image_id, const SyntheticImageSpec& spec) {
  synthetic_[image_id] = spec;
}

void ImageSource::add_path(const std::string& image_id, const std::filesystem::path& path) {
  paths_[image_id] = path;
}

bool ImageSource::contains(const std::string& image_id) const {
  return paths_.count(image_id) > 0 || synthetic_.count(image_id) > 0;
}

FeatureArray ImageSource::load(const std::string& image_id) const {
  if (const auto it = synthetic_.find(image_id); it != synthetic_.end()) {
    return render_synthetic_image(it->second);
  }
  if (const auto it = paths_.find(image_id); it != paths_.end()) return read_image(it->second);
  throw DataError("no image registered for image_id " + image_id);
}

std::vector<DetectionGraphSample> load_detection_split(const std::filesystem::path& dir,
                                                       std::size_t node_size) {
  const auto detections = read_detections(dir / "detections.jsonl");
  const auto gt = read_ground_truth(dir / "ground_truth.jsonl");
  const ImageSource images = ImageSource::from_index(dir / "images.jsonl");
  const auto groups = group_detections(detections, gt);
  std::vector<DetectionGraphSample> samples;
  std::string cached_id;
  FeatureArray cached;
  for (const auto& g : groups) {
    if (g.image_id != cached_id) {
      cached = images.load(g.image_id);
      cached_id = g.image_id;
    }
    try {
      samples.push_back(build_detection_graph(g.yolo, g.retina, cached, g.gt, node_size));
    } catch (const std::invalid_argument& e) {
      throw DataError(g.image_id + "/" + g.object_id + ": " + e.what());
    }
    samples.back().object_id = g.object_id;
  }
  return samples;
}

GraphDataset to_graph_dataset(const std::vector<DetectionGraphSample>& samples) {
  std::vector<Graph> graphs;
  graphs.reserve(samples.size());
  for (const auto& s : samples) graphs.push_back(s.graph);
  return GraphDataset(std::move(graphs));
}

// ---- synthetic data ----

SynthMode parse_synth_mode(const std::string& text) {
  if (text == "jitter") return SynthMode::Jitter;
  if (text == "constructed") return SynthMode::Constructed;
  throw std::invalid_argument("unknown synthetic mode: " + text);
}

std::string to_string(SynthMode m) { return m == SynthMode::Jitter ? "jitter" : "constructed"; }

void SynthConfig::validate() const {
  if (samples < 1) throw std::invalid_argument("synth: samples must be >= 1");
  if (image_size < 24) throw std::invalid_argument("synth: image_size must be >= 24");
  if (!(yolo_noise >= 0) || !(retina_noise >= 0)) throw std::invalid_argument("synth: noise must be >= 0");
  double total = 0;
  for (const double p : class_balance) {
    if (!(p >= 0)) throw std::invalid_argument("synth: class_balance entries must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("synth: class_balance must sum to 1");
  if (!(min_margin >= 0 && min_margin < 1)) throw std::invalid_argument("synth: min_margin must be in [0, 1)");
  if (!(train_fraction >= 0 && val_fraction >= 0 && train_fraction + val_fraction <= 1)) {
    throw std::invalid_argument("synth: split fractions must be non-negative and sum to <= 1");
  }
}

namespace {

Box make_valid(Box b, double size) {
  if (b.x1 > b.x2) std::swap(b.x1, b.x2);
  if (b.y1 > b.y2) std::swap(b.y1, b.y2);
  b = clip_box(b, size, size);
  constexpr double kMin = 4.0;
  if (b.width() < kMin) {
    const double c = std::clamp((b.x1 + b.x2) / 2, kMin / 2, size - kMin / 2);
    b.x1 = c - kMin / 2;
    b.x2 = c + kMin / 2;
  }
  if (b.height() < kMin) {
    const double c = std::clamp((b.y1 + b.y2) / 2, kMin / 2, size - kMin / 2);
    b.y1 = c - kMin / 2;
    b.y2 = c + kMin / 2;
  }
  return b;
}

Box jitter(const Box& b, double sigma, double size, Rng& rng) {
  if (sigma == 0) return b;
  std::normal_distribution<double> nx(0.0, sigma * b.width());
  std::normal_distribution<double> ny(0.0, sigma * b.height());
  const double dx1 = nx(rng), dy1 = ny(rng), dx2 = nx(rng), dy2 = ny(rng);
  return make_valid({b.x1 + dx1, b.y1 + dy1, b.x2 + dx2, b.y2 + dy2}, size);
}

// A box that covers only part of gt along one axis.
Box partial(const Box& gt, bool horizontal, bool leading, double keep) {
  Box b = gt;
  if (horizontal) {
    if (leading) b.x2 = gt.x1 + keep * gt.width();
    else b.x1 = gt.x2 - keep * gt.width();
  } else {
    if (leading) b.y2 = gt.y1 + keep * gt.height();
    else b.y1 = gt.y2 - keep * gt.height();
  }
  return b;
}

// A clearly misplaced box: shifted or rescaled gt.
Box misplaced(const Box& gt, double size, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Box b = gt;
  if (u(rng) < 0.5) {
    const double frac = 0.2 + 0.25 * u(rng);
    const double angle = 2 * 3.14159265358979323846 * u(rng);
    const double dx = std::cos(angle) * frac * gt.width();
    const double dy = std::sin(angle) * frac * gt.height();
    b = {gt.x1 + dx, gt.y1 + dy, gt.x2 + dx, gt.y2 + dy};
  } else {
    const double s = u(rng) < 0.5 ? 0.55 + 0.15 * u(rng) : 1.35 + 0.3 * u(rng);
    const double cx = (gt.x1 + gt.x2) / 2 + 0.05 * gt.width() * (u(rng) - 0.5);
    const double cy = (gt.y1 + gt.y2) / 2 + 0.05 * gt.height() * (u(rng) - 0.5);
    b = {cx - s * gt.width() / 2, cy - s * gt.height() / 2, cx + s * gt.width() / 2,
         cy + s * gt.height() / 2};
  }
  return make_valid(b, size);
}

struct Pick {
  Box yolo, retina;
};

Pick construct(int target, const Box& gt, double size, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (target == kUnionClass) {
    const bool horizontal = u(rng) < 0.5;
    const bool yolo_leads = u(rng) < 0.5;
    Box a = partial(gt, horizontal, yolo_leads, 0.5 + 0.25 * u(rng));
    Box b = partial(gt, horizontal, !yolo_leads, 0.5 + 0.25 * u(rng));
    return {jitter(a, 0.02, size, rng), jitter(b, 0.02, size, rng)};
  }
  const Box good = jitter(gt, 0.025, size, rng);
  const Box bad = misplaced(gt, size, rng);
  return target == kYoloClass ? Pick{good, bad} : Pick{bad, good};
}

std::vector<int> balanced_targets(const SynthConfig& cfg) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = cfg.class_balance[k] * static_cast<double>(cfg.samples);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    remainder[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  while (assigned < cfg.samples) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k) {
      if (remainder[k] > remainder[best]) best = k;
    }
    ++counts[best];
    remainder[best] = -1;
    ++assigned;
  }
  std::vector<int> targets;
  for (std::size_t k = 0; k < 3; ++k) targets.insert(targets.end(), counts[k], static_cast<int>(k));
  Rng rng(derive_seed(cfg.seed, 0xc1a55ULL, 0, 0));
  std::shuffle(targets.begin(), targets.end(), rng);
  return targets;
}

}  // namespace

std::vector<SynthSample> generate_synthetic(const SynthConfig& config) {
  config.validate();
  const double size = static_cast<double>(config.image_size);
  std::vector<int> planned;
  if (config.mode == SynthMode::Constructed) planned = balanced_targets(config);
  std::vector<SynthSample> out;
  out.reserve(config.samples);
  for (std::size_t i = 0; i < config.samples; ++i) {
    Rng rng(derive_seed(config.seed, 0x5a17ULL, i, 0));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SynthSample s;
    char id[32];
    std::snprintf(id, sizeof(id), "img%06zu", i);
    s.image_id = id;
    const double w = std::round(size * (0.35 + 0.25 * u(rng)));
    const double h = std::round(size * (0.35 + 0.25 * u(rng)));
    const double x1 = std::round(4 + (size - w - 8) * u(rng));
    const double y1 = std::round(4 + (size - h - 8) * u(rng));
    s.gt = {x1, y1, x1 + w, y1 + h};
    s.image.width = s.image.height = config.image_size;
    s.image.seed = derive_seed(config.seed, 0x1a6eULL, i, 0);
    s.image.car = s.gt;
    s.image.color = {0.55 + 0.45 * u(rng), 0.55 + 0.45 * u(rng), 0.55 + 0.45 * u(rng)};
    if (config.mode == SynthMode::Jitter) {
      s.yolo = jitter(s.gt, config.yolo_noise, size, rng);
      s.retina = jitter(s.gt, config.retina_noise, size, rng);
    } else {
      const int want = planned[i];
      bool ok = false;
      for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
        const Pick p = construct(want, s.gt, size, rng);
        std::vector<double> ious{box_iou(p.yolo, s.gt), box_iou(p.retina, s.gt),
                                 box_iou(union_box(p.yolo, p.retina), s.gt)};
        std::vector<double> sorted = ious;
        std::sort(sorted.rbegin(), sorted.rend());
        if (argmax_iou_target({0, 1, 2}, ious) == want && sorted[0] - sorted[1] >= config.min_margin) {
          s.yolo = p.yolo;
          s.retina = p.retina;
          ok = true;
        }
      }
      if (!ok) {
        throw std::runtime_error("synth: could not construct sample " + std::to_string(i) +
                                 " with the requested margin");
      }
    }
    s.target = argmax_iou_target({0, 1, 2}, {box_iou(s.yolo, s.gt), box_iou(s.retina, s.gt),
                                             box_iou(union_box(s.yolo, s.retina), s.gt)});
    out.push_back(std::move(s));
  }
  return out;
}

std::array<std::size_t, 3> synthetic_split_sizes(const SynthConfig& config) {
  const std::size_t n = config.samples;
  const auto n_train = static_cast<std::size_t>(std::floor(config.train_fraction * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::floor(config.val_fraction * static_cast<double>(n))));
  return {n_train, n_val, n - n_train - n_val};
}

std::vector<DetectionGraphSample> synthetic_detection_graphs(const std::vector<SynthSample>& samples,
                                                             std::size_t node_size) {
  std::vector<DetectionGraphSample> out;
  out.reserve(samples.size());
  for (const SynthSample& s : samples) {
    const FeatureArray image = render_synthetic_image(s.image);
    const DetectionRecord y{s.image_id, "0", Detector::Yolo, s.yolo, 0.9};
    const DetectionRecord r{s.image_id, "0", Detector::Retina, s.retina, 0.9};
    out.push_back(build_detection_graph(y, r, image, s.gt, node_size));
  }
  return out;
}

std::array<std::size_t, 3> write_synthetic_dataset(const std::filesystem::path& out,
                                                   const SynthConfig& config) {
  const auto samples = generate_synthetic(config);
  const auto sizes = synthetic_split_sizes(config);
  const std::array<std::size_t, 4> bounds{0, sizes[0], sizes[0] + sizes[1], samples.size()};
  const char* const names[3] = {"train", "val", "test"};
  std::error_code ec;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto dir = out / names[k];
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    std::ofstream det(dir / "detections.jsonl"), gt(dir / "ground_truth.jsonl"), img(dir / "images.jsonl");
    if (!det || !gt || !img) throw DataError("cannot write dataset files under " + dir.string());
    for (std::size_t i = bounds[k]; i < bounds[k + 1]; ++i) {
      const SynthSample& s = samples[i];
      const auto box_json = [](const Box& b) { return json{{"x1", b.x1}, {"y1", b.y1}, {"x2", b.x2}, {"y2", b.y2}}; };
      json y = box_json(s.yolo), r = box_json(s.retina), g = box_json(s.gt);
      for (json* j : {&y, &r, &g}) {
        (*j)["image_id"] = s.image_id;
        (*j)["object_id"] = "0";
      }
      y["model"] = "yolo";
      y["score"] = 0.9;
      r["model"] = "retina";
      r["score"] = 0.9;
      det << y.dump() << "\n" << r.dump() << "\n";
      gt << g.dump() << "\n";
      img << json{{"image_id", s.image_id}, {"synthetic", synthetic_to_json(s.image)}}.dump() << "\n";
    }
    if (!det || !gt || !img) throw DataError("write failed under " + dir.string());
  }
  return {bounds[1] - bounds[0], bounds[2] - bounds[1], bounds[3] - bounds[2]};
}

}  // namespace tgx

// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "grad_cases.hpp"
#include "oracles.hpp"
#include "tgx/detfusion.hpp"
#include "tgx/train.hpp"

using namespace tgx;

namespace {

using T = Tensor<double>;
using Clock = std::chrono::steady_clock;

const ForwardContext kEval{Mode::Eval, 1, 0, ConvAlgo::Im2col};

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c, d);
  return buf;
}

Graph random_fixture(Rng& rng, std::size_t channels, std::size_t hw, std::size_t f, std::size_t max_nodes) {
  RandomGraphOptions opts;
  opts.max_nodes = max_nodes;
  opts.channels = channels;
  opts.height = opts.width = hw;
  opts.edge_feature_dim = f;
  return random_graph(rng, opts);
}

GnnLayerConfig layer_config(std::size_t channels, std::size_t f, bool zero_last) {
  GnnLayerConfig cfg;
  cfg.in_channels = channels;
  cfg.out_channels = channels;
  cfg.edge_feature_dim = f;
  cfg.aggregator_depth = 2;
  cfg.zero_init_last = zero_last;
  return cfg;
}

Outcome gradient_suite() {
  Outcome out;
  const auto start = Clock::now();
  Rng rng(12);
  double worst = 0.0;
  std::size_t checks = 0;
  for (const auto& r : oracle::op_grad_sweep(rng)) {
    worst = std::max(worst, r.report.max_relative_error());
    ++checks;
    out.require(r.report.max_relative_error() < 1e-4, r.op + " on " + to_string(r.shape));
  }
  ModelConfig cfg;
  cfg.encoder.in_channels = 2;
  cfg.encoder.channels = {3};
  cfg.encoder.dropout_rate = 0.2;
  cfg.gnn_layers = 2;
  cfg.gnn_dropout = 0.2;
  cfg.zero_init_last = false;
  cfg.head_init_std = 0.5;
  cfg.seed = 7;
  TGraphXModel<double> model(cfg);
  RandomGraphOptions opts;
  opts.min_nodes = 2;
  opts.max_nodes = 3;
  opts.channels = 2;
  opts.height = opts.width = 6;
  std::vector<Graph> graphs{random_graph(rng, opts), random_graph(rng, opts)};
  graphs[0].graph_label = 1;
  graphs[1].graph_label = 2;
  const GraphBatch batch = batch_merge(graphs);
  for (const Mode mode : {Mode::Train, Mode::Eval}) {
    const auto report = model_grad_check(model, batch, TargetLevel::Graph, mode);
    worst = std::max(worst, report.max_relative_error());
    ++checks;
    out.require(report.max_relative_error() < 1e-4, "micro-model");
  }
  const double elapsed = seconds_since(start);
  out.require(elapsed < 60.0, "runtime over 60 s");
  out.detail = fmt("%.0f checks, max rel err %.2e, %.1f s", static_cast<double>(checks), worst, elapsed) +
               (out.detail.empty() ? "" : " | " + out.detail);
  return out;
}

Outcome oracle_equivalence() {
  Outcome out;
  constexpr int kInstances = 100;
  Rng rng(21);
  std::uniform_int_distribution<std::size_t> small(1, 4);
  double conv_err = 0, msg_err = 0, agg_err = 0, ce_err = 0, auc_err = 0;
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = small(rng), ci = small(rng), co = small(rng);
    const std::size_t h = 2 + small(rng), w = 2 + small(rng);
    const std::size_t k = i % 2 == 0 ? 3 : 1, stride = 1 + (i / 2) % 2, pad = k == 3 ? (i / 4) % 2 : 0;
    const T x = oracle::random_tensor({n, ci, h, w}, rng);
    const T wt = oracle::random_tensor({co, ci, k, k}, rng);
    const T b = oracle::random_tensor(vector_shape(co), rng);
    const ConvAlgo algo = i % 4 < 2 ? ConvAlgo::Im2col : ConvAlgo::Direct;
    const auto expect = oracle::conv2d(x.shape(), x.data(), wt.shape(), wt.data(), b.data(), stride, pad);
    conv_err = std::max(conv_err, oracle::max_abs_diff(conv2d(x, wt, b, {stride, pad, algo}).data(), expect));
  }
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t c = small(rng), f = small(rng), hw = 1 + small(rng), co = small(rng);
    ParameterSet<double> params;
    ConvMessagePassing<double> mp(params, "mp", c, co, f, rng);
    const GraphBatch batch = batch_merge({random_fixture(rng, c, hw, f, 5), random_fixture(rng, c, hw, f, 4)});
    const T x = batch.node_features.to_tensor<double>();
    const auto expect = oracle::messages(batch, x.data(), c, hw, hw, mp.conv().weight().data(),
                                         mp.conv().bias().data(), co);
    msg_err = std::max(msg_err, oracle::max_abs_diff(mp.forward(x, batch, kEval).data(), expect));
  }
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t c = small(rng), hw = small(rng);
    const GraphBatch batch = batch_merge({random_fixture(rng, 1, 1, 1, 6), random_fixture(rng, 1, 1, 1, 3)});
    const T msg = oracle::random_tensor({batch.num_edges(), c, hw, hw}, rng);
    agg_err = std::max(agg_err, oracle::max_abs_diff(aggregate_sum(msg, batch).data(),
                                                     oracle::aggregate_sum(batch, msg.data(), c * hw * hw)));
  }
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = small(rng), classes = 1 + small(rng);
    const T z = oracle::random_tensor(matrix_shape(n, classes), rng, false, 3.0);
    const auto t = oracle::random_targets(n, classes, rng);
    ce_err = std::max(ce_err, std::abs(cross_entropy(z, t).item() - oracle::cross_entropy(z.data(), t, classes)));
    auc_err = std::max(auc_err, std::abs(auc_ranking_loss(z, t).item() - oracle::auc_loss(z.data(), t, classes)));
  }
  out.require(conv_err < 1e-10, "conv2d");
  out.require(msg_err < 1e-10, "messages");
  out.require(agg_err < 1e-10, "aggregation");
  out.require(ce_err < 1e-10, "cross-entropy");
  out.require(auc_err < 1e-10, "auc");
  out.detail = fmt("100 instances each; max err conv %.1e, messages %.1e, aggregation %.1e, ", conv_err, msg_err,
                   agg_err) +
               fmt("CE %.1e, AUC %.1e", ce_err, auc_err) + (out.detail.empty() ? "" : " | " + out.detail);
  return out;
}

Outcome batch_equivalence() {
  Outcome out;
  Rng rng(16);
  ParameterSet<double> params;
  GnnLayer<double> first(params, "gnn0", layer_config(3, 1, false), rng);
  GnnLayer<double> second(params, "gnn1", layer_config(3, 1, false), rng);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Graph g1 = random_fixture(rng, 3, 3, 1, 5);
    const Graph g2 = random_fixture(rng, 3, 3, 1, 5);
    const auto run = [&](const GraphBatch& b) {
      const T mid = first.forward(b.node_features.to_tensor<double>(), b, kEval);
      return second.forward(mid, b, kEval);
    };
    const T merged = run(batch_merge({g1, g2}));
    std::vector<double> separate;
    for (const Graph& g : {g1, g2}) {
      const T y = run(batch_merge({g}));
      separate.insert(separate.end(), y.data().begin(), y.data().end());
    }
    worst = std::max(worst, oracle::max_abs_diff(merged.data(), separate));
  }
  out.require(worst < 1e-6, "merged batch differs");
  out.detail = fmt("50 pairs, two layers, max diff %.1e", worst) + (out.detail.empty() ? "" : " | " + out.detail);
  return out;
}

Outcome residual_identity() {
  Outcome out;
  Rng rng(15);
  std::size_t checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ParameterSet<double> params;
    GnnLayer<double> layer(params, "gnn", layer_config(3, 2, true), rng);
    const GraphBatch batch = batch_merge({random_fixture(rng, 3, 4, 2, 6)});
    const T x = batch.node_features.to_tensor<double>();
    for (const Mode mode : {Mode::Eval, Mode::Train}) {
      const T y = gnn_layer_forward(x, batch, layer, {mode, 1, 0});
      out.require(oracle::max_abs_diff(y.data(), x.data()) == 0.0, "layer output differs from input");
      ++checked;
    }
  }
  out.detail = std::to_string(checked) + " forwards bitwise equal to input" + (out.detail.empty() ? "" : " | " + out.detail);
  return out;
}

Outcome closed_form_losses() {
  Outcome out;
  double worst = 0.0;
  Rng rng(5);
  for (std::size_t c = 2; c <= 12; ++c) {
    const auto t = oracle::random_targets(4, c, rng);
    const double cc = static_cast<double>(c);
    worst = std::max(worst, std::abs(cross_entropy(T::zeros(matrix_shape(4, c)), t).item() - std::log(cc)));
    worst = std::max(worst, std::abs(auc_ranking_loss(T::full(matrix_shape(4, c), 1.7), t).item() -
                                     (cc - 1) * std::log(2.0)));
    const T z = oracle::random_tensor(matrix_shape(4, c), rng);
    worst = std::max(worst, std::abs(composite_loss(z, t, {1, 0, 0}).item() - cross_entropy(z, t).item()));
  }
  out.require(worst < 1e-9, "closed form mismatch");
  out.detail = fmt("C = 2..12, max err %.1e", worst);
  return out;
}

Outcome synthetic_fusion(bool verbose) {
  Outcome out;
  const auto start = Clock::now();
  SynthConfig sc;
  sc.samples = 2000;
  sc.seed = 1;
  sc.class_balance = {0.2, 0.2, 0.6};
  const auto samples = generate_synthetic(sc);
  const auto graphs = synthetic_detection_graphs(samples, 32);
  const auto sizes = synthetic_split_sizes(sc);
  const auto slice = [&](std::size_t from, std::size_t count) {
    return std::vector<DetectionGraphSample>(graphs.begin() + static_cast<long>(from),
                                             graphs.begin() + static_cast<long>(from + count));
  };
  const auto train_s = slice(0, sizes[0]);
  const auto val_s = slice(sizes[0], sizes[1]);
  const auto test_s = slice(sizes[0] + sizes[1], sizes[2]);
  const GraphDataset train = to_graph_dataset(train_s), val = to_graph_dataset(val_s);

  TrainConfig cfg;
  cfg.model.encoder.channels = {16};
  cfg.model.gnn_layers = 2;
  cfg.model.readout = Readout::Select;
  cfg.model.seed = 1;
  cfg.adam.lr = 1e-3;
  cfg.batch_size = 16;
  cfg.node_size = 32;
  cfg.epochs = 200;
  Trainer<float> trainer(cfg);
  double train_acc = 0.0;
  trainer.fit(train, &val, [&](const Trainer<float>::EpochReport& r) {
    train_acc = r.train.accuracy;
    if (verbose) std::fprintf(stderr, "  epoch %zu train %.4f val %.4f\n", r.train.epoch, r.train.accuracy, r.val->accuracy);
    return !(r.train.accuracy >= 0.95 && r.val->accuracy >= 0.85);
  });
  const auto result = trainer.evaluate(to_graph_dataset(test_s));
  const FusionReport report = make_fusion_report(test_s, result.predictions);
  const double yolo = report.iou_rows[0].avg_iou, retina = report.iou_rows[1].avg_iou, fused = report.iou_rows[2].avg_iou;
  const double elapsed = seconds_since(start);
  out.require(train_acc >= 0.95, "train accuracy below 0.95");
  out.require(result.accuracy >= 0.85, "held-out accuracy below 0.85");
  out.require(fused > yolo && fused > retina, "fused IoU does not beat both detectors");
  out.require(elapsed < 600.0, "over 10 minutes");
  out.detail = fmt("%.0f epochs, train acc %.4f, test acc %.4f, ", static_cast<double>(trainer.state().epoch),
                   train_acc, result.accuracy) +
               fmt("mean IoU yolo %.4f retina %.4f tgraphx %.4f, ", yolo, retina, fused) + fmt("%.0f s", elapsed) +
               (out.detail.empty() ? "" : " | " + out.detail);
  return out;
}

Outcome detfusion_math() {
  Outcome out;
  Rng rng(31);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  const auto random_box = [&] {
    const double x = u(rng), y = u(rng);
    return Box{x, y, x + 1 + u(rng), y + 1 + u(rng)};
  };
  std::size_t violations = 0;
  for (int i = 0; i < 2000; ++i) {
    const Box a = random_box(), b = random_box();
    const double ab = box_iou(a, b);
    if (ab != box_iou(b, a) || ab < 0.0 || ab > 1.0 || box_iou(a, a) != 1.0) ++violations;
    const Box un = union_box(a, b);
    if (un.area() < std::max(a.area(), b.area()) || union_box(b, a).area() != un.area()) ++violations;
    if (un.x1 > std::min(a.x1, b.x1) || un.x2 < std::max(a.x2, b.x2)) ++violations;
  }
  out.require(violations == 0, std::to_string(violations) + " IoU/union invariant violations");
  out.require(std::abs(box_iou({0, 0, 2, 2}, {1, 0, 3, 2}) - 1.0 / 3.0) < 1e-15, "half-overlap IoU");
  for (int i = 0; i < 200; ++i) {
    std::vector<int> p(30), t(30);
    for (auto& v : p) v = static_cast<int>(rng() % 3);
    for (auto& v : t) v = static_cast<int>(rng() % 3);
    for (const auto& row : normalize_confusion(confusion_matrix(p, t, 3))) {
      double s = 0;
      for (double v : row) s += v;
      if (s != 0.0 && std::abs(s - 1.0) > 1e-12) ++violations;
    }
  }
  out.require(violations == 0, "normalized rows do not sum to 1");
  const auto row = normalize_confusion({{17, 5, 0}})[0];
  char printed[64];
  std::snprintf(printed, sizeof(printed), "%.4f %.4f %.4f", row[0], row[1], row[2]);
  out.require(std::string(printed) == "0.7727 0.2273 0.0000", std::string("row printed as ") + printed);
  out.detail = std::string("2000 box pairs, 200 confusion matrices, (17, 5, 0) -> ") + printed +
               (out.detail.empty() ? "" : " | " + out.detail);
  return out;
}

Outcome determinism() {
  Outcome out;
  SynthConfig sc;
  sc.samples = 60;
  sc.seed = 4;
  sc.image_size = 64;
  const auto graphs = synthetic_detection_graphs(generate_synthetic(sc), 16);
  const GraphDataset train(to_graph_dataset({graphs.begin(), graphs.begin() + 44}));
  const GraphDataset val(to_graph_dataset({graphs.begin() + 44, graphs.end()}));
  TrainConfig cfg;
  cfg.model.encoder.channels = {8};
  cfg.model.readout = Readout::Select;
  cfg.adam.lr = 1e-3;
  cfg.node_size = 16;
  cfg.epochs = 3;

  const auto logged_run = [&](Precision precision) {
    TrainConfig c = cfg;
    c.model.precision = precision;
    std::string log;
    const auto record = [&](const auto& r) {
      log += metrics_line(r.train) + "\n" + metrics_line(*r.val) + "\n";
      return true;
    };
    if (precision == Precision::Double) {
      Trainer<double> t(c);
      t.fit(train, &val, record);
    } else {
      Trainer<float> t(c);
      t.fit(train, &val, record);
    }
    return log;
  };
  for (const Precision p : {Precision::Single, Precision::Double}) {
    out.require(logged_run(p) == logged_run(p), "metrics logs differ in " + to_string(p));
  }

  cfg.model.precision = Precision::Double;
  cfg.epochs = 4;
  Trainer<double> full(cfg);
  const auto full_reports = full.fit(train, &val);
  TrainConfig half = cfg;
  half.epochs = 2;
  Trainer<double> first(half);
  first.fit(train, &val);
  const auto path = std::filesystem::temp_directory_path() / "tgx_acceptance_resume.ckpt";
  first.save(path);
  Trainer<double> resumed = Trainer<double>::load(path);
  std::filesystem::remove(path);
  resumed.set_epochs(4);
  const auto rest = resumed.fit(train, &val);
  bool same = rest.size() == 2;
  for (std::size_t e = 0; same && e < 2; ++e) {
    same = metrics_line(rest[e].train) == metrics_line(full_reports[e + 2].train) &&
           metrics_line(*rest[e].val) == metrics_line(*full_reports[e + 2].val);
  }
  const auto& pa = resumed.model().params().parameters();
  const auto& pb = full.model().params().parameters();
  for (std::size_t k = 0; same && k < pa.size(); ++k) {
    same = std::equal(pa[k].tensor.data().begin(), pa[k].tensor.data().end(), pb[k].tensor.data().begin());
  }
  out.require(same, "resumed run diverges from uninterrupted run");
  out.detail = "float and double logs byte-identical; resume after epoch 2 of 4 matches bitwise" +
               (out.detail.empty() ? "" : " | " + out.detail);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  bool verbose = false;
  app.add_option("--only", only, "run only these criteria (1-8)");
  app.add_flag("--verbose", verbose, "per-epoch progress for the training criterion");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"oracle equivalence", oracle_equivalence},
      {"batch equivalence", batch_equivalence},
      {"residual identity", residual_identity},
      {"closed-form losses", closed_form_losses},
      {"synthetic fusion task", [&] { return synthetic_fusion(verbose); }},
      {"detection fusion math", detfusion_math},
      {"determinism", determinism},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}

// tgraphx: command-line front end for training and evaluating TGraphX models
// on detection-fusion datasets.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tgx/checkpoint.hpp"
#include "tgx/detfusion.hpp"
#include "tgx/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Config layering: defaults, then --config file, then --set key=value, then
// per-key flags.
struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> keys;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override a config key (key=value), repeatable");
    for (const auto& key : tgx::config_keys()) {
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      app->add_option(flag, keys[key], "config key " + key);
    }
  }

  tgx::TrainConfig resolve(tgx::TrainConfig base = {}) const {
    try {
      if (!config_file.empty()) base = tgx::load_config_file(config_file, base);
      for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + s);
        tgx::set_config_value(base, s.substr(0, eq), s.substr(eq + 1));
      }
      for (const auto& [key, value] : keys) {
        if (!value.empty()) tgx::set_config_value(base, key, value);
      }
      base.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return base;
  }
};

std::vector<tgx::DetectionGraphSample> load_split(const fs::path& dir, std::size_t node_size) {
  if (!fs::is_directory(dir)) throw tgx::DataError("dataset directory not found: " + dir.string());
  auto samples = tgx::load_detection_split(dir, node_size);
  if (samples.empty()) throw tgx::DataError("no detection graphs in " + dir.string());
  return samples;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw tgx::DataError("cannot write " + path.string());
  out << text;
}

// ---- train ----

struct TrainArgs {
  std::string data, train_dir, val_dir, out, resume;
  double stop_train_acc = 0.0, stop_val_acc = 0.0;
  bool quiet = false;
  ConfigFlags flags;
};

template <typename T>
int run_train(const TrainArgs& args, const tgx::TrainConfig& cfg) {
  const fs::path train_dir = !args.train_dir.empty() ? fs::path(args.train_dir) : fs::path(args.data) / "train";
  const fs::path val_dir = !args.val_dir.empty() ? fs::path(args.val_dir)
                           : !args.data.empty()   ? fs::path(args.data) / "val"
                                                  : fs::path();
  const auto train_samples = load_split(train_dir, cfg.node_size);
  const tgx::GraphDataset train = tgx::to_graph_dataset(train_samples);
  tgx::GraphDataset val;
  if (!val_dir.empty() && fs::is_directory(val_dir)) val = tgx::to_graph_dataset(load_split(val_dir, cfg.node_size));

  const fs::path out = args.out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw tgx::DataError("cannot create " + out.string() + ": " + ec.message());

  tgx::Trainer<T> trainer = args.resume.empty() ? tgx::Trainer<T>(cfg) : tgx::Trainer<T>::load(args.resume);
  // A resumed run keeps the checkpoint's model; only the epoch budget follows the flags.
  if (!args.resume.empty()) trainer.set_epochs(cfg.epochs);

  json run;
  run["config"] = tgx::config_to_json(trainer.config());
  run["train_samples"] = train.size();
  run["val_samples"] = val.size();
  run["assumptions"] = {{"batch_size_default", 8},
                        {"weight_decay_default", 0.0},
                        {"loss_default", "composite, gamma = 1"},
                        {"target", "argmax-IoU node class, ties to the lower class"}};
  write_text(out / "run.json", run.dump(2) + "\n");
  write_text(out / "config.txt", tgx::config_to_text(trainer.config()));

  std::ofstream metrics(out / "metrics.jsonl", args.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw tgx::DataError("cannot write metrics log");
  trainer.fit(train, val.empty() ? nullptr : &val, [&](const typename tgx::Trainer<T>::EpochReport& r) {
    metrics << tgx::metrics_line(r.train) << "\n";
    if (r.val) metrics << tgx::metrics_line(*r.val) << "\n";
    metrics.flush();
    trainer.save(out / "last.ckpt");
    if (r.improved || !r.val) trainer.save(out / "best.ckpt");
    if (!args.quiet) {
      std::printf("epoch %zu  train loss %.6f acc %.4f", r.train.epoch, r.train.loss, r.train.accuracy);
      if (r.val) std::printf("  val loss %.6f acc %.4f%s", r.val->loss, r.val->accuracy, r.improved ? "  *" : "");
      std::printf("\n");
      std::fflush(stdout);
    }
    const bool train_done = args.stop_train_acc > 0 && r.train.accuracy >= args.stop_train_acc;
    const bool val_done = args.stop_val_acc <= 0 || (r.val && r.val->accuracy >= args.stop_val_acc);
    return !(train_done && val_done);
  });
  if (trainer.state().epoch == 0) trainer.save(out / "last.ckpt");
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string checkpoint, data, report_out;
};

template <typename T>
int run_eval(const EvalArgs& args) {
  tgx::Trainer<T> trainer = tgx::Trainer<T>::load(args.checkpoint);
  const tgx::TrainConfig& cfg = trainer.config();
  if (cfg.model.classes != tgx::kFusionClasses) {
    throw tgx::DataError("checkpoint model has " + std::to_string(cfg.model.classes) +
                         " classes; detection fusion needs " + std::to_string(tgx::kFusionClasses));
  }
  const auto samples = load_split(args.data, cfg.node_size);
  const auto result = trainer.evaluate(tgx::to_graph_dataset(samples));
  const tgx::FusionReport report = tgx::make_fusion_report(samples, result.predictions);
  std::printf("loss %.6f\n%s", result.loss, tgx::fusion_report_table(report).c_str());
  if (!args.report_out.empty()) write_text(args.report_out, tgx::fusion_report_jsonl(report));
  return kExitOk;
}

// ---- report ----

int run_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw tgx::DataError("cannot open report " + path);
  tgx::FusionReport report;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw tgx::DataError("malformed report line: " + std::string(e.what()));
    }
    const std::string kind = j.value("record", "");
    if (kind == "summary") {
      report.samples = j.at("samples").get<std::size_t>();
      report.accuracy = j.at("accuracy").get<double>();
    } else if (kind == "confusion") {
      report.confusion.push_back(j.at("counts").get<std::vector<std::size_t>>());
      report.normalized_confusion.push_back(j.at("normalized").get<std::vector<double>>());
    } else if (kind == "avg_iou") {
      report.iou_rows.push_back({j.at("index").get<std::size_t>(), j.at("model").get<std::string>(),
                                 j.at("avg_iou").get<double>()});
    }
  }
  std::printf("%s", tgx::fusion_report_table(report).c_str());
  return kExitOk;
}

// ---- gradcheck ----

struct GradArgs {
  std::size_t graphs = 2;
  std::size_t spatial = 6;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  bool eval_mode = false;
  ConfigFlags flags;
};

int run_gradcheck(const GradArgs& args) {
  tgx::TrainConfig base;
  base.model.encoder.in_channels = 2;
  base.model.encoder.channels = {3};
  base.model.encoder.dropout_rate = 0.0;
  base.model.gnn_dropout = 0.0;
  base.model.zero_init_last = false;
  base.model.head_init_std = 0.5;
  base.model.seed = 7;
  const tgx::TrainConfig cfg = args.flags.resolve(base);
  tgx::TGraphXModel<double> model(cfg.model);
  tgx::Rng rng(tgx::derive_seed(cfg.model.seed, 0x9c4ULL, 0, 0));
  tgx::RandomGraphOptions opts;
  opts.min_nodes = 2;
  opts.max_nodes = 3;
  opts.channels = cfg.model.encoder.in_channels;
  opts.height = opts.width = args.spatial;
  opts.edge_feature_dim = cfg.model.edge_feature_dim;
  opts.classes = cfg.model.classes;
  std::vector<tgx::Graph> graphs;
  for (std::size_t g = 0; g < args.graphs; ++g) graphs.push_back(tgx::random_graph(rng, opts));
  const tgx::GraphBatch batch = tgx::batch_merge(graphs);
  const auto report = tgx::model_grad_check(model, batch, cfg.target,
                                            args.eval_mode ? tgx::Mode::Eval : tgx::Mode::Train, args.epsilon);
  for (const auto& e : report.entries) {
    std::printf("%-48s n=%-5zu rel_err=%.3e\n", e.name.c_str(), e.elements, e.relative_error);
  }
  const bool ok = report.passed(args.tolerance);
  std::printf("max relative error %.3e (tolerance %.1e): %s\n", report.max_relative_error(), args.tolerance,
              ok ? "PASS" : "FAIL");
  return ok ? kExitOk : kExitNumeric;
}

// ---- synth-data ----

struct SynthArgs {
  std::string out;
  std::string mode = "constructed";
  std::string balance = "0.2,0.2,0.6";
  tgx::SynthConfig cfg;
};

int run_synth(SynthArgs args) {
  try {
    args.cfg.mode = tgx::parse_synth_mode(args.mode);
    std::stringstream ss(args.balance);
    std::string item;
    std::size_t k = 0;
    while (std::getline(ss, item, ',')) {
      if (k >= 3) throw std::invalid_argument("--class-balance needs exactly 3 numbers");
      args.cfg.class_balance[k++] = std::stod(item);
    }
    if (k != 3) throw std::invalid_argument("--class-balance needs exactly 3 numbers");
    args.cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto counts = tgx::write_synthetic_dataset(args.out, args.cfg);
  std::printf("wrote %zu train, %zu val, %zu test samples to %s\n", counts[0], counts[1], counts[2],
              args.out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TGraphX: graph neural networks over CNN feature-map nodes"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model on a detection-fusion dataset");
  train->add_option("--data", train_args.data, "dataset root holding train/ and val/");
  train->add_option("--train", train_args.train_dir, "training split directory (overrides --data)");
  train->add_option("--val", train_args.val_dir, "validation split directory (overrides --data)");
  train->add_option("--out", train_args.out, "output directory for logs and checkpoints")->required();
  train->add_option("--resume", train_args.resume, "continue from a training checkpoint")->check(CLI::ExistingFile);
  train->add_option("--stop-train-acc", train_args.stop_train_acc, "stop once train accuracy reaches this");
  train->add_option("--stop-val-acc", train_args.stop_val_acc, "and val accuracy reaches this");
  train->add_flag("--quiet", train_args.quiet, "no per-epoch output");
  train_args.flags.attach(train);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on one dataset split");
  eval->add_option("--checkpoint", eval_args.checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_args.data, "split directory")->required();
  eval->add_option("--report-out", eval_args.report_out, "write the report as JSONL");

  std::string report_path;
  auto* report = app.add_subcommand("report", "print the tables of a saved evaluation report");
  report->add_option("report", report_path, "JSONL written by eval --report-out")->required();

  GradArgs grad_args;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of a small double model");
  grad->add_option("--graphs", grad_args.graphs, "random graphs in the batch");
  grad->add_option("--spatial", grad_args.spatial, "node tensor height and width");
  grad->add_option("--epsilon", grad_args.epsilon, "finite-difference step");
  grad->add_option("--tolerance", grad_args.tolerance, "maximum relative error");
  grad->add_flag("--eval-mode", grad_args.eval_mode, "check in eval mode (running statistics)");
  grad_args.flags.attach(grad);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth-data", "generate a synthetic detection-fusion dataset");
  synth->add_option("--out", synth_args.out, "output directory")->required();
  synth->add_option("--samples", synth_args.cfg.samples, "number of objects");
  synth->add_option("--seed", synth_args.cfg.seed, "random seed");
  synth->add_option("--mode", synth_args.mode, "constructed or jitter");
  synth->add_option("--image-size", synth_args.cfg.image_size, "square image side in pixels");
  synth->add_option("--yolo-noise", synth_args.cfg.yolo_noise, "jitter mode: YOLO corner noise");
  synth->add_option("--retina-noise", synth_args.cfg.retina_noise, "jitter mode: RetinaNet corner noise");
  synth->add_option("--class-balance", synth_args.balance, "constructed mode: yolo,retina,union fractions");
  synth->add_option("--min-margin", synth_args.cfg.min_margin, "constructed mode: IoU margin of the best node");
  synth->add_option("--train-fraction", synth_args.cfg.train_fraction, "fraction of samples in train/");
  synth->add_option("--val-fraction", synth_args.cfg.val_fraction, "fraction of samples in val/");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) {
      if (train_args.data.empty() && train_args.train_dir.empty()) {
        throw UsageError("train needs --data or --train");
      }
      tgx::TrainConfig cfg;
      if (!train_args.resume.empty()) cfg = tgx::checkpoint_config(train_args.resume);
      cfg = train_args.flags.resolve(cfg);
      return cfg.model.precision == tgx::Precision::Double ? run_train<double>(train_args, cfg)
                                                           : run_train<float>(train_args, cfg);
    }
    if (*eval) {
      return tgx::checkpoint_dtype_bytes(eval_args.checkpoint) == 8 ? run_eval<double>(eval_args)
                                                                     : run_eval<float>(eval_args);
    }
    if (*report) return run_report(report_path);
    if (*grad) return run_gradcheck(grad_args);
    if (*synth) return run_synth(synth_args);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const tgx::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}

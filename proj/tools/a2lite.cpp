// a2lite command-line interface: architecture inspection, cost accounting,
// training/evaluation, activation export and gradient checking.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "a2/data.hpp"
#include "a2/error.hpp"
#include "a2/gradsuite.hpp"
#include "a2/model.hpp"
#include "a2/train.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::localtime(&now));
  return buf;
}

fs::path make_run_dir(std::string out, const std::string& command) {
  if (out.empty()) out = "runs/" + command + "-" + timestamp();
  fs::create_directories(out);
  return out;
}

using Settings = std::vector<std::pair<std::string, std::string>>;

void write_settings(const fs::path& dir, const Settings& kv) {
  std::ofstream f(dir / "settings.txt", std::ios::trunc);
  for (const auto& [k, v] : kv) f << k << " = " << v << "\n";
}

a2::ArchitectureConfig resolve_config(const std::string& config_path, int classes,
                                      bool no_attention) {
  a2::ArchitectureConfig cfg = config_path.empty() ? a2::ArchitectureConfig::canonical()
                                                   : a2::load_config_file(config_path);
  if (classes > 0) cfg.num_classes = classes;
  if (no_attention) cfg.attention_locations.clear();
  cfg.validate();
  return cfg;
}

a2::ImageDims parse_hw(const std::string& text, int channels) {
  int h = 0, w = 0;
  const std::size_t x = text.find('x');
  try {
    if (x == std::string::npos) {
      h = w = std::stoi(text);
    } else {
      h = std::stoi(text.substr(0, x));
      w = std::stoi(text.substr(x + 1));
    }
  } catch (const std::exception&) {
    throw a2::ValidationError("bad --input value '" + text + "', expected H or HxW");
  }
  return {h, w, channels};
}

std::string dims_str(const a2::ImageDims& d) {
  std::ostringstream os;
  os << d.h << 'x' << d.w << 'x' << d.c;
  return os.str();
}

// -----------------------------------------------------------------------
// describe
// -----------------------------------------------------------------------

int cmd_describe(const std::string& config_path, const std::string& input, int classes) {
  const a2::ArchitectureConfig cfg = resolve_config(config_path, classes, false);
  const a2::ImageDims in = input.empty() ? a2::ImageDims{cfg.input_h, cfg.input_w, cfg.input_channels}
                                         : parse_hw(input, cfg.input_channels);
  const auto rows = a2::infer_shapes(cfg, in);
  std::printf("%3s  %-18s %-14s %-14s %s\n", "#", "layer", "input", "output", "stride");
  for (const a2::ShapeRow& r : rows) {
    std::printf("%3d  %-18s %-14s %-14s %s\n", r.index, a2::kind_name(r.kind),
                dims_str(r.in).c_str(), dims_str(r.out).c_str(),
                r.stride > 0 ? std::to_string(r.stride).c_str() : "-");
  }
  return kExitOk;
}

// -----------------------------------------------------------------------
// count
// -----------------------------------------------------------------------

int cmd_count(const std::string& config_path, const std::string& input, int classes,
              bool no_attention) {
  a2::ArchitectureConfig cfg = resolve_config(config_path, classes, no_attention);
  const a2::ImageDims in = input.empty() ? a2::ImageDims{cfg.input_h, cfg.input_w, cfg.input_channels}
                                         : parse_hw(input, cfg.input_channels);
  a2::Model<float> model = a2::build<float>(cfg, 1);
  const std::int64_t params = a2::count_params(model);
  const std::int64_t macs = a2::count_macs(model, in);
  std::printf("params = %lld (%.2f M)\n", static_cast<long long>(params),
              static_cast<double>(params) / 1e6);
  std::printf("gmacs  = %.4f (input %s)\n", static_cast<double>(macs) / 1e9, dims_str(in).c_str());
  return kExitOk;
}

// -----------------------------------------------------------------------
// synth
// -----------------------------------------------------------------------

int cmd_synth(int classes, int per_class, int size, std::uint64_t seed, std::string out) {
  const fs::path dir = make_run_dir(out, "synth");
  const a2::SynthDataset ds = a2::synth_dataset(classes, per_class, size, seed);
  a2::write_synth_tree(ds, dir.string());
  write_settings(dir, {{"command", "synth"},
                       {"classes", std::to_string(classes)},
                       {"per_class", std::to_string(per_class)},
                       {"size", std::to_string(size)},
                       {"seed", std::to_string(seed)}});
  std::printf("wrote %zu samples under %s\n", ds.images.size(), dir.string().c_str());
  return kExitOk;
}

// -----------------------------------------------------------------------
// train / eval
// -----------------------------------------------------------------------

a2::TensorDataset load_dataset(const std::string& root, int input_size, int per_class,
                               std::uint64_t seed, const fs::path* run_dir,
                               std::uint64_t fold_seed, int folds) {
  a2::ScanReport scan = a2::scan_dataset(root);
  for (const std::string& warning : scan.warnings) {
    std::fprintf(stderr, "warning: %s\n", warning.c_str());
  }
  a2::DatasetManifest manifest = scan.manifest;
  if (per_class > 0) manifest = a2::sample_per_class(manifest, per_class, seed);
  if (run_dir) {
    const a2::FoldSplit split = a2::stratified_kfold(manifest, folds, fold_seed);
    a2::export_manifest_tsv(manifest, split, (*run_dir / "manifest.tsv").string());
  }
  return a2::load_tensor_dataset(manifest, input_size);
}

int cmd_train(const std::string& dataset, const std::string& config_path, int classes,
              const std::string& input, const a2::SgdConfig& sgd, int folds, int per_class,
              bool overfit, double fit_loss, std::string out, bool verbose) {
  const fs::path dir = make_run_dir(out, "train");
  a2::ArchitectureConfig cfg = resolve_config(config_path, classes, false);
  const int input_size = input.empty() ? cfg.input_h : parse_hw(input, 3).h;
  cfg.input_h = cfg.input_w = input_size;

  const a2::TensorDataset data =
      load_dataset(dataset, input_size, per_class, sgd.seed, &dir, sgd.seed, folds);
  if (cfg.num_classes != data.num_classes) {
    cfg.num_classes = data.num_classes;
    cfg.validate();
  }

  Settings settings = {{"command", "train"},
                       {"dataset", dataset},
                       {"config", config_path.empty() ? "<canonical>" : config_path},
                       {"classes", std::to_string(cfg.num_classes)},
                       {"input", std::to_string(input_size)},
                       {"epochs", std::to_string(sgd.epochs)},
                       {"batch_size", std::to_string(sgd.batch_size)},
                       {"learning_rate", std::to_string(sgd.learning_rate)},
                       {"momentum", std::to_string(sgd.momentum)},
                       {"weight_decay", std::to_string(sgd.weight_decay)},
                       {"seed", std::to_string(sgd.seed)},
                       {"folds", std::to_string(folds)},
                       {"per_class", std::to_string(per_class)},
                       {"overfit", overfit ? "true" : "false"}};
  std::ofstream(dir / "architecture.cfg") << a2::config_to_text(cfg);

  if (overfit) {
    a2::Model<float> model = a2::build<float>(cfg, sgd.seed);
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    a2::TrainOptions options;
    options.stop_when_fit = true;
    options.fit_loss_threshold = fit_loss;
    options.verbose = verbose;
    const a2::FoldReport report = a2::train_fold(model, data, all, {}, sgd, 0, options);
    const a2::Metrics fit = a2::evaluate(model, data, all, sgd.batch_size);
    a2::save_weights(model, (dir / "model.a2w").string());
    std::ofstream f(dir / "overfit.txt", std::ios::trunc);
    f << "epochs_run = " << report.epochs_run << "\n"
      << "train_accuracy = " << fit.accuracy << "\n"
      << "train_loss = " << fit.mean_loss << "\n"
      << "wall_seconds = " << report.wall_seconds << "\n";
    write_settings(dir, settings);
    std::printf("overfit: accuracy %.4f loss %.4f after %d epochs (%.1fs); weights at %s\n",
                fit.accuracy, fit.mean_loss, report.epochs_run, report.wall_seconds,
                (dir / "model.a2w").string().c_str());
    return kExitOk;
  }

  a2::TrainOptions options;
  options.verbose = verbose;
  const a2::CvSummary summary = a2::run_cv(cfg, data, sgd, folds, options);
  a2::write_fold_summary((dir / "summary.txt").string(), summary);
  for (const a2::FoldReport& fold : summary.folds) {
    a2::write_confusion_csv((dir / ("fold" + std::to_string(fold.fold) + "_confusion.csv")).string(),
                            fold.confusion, data.class_names);
  }
  write_settings(dir, settings);
  std::printf("cv accuracy %.4f +/- %.4f, macro-F1 %.4f +/- %.4f; reports under %s\n",
              summary.mean_accuracy, summary.std_accuracy, summary.mean_f1, summary.std_f1,
              dir.string().c_str());
  return kExitOk;
}

int cmd_eval(const std::string& dataset, const std::string& weights, const std::string& config_path,
             int classes, const std::string& input, int batch, std::string out) {
  const fs::path dir = make_run_dir(out, "eval");
  a2::ArchitectureConfig cfg = resolve_config(config_path, classes, false);
  const int input_size = input.empty() ? cfg.input_h : parse_hw(input, 3).h;

  const a2::TensorDataset data = load_dataset(dataset, input_size, 0, 0, nullptr, 0, 5);
  if (cfg.num_classes != data.num_classes) {
    cfg.num_classes = data.num_classes;
    cfg.validate();
  }
  a2::Model<float> model = a2::build<float>(cfg, 1);
  if (!weights.empty()) a2::load_weights(model, weights);
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const a2::Metrics m = a2::evaluate(model, data, all, batch);
  a2::write_confusion_csv((dir / "confusion.csv").string(), m.confusion, data.class_names);
  write_settings(dir, {{"command", "eval"},
                       {"dataset", dataset},
                       {"weights", weights.empty() ? "<random init>" : weights},
                       {"input", std::to_string(input_size)}});
  std::printf("accuracy %.4f macro-F1 %.4f loss %.4f over %zu samples\n", m.accuracy, m.macro_f1,
              m.mean_loss, data.size());
  return kExitOk;
}

// -----------------------------------------------------------------------
// predict / activations
// -----------------------------------------------------------------------

int cmd_predict(const std::string& image_path, const std::string& weights,
                const std::string& config_path, int classes, const std::string& input, int topk) {
  a2::ArchitectureConfig cfg = resolve_config(config_path, classes, false);
  const int input_size = input.empty() ? cfg.input_h : parse_hw(input, 3).h;
  a2::Model<float> model = a2::build<float>(cfg, 1);
  if (!weights.empty()) a2::load_weights(model, weights);

  const a2::Image img = a2::decode_ppm(image_path);
  const a2::Tensor<float> x = (img.height == input_size && img.width == input_size)
                                  ? a2::normalize_image(img)
                                  : a2::preprocess(img, input_size);
  a2::Tensor<float> logits =
      model.forward(x.reshaped({1, x.extent(0), x.extent(1), x.extent(2)}));
  const int k = logits.extent(1);
  std::vector<double> probs(static_cast<std::size_t>(k));
  double mx = logits.data()[0];
  for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(logits.data()[j]));
  double denom = 0.0;
  for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(logits.data()[j]) - mx);
  for (int j = 0; j < k; ++j) {
    probs[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(logits.data()[j]) - mx) / denom;
  }
  std::vector<int> order(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) order[static_cast<std::size_t>(j)] = j;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)]; });
  for (int r = 0; r < std::min(topk, k); ++r) {
    std::printf("class_%02d  %.4f\n", order[static_cast<std::size_t>(r)],
                probs[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])]);
  }
  return kExitOk;
}

int cmd_activations(const std::string& image_path, const std::string& weights,
                    const std::string& config_path, int classes, const std::string& input,
                    const std::string& layers_csv, std::uint64_t seed, std::string out) {
  const fs::path dir = make_run_dir(out, "activations");
  a2::ArchitectureConfig cfg = resolve_config(config_path, classes, false);
  const int input_size = input.empty() ? cfg.input_h : parse_hw(input, 3).h;

  std::vector<int> layers;
  std::stringstream ss(layers_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      layers.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw a2::ValidationError("bad --layers entry '" + tok + "'");
    }
  }
  if (layers.empty()) throw a2::ValidationError("--layers needs at least one index");

  a2::Model<float> model = a2::build<float>(cfg, seed);
  if (!weights.empty()) a2::load_weights(model, weights);
  const a2::Image img = a2::decode_ppm(image_path);
  const a2::Tensor<float> x = (img.height == input_size && img.width == input_size)
                                  ? a2::normalize_image(img)
                                  : a2::preprocess(img, input_size);
  a2::export_activations(model, x, layers, dir.string());
  write_settings(dir, {{"command", "activations"},
                       {"image", image_path},
                       {"weights", weights.empty() ? "<random init>" : weights},
                       {"layers", layers_csv},
                       {"input", std::to_string(input_size)},
                       {"seed", std::to_string(seed)}});
  std::printf("wrote %zu PGM+CSV pairs under %s\n", layers.size(), dir.string().c_str());
  return kExitOk;
}

// -----------------------------------------------------------------------
// ablate / gradcheck
// -----------------------------------------------------------------------

int cmd_ablate(int classes, const std::string& input, const std::string& dataset, int per_class,
               const a2::SgdConfig& sgd, int folds, std::string out) {
  const fs::path dir = make_run_dir(out, "ablate");
  const a2::ImageDims in = input.empty() ? a2::ImageDims{224, 224, 3} : parse_hw(input, 3);

  std::vector<a2::AblationRow> rows;
  if (dataset.empty()) {
    rows = a2::ablation_grid(classes, in);
  } else {
    const a2::TensorDataset data = load_dataset(dataset, in.h, per_class, sgd.seed, nullptr, 0, folds);
    rows = a2::ablation_grid(data.num_classes, in, &data, &sgd, folds);
  }
  a2::write_ablation_csv((dir / "ablation.csv").string(), rows);
  write_settings(dir, {{"command", "ablate"},
                       {"classes", std::to_string(classes)},
                       {"input", dims_str(in)},
                       {"dataset", dataset.empty() ? "<accounting only>" : dataset},
                       {"seed", std::to_string(sgd.seed)}});
  std::printf("%-3s %-3s %-3s %-9s %-7s %s\n", "l1", "l2", "r", "params", "gmacs", "acc");
  for (const a2::AblationRow& row : rows) {
    char acc[48] = "-";
    if (row.acc_mean) {
      std::snprintf(acc, sizeof(acc), "%.2f +/- %.2f", *row.acc_mean * 100.0, *row.acc_std * 100.0);
    }
    std::printf("%-3d %-3d %-3d %-9lld %.4f  %s%s\n", row.l1, row.l2, row.r,
                static_cast<long long>(row.params), static_cast<double>(row.macs) / 1e9, acc,
                row.direct ? "  (direct integration)" : "");
  }
  std::printf("table written to %s\n", (dir / "ablation.csv").string().c_str());
  return kExitOk;
}

int cmd_gradcheck(int seeds, double step, double tolerance) {
  const auto results = a2::run_gradient_checks(seeds, step);
  bool ok = true;
  for (const a2::GradCheckResult& r : results) {
    const bool pass = r.max_rel_error <= tolerance;
    ok = ok && pass;
    std::printf("%-24s max rel err %.3e over %d seeds  [%s]\n", r.name.c_str(), r.max_rel_error,
                r.seeds, pass ? "ok" : "FAIL");
  }
  if (!ok) {
    std::fprintf(stderr, "gradient check exceeded tolerance %.1e\n", tolerance);
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"a2lite: double-attention lightweight CNN toolkit"};
  app.require_subcommand(1);

  std::string config_path, input, dataset, weights, image, out, layers_csv = "10,11,13,14,19";
  int classes = 0, per_class = 0, folds = 5, topk = 5, seeds = 20, batch = 8;
  bool no_attention = false, overfit = false, verbose = false;
  double fit_loss = 0.04, step = 1e-4, tolerance = 1e-4;
  a2::SgdConfig sgd;

  auto add_arch = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "architecture config file (default: built-in canonical)");
    cmd->add_option("--classes", classes, "override class count");
  };
  auto add_sgd = [&](CLI::App* cmd) {
    cmd->add_option("--epochs", sgd.epochs, "training epochs");
    cmd->add_option("--batch", sgd.batch_size, "batch size");
    cmd->add_option("--lr", sgd.learning_rate, "learning rate");
    cmd->add_option("--momentum", sgd.momentum, "SGD momentum");
    cmd->add_option("--weight-decay", sgd.weight_decay, "weight decay");
    cmd->add_option("--seed", sgd.seed, "master seed");
  };

  CLI::App* describe = app.add_subcommand("describe", "print the layer table for an input size");
  add_arch(describe);
  describe->add_option("--input", input, "input size H or HxW");

  CLI::App* count = app.add_subcommand("count", "parameter and GMAC accounting");
  add_arch(count);
  count->add_option("--input", input, "input size H or HxW");
  count->add_flag("--no-attention", no_attention, "drop the attention modules (baseline)");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic PPM dataset tree");
  int synth_classes = 4, synth_per_class = 8, synth_size = 96;
  std::uint64_t synth_seed = 7;
  synth->add_option("--classes", synth_classes, "number of classes");
  synth->add_option("--per-class", synth_per_class, "samples per class");
  synth->add_option("--size", synth_size, "image size");
  synth->add_option("--seed", synth_seed, "seed");
  synth->add_option("--out", out, "output directory");

  CLI::App* train = app.add_subcommand("train", "k-fold cross-validated training");
  add_arch(train);
  add_sgd(train);
  train->add_option("--dataset", dataset, "dataset root (class-per-directory PPM tree)")->required();
  train->add_option("--input", input, "network input size");
  train->add_option("--folds", folds, "number of folds");
  train->add_option("--per-class", per_class, "subsample this many per class first");
  train->add_flag("--overfit", overfit, "fit the whole set and report training accuracy/loss");
  train->add_option("--fit-loss", fit_loss, "early-stop loss threshold for --overfit");
  train->add_flag("--verbose", verbose, "per-epoch progress on stderr");
  train->add_option("--out", out, "run directory");

  CLI::App* eval = app.add_subcommand("eval", "evaluate weights on a dataset");
  add_arch(eval);
  eval->add_option("--dataset", dataset, "dataset root")->required();
  eval->add_option("--weights", weights, "weight file");
  eval->add_option("--input", input, "network input size");
  eval->add_option("--batch", batch, "eval batch size");
  eval->add_option("--out", out, "run directory");

  CLI::App* predict = app.add_subcommand("predict", "classify one PPM image");
  add_arch(predict);
  predict->add_option("--image", image, "PPM image")->required();
  predict->add_option("--weights", weights, "weight file");
  predict->add_option("--input", input, "network input size");
  predict->add_option("--topk", topk, "entries to print");

  CLI::App* activations = app.add_subcommand("activations", "export channel-mean activation maps");
  add_arch(activations);
  activations->add_option("--image", image, "PPM image")->required();
  activations->add_option("--weights", weights, "weight file");
  activations->add_option("--layers", layers_csv, "comma-separated layer indices");
  activations->add_option("--input", input, "network input size");
  activations->add_option("--seed", sgd.seed, "init seed when no weights are given");
  activations->add_option("--out", out, "run directory");

  CLI::App* ablate = app.add_subcommand("ablate", "attention location/ratio grid accounting");
  ablate->add_option("--classes", classes, "class count for the head")->default_val(10);
  ablate->add_option("--input", input, "input size H or HxW");
  ablate->add_option("--dataset", dataset, "train each grid entry on this dataset");
  ablate->add_option("--per-class", per_class, "subsample this many per class first");
  ablate->add_option("--folds", folds, "folds when training");
  add_sgd(ablate);
  ablate->add_option("--out", out, "run directory");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient validation");
  gradcheck->add_option("--seeds", seeds, "random draws per block");
  gradcheck->add_option("--step", step, "finite-difference step");
  gradcheck->add_option("--tolerance", tolerance, "max relative error allowed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (describe->parsed()) return cmd_describe(config_path, input, classes);
    if (count->parsed()) return cmd_count(config_path, input, classes, no_attention);
    if (synth->parsed()) return cmd_synth(synth_classes, synth_per_class, synth_size, synth_seed, out);
    if (train->parsed())
      return cmd_train(dataset, config_path, classes, input, sgd, folds, per_class, overfit,
                       fit_loss, out, verbose);
    if (eval->parsed()) return cmd_eval(dataset, weights, config_path, classes, input, batch, out);
    if (predict->parsed()) return cmd_predict(image, weights, config_path, classes, input, topk);
    if (activations->parsed())
      return cmd_activations(image, weights, config_path, classes, input, layers_csv, sgd.seed, out);
    if (ablate->parsed()) return cmd_ablate(classes, input, dataset, per_class, sgd, folds, out);
    if (gradcheck->parsed()) return cmd_gradcheck(seeds, step, tolerance);
  } catch (const a2::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const a2::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const a2::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const a2::ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitValidation;
}

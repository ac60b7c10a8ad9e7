#include "a2/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "a2/ops.hpp"

namespace fs = std::filesystem;

namespace a2 {

void SgdConfig::validate() const {
  if (learning_rate < 0.0) throw ConfigError("learning rate must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch size must be >= 2 (train-mode batchnorm)");
}

template <typename T>
void sgd_update(Tensor<T>& w, const Tensor<T>& g, Tensor<T>& v, T lr, T momentum, T weight_decay) {
  if (w.shape() != g.shape() || w.shape() != v.shape()) {
    throw ShapeError("sgd_update: mismatched shapes");
  }
  T* pw = w.data();
  const T* pg = g.data();
  T* pv = v.data();
  const std::size_t n = w.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T grad = pg[i] + weight_decay * pw[i];
    pv[i] = momentum * pv[i] + grad;
    pw[i] -= lr * pv[i];
  }
}

template <typename T>
void SgdOptimizer<T>::step(Model<T>& model, Tape<T>& tape) {
  for (auto& p : model.parameters()) {
    const Tensor<T>* g = tape.grad(*p.tensor);
    if (!g) continue;
    auto it = velocity_.find(p.name);
    if (it == velocity_.end()) {
      it = velocity_.emplace(p.name, Tensor<T>(p.tensor->shape())).first;
    }
    const T decay = p.decay ? static_cast<T>(config_.weight_decay) : T(0);
    sgd_update(*p.tensor, *g, it->second, static_cast<T>(config_.learning_rate),
               static_cast<T>(config_.momentum), decay);
  }
}

template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, const std::vector<int>& labels,
                             Tape<T>* tape) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy_loss expects [n,k] logits");
  const int n = logits.extent(0);
  const int k = logits.extent(1);
  if (labels.size() != static_cast<std::size_t>(n)) {
    throw ContractError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(n) + " rows");
  }
  for (int label : labels) {
    if (label < 0 || label >= k) {
      throw ContractError("cross_entropy_loss: label " + std::to_string(label) + " out of range");
    }
  }
  const T* pl = logits.data();
  T total = T(0);
  for (int i = 0; i < n; ++i) {
    const T* row = pl + static_cast<std::size_t>(i) * k;
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T denom = T(0);
    for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    total += (mx + std::log(denom)) - row[labels[static_cast<std::size_t>(i)]];
  }
  Tensor<T> out = Tensor<T>::scalar_of(total / static_cast<T>(n));

  if (tape && tape->tracks(logits)) {
    const int il = logits.tape_id;
    const int io = tape->track(out);
    Tensor<T> logits_c = logits;
    std::vector<int> labels_c = labels;
    tape->record([il, io, logits_c, labels_c, n, k](Tape<T>& t) {
      const Tensor<T>* g = t.grad_by_id(io);
      if (!g) return;
      const T gv = g->data()[0] / static_cast<T>(n);
      T* d = t.grad_slot(il).data();
      const T* pl2 = logits_c.data();
      for (int i = 0; i < n; ++i) {
        const T* row = pl2 + static_cast<std::size_t>(i) * k;
        T* drow = d + static_cast<std::size_t>(i) * k;
        T mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        T denom = T(0);
        for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        for (int j = 0; j < k; ++j) {
          const T soft = std::exp(row[j] - mx) / denom;
          const T onehot = (j == labels_c[static_cast<std::size_t>(i)]) ? T(1) : T(0);
          drow[j] += gv * (soft - onehot);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

Metrics metrics_from_predictions(const std::vector<int>& labels, const std::vector<int>& preds,
                                 int num_classes) {
  if (labels.size() != preds.size()) {
    throw ContractError("metrics: label/prediction count mismatch");
  }
  Metrics m;
  m.confusion.assign(static_cast<std::size_t>(num_classes),
                     std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = preds[i];
    if (y < 0 || y >= num_classes || p < 0 || p >= num_classes) {
      throw ContractError("metrics: label or prediction out of range");
    }
    m.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(p)]++;
    if (y == p) ++correct;
  }
  m.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / labels.size();

  double f1_sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    std::int64_t tp = m.confusion[c][c];
    std::int64_t fp = 0, fn = 0;
    for (int o = 0; o < num_classes; ++o) {
      if (o == c) continue;
      fp += m.confusion[o][c];
      fn += m.confusion[c][o];
    }
    double f1 = 0.0;  // no positives and no predictions -> 0
    if (tp + fp > 0 || tp + fn > 0) {
      const double precision = (tp + fp > 0) ? static_cast<double>(tp) / (tp + fp) : 0.0;
      const double recall = (tp + fn > 0) ? static_cast<double>(tp) / (tp + fn) : 0.0;
      f1 = (precision + recall > 0) ? 2.0 * precision * recall / (precision + recall) : 0.0;
    }
    f1_sum += f1;
  }
  m.macro_f1 = num_classes > 0 ? f1_sum / num_classes : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// datasets
// ---------------------------------------------------------------------------

TensorDataset dataset_from_synth(const SynthDataset& synth) {
  TensorDataset ds;
  ds.num_classes = synth.n_classes;
  ds.class_names = synth.class_names;
  ds.labels = synth.labels;
  ds.inputs.reserve(synth.images.size());
  for (const Image& img : synth.images) {
    ds.inputs.push_back(normalize_image(img));
  }
  return ds;
}

TensorDataset load_tensor_dataset(const DatasetManifest& manifest, int input_size) {
  TensorDataset ds;
  ds.num_classes = static_cast<int>(manifest.classes.size());
  ds.class_names = manifest.classes;
  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    for (const std::string& rel : manifest.samples[c]) {
      const Image img = decode_ppm((fs::path(manifest.root) / rel).string());
      if (img.height == input_size && img.width == input_size) {
        ds.inputs.push_back(normalize_image(img));
      } else {
        ds.inputs.push_back(preprocess(img, input_size));
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

namespace {

Tensor<float> make_batch(const TensorDataset& data, const std::vector<std::size_t>& indices,
                         std::size_t begin, std::size_t end) {
  const Shape& s = data.inputs[indices[begin]].shape();
  const int n = static_cast<int>(end - begin);
  Tensor<float> batch({n, s[0], s[1], s[2]});
  const std::size_t stride = numel(s);
  for (std::size_t i = begin; i < end; ++i) {
    const Tensor<float>& img = data.inputs[indices[i]];
    if (img.shape() != s) throw ShapeError("dataset images must share one shape");
    std::copy(img.data(), img.data() + stride, batch.data() + (i - begin) * stride);
  }
  return batch;
}

std::vector<int> labels_at(const TensorDataset& data, const std::vector<std::size_t>& indices,
                           std::size_t begin, std::size_t end) {
  std::vector<int> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(data.labels[indices[i]]);
  return out;
}

}  // namespace

std::vector<int> predict(Model<float>& model, const TensorDataset& data,
                         const std::vector<std::size_t>& indices, int batch_size) {
  const Mode prev = model.mode();
  model.set_mode(Mode::Eval);
  std::vector<int> preds;
  preds.reserve(indices.size());
  for (std::size_t begin = 0; begin < indices.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(indices.size(), begin + static_cast<std::size_t>(batch_size));
    Tensor<float> logits = model.forward(make_batch(data, indices, begin, end));
    const int k = logits.extent(1);
    for (int i = 0; i < logits.extent(0); ++i) {
      const float* row = logits.data() + static_cast<std::size_t>(i) * k;
      int best = 0;
      for (int j = 1; j < k; ++j) {
        if (row[j] > row[best]) best = j;  // lowest index wins ties
      }
      preds.push_back(best);
    }
  }
  model.set_mode(prev);
  return preds;
}

Metrics evaluate(Model<float>& model, const TensorDataset& data,
                 const std::vector<std::size_t>& indices, int batch_size) {
  const Mode prev = model.mode();
  model.set_mode(Mode::Eval);
  std::vector<int> preds;
  double loss_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t begin = 0; begin < indices.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(indices.size(), begin + static_cast<std::size_t>(batch_size));
    Tensor<float> logits = model.forward(make_batch(data, indices, begin, end));
    const std::vector<int> lbl = labels_at(data, indices, begin, end);
    loss_sum += static_cast<double>(cross_entropy_loss(logits, lbl).item()) * (end - begin);
    count += end - begin;
    const int k = logits.extent(1);
    for (int i = 0; i < logits.extent(0); ++i) {
      const float* row = logits.data() + static_cast<std::size_t>(i) * k;
      int best = 0;
      for (int j = 1; j < k; ++j) {
        if (row[j] > row[best]) best = j;
      }
      preds.push_back(best);
    }
  }
  model.set_mode(prev);
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t i : indices) labels.push_back(data.labels[i]);
  Metrics m = metrics_from_predictions(labels, preds, data.num_classes);
  m.mean_loss = count ? loss_sum / static_cast<double>(count) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

FoldReport train_fold(Model<float>& model, const TensorDataset& data,
                      const std::vector<std::size_t>& train_idx,
                      const std::vector<std::size_t>& test_idx, const SgdConfig& config,
                      int fold_index, const TrainOptions& options) {
  config.validate();
  if (train_idx.empty()) throw ValidationError("train_fold: empty training set");
  for (std::size_t i : test_idx) {
    if (std::find(train_idx.begin(), train_idx.end(), i) != train_idx.end()) {
      throw ValidationError("train_fold: train and test sets overlap at sample " +
                            std::to_string(i));
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  SgdOptimizer<float> optimizer(config);
  Rng shuffle_rng(config.seed ^ (0xf01dULL + static_cast<std::uint64_t>(fold_index)));

  FoldReport report;
  report.fold = fold_index;

  std::vector<std::size_t> order = train_idx;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    model.set_mode(Mode::Train);
    shuffle(order, shuffle_rng);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    std::size_t begin = 0;
    while (begin < order.size()) {
      std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      // keep the last incomplete batch, but fold a trailing single sample
      // into this batch (train-mode BN needs at least 2)
      if (order.size() - end == 1) end = order.size();
      Tape<float> tape;
      model.watch_parameters(tape);
      Tensor<float> logits = model.forward(make_batch(data, order, begin, end), &tape);
      Tensor<float> loss = cross_entropy_loss(logits, labels_at(data, order, begin, end), &tape);
      const double loss_v = static_cast<double>(loss.item());
      if (!std::isfinite(loss_v)) {
        std::ostringstream os;
        os << "non-finite training loss in fold " << fold_index << ", epoch " << epoch + 1
           << ", batch " << batches + 1 << "; epoch losses so far:";
        for (double l : report.epoch_losses) os << ' ' << l;
        throw NumericError(os.str());
      }
      tape.backward(loss);
      optimizer.step(model, tape);
      epoch_loss += loss_v;
      ++batches;
      begin = end;
    }
    report.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
    report.epochs_run = epoch + 1;
    if (options.verbose) {
      std::fprintf(stderr, "fold %d epoch %d/%d loss %.6f\n", fold_index, epoch + 1, config.epochs,
                   report.epoch_losses.back());
    }

    if (options.stop_when_fit) {
      const Metrics fit = evaluate(model, data, train_idx, config.batch_size);
      if (fit.accuracy >= 1.0 && fit.mean_loss < options.fit_loss_threshold) break;
    }
  }

  model.set_mode(Mode::Eval);
  if (!test_idx.empty()) {
    const Metrics m = evaluate(model, data, test_idx, config.batch_size);
    report.accuracy = m.accuracy;
    report.macro_f1 = m.macro_f1;
    report.confusion = m.confusion;
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

namespace {

void summarize(CvSummary& summary) {
  const std::size_t k = summary.folds.size();
  if (k == 0) return;
  double acc = 0.0, f1 = 0.0;
  for (const auto& f : summary.folds) {
    acc += f.accuracy;
    f1 += f.macro_f1;
  }
  summary.mean_accuracy = acc / static_cast<double>(k);
  summary.mean_f1 = f1 / static_cast<double>(k);
  double va = 0.0, vf = 0.0;
  for (const auto& f : summary.folds) {
    va += (f.accuracy - summary.mean_accuracy) * (f.accuracy - summary.mean_accuracy);
    vf += (f.macro_f1 - summary.mean_f1) * (f.macro_f1 - summary.mean_f1);
  }
  summary.std_accuracy = std::sqrt(va / static_cast<double>(k));  // population std
  summary.std_f1 = std::sqrt(vf / static_cast<double>(k));
}

}  // namespace

CvSummary run_cv(const ArchitectureConfig& arch, const TensorDataset& data,
                 const SgdConfig& config, int k, const TrainOptions& options) {
  if (data.size() == 0) throw ValidationError("run_cv: empty dataset");
  const FoldSplit split = stratified_kfold_labels(data.labels, data.num_classes, k, config.seed);
  CvSummary summary;
  for (int fold = 0; fold < k; ++fold) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < split.assignment.size(); ++i) {
      (split.assignment[i] == fold ? test_idx : train_idx).push_back(i);
    }
    Model<float> model = build<float>(arch, config.seed + 1000ULL * (fold + 1));
    SgdConfig fold_config = config;
    fold_config.seed = config.seed + 1000ULL * (fold + 1);
    summary.folds.push_back(train_fold(model, data, train_idx, test_idx, fold_config, fold, options));
  }
  summarize(summary);
  return summary;
}

// ---------------------------------------------------------------------------
// ablation
// ---------------------------------------------------------------------------

std::vector<AblationRow> ablation_grid(int num_classes, ImageDims input, const TensorDataset* data,
                                       const SgdConfig* config, int folds) {
  const std::pair<int, int> locations[] = {{10, 11}, {11, 14}, {13, 14}};
  const int ratios[] = {4, 6, 8};

  std::vector<AblationRow> rows;
  for (int r : ratios) {
    for (const auto& loc : locations) {
      ArchitectureConfig arch = ArchitectureConfig::canonical(num_classes);
      arch.attention_locations = {loc.first, loc.second};
      arch.ratio = r;
      Model<float> model = build<float>(arch, 1);
      AblationRow row;
      row.l1 = loc.first;
      row.l2 = loc.second;
      row.r = r;
      row.params = count_params(model);
      row.macs = count_macs(model, input);
      if (data && config) {
        const CvSummary cv = run_cv(arch, *data, *config, folds);
        row.acc_mean = cv.mean_accuracy;
        row.acc_std = cv.std_accuracy;
      }
      rows.push_back(row);
    }
  }
  // direct integration: standalone r=1 modules appended after rows 11 and 14
  {
    ArchitectureConfig arch = ArchitectureConfig::canonical(num_classes);
    arch.attention_locations = {11, 14};
    arch.direct_attention = true;
    Model<float> model = build<float>(arch, 1);
    AblationRow row;
    row.l1 = 11;
    row.l2 = 14;
    row.r = 1;
    row.direct = true;
    row.params = count_params(model);
    row.macs = count_macs(model, input);
    rows.push_back(row);  // accounting only, never trained
  }
  return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << "l1,l2,r,params,gmacs,acc_mean,acc_std\n";
  char buf[64];
  for (const AblationRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%.4f", static_cast<double>(row.macs) / 1e9);
    f << row.l1 << ',' << row.l2 << ',' << row.r << ',' << row.params << ',' << buf << ',';
    if (row.acc_mean) {
      f << *row.acc_mean << ',' << *row.acc_std;
    } else {
      f << ',';
    }
    f << '\n';
  }
}

// ---------------------------------------------------------------------------
// activation export
// ---------------------------------------------------------------------------

void export_activations(Model<float>& model, const Tensor<float>& image,
                        const std::vector<int>& layer_indices, const std::string& out_dir) {
  if (image.rank() != 3) throw ShapeError("export_activations expects a (3,h,w) image tensor");
  const int num_rows = static_cast<int>(model.config().rows.size());
  for (int idx : layer_indices) {
    if (idx < 1 || idx > num_rows) {
      throw ValidationError("layer index " + std::to_string(idx) + " out of range 1.." +
                            std::to_string(num_rows));
    }
    const LayerKind kind = model.config().rows[static_cast<std::size_t>(idx - 1)].kind;
    if (kind == LayerKind::AvgPool || kind == LayerKind::Classifier) {
      throw ValidationError("layer " + std::to_string(idx) + " (" + kind_name(kind) +
                            ") has no spatial feature map");
    }
  }

  fs::create_directories(out_dir);
  const Mode prev = model.mode();
  model.set_mode(Mode::Eval);
  std::vector<Tensor<float>> taps;
  Tensor<float> batch = image.reshaped({1, image.extent(0), image.extent(1), image.extent(2)});
  model.forward(batch, nullptr, &taps);
  model.set_mode(prev);

  for (int idx : layer_indices) {
    const Tensor<float>& fm = taps[static_cast<std::size_t>(idx - 1)];
    const int c = fm.extent(1), h = fm.extent(2), w = fm.extent(3);
    std::vector<float> mean(static_cast<std::size_t>(h) * w, 0.0f);
    const float* p = fm.data();
    for (int ci = 0; ci < c; ++ci) {
      for (int i = 0; i < h * w; ++i) {
        mean[static_cast<std::size_t>(i)] += p[static_cast<std::size_t>(ci) * h * w + i];
      }
    }
    for (float& v : mean) v /= static_cast<float>(c);
    float lo = mean[0], hi = mean[0];
    for (float v : mean) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi > lo) {
      for (float& v : mean) v = (v - lo) / (hi - lo);
    } else {
      for (float& v : mean) v = 0.0f;  // degenerate range
    }

    const std::string stem = (fs::path(out_dir) / ("layer" + std::to_string(idx))).string();
    write_pgm(stem + ".pgm", h, w, mean);
    std::ofstream csv(stem + ".csv", std::ios::trunc);
    if (!csv) throw ValidationError("cannot write '" + stem + ".csv'");
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (x) csv << ',';
        csv << mean[static_cast<std::size_t>(y) * w + x];
      }
      csv << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// report files
// ---------------------------------------------------------------------------

void write_fold_summary(const std::string& path, const CvSummary& summary) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << "folds = " << summary.folds.size() << "\n";
  char buf[128];
  for (const FoldReport& r : summary.folds) {
    std::snprintf(buf, sizeof(buf), "fold %d: accuracy %.6f macro_f1 %.6f epochs %d wall_s %.2f",
                  r.fold, r.accuracy, r.macro_f1, r.epochs_run, r.wall_seconds);
    f << buf << "\n";
  }
  std::snprintf(buf, sizeof(buf), "accuracy = %.6f +/- %.6f", summary.mean_accuracy,
                summary.std_accuracy);
  f << buf << "\n";
  std::snprintf(buf, sizeof(buf), "macro_f1 = %.6f +/- %.6f", summary.mean_f1, summary.std_f1);
  f << buf << "\n";
}

void write_confusion_csv(const std::string& path,
                         const std::vector<std::vector<std::int64_t>>& confusion,
                         const std::vector<std::string>& class_names) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << "true\\pred";
  for (std::size_t c = 0; c < confusion.size(); ++c) {
    f << ',' << (c < class_names.size() ? class_names[c] : "class_" + std::to_string(c));
  }
  f << '\n';
  for (std::size_t r = 0; r < confusion.size(); ++r) {
    f << (r < class_names.size() ? class_names[r] : "class_" + std::to_string(r));
    for (std::int64_t v : confusion[r]) f << ',' << v;
    f << '\n';
  }
}

template void sgd_update<float>(Tensor<float>&, const Tensor<float>&, Tensor<float>&, float, float,
                                float);
template void sgd_update<double>(Tensor<double>&, const Tensor<double>&, Tensor<double>&, double,
                                 double, double);
template class SgdOptimizer<float>;
template class SgdOptimizer<double>;
template Tensor<float> cross_entropy_loss<float>(const Tensor<float>&, const std::vector<int>&,
                                                 Tape<float>*);
template Tensor<double> cross_entropy_loss<double>(const Tensor<double>&, const std::vector<int>&,
                                                   Tape<double>*);

}  // namespace a2

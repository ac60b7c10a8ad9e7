#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "a2/data.hpp"
#include "a2/model.hpp"
#include "a2/tensor.hpp"

namespace a2 {

struct SgdConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int epochs = 50;
  int batch_size = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

// g' = g + weight_decay * w;  v' = momentum * v + g';  w' = w - lr * v'.
template <typename T>
void sgd_update(Tensor<T>& w, const Tensor<T>& g, Tensor<T>& v, T lr, T momentum, T weight_decay);

// Per-parameter velocity keyed by name; weight decay skips biases and BN
// affine parameters (the decay flag on NamedParam).
template <typename T>
class SgdOptimizer {
 public:
  explicit SgdOptimizer(const SgdConfig& config) : config_(config) { config_.validate(); }
  void step(Model<T>& model, Tape<T>& tape);

 private:
  SgdConfig config_;
  std::map<std::string, Tensor<T>> velocity_;
};

// Mean over the batch of -log softmax(logits)[label], stable log-sum-exp.
template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, const std::vector<int>& labels,
                             Tape<T>* tape = nullptr);

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double mean_loss = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
};

// Confusion/accuracy/macro-F1 from label/prediction pairs. Per-class F1 is 0
// when the class has neither positives nor predictions.
Metrics metrics_from_predictions(const std::vector<int>& labels, const std::vector<int>& preds,
                                 int num_classes);

// Preprocessed in-memory dataset.
struct TensorDataset {
  std::vector<Tensor<float>> inputs;  // each (3,h,w)
  std::vector<int> labels;
  int num_classes = 0;
  std::vector<std::string> class_names;

  std::size_t size() const { return inputs.size(); }
};

TensorDataset dataset_from_synth(const SynthDataset& synth);

// Decodes and preprocesses every manifest sample to (3,input,input).
TensorDataset load_tensor_dataset(const DatasetManifest& manifest, int input_size);

// Argmax predictions (lowest index wins ties), batched eval-mode forward.
std::vector<int> predict(Model<float>& model, const TensorDataset& data,
                         const std::vector<std::size_t>& indices, int batch_size);

Metrics evaluate(Model<float>& model, const TensorDataset& data,
                 const std::vector<std::size_t>& indices, int batch_size);

struct FoldReport {
  int fold = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;
  std::vector<double> epoch_losses;
  double wall_seconds = 0.0;
  int epochs_run = 0;
};

struct TrainOptions {
  // Stop once eval-mode accuracy on the training set is 1.0 and its loss is
  // below fit_loss_threshold (used by the overfit harness).
  bool stop_when_fit = false;
  double fit_loss_threshold = 0.04;
  bool verbose = false;
};

// Seeded per-epoch shuffling, BN in train mode while fitting and eval mode
// for testing. A trailing batch of one sample is merged into the previous
// batch. Non-finite loss aborts with a diagnostic trace.
FoldReport train_fold(Model<float>& model, const TensorDataset& data,
                      const std::vector<std::size_t>& train_idx,
                      const std::vector<std::size_t>& test_idx, const SgdConfig& config,
                      int fold_index = 0, const TrainOptions& options = {});

struct CvSummary {
  std::vector<FoldReport> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population formula
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
};

// Trains k independent models from seeds derived from config.seed; fold i of
// the stratified split is the test set of run i.
CvSummary run_cv(const ArchitectureConfig& arch, const TensorDataset& data,
                 const SgdConfig& config, int k = 5, const TrainOptions& options = {});

struct AblationRow {
  int l1 = 0, l2 = 0;
  int r = 0;
  bool direct = false;  // standalone modules appended after the rows
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::optional<double> acc_mean, acc_std;
};

// Accounting for the location/ratio grid plus the direct-integration row;
// trains each grid configuration when a dataset is supplied.
std::vector<AblationRow> ablation_grid(int num_classes, ImageDims input,
                                       const TensorDataset* data = nullptr,
                                       const SgdConfig* config = nullptr, int folds = 5);

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

// Channel-mean activation maps, min-max normalized to [0,1] (degenerate maps
// go to zero), written as both PGM (P5) and CSV per requested layer.
void export_activations(Model<float>& model, const Tensor<float>& image,
                        const std::vector<int>& layer_indices, const std::string& out_dir);

void write_fold_summary(const std::string& path, const CvSummary& summary);
void write_confusion_csv(const std::string& path,
                         const std::vector<std::vector<std::int64_t>>& confusion,
                         const std::vector<std::string>& class_names);

}  // namespace a2

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "a2/attention.hpp"
#include "a2/layers.hpp"
#include "a2/rng.hpp"
#include "a2/tensor.hpp"

namespace a2 {

enum class LayerKind {
  Conv3x3,
  ChannelReduction,
  Downsample,
  InvertedResidual,
  DoubleAttentionIr,
  ChannelExpansion,
  Conv1x1,
  AvgPool,
  Classifier,
};

const char* kind_name(LayerKind kind);
LayerKind kind_from_name(const std::string& name);

// One logical layer of the architecture table. `kind` is the structural kind;
// attention placement is overlaid by ArchitectureConfig::attended().
struct LayerRow {
  int index = 0;         // 1-based, consecutive
  LayerKind kind = LayerKind::InvertedResidual;
  int out_channels = 0;  // ignored for avgpool/classifier
  int stride = 1;        // 0 for rows without a spatial op (prints "-")
};

struct ImageDims {
  int h = 0, w = 0, c = 0;
};

// Architecture as data: the layer table plus attention placement and the
// shared channel-reduction ratio.
struct ArchitectureConfig {
  std::vector<LayerRow> rows;
  std::set<int> attention_locations;  // row indices, deeply integrated
  int ratio = 6;                      // shared value for both attention ratios
  int num_classes = 10;
  bool direct_attention = false;  // standalone r=1 modules appended after the location rows
  double dropout_rate = 0.2;
  int input_h = 224, input_w = 224, input_channels = 3;

  // The 21-row reference network; width_div > 1 narrows every channel count
  // (2 gives the halved desk-scale variant).
  static ArchitectureConfig canonical(int num_classes = 10, int width_div = 1);

  bool attended(int index) const { return attention_locations.count(index) > 0; }
  LayerKind effective_kind(int index) const;
  void validate() const;
};

// Structured text round-trip (key = value plus `row` lines).
ArchitectureConfig parse_config_text(const std::string& text, const std::string& origin);
ArchitectureConfig load_config_file(const std::string& path);
std::string config_to_text(const ArchitectureConfig& config);

struct ShapeRow {
  int index = 0;
  LayerKind kind = LayerKind::InvertedResidual;  // effective kind
  ImageDims in, out;
  int stride = 0;  // 0 = "-"
};

// Full shape chain for a given input; the canonical config at 224x224x3
// reproduces the reference table exactly.
std::vector<ShapeRow> infer_shapes(const ArchitectureConfig& config, ImageDims input);

template <typename T>
struct LinearParams {
  Tensor<T> weight;  // (k, features)
  Tensor<T> bias;    // (k)
};

template <typename T>
class Model {
 public:
  struct ConvBnLayer {
    ConvSpec spec;
    ConvParams<T> conv;
    BatchNormState<T> bn;
  };
  struct Layer {
    LayerRow row;
    std::optional<ConvBnLayer> conv_bn;                         // Conv3x3 / Conv1x1
    std::optional<InvertedResidualSpec> ir_spec;                // bottleneck kinds
    std::optional<InvertedResidualParams<T>> ir;                // bottleneck kinds
    std::shared_ptr<DoubleAttentionParams<T>> post_attention;   // direct integration
  };

  struct NamedParam {
    std::string name;
    Tensor<T>* tensor;
    bool decay;  // false for biases and BN affine params
  };

  const ArchitectureConfig& config() const { return config_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }
  int num_classes() const { return config_.num_classes; }

  std::vector<Layer>& layers() { return layers_; }
  LinearParams<T>& classifier() { return classifier_; }

  // Logits [n,k]; per-row feature maps are appended to `taps` when given
  // (one entry per table row). Train mode requires a tape.
  Tensor<T> forward(const Tensor<T>& batch, Tape<T>* tape = nullptr,
                    std::vector<Tensor<T>>* taps = nullptr);

  std::vector<NamedParam> parameters();
  std::vector<NamedParam> persistent_state();  // parameters + BN running stats
  void watch_parameters(Tape<T>& tape);

  void reseed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

  template <typename U>
  friend Model<U> build(const ArchitectureConfig&, std::uint64_t);

 private:
  ArchitectureConfig config_;
  std::vector<Layer> layers_;
  LinearParams<T> classifier_;
  Mode mode_ = Mode::Eval;
  Rng dropout_rng_{0};
};

// Deterministic for a fixed seed: conv weights from a fan-out-scaled normal,
// BN gamma=1/beta=0, classifier from a 0.01-std normal.
template <typename T>
Model<T> build(const ArchitectureConfig& config, std::uint64_t seed);

// Trainable parameter count; BN running statistics excluded.
template <typename T>
std::int64_t count_params(Model<T>& model);

// Multiply-accumulate count for one forward pass: convolution and linear
// kernels (plus their biases), 2/element for batchnorm, 1/element for
// activations, pooling input reads, and 2*c_m*c_n*h*w per attention module
// for the two batched products. Residual adds and softmax are not counted.
template <typename T>
std::int64_t count_macs(Model<T>& model, ImageDims input);

// Binary little-endian weight file: magic "A2LW", version u32, entry count
// u32; per entry: name length u16, UTF-8 name, dtype code u8 (0=f32, 1=f64),
// rank u8, extents u32 each, raw values. Holds parameters and BN running
// stats; round-trips bitwise.
template <typename T>
void save_weights(Model<T>& model, const std::string& path);

// Validates every name and shape before mutating anything. With reinit_head,
// entries under "classifier." are ignored and the model keeps its current
// (freshly initialized) classifier.
template <typename T>
void load_weights(Model<T>& model, const std::string& path, bool reinit_head = false);

}  // namespace a2

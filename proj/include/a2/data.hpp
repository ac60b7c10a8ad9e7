#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "a2/rng.hpp"
#include "a2/tensor.hpp"

namespace a2 {

// Interleaved RGB, values in [0,1] after decode.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // height * width * 3

  float at(int y, int x, int ch) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
  float& at(int y, int x, int ch) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
};

// PPM (P6, maxval 255) codec; bit-exact byte mapping v/255.
Image decode_ppm(const std::string& path);
Image decode_ppm_bytes(const std::string& bytes, const std::string& origin);
void write_ppm(const std::string& path, const Image& image);

// PGM (P5, maxval 255) for activation maps; values clamped to [0,1].
void write_pgm(const std::string& path, int height, int width, const std::vector<float>& gray);
std::vector<float> read_pgm(const std::string& path, int& height, int& width);

// Class-per-directory dataset tree. Class order and per-class file lists are
// lexicographic so label assignment is stable across platforms.
struct DatasetManifest {
  std::string root;
  std::vector<std::string> classes;
  std::vector<std::vector<std::string>> samples;  // per class, paths relative to root

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.size();
    return n;
  }
  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> c;
    for (const auto& s : samples) c.push_back(s.size());
    return c;
  }
};

struct ScanReport {
  DatasetManifest manifest;
  std::vector<std::string> warnings;  // unreadable files, excluded
};

ScanReport scan_dataset(const std::string& root);

// Seeded selection of exactly per_class samples per class, without
// replacement; errors when any class is smaller than per_class.
DatasetManifest sample_per_class(const DatasetManifest& manifest, int per_class, std::uint64_t seed);

// Bilinear resize, half-pixel-center convention.
Image bilinear_resize(const Image& image, int out_h, int out_w);
Image center_crop(const Image& image, int size);

// Fixed normalization constants applied per channel after scaling to [0,1].
inline constexpr float kNormMean[3] = {0.485f, 0.456f, 0.406f};
inline constexpr float kNormStd[3] = {0.229f, 0.224f, 0.225f};

// Resize the shorter side to round(target * 8/7) (256 for the 224 default,
// skipped when it already matches), center-crop target, normalize. Output is
// always (3, target, target).
Tensor<float> preprocess(const Image& image, int target = 224);

// Normalization only, for images already at the network input size.
Tensor<float> normalize_image(const Image& image);

// Stratified k-fold assignment over the manifest's flattened sample order
// (class-major). Per class the (seeded) shuffled samples go round-robin to
// folds 0..k-1, so class fold sizes differ by at most one.
struct FoldSplit {
  int k = 5;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // per flattened sample index
};

FoldSplit stratified_kfold(const DatasetManifest& manifest, int k, std::uint64_t seed);
FoldSplit stratified_kfold_labels(const std::vector<int>& labels, int num_classes, int k,
                                  std::uint64_t seed);

// `class<TAB>relative_path<TAB>fold` per sample.
void export_manifest_tsv(const DatasetManifest& manifest, const FoldSplit& split,
                         const std::string& path);

// Deterministic procedural dataset: each class has a distinct base color and
// stripe frequency, with per-sample phase/orientation jitter and pixel noise.
struct SynthDataset {
  int n_classes = 0;
  int per_class = 0;
  int image_size = 0;
  std::vector<Image> images;  // class-major order
  std::vector<int> labels;
  std::vector<std::string> class_names;
};

SynthDataset synth_dataset(int n_classes, int per_class, int image_size, std::uint64_t seed);

// Writes the synthetic set as a class-per-directory PPM tree.
void write_synth_tree(const SynthDataset& dataset, const std::string& root);

}  // namespace a2

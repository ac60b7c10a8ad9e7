#include "a2/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "a2/error.hpp"

namespace fs = std::filesystem;

namespace a2 {

// ---------------------------------------------------------------------------
// PPM / PGM
// ---------------------------------------------------------------------------

namespace {

// Reads one PNM header token, skipping whitespace and '#' comments.
std::string pnm_token(const std::string& buf, std::size_t& pos, const std::string& origin) {
  while (pos < buf.size()) {
    const char c = buf[pos];
    if (c == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  if (start == pos) throw FormatError(origin + ": truncated PNM header");
  return buf.substr(start, pos - start);
}

int pnm_int(const std::string& buf, std::size_t& pos, const std::string& origin) {
  const std::string tok = pnm_token(buf, pos, origin);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(origin + ": bad PNM header value '" + tok + "'");
  }
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

Image decode_ppm_bytes(const std::string& buf, const std::string& origin) {
  std::size_t pos = 0;
  if (pnm_token(buf, pos, origin) != "P6") {
    throw FormatError(origin + ": not a P6 PPM file");
  }
  const int width = pnm_int(buf, pos, origin);
  const int height = pnm_int(buf, pos, origin);
  const int maxval = pnm_int(buf, pos, origin);
  if (width < 1 || height < 1) throw FormatError(origin + ": bad PPM dimensions");
  if (maxval != 255) {
    throw FormatError(origin + ": unsupported maxval " + std::to_string(maxval) + " (only 255)");
  }
  pos += 1;  // single whitespace byte after maxval
  const std::size_t need = static_cast<std::size_t>(width) * height * 3;
  if (pos + need > buf.size()) throw FormatError(origin + ": truncated PPM pixel data");

  Image img;
  img.width = width;
  img.height = height;
  img.pixels.resize(need);
  for (std::size_t i = 0; i < need; ++i) {
    img.pixels[i] = static_cast<float>(static_cast<unsigned char>(buf[pos + i])) / 255.0f;
  }
  return img;
}

Image decode_ppm(const std::string& path) {
  return decode_ppm_bytes(read_file(path), path);
}

void write_ppm(const std::string& path, const Image& image) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::string bytes;
  bytes.reserve(image.pixels.size());
  for (float v : image.pixels) {
    const float c = std::min(std::max(v, 0.0f), 1.0f);
    bytes.push_back(static_cast<char>(static_cast<int>(std::lround(c * 255.0f))));
  }
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ValidationError("short write to '" + path + "'");
}

void write_pgm(const std::string& path, int height, int width, const std::vector<float>& gray) {
  if (gray.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeError("write_pgm: value count does not match dimensions");
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << "P5\n" << width << ' ' << height << "\n255\n";
  std::string bytes;
  bytes.reserve(gray.size());
  for (float v : gray) {
    const float c = std::min(std::max(v, 0.0f), 1.0f);
    bytes.push_back(static_cast<char>(static_cast<int>(std::lround(c * 255.0f))));
  }
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ValidationError("short write to '" + path + "'");
}

std::vector<float> read_pgm(const std::string& path, int& height, int& width) {
  const std::string buf = read_file(path);
  std::size_t pos = 0;
  if (pnm_token(buf, pos, path) != "P5") throw FormatError(path + ": not a P5 PGM file");
  width = pnm_int(buf, pos, path);
  height = pnm_int(buf, pos, path);
  const int maxval = pnm_int(buf, pos, path);
  if (maxval != 255) throw FormatError(path + ": unsupported maxval");
  pos += 1;
  const std::size_t need = static_cast<std::size_t>(width) * height;
  if (pos + need > buf.size()) throw FormatError(path + ": truncated PGM pixel data");
  std::vector<float> out(need);
  for (std::size_t i = 0; i < need; ++i) {
    out[i] = static_cast<float>(static_cast<unsigned char>(buf[pos + i])) / 255.0f;
  }
  return out;
}

// ---------------------------------------------------------------------------
// dataset scan
// ---------------------------------------------------------------------------

ScanReport scan_dataset(const std::string& root) {
  if (!fs::is_directory(root)) {
    throw ValidationError("dataset root '" + root + "' is not a directory");
  }
  ScanReport report;
  report.manifest.root = root;

  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) {
    throw ValidationError("dataset root '" + root + "' contains no class directories");
  }

  for (const std::string& cls : class_dirs) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / cls)) {
      if (!entry.is_regular_file()) continue;
      if (entry.path().extension() != ".ppm") continue;
      files.push_back(entry.path().filename().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::string> kept;
    for (const std::string& f : files) {
      const std::string rel = cls + "/" + f;
      std::ifstream probe(fs::path(root) / cls / f, std::ios::binary);
      char magic[2] = {0, 0};
      probe.read(magic, 2);
      if (!probe || magic[0] != 'P' || magic[1] != '6') {
        report.warnings.push_back(rel + ": unreadable or not a P6 PPM, excluded");
        continue;
      }
      kept.push_back(rel);
    }
    if (kept.empty()) {
      throw ValidationError("class directory '" + cls + "' has no usable samples");
    }
    report.manifest.classes.push_back(cls);
    report.manifest.samples.push_back(std::move(kept));
  }
  return report;
}

DatasetManifest sample_per_class(const DatasetManifest& manifest, int per_class,
                                 std::uint64_t seed) {
  if (per_class < 1) throw ValidationError("per_class must be >= 1");
  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    if (manifest.samples[c].size() < static_cast<std::size_t>(per_class)) {
      throw ValidationError("class '" + manifest.classes[c] + "' has only " +
                            std::to_string(manifest.samples[c].size()) + " samples, need " +
                            std::to_string(per_class));
    }
  }
  DatasetManifest out;
  out.root = manifest.root;
  out.classes = manifest.classes;
  Rng rng(seed);
  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    std::vector<std::string> pool = manifest.samples[c];
    shuffle(pool, rng);
    pool.resize(static_cast<std::size_t>(per_class));
    std::sort(pool.begin(), pool.end());
    out.samples.push_back(std::move(pool));
  }
  return out;
}

// ---------------------------------------------------------------------------
// preprocessing
// ---------------------------------------------------------------------------

Image bilinear_resize(const Image& image, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ValidationError("resize target must be positive");
  Image out;
  out.height = out_h;
  out.width = out_w;
  out.pixels.resize(static_cast<std::size_t>(out_h) * out_w * 3);
  const double sy = static_cast<double>(image.height) / out_h;
  const double sx = static_cast<double>(image.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    // half-pixel centers: src = (dst + 0.5) * scale - 0.5
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1.0 - wx) * image.at(y0, x0, ch) + wx * image.at(y0, x1, ch);
        const double bot = (1.0 - wx) * image.at(y1, x0, ch) + wx * image.at(y1, x1, ch);
        out.at(y, x, ch) = static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

Image center_crop(const Image& image, int size) {
  if (image.height < size || image.width < size) {
    throw ValidationError("image " + std::to_string(image.width) + "x" +
                          std::to_string(image.height) + " too small for a " +
                          std::to_string(size) + " crop");
  }
  const int y0 = (image.height - size) / 2;
  const int x0 = (image.width - size) / 2;
  Image out;
  out.height = size;
  out.width = size;
  out.pixels.resize(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = image.at(y0 + y, x0 + x, ch);
    }
  }
  return out;
}

namespace {

Tensor<float> to_chw_normalized(const Image& image) {
  const int h = image.height, w = image.width;
  Tensor<float> t({3, h, w});
  float* p = t.data();
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        p[(static_cast<std::size_t>(ch) * h + y) * w + x] =
            (image.at(y, x, ch) - kNormMean[ch]) / kNormStd[ch];
      }
    }
  }
  return t;
}

}  // namespace

Tensor<float> preprocess(const Image& image, int target) {
  if (image.height < 8 || image.width < 8) {
    throw ValidationError("image too small to preprocess: " + std::to_string(image.width) + "x" +
                          std::to_string(image.height));
  }
  const int resize_target = static_cast<int>(std::lround(target * 8.0 / 7.0));  // 256 for 224
  const int short_side = std::min(image.height, image.width);
  Image resized = image;
  if (short_side != resize_target) {
    const double scale = static_cast<double>(resize_target) / short_side;
    const int nh = std::max(resize_target,
                            static_cast<int>(std::lround(image.height * scale)));
    const int nw = std::max(resize_target,
                            static_cast<int>(std::lround(image.width * scale)));
    resized = bilinear_resize(image, image.height <= image.width ? resize_target : nh,
                              image.width < image.height ? resize_target : nw);
  }
  return to_chw_normalized(center_crop(resized, target));
}

Tensor<float> normalize_image(const Image& image) {
  return to_chw_normalized(image);
}

// ---------------------------------------------------------------------------
// folds
// ---------------------------------------------------------------------------

FoldSplit stratified_kfold_labels(const std::vector<int>& labels, int num_classes, int k,
                                  std::uint64_t seed) {
  if (k < 2) throw ValidationError("k-fold needs k >= 2");
  FoldSplit split;
  split.k = k;
  split.seed = seed;
  split.assignment.assign(labels.size(), -1);
  Rng rng(seed);
  for (int c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) idx.push_back(i);
    }
    shuffle(idx, rng);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      split.assignment[idx[j]] = static_cast<int>(j % static_cast<std::size_t>(k));
    }
  }
  return split;
}

FoldSplit stratified_kfold(const DatasetManifest& manifest, int k, std::uint64_t seed) {
  std::vector<int> labels;
  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    labels.insert(labels.end(), manifest.samples[c].size(), static_cast<int>(c));
  }
  return stratified_kfold_labels(labels, static_cast<int>(manifest.classes.size()), k, seed);
}

void export_manifest_tsv(const DatasetManifest& manifest, const FoldSplit& split,
                         const std::string& path) {
  if (split.assignment.size() != manifest.total()) {
    throw ShapeError("fold assignment does not cover the manifest");
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  std::size_t flat = 0;
  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    for (const std::string& rel : manifest.samples[c]) {
      f << manifest.classes[c] << '\t' << rel << '\t' << split.assignment[flat++] << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// synthetic dataset
// ---------------------------------------------------------------------------

namespace {

// Well-separated base colors; cycled with a brightness shift past 8 classes.
constexpr float kPalette[8][3] = {
    {0.85f, 0.20f, 0.15f}, {0.15f, 0.75f, 0.20f}, {0.15f, 0.25f, 0.85f}, {0.90f, 0.80f, 0.15f},
    {0.80f, 0.20f, 0.80f}, {0.15f, 0.80f, 0.80f}, {0.95f, 0.55f, 0.15f}, {0.55f, 0.35f, 0.20f},
};

}  // namespace

SynthDataset synth_dataset(int n_classes, int per_class, int image_size, std::uint64_t seed) {
  if (n_classes < 2 || per_class < 1 || image_size < 8) {
    throw ValidationError("synth_dataset: need >=2 classes, >=1 per class, size >= 8");
  }
  SynthDataset ds;
  ds.n_classes = n_classes;
  ds.per_class = per_class;
  ds.image_size = image_size;
  Rng master(seed);

  for (int c = 0; c < n_classes; ++c) {
    std::ostringstream name;
    name << "class_" << (c < 10 ? "0" : "") << c;
    ds.class_names.push_back(name.str());
  }

  const double tau = 6.283185307179586;
  for (int c = 0; c < n_classes; ++c) {
    const float* base = kPalette[c % 8];
    const float dim = 1.0f - 0.35f * static_cast<float>(c / 8);
    const double freq = 2.0 + 1.5 * c;           // stripes per image, distinct per class
    const double theta = 0.35 * c;               // stripe orientation, distinct per class
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int s = 0; s < per_class; ++s) {
      Rng rng = master.fork(static_cast<std::uint64_t>(c) * 100003ULL + static_cast<std::uint64_t>(s));
      const double phase = rng.uniform() * tau;
      const double jitter = 1.0 + 0.1 * (rng.uniform() - 0.5);
      Image img;
      img.height = image_size;
      img.width = image_size;
      img.pixels.resize(static_cast<std::size_t>(image_size) * image_size * 3);
      for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
          const double u = (ct * x + st * y) / image_size;
          const double wave = std::sin(tau * freq * jitter * u + phase);
          const float lum = static_cast<float>(0.62 + 0.25 * wave);
          for (int ch = 0; ch < 3; ++ch) {
            const float noise = static_cast<float>((rng.uniform() - 0.5) * 0.08);
            float v = base[ch] * dim * lum + noise;
            img.at(y, x, ch) = std::min(std::max(v, 0.0f), 1.0f);
          }
        }
      }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

void write_synth_tree(const SynthDataset& dataset, const std::string& root) {
  fs::create_directories(root);
  std::size_t flat = 0;
  for (int c = 0; c < dataset.n_classes; ++c) {
    const fs::path dir = fs::path(root) / dataset.class_names[static_cast<std::size_t>(c)];
    fs::create_directories(dir);
    for (int s = 0; s < dataset.per_class; ++s, ++flat) {
      std::ostringstream name;
      name << "sample_" << (s < 10 ? "0" : "") << s << ".ppm";
      write_ppm((dir / name.str()).string(), dataset.images[flat]);
    }
  }
}

}  // namespace a2

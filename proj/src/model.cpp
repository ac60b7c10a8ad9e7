#include "a2/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace a2 {

const char* kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv3x3: return "conv3x3";
    case LayerKind::ChannelReduction: return "channel_reduction";
    case LayerKind::Downsample: return "downsample";
    case LayerKind::InvertedResidual: return "inverted_residual";
    case LayerKind::DoubleAttentionIr: return "double_attention";
    case LayerKind::ChannelExpansion: return "channel_expansion";
    case LayerKind::Conv1x1: return "conv1x1";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Classifier: return "classifier";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& name) {
  if (name == "conv3x3") return LayerKind::Conv3x3;
  if (name == "channel_reduction") return LayerKind::ChannelReduction;
  if (name == "downsample") return LayerKind::Downsample;
  if (name == "inverted_residual") return LayerKind::InvertedResidual;
  if (name == "double_attention") return LayerKind::DoubleAttentionIr;
  if (name == "channel_expansion") return LayerKind::ChannelExpansion;
  if (name == "conv1x1") return LayerKind::Conv1x1;
  if (name == "avgpool") return LayerKind::AvgPool;
  if (name == "classifier") return LayerKind::Classifier;
  throw FormatError("unknown layer kind '" + name + "'");
}

LayerKind ArchitectureConfig::effective_kind(int index) const {
  const LayerRow& row = rows.at(static_cast<std::size_t>(index - 1));
  if (attended(index) && !direct_attention) return LayerKind::DoubleAttentionIr;
  return row.kind;
}

ArchitectureConfig ArchitectureConfig::canonical(int num_classes, int width_div) {
  if (width_div < 1) throw ConfigError("width divisor must be >= 1");
  auto ch = [width_div](int c) {
    if (c % width_div != 0) {
      throw ConfigError("width divisor " + std::to_string(width_div) +
                        " does not divide channel count " + std::to_string(c));
    }
    return c / width_div;
  };
  ArchitectureConfig cfg;
  cfg.num_classes = num_classes;
  cfg.ratio = 6;
  cfg.attention_locations = {11, 14};
  cfg.rows = {
      {1, LayerKind::Conv3x3, ch(32), 2},
      {2, LayerKind::ChannelReduction, ch(16), 1},
      {3, LayerKind::Downsample, ch(24), 2},
      {4, LayerKind::InvertedResidual, ch(24), 1},
      {5, LayerKind::Downsample, ch(32), 2},
      {6, LayerKind::InvertedResidual, ch(32), 1},
      {7, LayerKind::InvertedResidual, ch(32), 1},
      {8, LayerKind::Downsample, ch(64), 2},
      {9, LayerKind::InvertedResidual, ch(64), 1},
      {10, LayerKind::InvertedResidual, ch(64), 1},
      {11, LayerKind::InvertedResidual, ch(64), 1},
      {12, LayerKind::ChannelExpansion, ch(96), 1},
      {13, LayerKind::InvertedResidual, ch(96), 1},
      {14, LayerKind::InvertedResidual, ch(96), 1},
      {15, LayerKind::Downsample, ch(160), 2},
      {16, LayerKind::InvertedResidual, ch(160), 1},
      {17, LayerKind::InvertedResidual, ch(160), 1},
      {18, LayerKind::ChannelExpansion, ch(320), 1},
      {19, LayerKind::Conv1x1, ch(1280), 1},
      {20, LayerKind::AvgPool, 0, 0},
      {21, LayerKind::Classifier, 0, 0},
  };
  return cfg;
}

namespace {

bool is_bottleneck(LayerKind kind) {
  return kind == LayerKind::ChannelReduction || kind == LayerKind::Downsample ||
         kind == LayerKind::InvertedResidual || kind == LayerKind::ChannelExpansion;
}

int expansion_of(LayerKind kind) {
  return kind == LayerKind::ChannelReduction ? 1 : 6;
}

}  // namespace

void ArchitectureConfig::validate() const {
  if (rows.empty()) throw ConfigError("architecture has no rows");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (ratio < 1) throw ConfigError("attention ratio must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
  if (input_channels < 1 || input_h < 8 || input_w < 8) {
    throw ConfigError("default input dims must be at least 8x8x1");
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].index != static_cast<int>(i) + 1) {
      throw ConfigError("row indices must be consecutive from 1; row " + std::to_string(i + 1) +
                        " carries index " + std::to_string(rows[i].index));
    }
  }
  if (rows.size() < 3 || rows.back().kind != LayerKind::Classifier ||
      rows[rows.size() - 2].kind != LayerKind::AvgPool) {
    throw ConfigError("architecture must end with avgpool followed by classifier");
  }
  int channels = input_channels;
  for (const LayerRow& row : rows) {
    switch (row.kind) {
      case LayerKind::Conv3x3:
        if (row.stride != 1 && row.stride != 2) throw ConfigError("conv3x3 stride must be 1 or 2");
        if (row.out_channels < 1) throw ConfigError("conv3x3 needs out_channels");
        channels = row.out_channels;
        break;
      case LayerKind::Conv1x1:
        if (row.stride != 1) throw ConfigError("conv1x1 stride must be 1");
        if (row.out_channels < 1) throw ConfigError("conv1x1 needs out_channels");
        channels = row.out_channels;
        break;
      case LayerKind::Downsample:
        if (row.stride != 2) throw ConfigError("downsample rows use stride 2");
        if (row.out_channels < 1) throw ConfigError("row needs out_channels");
        channels = row.out_channels;
        break;
      case LayerKind::ChannelReduction:
      case LayerKind::InvertedResidual:
      case LayerKind::DoubleAttentionIr:
      case LayerKind::ChannelExpansion:
        if (row.stride != 1) {
          throw ConfigError("row " + std::to_string(row.index) + " (" + kind_name(row.kind) +
                            ") must use stride 1");
        }
        if (row.out_channels < 1) throw ConfigError("row needs out_channels");
        channels = row.out_channels;
        break;
      case LayerKind::AvgPool:
      case LayerKind::Classifier:
        if (row.index < static_cast<int>(rows.size()) - 1) {
          throw ConfigError("avgpool/classifier rows must be the last two");
        }
        break;
    }
  }
  // attention placement: stride-1 channel-preserving bottlenecks only
  std::vector<int> bad;
  channels = input_channels;
  std::vector<int> in_channels_of(rows.size() + 1, 0);
  for (const LayerRow& row : rows) {
    in_channels_of[static_cast<std::size_t>(row.index)] = channels;
    if (row.out_channels > 0) channels = row.out_channels;
  }
  for (int loc : attention_locations) {
    if (loc < 1 || loc > static_cast<int>(rows.size())) {
      bad.push_back(loc);
      continue;
    }
    const LayerRow& row = rows[static_cast<std::size_t>(loc - 1)];
    const bool ir_like = row.kind == LayerKind::InvertedResidual ||
                         row.kind == LayerKind::DoubleAttentionIr;
    const bool preserving = row.out_channels == in_channels_of[static_cast<std::size_t>(loc)];
    if (!ir_like || row.stride != 1 || !preserving) bad.push_back(loc);
  }
  if (!bad.empty()) {
    std::ostringstream os;
    os << "invalid attention placement at row(s)";
    for (int b : bad) os << ' ' << b;
    os << "; attention requires a stride-1, channel-preserving inverted residual";
    throw ConfigError(os.str());
  }
  for (int loc : attention_locations) {
    const LayerRow& row = rows[static_cast<std::size_t>(loc - 1)];
    const int c_at_module = direct_attention
                                ? row.out_channels
                                : 6 * in_channels_of[static_cast<std::size_t>(loc)];
    const int r = direct_attention ? 1 : ratio;
    if (c_at_module % r != 0) {
      throw ConfigError("attention at row " + std::to_string(loc) + ": channel count " +
                        std::to_string(c_at_module) + " not divisible by ratio " +
                        std::to_string(r));
    }
  }
}

// ---------------------------------------------------------------------------
// config text format
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& tok, const std::string& where) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": expected an integer, got '" + tok + "'");
  }
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

ArchitectureConfig parse_config_text(const std::string& text, const std::string& origin) {
  ArchitectureConfig cfg;
  cfg.rows.clear();
  cfg.attention_locations.clear();
  std::istringstream is(text);
  std::string raw;
  int lineno = 0;
  int next_index = 1;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::string line = trim(raw);
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;

    if (line.rfind("row", 0) == 0 && (line.size() == 3 || line[3] == ' ' || line[3] == '\t')) {
      const std::vector<std::string> toks = split_ws(line);
      if (toks.size() < 3) throw FormatError(where + ": row needs at least an index and a kind");
      const int index = parse_int(toks[1], where);
      if (index != next_index) {
        throw FormatError(where + ": row index " + std::to_string(index) + " out of order, expected " +
                          std::to_string(next_index));
      }
      LayerKind kind;
      try {
        kind = kind_from_name(toks[2]);
      } catch (const FormatError& e) {
        throw FormatError(where + ": " + e.what());
      }
      const bool attended_kind = (kind == LayerKind::DoubleAttentionIr);
      if (attended_kind) kind = LayerKind::InvertedResidual;
      LayerRow row;
      row.kind = kind;
      if (kind == LayerKind::AvgPool || kind == LayerKind::Classifier) {
        if (toks.size() > 3) throw FormatError(where + ": " + toks[2] + " takes no arguments");
        row.out_channels = 0;
        row.stride = 0;
        row.index = next_index++;
        cfg.rows.push_back(row);
        continue;
      }
      if (toks.size() < 4) throw FormatError(where + ": row needs out_channels");
      row.out_channels = parse_int(toks[3], where);
      row.stride = (kind == LayerKind::Downsample) ? 2 : (kind == LayerKind::Conv3x3 ? 2 : 1);
      int repeat = 1;
      if (toks.size() >= 5) row.stride = parse_int(toks[4], where);
      if (toks.size() >= 6) repeat = parse_int(toks[5], where);
      if (toks.size() > 6) throw FormatError(where + ": too many fields on row line");
      if (repeat < 1) throw FormatError(where + ": repeat must be >= 1");
      for (int rep = 0; rep < repeat; ++rep) {
        row.index = next_index++;
        cfg.rows.push_back(row);
        if (attended_kind) cfg.attention_locations.insert(row.index);
      }
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(where + ": expected 'key = value' or a row line");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "input") {
      int dims[3] = {0, 0, 0};
      std::size_t pos = 0;
      for (int d = 0; d < 3; ++d) {
        std::size_t x = value.find('x', pos);
        const std::string part = (d == 2) ? value.substr(pos)
                                          : (x == std::string::npos ? "" : value.substr(pos, x - pos));
        if (part.empty()) throw FormatError(where + ": input must look like 224x224x3");
        dims[d] = parse_int(part, where);
        pos = (x == std::string::npos) ? value.size() : x + 1;
      }
      cfg.input_h = dims[0];
      cfg.input_w = dims[1];
      cfg.input_channels = dims[2];
    } else if (key == "classes") {
      cfg.num_classes = parse_int(value, where);
    } else if (key == "ratio") {
      cfg.ratio = parse_int(value, where);
    } else if (key == "dropout") {
      try {
        cfg.dropout_rate = std::stod(value);
      } catch (const std::exception&) {
        throw FormatError(where + ": bad dropout value '" + value + "'");
      }
    } else if (key == "direct_attention") {
      if (value == "true") cfg.direct_attention = true;
      else if (value == "false") cfg.direct_attention = false;
      else throw FormatError(where + ": direct_attention must be true or false");
    } else if (key == "attention") {
      if (value == "none") continue;
      std::size_t pos = 0;
      while (pos < value.size()) {
        std::size_t comma = value.find(',', pos);
        const std::string part = trim(value.substr(pos, comma == std::string::npos
                                                            ? std::string::npos
                                                            : comma - pos));
        if (!part.empty()) cfg.attention_locations.insert(parse_int(part, where));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    } else {
      throw FormatError(where + ": unknown key '" + key + "'");
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(origin + ": " + e.what());
  }
  return cfg;
}

ArchitectureConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string config_to_text(const ArchitectureConfig& config) {
  std::ostringstream os;
  os << "input = " << config.input_h << 'x' << config.input_w << 'x' << config.input_channels
     << "\n";
  os << "classes = " << config.num_classes << "\n";
  os << "ratio = " << config.ratio << "\n";
  os << "dropout = " << config.dropout_rate << "\n";
  if (config.direct_attention) os << "direct_attention = true\n";
  os << "attention = ";
  if (config.attention_locations.empty()) {
    os << "none";
  } else {
    bool first = true;
    for (int loc : config.attention_locations) {
      if (!first) os << ',';
      os << loc;
      first = false;
    }
  }
  os << "\n\n";
  for (const LayerRow& row : config.rows) {
    os << "row " << row.index << ' ';
    const bool attended = config.attended(row.index) && !config.direct_attention;
    os << (attended ? kind_name(LayerKind::DoubleAttentionIr) : kind_name(row.kind));
    if (row.kind != LayerKind::AvgPool && row.kind != LayerKind::Classifier) {
      os << ' ' << row.out_channels << ' ' << row.stride;
    }
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// shape inference
// ---------------------------------------------------------------------------

namespace {

int conv_out_extent(int in, int kernel, int stride) {
  return (in + 2 * (kernel / 2) - kernel) / stride + 1;
}

}  // namespace

std::vector<ShapeRow> infer_shapes(const ArchitectureConfig& config, ImageDims input) {
  config.validate();
  if (input.c != config.input_channels) {
    throw ValidationError("input has " + std::to_string(input.c) + " channels, config expects " +
                          std::to_string(config.input_channels));
  }
  if (input.h < 8 || input.w < 8) {
    throw ValidationError("input spatial extents must be at least 8, got " +
                          std::to_string(input.h) + "x" + std::to_string(input.w));
  }
  std::vector<ShapeRow> out;
  ImageDims cur = input;
  for (const LayerRow& row : config.rows) {
    ShapeRow sr;
    sr.index = row.index;
    sr.kind = config.effective_kind(row.index);
    sr.in = cur;
    sr.stride = row.stride;
    switch (row.kind) {
      case LayerKind::Conv3x3:
        cur = {conv_out_extent(cur.h, 3, row.stride), conv_out_extent(cur.w, 3, row.stride),
               row.out_channels};
        break;
      case LayerKind::Conv1x1:
        cur = {cur.h, cur.w, row.out_channels};
        break;
      case LayerKind::ChannelReduction:
      case LayerKind::Downsample:
      case LayerKind::InvertedResidual:
      case LayerKind::DoubleAttentionIr:
      case LayerKind::ChannelExpansion:
        cur = {conv_out_extent(cur.h, 3, row.stride), conv_out_extent(cur.w, 3, row.stride),
               row.out_channels};
        break;
      case LayerKind::AvgPool:
        cur = {1, 1, cur.c};
        break;
      case LayerKind::Classifier:
        cur = {1, 1, config.num_classes};
        break;
    }
    if (cur.h < 1 || cur.w < 1) {
      throw ValidationError("row " + std::to_string(row.index) + " produces an empty feature map");
    }
    sr.out = cur;
    out.push_back(sr);
  }
  return out;
}

// ---------------------------------------------------------------------------
// build
// ---------------------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> init_conv_weight(const ConvSpec& spec, Rng& rng) {
  Tensor<T> w({spec.out_channels, spec.in_channels / spec.groups, spec.kernel, spec.kernel});
  const double fan_out = static_cast<double>(spec.out_channels) * spec.kernel * spec.kernel;
  const double std_dev = std::sqrt(2.0 / fan_out);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w.data()[i] = static_cast<T>(rng.normal() * std_dev);
  }
  return w;
}

template <typename T>
ConvParams<T> init_conv(const ConvSpec& spec, Rng& rng) {
  ConvParams<T> p;
  p.weight = init_conv_weight<T>(spec, rng);
  if (spec.has_bias) p.bias = Tensor<T>({spec.out_channels});
  return p;
}

template <typename T>
std::shared_ptr<DoubleAttentionParams<T>> init_attention(int c_exp, int r1, int r2, Rng& rng) {
  auto p = std::make_shared<DoubleAttentionParams<T>>();
  p->spec = DoubleAttentionSpec{c_exp, r1, r2};
  p->spec.validate();
  p->theta = init_conv<T>(ConvSpec::pointwise(c_exp, p->spec.c_m(), true), rng);
  p->phi = init_conv<T>(ConvSpec::pointwise(c_exp, p->spec.c_n(), true), rng);
  p->rho = init_conv<T>(ConvSpec::pointwise(c_exp, p->spec.c_n(), true), rng);
  p->out = init_conv<T>(ConvSpec::pointwise(p->spec.c_m(), c_exp, true), rng);
  return p;
}

}  // namespace

template <typename T>
Model<T> build(const ArchitectureConfig& config, std::uint64_t seed) {
  config.validate();
  Model<T> model;
  model.config_ = config;
  model.dropout_rng_ = Rng(seed ^ 0xd409u);
  Rng rng(seed);

  int channels = config.input_channels;
  int classifier_features = 0;
  for (const LayerRow& row : config.rows) {
    typename Model<T>::Layer layer;
    layer.row = row;
    if (row.kind == LayerKind::Conv3x3 || row.kind == LayerKind::Conv1x1) {
      const int kernel = (row.kind == LayerKind::Conv3x3) ? 3 : 1;
      typename Model<T>::ConvBnLayer cb;
      cb.spec = ConvSpec::standard(channels, row.out_channels, kernel, row.stride);
      cb.conv = init_conv<T>(cb.spec, rng);
      cb.bn = BatchNormState<T>::init(row.out_channels);
      layer.conv_bn = std::move(cb);
      channels = row.out_channels;
    } else if (is_bottleneck(row.kind)) {
      InvertedResidualSpec spec;
      spec.in_channels = channels;
      spec.out_channels = row.out_channels;
      spec.stride = row.stride;
      spec.expansion = expansion_of(row.kind);
      InvertedResidualParams<T> p;
      const int c_exp = spec.expanded_channels();
      if (spec.expansion > 1) {
        p.expand = init_conv<T>(ConvSpec::pointwise(channels, c_exp), rng);
        p.expand_bn = BatchNormState<T>::init(c_exp);
      }
      p.dw = init_conv<T>(ConvSpec::depthwise(c_exp, spec.stride), rng);
      p.dw_bn = BatchNormState<T>::init(c_exp);
      if (config.attended(row.index) && !config.direct_attention) {
        p.attention = init_attention<T>(c_exp, config.ratio, config.ratio, rng);
      }
      p.project = init_conv<T>(ConvSpec::pointwise(c_exp, row.out_channels), rng);
      p.project_bn = BatchNormState<T>::init(row.out_channels);
      layer.ir_spec = spec;
      layer.ir = std::move(p);
      channels = row.out_channels;
      if (config.attended(row.index) && config.direct_attention) {
        layer.post_attention = init_attention<T>(channels, 1, 1, rng);
      }
    } else if (row.kind == LayerKind::AvgPool) {
      classifier_features = channels;
    } else if (row.kind == LayerKind::Classifier) {
      model.classifier_.weight = Tensor<T>({config.num_classes, classifier_features});
      for (std::size_t i = 0; i < model.classifier_.weight.size(); ++i) {
        model.classifier_.weight.data()[i] = static_cast<T>(rng.normal() * 0.01);
      }
      model.classifier_.bias = Tensor<T>({config.num_classes});
    }
    model.layers_.push_back(std::move(layer));
  }
  return model;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& batch, Tape<T>* tape, std::vector<Tensor<T>>* taps) {
  if (batch.rank() != 4) throw ShapeError("model input must be rank 4 (n,c,h,w)");
  if (batch.extent(1) != config_.input_channels) {
    throw ShapeError("model input has " + std::to_string(batch.extent(1)) +
                     " channels, expected " + std::to_string(config_.input_channels));
  }
  if (mode_ == Mode::Train && !tape) {
    throw ContractError("train-mode forward requires a gradient tape");
  }
  Tensor<T> u = batch;
  for (Layer& layer : layers_) {
    switch (layer.row.kind) {
      case LayerKind::Conv3x3:
      case LayerKind::Conv1x1: {
        ConvBnLayer& cb = *layer.conv_bn;
        u = conv2d<T>(u, cb.spec, cb.conv.weight, nullptr, tape);
        u = batchnorm(u, cb.bn, mode_, tape);
        u = relu6(u, tape);
        break;
      }
      case LayerKind::ChannelReduction:
      case LayerKind::Downsample:
      case LayerKind::InvertedResidual:
      case LayerKind::DoubleAttentionIr:
      case LayerKind::ChannelExpansion: {
        u = inverted_residual(u, *layer.ir_spec, *layer.ir, mode_, tape);
        if (layer.post_attention) {
          u = double_attention(u, *layer.post_attention, tape);
        }
        break;
      }
      case LayerKind::AvgPool:
        u = global_avgpool(u, tape);
        break;
      case LayerKind::Classifier: {
        u = dropout(u, config_.dropout_rate, mode_, dropout_rng_, tape);
        u = reshape(u, {u.extent(0), u.extent(1)}, tape);
        u = linear(u, classifier_.weight, classifier_.bias, tape);
        break;
      }
    }
    if (taps) taps->push_back(u);
  }
  return u;
}

// ---------------------------------------------------------------------------
// parameter enumeration
// ---------------------------------------------------------------------------

namespace {

std::string layer_prefix(int index) {
  std::string n = std::to_string(index);
  if (n.size() < 2) n = "0" + n;
  return "layer" + n;
}

}  // namespace

template <typename T>
std::vector<typename Model<T>::NamedParam> Model<T>::parameters() {
  std::vector<NamedParam> out;
  auto add_bn = [&out](const std::string& prefix, BatchNormState<T>& bn) {
    out.push_back({prefix + ".gamma", &bn.gamma, false});
    out.push_back({prefix + ".beta", &bn.beta, false});
  };
  auto add_attn = [&out, &add_bn](const std::string& prefix, DoubleAttentionParams<T>& attn) {
    auto add_conv = [&out, &prefix](const char* name, ConvParams<T>& c) {
      out.push_back({prefix + "." + name + ".weight", &c.weight, true});
      out.push_back({prefix + "." + name + ".bias", &c.bias, false});
    };
    add_conv("theta", attn.theta);
    add_conv("phi", attn.phi);
    add_conv("rho", attn.rho);
    add_conv("out", attn.out);
    (void)add_bn;
  };
  for (Layer& layer : layers_) {
    const std::string prefix = layer_prefix(layer.row.index);
    if (layer.conv_bn) {
      out.push_back({prefix + ".conv.weight", &layer.conv_bn->conv.weight, true});
      add_bn(prefix + ".bn", layer.conv_bn->bn);
    }
    if (layer.ir) {
      InvertedResidualParams<T>& p = *layer.ir;
      if (p.expand.weight.defined()) {
        out.push_back({prefix + ".expand.weight", &p.expand.weight, true});
        add_bn(prefix + ".expand_bn", p.expand_bn);
      }
      out.push_back({prefix + ".dw.weight", &p.dw.weight, true});
      add_bn(prefix + ".dw_bn", p.dw_bn);
      if (p.attention) add_attn(prefix + ".attn", *p.attention);
      out.push_back({prefix + ".project.weight", &p.project.weight, true});
      add_bn(prefix + ".project_bn", p.project_bn);
    }
    if (layer.post_attention) add_attn(prefix + ".post_attn", *layer.post_attention);
    if (layer.row.kind == LayerKind::Classifier) {
      out.push_back({"classifier.weight", &classifier_.weight, true});
      out.push_back({"classifier.bias", &classifier_.bias, false});
    }
  }
  return out;
}

template <typename T>
std::vector<typename Model<T>::NamedParam> Model<T>::persistent_state() {
  std::vector<NamedParam> out = parameters();
  auto add_running = [&out](const std::string& prefix, BatchNormState<T>& bn) {
    out.push_back({prefix + ".running_mean", &bn.running_mean, false});
    out.push_back({prefix + ".running_var", &bn.running_var, false});
  };
  for (Layer& layer : layers_) {
    const std::string prefix = layer_prefix(layer.row.index);
    if (layer.conv_bn) add_running(prefix + ".bn", layer.conv_bn->bn);
    if (layer.ir) {
      InvertedResidualParams<T>& p = *layer.ir;
      if (p.expand.weight.defined()) add_running(prefix + ".expand_bn", p.expand_bn);
      add_running(prefix + ".dw_bn", p.dw_bn);
      add_running(prefix + ".project_bn", p.project_bn);
    }
  }
  return out;
}

template <typename T>
void Model<T>::watch_parameters(Tape<T>& tape) {
  for (NamedParam& p : parameters()) tape.watch(*p.tensor);
}

// ---------------------------------------------------------------------------
// accounting
// ---------------------------------------------------------------------------

template <typename T>
std::int64_t count_params(Model<T>& model) {
  std::int64_t total = 0;
  for (const auto& p : model.parameters()) total += static_cast<std::int64_t>(p.tensor->size());
  return total;
}

namespace {

// conv cost under the adopted convention; returns MACs and advances dims
std::int64_t conv_block_macs(const ConvSpec& spec, int& h, int& w, bool with_bn, bool with_act) {
  const std::int64_t oh = spec.out_extent(h);
  const std::int64_t ow = spec.out_extent(w);
  const std::int64_t out_elems = static_cast<std::int64_t>(spec.out_channels) * oh * ow;
  std::int64_t macs = static_cast<std::int64_t>(spec.kernel) * spec.kernel *
                          (spec.in_channels / spec.groups) * out_elems;
  if (spec.has_bias) macs += out_elems;
  if (with_bn) macs += 2 * out_elems;
  if (with_act) macs += out_elems;
  h = static_cast<int>(oh);
  w = static_cast<int>(ow);
  return macs;
}

std::int64_t attention_macs(const DoubleAttentionSpec& spec, int h, int w) {
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const std::int64_t cm = spec.c_m(), cn = spec.c_n(), c = spec.c_exp;
  std::int64_t macs = 0;
  macs += (c * cm + cm) * hw;      // theta
  macs += 2 * (c * cn + cn) * hw;  // phi, rho
  macs += (cm * c + c) * hw;       // out projection
  macs += 2 * cm * cn * hw;        // the two batched attention products
  return macs;
}

}  // namespace

template <typename T>
std::int64_t count_macs(Model<T>& model, ImageDims input) {
  if (input.c != model.config().input_channels) {
    throw ValidationError("count_macs: input channels mismatch");
  }
  std::int64_t total = 0;
  int h = input.h, w = input.w;
  int channels = input.c;
  for (auto& layer : model.layers()) {
    switch (layer.row.kind) {
      case LayerKind::Conv3x3:
      case LayerKind::Conv1x1:
        total += conv_block_macs(layer.conv_bn->spec, h, w, true, true);
        channels = layer.row.out_channels;
        break;
      case LayerKind::ChannelReduction:
      case LayerKind::Downsample:
      case LayerKind::InvertedResidual:
      case LayerKind::DoubleAttentionIr:
      case LayerKind::ChannelExpansion: {
        const InvertedResidualSpec& spec = *layer.ir_spec;
        const int c_exp = spec.expanded_channels();
        if (spec.expansion > 1) {
          total += conv_block_macs(ConvSpec::pointwise(spec.in_channels, c_exp), h, w, true, true);
        }
        total += conv_block_macs(ConvSpec::depthwise(c_exp, spec.stride), h, w, true, true);
        if (layer.ir->attention) {
          total += attention_macs(layer.ir->attention->spec, h, w);
        }
        total += conv_block_macs(ConvSpec::pointwise(c_exp, spec.out_channels), h, w, true, false);
        channels = spec.out_channels;
        if (layer.post_attention) {
          total += attention_macs(layer.post_attention->spec, h, w);
        }
        break;
      }
      case LayerKind::AvgPool:
        total += static_cast<std::int64_t>(channels) * h * w;
        h = 1;
        w = 1;
        break;
      case LayerKind::Classifier:
        total += static_cast<std::int64_t>(channels) * model.num_classes() + model.num_classes();
        break;
    }
  }
  return total;
}

#define A2_INSTANTIATE_MODEL(T)                                             \
  template Model<T> build<T>(const ArchitectureConfig&, std::uint64_t);     \
  template std::int64_t count_params<T>(Model<T>&);                         \
  template std::int64_t count_macs<T>(Model<T>&, ImageDims);                \
  template class Model<T>;

A2_INSTANTIATE_MODEL(float)
A2_INSTANTIATE_MODEL(double)

#undef A2_INSTANTIATE_MODEL

}  // namespace a2

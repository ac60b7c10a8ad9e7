#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "a2/model.hpp"

namespace a2 {

namespace {

constexpr char kMagic[4] = {'A', '2', 'L', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  std::string context;

  void need(std::size_t n) {
    if (pos + n > buf.size()) {
      throw FormatError("weight file truncated" +
                        (context.empty() ? "" : " while reading " + context));
    }
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

template <typename T>
constexpr std::uint8_t dtype_code() {
  return sizeof(T) == 4 ? 0 : 1;  // 0 = f32, 1 = f64
}

struct RawEntry {
  std::uint8_t dtype = 0;
  Shape shape;
  std::vector<double> f64;  // decoded values, exact bit round-trip per dtype
  std::vector<float> f32;
};

}  // namespace

template <typename T>
void save_weights(Model<T>& model, const std::string& path) {
  const auto entries = model.persistent_state();
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > UINT16_MAX) throw FormatError("parameter name too long: " + e.name);
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out.append(e.name);
    out.push_back(static_cast<char>(dtype_code<T>()));
    out.push_back(static_cast<char>(e.tensor->rank()));
    for (int ex : e.tensor->shape()) put_u32(out, static_cast<std::uint32_t>(ex));
    const T* data = e.tensor->data();
    for (std::size_t i = 0; i < e.tensor->size(); ++i) {
      if constexpr (sizeof(T) == 4) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(data[i])));
      } else {
        put_u64(out, std::bit_cast<std::uint64_t>(static_cast<double>(data[i])));
      }
    }
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot write weight file '" + path + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ValidationError("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw ValidationError("cannot move weight file into place at '" + path + "'");
  }
}

template <typename T>
void load_weights(Model<T>& model, const std::string& path, bool reinit_head) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open weight file '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r{buf, 0, ""};
  r.context = "header";
  if (r.bytes(4) != std::string(kMagic, 4)) {
    throw FormatError("bad magic in weight file '" + path + "'");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("unsupported weight file version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();

  std::map<std::string, RawEntry> raw;
  for (std::uint32_t i = 0; i < count; ++i) {
    r.context = "entry " + std::to_string(i);
    const std::uint16_t name_len = r.u16();
    const std::string name = r.bytes(name_len);
    r.context = "entry '" + name + "'";
    RawEntry e;
    e.dtype = r.u8();
    if (e.dtype > 1) throw FormatError("entry '" + name + "': unknown dtype code " + std::to_string(e.dtype));
    const std::uint8_t rank = r.u8();
    if (rank < 1 || rank > 4) throw FormatError("entry '" + name + "': bad rank " + std::to_string(rank));
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t ex = r.u32();
      if (ex < 1) throw FormatError("entry '" + name + "': zero extent");
      e.shape.push_back(static_cast<int>(ex));
      n *= ex;
    }
    if (e.dtype == 0) {
      e.f32.resize(n);
      for (std::size_t j = 0; j < n; ++j) e.f32[j] = std::bit_cast<float>(r.u32());
    } else {
      e.f64.resize(n);
      for (std::size_t j = 0; j < n; ++j) e.f64[j] = std::bit_cast<double>(r.u64());
    }
    if (!raw.emplace(name, std::move(e)).second) {
      throw FormatError("duplicate entry '" + name + "' in weight file");
    }
  }
  if (r.pos != buf.size()) {
    throw FormatError("trailing bytes after last entry in weight file '" + path + "'");
  }

  const auto is_head = [](const std::string& name) { return name.rfind("classifier.", 0) == 0; };

  // Validate the complete mapping before mutating the model.
  auto state = model.persistent_state();
  for (const auto& p : state) {
    if (reinit_head && is_head(p.name)) continue;
    auto it = raw.find(p.name);
    if (it == raw.end()) throw FormatError("weight file is missing entry '" + p.name + "'");
    if (it->second.dtype != dtype_code<T>()) {
      throw FormatError("entry '" + p.name + "': dtype does not match model precision");
    }
    if (it->second.shape != p.tensor->shape()) {
      throw FormatError("entry '" + p.name + "': shape " + shape_str(it->second.shape) +
                        " does not match model shape " + shape_str(p.tensor->shape()));
    }
  }
  for (const auto& kv : raw) {
    if (reinit_head && is_head(kv.first)) continue;
    bool known = false;
    for (const auto& p : state) {
      if (p.name == kv.first) {
        known = true;
        break;
      }
    }
    if (!known) throw FormatError("unknown entry '" + kv.first + "' in weight file");
  }

  for (auto& p : state) {
    if (reinit_head && is_head(p.name)) continue;
    const RawEntry& e = raw.at(p.name);
    T* dst = p.tensor->data();
    const std::size_t n = p.tensor->size();
    for (std::size_t i = 0; i < n; ++i) {
      dst[i] = (e.dtype == 0) ? static_cast<T>(e.f32[i]) : static_cast<T>(e.f64[i]);
    }
  }
}

template void save_weights<float>(Model<float>&, const std::string&);
template void save_weights<double>(Model<double>&, const std::string&);
template void load_weights<float>(Model<float>&, const std::string&, bool);
template void load_weights<double>(Model<double>&, const std::string&, bool);

}  // namespace a2

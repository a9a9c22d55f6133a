#include "stb/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "stb/data.hpp"

namespace stb {
namespace {

constexpr char kTensorMagic[4] = {'S', 'T', 'B', '1'};
constexpr char kSeriesMagic[4] = {'S', 'T', 'B', 'S'};
constexpr char kCheckpointMagic[4] = {'S', 'T', 'B', 'C'};

void append_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void append_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  append_u64(out, bits);
}

void append_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  append_u32(out, bits);
}

// Cursor over a loaded file; every read reports the byte offset on failure.
struct Reader {
  const std::string& path;
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n, const char* what) {
    if (pos + n > buf.size())
      throw ParseError(strf("%s: truncated at byte %zu while reading %s",
                            path.c_str(), pos, what));
  }
  void expect_magic(const char m[4], const char* kind) {
    need(4, "magic");
    if (std::memcmp(buf.data() + pos, m, 4) != 0)
      throw ParseError(strf("%s: bad magic at byte %zu, not a %s file",
                            path.c_str(), pos, kind));
    pos += 4;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= uint32_t(uint8_t(buf[pos + size_t(i)])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    uint64_t lo = u32(what);
    uint64_t hi = u32(what);
    return lo | (hi << 32);
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return uint8_t(buf[pos++]);
  }
  std::string bytes(size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(strf("%s: cannot open for reading", path.c_str()));
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return buf;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError(strf("%s: cannot open for writing", path.c_str()));
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw ValidationError(strf("%s: write failed", path.c_str()));
}

void encode_tensor(std::string& out, const Tensor& t, bool as_f32) {
  out.append(kTensorMagic, 4);
  append_u32(out, uint32_t(t.rank()));
  for (size_t i = 0; i < t.rank(); ++i) append_u32(out, uint32_t(t.dim(i)));
  out.push_back(as_f32 ? char(0) : char(1));
  for (size_t i = 0; i < t.size(); ++i) {
    if (as_f32)
      append_f32(out, float(t[i]));
    else
      append_f64(out, t[i]);
  }
}

Tensor decode_tensor(Reader& r) {
  r.expect_magic(kTensorMagic, "tensor");
  uint32_t rank = r.u32("rank");
  if (rank > 8)
    throw ParseError(strf("%s: implausible rank %u at byte %zu", r.path.c_str(),
                          rank, r.pos - 4));
  Shape shape(rank);
  size_t total = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = r.u32("dims");
    total *= shape[i];
  }
  uint8_t dtype = r.u8("dtype");
  if (dtype > 1)
    throw ParseError(strf("%s: unknown dtype %u at byte %zu", r.path.c_str(),
                          unsigned(dtype), r.pos - 1));
  Tensor t(shape);
  size_t width = dtype == 0 ? 4 : 8;
  r.need(total * width, "payload");
  for (size_t i = 0; i < total; ++i) {
    if (dtype == 0) {
      uint32_t bits = r.u32("payload");
      float f;
      std::memcpy(&f, &bits, 4);
      t[i] = double(f);
    } else {
      uint64_t bits = r.u64("payload");
      double d;
      std::memcpy(&d, &bits, 8);
      t[i] = d;
    }
  }
  return t;
}

}  // namespace

void save_tensor(const std::string& path, const Tensor& t, bool as_f32) {
  std::string out;
  encode_tensor(out, t, as_f32);
  write_file(path, out);
}

Tensor load_tensor(const std::string& path) {
  std::string buf = read_file(path);
  Reader r{path, buf};
  Tensor t = decode_tensor(r);
  if (r.pos != buf.size())
    throw ParseError(strf("%s: %zu trailing bytes after payload", path.c_str(),
                          buf.size() - r.pos));
  return t;
}

void save_series(const std::string& path, const SeriesTensor& s) {
  s.validate();
  nlohmann::json meta;
  meta["start_timestamp"] = s.start_timestamp;
  meta["step_seconds"] = s.step_seconds;
  meta["feature_names"] = s.feature_names;
  std::string mstr = meta.dump();
  std::string out;
  out.append(kSeriesMagic, 4);
  append_u32(out, uint32_t(mstr.size()));
  out += mstr;
  encode_tensor(out, s.values, false);
  write_file(path, out);
}

SeriesTensor load_series(const std::string& path) {
  std::string buf = read_file(path);
  Reader r{path, buf};
  r.expect_magic(kSeriesMagic, "series");
  uint32_t mlen = r.u32("meta length");
  std::string mstr = r.bytes(mlen, "meta");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(mstr);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(strf("%s: bad series meta block: %s", path.c_str(), e.what()));
  }
  SeriesTensor s;
  try {
    s.start_timestamp = meta.at("start_timestamp").get<int64_t>();
    s.step_seconds = meta.at("step_seconds").get<int64_t>();
    s.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(strf("%s: series meta missing fields: %s", path.c_str(), e.what()));
  }
  s.values = decode_tensor(r);
  if (r.pos != buf.size())
    throw ParseError(strf("%s: %zu trailing bytes after payload", path.c_str(),
                          buf.size() - r.pos));
  s.validate();
  return s;
}

void save_checkpoint(const std::string& path, const ParamStore& params,
                     uint64_t config_hash) {
  nlohmann::json manifest;
  manifest["config_hash"] = strf("%016llx", (unsigned long long)config_hash);
  nlohmann::json plist = nlohmann::json::array();
  for (size_t i = 0; i < params.count(); ++i) {
    const auto& e = params.entry(i);
    plist.push_back({{"name", e.name}, {"shape", e.value.shape()}});
  }
  manifest["params"] = plist;
  std::string mstr = manifest.dump();

  std::string out;
  out.append(kCheckpointMagic, 4);
  append_u32(out, uint32_t(mstr.size()));
  out += mstr;
  std::vector<double> flat = params.flatten();
  append_u64(out, uint64_t(flat.size()));
  for (double v : flat) append_f64(out, v);
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string buf = read_file(path);
  Reader r{path, buf};
  r.expect_magic(kCheckpointMagic, "checkpoint");
  uint32_t mlen = r.u32("manifest length");
  std::string mstr = r.bytes(mlen, "manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mstr);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(strf("%s: bad manifest block: %s", path.c_str(), e.what()));
  }

  Checkpoint ck;
  std::string hash_hex;
  try {
    hash_hex = manifest.at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(strf("%s: manifest missing config_hash: %s", path.c_str(), e.what()));
  }
  ck.config_hash = std::strtoull(hash_hex.c_str(), nullptr, 16);

  uint64_t total = r.u64("parameter count");
  r.need(size_t(total) * 8, "parameter payload");
  std::vector<double> flat(static_cast<size_t>(total), 0.0);
  for (auto& v : flat) {
    uint64_t bits = r.u64("parameter payload");
    std::memcpy(&v, &bits, 8);
  }

  size_t offset = 0;
  if (!manifest.contains("params") || !manifest["params"].is_array())
    throw ParseError(strf("%s: manifest missing params list", path.c_str()));
  for (const auto& p : manifest["params"]) {
    std::string name;
    Shape shape;
    try {
      name = p.at("name").get<std::string>();
      shape = p.at("shape").get<Shape>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(strf("%s: bad manifest entry: %s", path.c_str(), e.what()));
    }
    size_t n = shape_size(shape);
    if (offset + n > flat.size())
      throw ParseError(strf("%s: payload too small for parameter '%s'",
                            path.c_str(), name.c_str()));
    Tensor t(shape, std::vector<double>(flat.begin() + std::ptrdiff_t(offset),
                                        flat.begin() + std::ptrdiff_t(offset + n)));
    ck.params.put(name, std::move(t));
    offset += n;
  }
  if (offset != flat.size())
    throw ParseError(strf("%s: payload has %zu values beyond the manifest",
                          path.c_str(), flat.size() - offset));
  return ck;
}

}  // namespace stb

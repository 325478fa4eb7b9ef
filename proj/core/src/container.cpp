#include "unpack/container.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "unpack/errors.hpp"

static_assert(std::endian::native == std::endian::little, "container format assumes a little-endian host");

namespace unpack {

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out;
}

std::uint32_t crc32_of(const float* data, std::size_t count) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* bytes = reinterpret_cast<const Bytef*>(data);
  std::size_t remaining = count * sizeof(float);
  // zlib takes uInt lengths
  while (remaining > 0) {
    uInt chunk = static_cast<uInt>(std::min<std::size_t>(remaining, 1u << 30));
    crc = crc32(crc, bytes, chunk);
    bytes += chunk;
    remaining -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

const std::string* Container::field(const std::string& key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return &v;
  }
  return nullptr;
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view s, int base, const std::string& ctx) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value, base);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ModelError(ctx + ": cannot parse number '" + std::string(s) + "'");
  }
  return value;
}

TensorEntry parse_tensor_line(std::string_view rest, const std::string& ctx) {
  TensorEntry e;
  bool has_name = false, has_shape = false, has_offset = false;
  std::istringstream in{std::string(rest)};
  std::string tok;
  while (in >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) throw ModelError(ctx + ": malformed tensor field '" + tok + "'");
    std::string key = tok.substr(0, eq);
    std::string val = tok.substr(eq + 1);
    if (key == "name") {
      e.name = val;
      has_name = true;
    } else if (key == "shape") {
      e.shape.clear();
      if (!val.empty()) {
        std::size_t start = 0;
        while (start <= val.size()) {
          auto comma = val.find(',', start);
          auto part = val.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
          e.shape.push_back(parse_number<std::int64_t>(part, 10, ctx));
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
      }
      has_shape = true;
    } else if (key == "dtype") {
      e.dtype = val;
    } else if (key == "offset") {
      e.offset = parse_number<std::uint64_t>(val, 10, ctx);
      has_offset = true;
    } else if (key == "nbytes") {
      e.nbytes = parse_number<std::uint64_t>(val, 10, ctx);
    } else if (key == "crc32") {
      std::string_view hex = val;
      if (hex.starts_with("0x")) hex.remove_prefix(2);
      e.crc32 = parse_number<std::uint32_t>(hex, 16, ctx);
    }
  }
  if (!has_name || !has_shape || !has_offset) {
    throw ModelError(ctx + ": tensor line needs name, shape and offset");
  }
  for (auto d : e.shape) {
    if (d < 0) throw ModelError(ctx + ": negative dimension in tensor " + e.name);
  }
  return e;
}

}  // namespace

Container parse_manifest(const std::string& text, const std::string& origin) {
  Container c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::string ctx = origin + ":" + std::to_string(lineno);
    if (t.starts_with("tensor ")) {
      c.index.push_back(parse_tensor_line(std::string_view(t).substr(7), ctx));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) throw ModelError(ctx + ": expected 'key = value'");
    c.fields.emplace_back(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
  return c;
}

Container read_container(const std::filesystem::path& manifest, const std::filesystem::path& blob) {
  std::ifstream mf(manifest);
  if (!mf) throw ModelError("cannot open manifest " + manifest.string());
  std::stringstream ss;
  ss << mf.rdbuf();
  Container c = parse_manifest(ss.str(), manifest.filename().string());

  std::ifstream bf(blob, std::ios::binary);
  if (!bf) throw ModelError("cannot open weights blob " + blob.string());
  bf.seekg(0, std::ios::end);
  const auto blob_size = static_cast<std::uint64_t>(bf.tellg());

  for (const auto& e : c.index) {
    if (e.dtype != "f32") {
      throw ModelError("tensor " + e.name + ": unsupported dtype '" + e.dtype + "' (only f32)");
    }
    if (e.offset % kContainerAlignment != 0) {
      throw ModelError("tensor " + e.name + ": offset " + std::to_string(e.offset) + " is not 64-byte aligned");
    }
    Tensor t(e.shape);
    const std::uint64_t nbytes = t.size() * sizeof(float);
    if (e.nbytes != 0 && e.nbytes != nbytes) {
      throw ModelError("tensor " + e.name + ": nbytes " + std::to_string(e.nbytes) +
                       " does not match shape [" + shape_string(e.shape) + "]");
    }
    if (e.offset + nbytes > blob_size) {
      throw ModelError("tensor " + e.name + ": extends past end of " + blob.filename().string());
    }
    bf.seekg(static_cast<std::streamoff>(e.offset));
    bf.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(nbytes));
    if (!bf) throw ModelError("tensor " + e.name + ": short read");
    if (crc32_of(t.data.data(), t.size()) != e.crc32) {
      throw ModelError("tensor " + e.name + ": checksum mismatch");
    }
    if (!c.tensors.emplace(e.name, std::move(t)).second) {
      throw ModelError("tensor " + e.name + " listed twice in manifest");
    }
  }
  return c;
}

void write_container(const std::filesystem::path& manifest, const std::filesystem::path& blob,
                     const std::vector<std::pair<std::string, std::string>>& fields,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::ofstream bf(blob, std::ios::binary | std::ios::trunc);
  if (!bf) throw ModelError("cannot write " + blob.string());
  std::ostringstream mf;
  mf << "# unpack container manifest\n";
  for (const auto& [k, v] : fields) mf << k << " = " << v << "\n";

  std::uint64_t offset = 0;
  static const char zeros[kContainerAlignment] = {};
  for (const auto& [name, t] : tensors) {
    const std::uint64_t nbytes = t->size() * sizeof(float);
    bf.write(reinterpret_cast<const char*>(t->data.data()), static_cast<std::streamsize>(nbytes));
    char crc_hex[16];
    std::snprintf(crc_hex, sizeof crc_hex, "%08x", crc32_of(t->data.data(), t->size()));
    mf << "tensor name=" << name << " shape=" << shape_string(t->shape) << " dtype=f32 offset=" << offset
       << " nbytes=" << nbytes << " crc32=0x" << crc_hex << "\n";
    offset += nbytes;
    const std::uint64_t pad = (kContainerAlignment - offset % kContainerAlignment) % kContainerAlignment;
    bf.write(zeros, static_cast<std::streamsize>(pad));
    offset += pad;
  }
  if (!bf) throw ModelError("write failed for " + blob.string());

  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw ModelError("cannot write " + manifest.string());
  out << mf.str();
}

}  // namespace unpack

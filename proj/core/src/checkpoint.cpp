#include "vgw/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

#include "vgw/errors.hpp"
#include "vgw/tensor.hpp"

namespace vgw {

namespace {

constexpr char kMagic[4] = {'V', 'G', 'W', 'F'};
constexpr uint8_t kDtypeF32 = 0;
constexpr uint8_t kDtypeF64 = 1;

void put_bytes(std::string& buf, const void* p, size_t n) {
  buf.append(static_cast<const char*>(p), n);
}

void put_u32(std::string& buf, uint32_t v) { put_bytes(buf, &v, sizeof(v)); }
void put_u64(std::string& buf, uint64_t v) { put_bytes(buf, &v, sizeof(v)); }

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  size_t remaining() const { return buf.size() - pos; }

  void take(void* out, size_t n, const char* what) {
    if (remaining() < n) {
      throw ValidationError(std::string("checkpoint: truncated while reading ") + what);
    }
    std::memcpy(out, buf.data() + pos, n);
    pos += n;
  }

  uint32_t u32(const char* what) {
    uint32_t v;
    take(&v, sizeof(v), what);
    return v;
  }

  uint64_t u64(const char* what) {
    uint64_t v;
    take(&v, sizeof(v), what);
    return v;
  }

  uint8_t u8(const char* what) {
    uint8_t v;
    take(&v, sizeof(v), what);
    return v;
  }

  std::string str(size_t n, const char* what) {
    if (remaining() < n) {
      throw ValidationError(std::string("checkpoint: truncated while reading ") + what);
    }
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return buf;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const ParamSet& params) {
  std::string buf;
  put_bytes(buf, kMagic, sizeof(kMagic));
  put_u32(buf, kCheckpointVersion);
  put_u32(buf, static_cast<uint32_t>(config_json.size()));
  put_bytes(buf, config_json.data(), config_json.size());
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    const std::string& name = params.names[i];
    const Tensor& t = params.tensors[i];
    put_u32(buf, static_cast<uint32_t>(name.size()));
    put_bytes(buf, name.data(), name.size());
    buf.push_back(static_cast<char>(kDtypeF64));
    put_u32(buf, static_cast<uint32_t>(t.shape.size()));
    for (int64_t dim : t.shape) put_u64(buf, static_cast<uint64_t>(dim));
    put_bytes(buf, t.data.data(), t.data.size() * sizeof(double));
  }
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
  put_u32(buf, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) throw IoError("write failure on '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() < sizeof(kMagic) + 2 * sizeof(uint32_t) + sizeof(uint32_t)) {
    throw ValidationError("checkpoint: file '" + path + "' too small");
  }
  const uint32_t stored_crc = [&] {
    uint32_t v;
    std::memcpy(&v, buf.data() + buf.size() - sizeof(v), sizeof(v));
    return v;
  }();
  const uint32_t actual_crc = static_cast<uint32_t>(crc32(
      0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
  if (stored_crc != actual_crc) {
    throw ValidationError("checkpoint: CRC mismatch in '" + path + "'");
  }

  Reader r{buf};
  char magic[4];
  r.take(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("checkpoint: bad magic in '" + path + "'");
  }
  LoadedCheckpoint ck;
  ck.version = r.u32("version");
  if (ck.version != kCheckpointVersion) {
    throw ValidationError("checkpoint: unsupported version " + std::to_string(ck.version));
  }
  const uint32_t json_len = r.u32("config length");
  ck.config_json = r.str(json_len, "config");

  while (r.remaining() > sizeof(uint32_t)) {
    const uint32_t name_len = r.u32("tensor name length");
    const std::string name = r.str(name_len, "tensor name");
    const uint8_t dtype = r.u8("dtype");
    if (dtype != kDtypeF32 && dtype != kDtypeF64) {
      throw ValidationError("checkpoint: unknown dtype tag " + std::to_string(dtype) +
                            " for tensor '" + name + "'");
    }
    const uint32_t rank = r.u32("rank");
    if (rank > 8) throw ValidationError("checkpoint: implausible rank for tensor '" + name + "'");
    Shape shape;
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const uint64_t dim = r.u64("dim");
      shape.push_back(static_cast<int64_t>(dim));
      numel *= static_cast<int64_t>(dim);
    }
    if (numel < 0 || numel > (1LL << 32)) {
      throw ValidationError("checkpoint: implausible size for tensor '" + name + "'");
    }
    Tensor t(shape);
    if (dtype == kDtypeF64) {
      r.take(t.data.data(), static_cast<size_t>(numel) * sizeof(double), "tensor data");
    } else {
      std::vector<float> tmp(static_cast<size_t>(numel));
      r.take(tmp.data(), tmp.size() * sizeof(float), "tensor data");
      for (size_t i = 0; i < tmp.size(); ++i) t.data[i] = static_cast<double>(tmp[i]);
    }
    ck.params.add(name, std::move(t));
  }
  if (r.remaining() != sizeof(uint32_t)) {
    throw ValidationError("checkpoint: trailing bytes before checksum in '" + path + "'");
  }
  return ck;
}

uint32_t file_crc32(const std::string& path) {
  const std::string buf = read_file(path);
  return static_cast<uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
}

}  // namespace vgw

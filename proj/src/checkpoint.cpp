// SPDX-License-Identifier: Apache-2.0
#include "lpn/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <vector>

namespace lpn {

namespace {

constexpr std::array<uint8_t, 4> kMagic = {0x4C, 0x50, 0x4E, 0x57};  // "LPNW"
constexpr uint16_t kVersion = 1;

const uint32_t* crc_table() {
  static const auto table = [] {
    static uint32_t t[256];
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xFF));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& buf) : buf_(buf) {}

  uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(float* dst, size_t n) {
    need(4 * n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t bits = 0;
      for (int k = 0; k < 4; ++k) bits |= static_cast<uint32_t>(buf_[pos_ + 4 * i + k]) << (8 * k);
      std::memcpy(&dst[i], &bits, 4);
    }
    pos_ += 4 * n;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(size_t n) const {
    if (pos_ + n > buf_.size())
      throw CheckpointError(CheckpointError::Kind::truncated,
                            "checkpoint truncated: need " + std::to_string(n) + " bytes at offset " +
                                std::to_string(pos_));
  }
  const std::vector<uint8_t>& buf_;
  size_t pos_ = 0;
};

}  // namespace

uint32_t crc32(const uint8_t* data, size_t len) {
  const uint32_t* t = crc_table();
  uint32_t c = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) c = t[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void save_weights(const ModelParams<float>& params, const std::string& path) {
  if (params.names.size() != params.tensors.size())
    throw StateError("save_weights: name/tensor count mismatch");
  if (params.tensors.size() > 0xFFFF) throw StateError("save_weights: too many tensors");

  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u16(out, kVersion);
  put_u16(out, static_cast<uint16_t>(params.tensors.size()));
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    const std::string& name = params.names[i];
    const Tensor<float>& t = params.tensors[i];
    if (name.empty() || name.size() > 255)
      throw StateError("save_weights: tensor name length must be 1..255");
    out.push_back(static_cast<uint8_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<uint8_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) put_u32(out, static_cast<uint32_t>(t.shape()[d]));
    for (Index k = 0; k < t.size(); ++k) {
      uint32_t bits;
      float v = t[k];
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }
  put_u32(out, crc32(out.data(), out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path);
}

ModelParams<float> load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r(buf);
  const std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic.data(), 4) != 0)
    throw CheckpointError(CheckpointError::Kind::bad_magic, "not an LPNW checkpoint: " + path);
  const uint16_t version = r.u16();
  if (version != kVersion)
    throw CheckpointError(CheckpointError::Kind::bad_version,
                          "unsupported LPNW version " + std::to_string(version));
  const uint16_t count = r.u16();

  ModelParams<float> params;
  for (uint16_t i = 0; i < count; ++i) {
    const uint8_t name_len = r.u8();
    if (name_len == 0)
      throw CheckpointError(CheckpointError::Kind::bad_layout, "empty tensor name");
    std::string name = r.bytes(name_len);
    const uint8_t rank = r.u8();
    if (rank < 1 || rank > 4)
      throw CheckpointError(CheckpointError::Kind::bad_layout,
                            "tensor " + name + ": bad rank " + std::to_string(rank));
    std::vector<Index> dims(rank);
    for (uint8_t d = 0; d < rank; ++d) {
      const uint32_t v = r.u32();
      if (v == 0)
        throw CheckpointError(CheckpointError::Kind::bad_layout, "tensor " + name + ": zero dim");
      dims[d] = static_cast<Index>(v);
    }
    Shape shape(dims);
    Tensor<float> t(shape);
    r.floats(t.data(), static_cast<size_t>(t.size()));
    params.names.push_back(std::move(name));
    params.tensors.push_back(std::move(t));
  }

  if (r.remaining() != 4)
    throw CheckpointError(CheckpointError::Kind::truncated,
                          "checkpoint has " + std::to_string(r.remaining()) +
                              " trailing bytes where the 4-byte CRC belongs");
  const size_t payload = r.pos();
  const uint32_t computed = crc32(buf.data(), payload);
  uint32_t file_crc = 0;
  for (int i = 0; i < 4; ++i) file_crc |= static_cast<uint32_t>(buf[payload + i]) << (8 * i);
  if (file_crc != computed)
    throw CheckpointError(CheckpointError::Kind::checksum_mismatch,
                          "checkpoint CRC mismatch in " + path);
  return params;
}

void validate_params(const ModelParams<float>& params, const ModelSpec& spec) {
  const auto plans = plan_layers(spec);
  std::vector<std::pair<std::string, Shape>> expected;
  for (const auto& p : plans)
    for (const auto& ps : p.params) expected.push_back(ps);

  if (expected.size() != params.names.size())
    throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                          "checkpoint holds " + std::to_string(params.names.size()) +
                              " tensors, model expects " + std::to_string(expected.size()));
  for (size_t i = 0; i < expected.size(); ++i) {
    if (params.names[i] != expected[i].first)
      throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                            "tensor " + std::to_string(i) + " named '" + params.names[i] +
                                "', model expects '" + expected[i].first + "'");
    if (params.tensors[i].shape() != expected[i].second)
      throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                            "tensor " + params.names[i] + " has shape " +
                                params.tensors[i].shape().str() + ", model expects " +
                                expected[i].second.str());
  }
}

ModelParams<float> load_weights(const std::string& path, const ModelSpec& spec) {
  ModelParams<float> params = load_weights(path);
  validate_params(params, spec);
  return params;
}

}  // namespace lpn

#include "alphamaml/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace alphamaml {

namespace {

constexpr char kMagic[5] = {'A', 'M', 'M', 'L', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
  write_u32(os, static_cast<uint32_t>(v));
  write_u32(os, static_cast<uint32_t>(v >> 32));
}

void write_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  write_u64(os, bits);
}

uint32_t read_u32(std::istream& is) {
  uint8_t b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t read_u64(std::istream& is) {
  uint64_t lo = read_u32(is);
  uint64_t hi = read_u32(is);
  return lo | hi << 32;
}

double read_f64(std::istream& is) {
  uint64_t bits = read_u64(is);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const MetaState& state,
                     const std::string& config_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot create checkpoint file: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kVersion);
  write_f64(os, state.alpha);
  write_f64(os, state.beta);
  write_u64(os, static_cast<uint64_t>(state.iter));
  write_u32(os, static_cast<uint32_t>(state.theta.size()));
  for (const auto& seg : state.theta.segments) {
    write_u32(os, static_cast<uint32_t>(seg.ndim()));
    for (long d : seg.shape()) write_u64(os, static_cast<uint64_t>(d));
    for (long i = 0; i < seg.numel(); ++i) write_f64(os, seg[i]);
  }
  write_u64(os, config_json.size());
  os.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
  if (!os) throw std::runtime_error("failed writing checkpoint file: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint file: " + path);
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const uint32_t version = read_u32(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint version mismatch: file has " + std::to_string(version) +
                             ", expected " + std::to_string(kVersion));
  Checkpoint ckpt;
  ckpt.state.alpha = read_f64(is);
  ckpt.state.beta = read_f64(is);
  ckpt.state.iter = static_cast<long>(read_u64(is));
  const uint32_t n_segments = read_u32(is);
  ckpt.state.theta.segments.reserve(n_segments);
  for (uint32_t s = 0; s < n_segments; ++s) {
    const uint32_t ndim = read_u32(is);
    ad::Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<long>(read_u64(is));
    ad::Tensor t(shape);
    for (long i = 0; i < t.numel(); ++i) t.data()[i] = read_f64(is);
    ckpt.state.theta.segments.push_back(std::move(t));
  }
  const uint64_t json_len = read_u64(is);
  ckpt.config_json.resize(json_len);
  is.read(ckpt.config_json.data(), static_cast<std::streamsize>(json_len));
  if (!is) throw std::runtime_error("truncated checkpoint file: " + path);
  return ckpt;
}

}  // namespace alphamaml

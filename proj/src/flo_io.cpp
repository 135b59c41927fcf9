#include "pinet/flo_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace pinet::io {

namespace {

static_assert(sizeof(float) == 4);

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, 4);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, size_t offset) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(bytes[offset + k]) << (8 * k);
  T value;
  std::memcpy(&value, &bits, 4);
  return value;
}

constexpr size_t kHeaderBytes = 12;

}  // namespace

std::vector<std::uint8_t> encode_flo(const torch::Tensor& flow) {
  auto f = flow.dim() == 4 ? flow : flow.unsqueeze(0);
  if (f.dim() != 4 || f.size(0) != 1 || f.size(1) != 2) {
    throw ShapeError("encode_flo: expected a single flow [1,2,H,W], got " + shape_string(flow));
  }
  const auto h = f.size(2), w = f.size(3);
  // [H,W,2] row-major interleaving.
  auto hw2 = f[0].permute({1, 2, 0}).contiguous().to(torch::kFloat32);
  const float* data = hw2.data_ptr<float>();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + static_cast<size_t>(h * w * 2 * 4));
  put_le(out, kFloMagic);
  put_le(out, static_cast<std::int32_t>(w));
  put_le(out, static_cast<std::int32_t>(h));
  for (int64_t k = 0; k < h * w * 2; ++k) put_le(out, data[k]);
  return out;
}

torch::Tensor decode_flo(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw ParseError(".flo: truncated header at offset " + std::to_string(bytes.size()));
  if (get_le<float>(bytes, 0) != kFloMagic) throw ParseError(".flo: bad magic at offset 0");
  if (bytes.size() < kHeaderBytes) {
    throw ParseError(".flo: truncated header at offset " + std::to_string(bytes.size()));
  }
  const auto w = get_le<std::int32_t>(bytes, 4);
  const auto h = get_le<std::int32_t>(bytes, 8);
  if (w <= 0) throw ParseError(".flo: invalid width at offset 4");
  if (h <= 0) throw ParseError(".flo: invalid height at offset 8");
  const auto count = static_cast<size_t>(w) * static_cast<size_t>(h) * 2;
  const size_t expected = kHeaderBytes + count * 4;
  if (bytes.size() < expected) {
    throw ParseError(".flo: truncated payload at offset " + std::to_string(bytes.size()) + ", expected " +
                     std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) {
    throw ParseError(".flo: trailing bytes at offset " + std::to_string(expected));
  }
  auto hw2 = torch::empty({h, w, 2}, torch::kFloat32);
  float* data = hw2.data_ptr<float>();
  for (size_t k = 0; k < count; ++k) data[k] = get_le<float>(bytes, kHeaderBytes + 4 * k);
  return hw2.permute({2, 0, 1}).contiguous().unsqueeze(0);
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return FlowField(decode_flo(bytes), 1);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  write_bytes(path, encode_flo(flow.tensor().detach()));
}

}  // namespace pinet::io

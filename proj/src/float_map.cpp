#include "uqdepth/float_map.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace uqd::io {

namespace {

constexpr char kMagic[4] = {'U', 'Q', 'D', 'M'};

static_assert(std::endian::native == std::endian::little,
              "UQDM writer assumes a little-endian host");

void put_u32(std::vector<char>& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

std::uint32_t get_u32(const std::vector<char>& in, std::size_t off) {
  std::uint32_t v;
  std::memcpy(&v, in.data() + off, 4);
  return v;
}

}  // namespace

std::vector<char> encode_map(const Tensor& map) {
  if (map.ndim() != 2) throw std::invalid_argument("float map must be {h,w}");
  std::vector<char> out;
  out.reserve(12 + static_cast<std::size_t>(map.size()) * 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(map.dim(1)));
  put_u32(out, static_cast<std::uint32_t>(map.dim(0)));
  const char* p = reinterpret_cast<const char*>(map.data());
  out.insert(out.end(), p, p + map.size() * sizeof(float));
  return out;
}

Tensor decode_map(const std::vector<char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw std::runtime_error("float map: bad magic");
  const std::uint32_t w = get_u32(bytes, 4);
  const std::uint32_t h = get_u32(bytes, 8);
  if (w == 0 || h == 0) throw std::runtime_error("float map: zero dimension");
  const std::size_t payload = static_cast<std::size_t>(w) * h * sizeof(float);
  if (bytes.size() != 12 + payload)
    throw std::runtime_error("float map: payload size mismatch");
  std::vector<float> data(static_cast<std::size_t>(w) * h);
  std::memcpy(data.data(), bytes.data() + 12, payload);
  return Tensor({static_cast<int>(h), static_cast<int>(w)}, std::move(data));
}

void write_map(const std::filesystem::path& path, const Tensor& map) {
  const std::vector<char> bytes = encode_map(map);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write float map: " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write: " + path.string());
}

Tensor read_map(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read float map: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
  return decode_map(bytes);
}

}  // namespace uqd::io

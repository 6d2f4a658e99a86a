#pragma once

#include <filesystem>

#include "uqdepth/tensor.hpp"

namespace uqd::io {

// UQDM float-map container: magic "UQDM", u32 width, u32 height (little
// endian), then width*height row-major float32 little-endian payload.
// Round-trips any {h,w} tensor bit-exactly.
void write_map(const std::filesystem::path& path, const Tensor& map);
Tensor read_map(const std::filesystem::path& path);

std::vector<char> encode_map(const Tensor& map);
Tensor decode_map(const std::vector<char>& bytes);

}  // namespace uqd::io

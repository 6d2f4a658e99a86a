#pragma once

#include <filesystem>

#include "uqdepth/tensor.hpp"

namespace uqd::io {

// Binary PPM (P6, maxval 255). Tensors are {3,h,w} with values in [0,1];
// writing quantizes to 8 bits with round-to-nearest, reading maps k -> k/255.
void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

}  // namespace uqd::io

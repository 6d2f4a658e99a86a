#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

namespace uqd::io {

std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::string& s);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace uqd::io

#pragma once
/// Small file helpers shared by task/dataset serialization.

#include <cstdint>
#include <string>
#include <vector>

namespace dpm {

/// Raw little-endian doubles. The toolkit only targets little-endian hosts;
/// writers and readers both assert that at compile time.
void write_doubles(const std::string& path, const std::vector<double>& values);
std::vector<double> read_doubles(const std::string& path);
/// Like read_doubles but fails if the count differs from `expected`.
std::vector<double> read_doubles_checked(const std::string& path, size_t expected);

/// FNV-1a over a file's bytes; used for dataset manifests.
std::uint64_t fnv1a_file(const std::string& path);
std::uint64_t fnv1a_bytes(const void* data, size_t n);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace dpm

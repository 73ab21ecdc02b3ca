#include "dpm/io_util.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "binary task files are little-endian");

namespace dpm {

void write_doubles(const std::string& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_doubles: cannot open " + path);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write_doubles: write failed for " + path);
}

std::vector<double> read_doubles(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("read_doubles: cannot open " + path);
  const std::streamsize bytes = in.tellg();
  if (bytes % sizeof(double) != 0) {
    throw std::runtime_error("read_doubles: truncated file " + path);
  }
  std::vector<double> values(static_cast<size_t>(bytes) / sizeof(double));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(values.data()), bytes);
  if (!in) throw std::runtime_error("read_doubles: read failed for " + path);
  return values;
}

std::vector<double> read_doubles_checked(const std::string& path, size_t expected) {
  std::vector<double> values = read_doubles(path);
  if (values.size() != expected) {
    throw std::runtime_error("read_doubles: " + path + " holds " +
                             std::to_string(values.size()) + " doubles, expected " +
                             std::to_string(expected));
  }
  return values;
}

std::uint64_t fnv1a_bytes(const void* data, size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("fnv1a_file: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  return h;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_text_file: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_text_file: cannot open " + path);
  out << content;
}

}  // namespace dpm

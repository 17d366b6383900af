#include "metatne/io.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "metatne/error.hpp"

namespace metatne {

namespace {

template <typename T>
void write_raw(std::ostream& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  if (!in) throw UsageError("truncated checkpoint file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void write_u32(std::ostream& out, uint32_t v) { write_raw(out, v); }
void write_u64(std::ostream& out, uint64_t v) { write_raw(out, v); }
void write_f32(std::ostream& out, float v) { write_raw(out, v); }
void write_f64(std::ostream& out, double v) { write_raw(out, v); }
uint32_t read_u32(std::istream& in) { return read_raw<uint32_t>(in); }
uint64_t read_u64(std::istream& in) { return read_raw<uint64_t>(in); }
float read_f32(std::istream& in) { return read_raw<float>(in); }
double read_f64(std::istream& in) { return read_raw<double>(in); }

void write_f32_array(std::ostream& out, const double* data, size_t n) {
  std::vector<float> buf(n);
  for (size_t i = 0; i < n; ++i) buf[i] = static_cast<float>(data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
}

void read_f32_array(std::istream& in, double* data, size_t n) {
  std::vector<float> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw UsageError("truncated checkpoint file");
  for (size_t i = 0; i < n; ++i) data[i] = static_cast<double>(buf[i]);
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open file for digest: " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<uint8_t>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return std::string(hex);
}

}  // namespace metatne

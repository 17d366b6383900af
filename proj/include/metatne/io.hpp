#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace metatne {

// Little-endian primitives for checkpoint files. The written layout is the
// host layout on every platform this targets; values are staged through
// fixed-width types so the format stays stable.
void write_u32(std::ostream& out, uint32_t v);
void write_u64(std::ostream& out, uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
uint32_t read_u32(std::istream& in);
uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);

void write_f32_array(std::ostream& out, const double* data, size_t n);
void read_f32_array(std::istream& in, double* data, size_t n);

// FNV-1a 64 of a file's bytes, hex-encoded; used for manifest digests.
std::string file_digest(const std::string& path);

}  // namespace metatne

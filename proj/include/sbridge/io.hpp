// io.hpp: CSV reading/writing for point sets and tabular reports.
//
// Numbers are printed with std::to_chars (shortest round-trip form), so
// repeated runs of the same binary produce byte-identical files.  Point
// files carry no header row; report files do.

#pragma once

#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "sbridge/batch.hpp"

namespace sbridge {

namespace detail {

// Raw little-endian field IO shared by the binary plan/checkpoint formats.
template <typename T>
void put_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("binary file truncated");
  return v;
}

inline void put_doubles(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void get_doubles(std::istream& in, std::vector<double>& v,
                        std::size_t count) {
  v.resize(count);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("binary file truncated");
}

}  // namespace detail

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc())
    throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view tok) {
  // Trim surrounding whitespace, then require the whole token to parse.
  std::size_t b = 0, e = tok.size();
  while (b < e && std::isspace(static_cast<unsigned char>(tok[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(tok[e - 1]))) --e;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data() + b, tok.data() + e, v);
  if (ec != std::errc() || ptr != tok.data() + e)
    throw std::invalid_argument("parse_double: bad number '" +
                                std::string(tok) + "'");
  return v;
}

inline void write_csv_row(std::ostream& out,
                          std::span<const std::string> cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);  // binary: no CRLF translation
  if (!out)
    throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

// Writes one point per line, coordinates comma-separated, no header.
inline void write_points_csv(const std::filesystem::path& path,
                             const SampleBatch& batch) {
  auto out = open_for_write(path);
  for (std::size_t i = 0; i < batch.n; ++i) {
    auto row = batch.row(i);
    for (std::size_t j = 0; j < batch.d; ++j) {
      if (j) out << ',';
      out << format_double(row[j]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Reads a headerless point CSV; dimension is taken from the first row and
// every later row must match it.
inline SampleBatch read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::vector<double> data;
  std::size_t d = 0, n = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t cols = 0;
    std::string tok;
    std::istringstream ls(line);
    while (std::getline(ls, tok, ',')) {
      data.push_back(parse_double(tok));
      ++cols;
    }
    if (d == 0)
      d = cols;
    else if (cols != d)
      throw std::runtime_error("ragged CSV row in " + path.string() + ": got " +
                               std::to_string(cols) + " columns, expected " +
                               std::to_string(d));
    ++n;
  }
  if (n == 0) throw std::runtime_error("empty point file: " + path.string());
  SampleBatch batch(n, d);
  batch.data = std::move(data);
  batch.validate();
  return batch;
}

}  // namespace sbridge

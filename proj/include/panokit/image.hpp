#pragma once

// Binary PPM (P6) / PGM (P5) readers and writers. Round trips are bit-exact;
// no gamma, no scaling.

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "panokit/matrix.hpp"

namespace panokit {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct RgbImage {
  std::size_t width = 0, height = 0;
  std::vector<Rgb> pixels;  // row-major

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, Rgb fill = {}) : width(w), height(h), pixels(w * h, fill) {}

  Rgb& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  const Rgb& at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool operator==(const RgbImage&) const = default;
};

struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

namespace detail {

inline void skip_pnm_space(std::istream& is) {
  for (;;) {
    int c = is.peek();
    if (c == '#') {
      while (c != '\n' && c != EOF) c = is.get();
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      is.get();
    } else {
      return;
    }
  }
}

inline std::size_t read_pnm_int(std::istream& is, const std::string& what) {
  skip_pnm_space(is);
  std::size_t v = 0;
  if (!(is >> v)) throw FileError("pnm: bad " + what);
  return v;
}

inline void expect_magic(std::istream& is, char digit, const std::string& path) {
  char p = 0, d = 0;
  is.get(p);
  is.get(d);
  if (p != 'P' || d != digit)
    throw FileError("pnm: " + path + " is not a P" + std::string(1, digit) + " file");
}

}  // namespace detail

inline void write_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot open for write: " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size() * 3));
  if (!os) throw FileError("write failed: " + path);
}

inline RgbImage read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open: " + path);
  detail::expect_magic(is, '6', path);
  RgbImage img;
  img.width = detail::read_pnm_int(is, "width");
  img.height = detail::read_pnm_int(is, "height");
  std::size_t maxval = detail::read_pnm_int(is, "maxval");
  if (maxval != 255) throw FileError("ppm: only maxval 255 supported: " + path);
  is.get();  // single whitespace after maxval
  img.pixels.resize(img.width * img.height);
  is.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size() * 3));
  if (is.gcount() != static_cast<std::streamsize>(img.pixels.size() * 3))
    throw FileError("ppm: truncated pixel data: " + path);
  return img;
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot open for write: " + path);
  os << "P5\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw FileError("write failed: " + path);
}

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open: " + path);
  detail::expect_magic(is, '5', path);
  GrayImage img;
  img.width = detail::read_pnm_int(is, "width");
  img.height = detail::read_pnm_int(is, "height");
  std::size_t maxval = detail::read_pnm_int(is, "maxval");
  if (maxval != 255) throw FileError("pgm: only maxval 255 supported here: " + path);
  is.get();
  img.pixels.resize(img.width * img.height);
  is.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (is.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw FileError("pgm: truncated pixel data: " + path);
  return img;
}

// 16-bit P5 (big-endian sample order per the PNM spec), used for depth maps.
struct Gray16Image {
  std::size_t width = 0, height = 0;
  std::vector<std::uint16_t> pixels;
};

inline Gray16Image read_pgm16(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open: " + path);
  detail::expect_magic(is, '5', path);
  Gray16Image img;
  img.width = detail::read_pnm_int(is, "width");
  img.height = detail::read_pnm_int(is, "height");
  std::size_t maxval = detail::read_pnm_int(is, "maxval");
  if (maxval < 256 || maxval > 65535)
    throw FileError("pgm16: expected 16-bit maxval: " + path);
  is.get();
  img.pixels.resize(img.width * img.height);
  std::vector<std::uint8_t> raw(img.pixels.size() * 2);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (is.gcount() != static_cast<std::streamsize>(raw.size()))
    throw FileError("pgm16: truncated pixel data: " + path);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  return img;
}

inline void write_pgm16(const std::string& path, const Gray16Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot open for write: " + path);
  os << "P5\n" << img.width << " " << img.height << "\n65535\n";
  std::vector<std::uint8_t> raw(img.pixels.size() * 2);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    raw[2 * i] = static_cast<std::uint8_t>(img.pixels[i] >> 8);
    raw[2 * i + 1] = static_cast<std::uint8_t>(img.pixels[i] & 0xFF);
  }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!os) throw FileError("write failed: " + path);
}

}  // namespace panokit

#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <string>

#include "attrflip/core.hpp"

namespace attrflip {

namespace detail {

// Reads the next header token, skipping whitespace and '#' comments.
inline std::string pnm_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw IoError(path + ": truncated netpbm header");
  return tok;
}

inline int pnm_int(std::istream& in, const std::string& path) {
  std::string tok = pnm_token(in, path);
  try {
    std::size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError(path + ": bad integer '" + tok + "' in netpbm header");
  }
}

}  // namespace detail

// PGM (P2/P5) and PPM (P3/P6) reader. Only maxval 255 is supported.
inline ImageTensor read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");

  std::string magic = detail::pnm_token(in, path);
  bool ascii;
  int channels;
  if (magic == "P2") {
    ascii = true;
    channels = 1;
  } else if (magic == "P3") {
    ascii = true;
    channels = 3;
  } else if (magic == "P5") {
    ascii = false;
    channels = 1;
  } else if (magic == "P6") {
    ascii = false;
    channels = 3;
  } else {
    throw IoError(path + ": unsupported netpbm magic '" + magic + "'");
  }

  int width = detail::pnm_int(in, path);
  int height = detail::pnm_int(in, path);
  int maxval = detail::pnm_int(in, path);
  if (width <= 0 || height <= 0) throw IoError(path + ": non-positive image dimensions");
  if (maxval != 255) throw IoError(path + ": unsupported maxval " + std::to_string(maxval));

  ImageTensor img = ImageTensor::zeros(height, width, channels);
  std::size_t n = img.size();
  if (ascii) {
    for (std::size_t i = 0; i < n; ++i) {
      int v = detail::pnm_int(in, path);
      if (v < 0 || v > 255) throw IoError(path + ": sample out of range");
      img.pixels[i] = v;
    }
  } else {
    // binary raster starts after exactly one whitespace byte, already consumed
    std::string raw(n, '\0');
    in.read(raw.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw IoError(path + ": truncated raster");
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<unsigned char>(raw[i]);
  }
  return img;
}

// Writes binary P5/P6. Pixels are quantized on the way out, so the
// write/read round trip is lossless exactly for already-quantized images.
inline void write_image(const std::string& path, const ImageTensor& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ShapeError(path + ": write_image supports 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
  std::string raw(img.size(), '\0');
  for (std::size_t i = 0; i < img.size(); ++i)
    raw[i] = static_cast<char>(static_cast<unsigned char>(quantize_pixel(img.pixels[i])));
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace attrflip

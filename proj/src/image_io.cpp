#include "preimage/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace preimage {

namespace {

std::uint8_t to_byte(double x) {
  double c = std::clamp(x, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

// Skips whitespace and '#' comments, then reads one non-negative integer.
int read_pnm_int(std::istream& in) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (ch == EOF) throw std::invalid_argument("image read: truncated header");
  int val = 0;
  bool any = false;
  while (ch != EOF && std::isdigit(ch)) {
    val = val * 10 + (ch - '0');
    any = true;
    ch = in.get();
  }
  if (!any) throw std::invalid_argument("image read: malformed header");
  return val;
}

Tensor read_pnm(const std::string& path, bool as_mask) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("image read: cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  bool color;
  if (m0 == 'P' && m1 == '6') {
    color = true;
  } else if (m0 == 'P' && m1 == '5') {
    color = false;
  } else {
    throw std::invalid_argument("image read: " + path + " is not a binary PPM/PGM");
  }
  int w = read_pnm_int(in);
  int h = read_pnm_int(in);
  int maxval = read_pnm_int(in);
  if (maxval != 255)
    throw std::invalid_argument("image read: only 8-bit images supported: " + path);
  if (w <= 0 || h <= 0) throw std::invalid_argument("image read: bad size in " + path);
  const int nch = color ? 3 : 1;
  std::vector<char> buf(static_cast<std::size_t>(w) * h * nch);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw std::invalid_argument("image read: truncated pixel data in " + path);

  if (as_mask) {
    if (color) throw std::invalid_argument("mask read: expected grayscale: " + path);
    Tensor t(1, 1, h, w);
    for (int i = 0; i < h * w; ++i)
      t.v[i] = static_cast<std::uint8_t>(buf[i]) >= 128 ? 1.0 : 0.0;
    return t;
  }
  Tensor t(1, 3, h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c) {
        std::uint8_t b = color
            ? static_cast<std::uint8_t>(buf[(static_cast<std::size_t>(i) * w + j) * 3 + c])
            : static_cast<std::uint8_t>(buf[static_cast<std::size_t>(i) * w + j]);
        t.at(0, c, i, j) = b / 255.0;
      }
  return t;
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.n != 1 || image.c != 3)
    throw std::invalid_argument("write_ppm: expected (1,3,H,W), got " + shape_str(image));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
  out << "P6\n" << image.w << " " << image.h << "\n255\n";
  std::vector<char> buf(static_cast<std::size_t>(image.h) * image.w * 3);
  std::size_t q = 0;
  for (int i = 0; i < image.h; ++i)
    for (int j = 0; j < image.w; ++j)
      for (int c = 0; c < 3; ++c)
        buf[q++] = static_cast<char>(to_byte(image.at(0, c, i, j)));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write_ppm: write failed for " + path);
}

void write_pgm(const std::string& path, const Tensor& image) {
  if (image.n != 1 || image.c != 1)
    throw std::invalid_argument("write_pgm: expected (1,1,H,W), got " + shape_str(image));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  out << "P5\n" << image.w << " " << image.h << "\n255\n";
  std::vector<char> buf(static_cast<std::size_t>(image.h) * image.w);
  for (int i = 0; i < image.h * image.w; ++i)
    buf[i] = static_cast<char>(to_byte(image.v[i]));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write_pgm: write failed for " + path);
}

Tensor read_image(const std::string& path) { return read_pnm(path, false); }

Tensor read_mask(const std::string& path) { return read_pnm(path, true); }

}  // namespace preimage

#include "textplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace preimage::cli {

namespace {

// 5x7 glyphs, row-major, '#' = set. Covers what chart labels need.
const std::map<char, const char*>& font() {
  static const std::map<char, const char*> f = {
      {'A', ".###.#...##...#######...##...##...#"},
      {'B', "####.#...##...#####.#...##...#####."},
      {'C', ".#####....#....#....#....#....#####"},  // wrong length guard below
      {'D', "####.#...##...##...##...##...#####."},
      {'E', "######....#....####.#....#....#####"},
      {'F', "######....#....####.#....#....#...."},
      {'G', ".#####....#....#..###...##...#.###."},
      {'H', "#...##...##...#######...##...##...#"},
      {'I', "#####..#....#....#....#....#..#####"},
      {'J', "....#....#....#....#....##...#.###."},
      {'K', "#...##..#.#.#..##...#.#..#..#.#...#"},
      {'L', "#....#....#....#....#....#....#####"},
      {'M', "#...###.###.#.##...##...##...##...#"},
      {'N', "#...###..##.#.##..###...##...##...#"},
      {'O', ".###.#...##...##...##...##...#.###."},
      {'P', "####.#...##...#####.#....#....#...."},
      {'Q', ".###.#...##...##...##.#.##..#..##.#"},
      {'R', "####.#...##...#####.#.#..#..#.#...#"},
      {'S', ".#####....#.....###.....#....#####."},
      {'T', "#####..#....#....#....#....#....#.."},
      {'U', "#...##...##...##...##...##...#.###."},
      {'V', "#...##...##...##...#.#.#..#.#...#.."},
      {'W', "#...##...##...##.#.##.#.###.###...#"},
      {'X', "#...##...#.#.#...#...#.#.#...##...#"},
      {'Y', "#...##...#.#.#...#....#....#....#.."},
      {'Z', "#####....#...#...#...#...#....#####"},
      {'0', ".###.#...##..###.#.###..##...#.###."},
      {'1', "..#...##....#....#....#....#..#####"},
      {'2', ".###.#...#....#...#...#...#...#####"},
      {'3', ".###.#...#....#..##.....##...#.###."},
      {'4', "...##..#.#.#..##...######...#....#."},
      {'5', "######....####.....#....##...#.###."},
      {'6', ".###.#....#....####.#...##...#.###."},
      {'7', "#####....#...#...#...#....#....#..."},
      {'8', ".###.#...##...#.###.#...##...#.###."},
      {'9', ".###.#...##...#.####....#....#.###."},
      {'.', ".........................##...##..."},
      {'-', "...............#####..............."},
      {'_', "..............................#####"},
      {':', ".....##...##.........##...##......."},
      {'/', "....#....#...#...#...#...#....#...."},
      {'=', ".....#####.....#####..............."},
      {' ', "..................................."},
  };
  return f;
}

void put_pixel(preimage::Tensor& img, int x, int y, double r, double g, double b) {
  if (x < 0 || y < 0 || x >= img.w || y >= img.h) return;
  img.at(0, 0, y, x) = r;
  img.at(0, 1, y, x) = g;
  img.at(0, 2, y, x) = b;
}

void fill_rect(preimage::Tensor& img, int x0, int y0, int x1, int y1, double r,
               double g, double b) {
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) put_pixel(img, x, y, r, g, b);
}

struct Color {
  double r, g, b;
};

const Color kPalette[] = {
    {0.22, 0.42, 0.69}, {0.85, 0.45, 0.10}, {0.30, 0.62, 0.32},
    {0.70, 0.25, 0.25}, {0.50, 0.35, 0.65}, {0.45, 0.45, 0.45},
};

std::string fmt_value(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

void draw_text(preimage::Tensor& img, int x, int y, const std::string& text,
               double r, double g, double b, int scale) {
  const auto& f = font();
  int cx = x;
  for (char raw : text) {
    char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    auto it = f.find(ch);
    if (it == f.end()) it = f.find(' ');
    const char* rows = it->second;
    std::size_t len = std::char_traits<char>::length(rows);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 5; ++j) {
        std::size_t idx = static_cast<std::size_t>(i) * 5 + j;
        if (idx < len && rows[idx] == '#')
          for (int sy = 0; sy < scale; ++sy)
            for (int sx = 0; sx < scale; ++sx)
              put_pixel(img, cx + j * scale + sx, y + i * scale + sy, r, g, b);
      }
    cx += 6 * scale;
  }
}

preimage::Tensor render_bar_chart(const std::string& title,
                                  const std::vector<Bar>& bars, int width,
                                  int height) {
  preimage::Tensor img(1, 3, height, width, 1.0);  // white background
  const int left = 70, right = width - 20, top = 50, bottom = height - 90;
  draw_text(img, 20, 16, title, 0.1, 0.1, 0.1, 2);

  double vmax = 1e-12, vmin = 0.0;
  for (const Bar& b : bars) {
    vmax = std::max(vmax, b.value);
    vmin = std::min(vmin, b.value);
  }
  if (vmax == vmin) vmax = vmin + 1.0;
  auto to_y = [&](double v) {
    double t = (v - vmin) / (vmax - vmin);
    return bottom - static_cast<int>(t * (bottom - top));
  };

  // axes
  fill_rect(img, left - 1, top - 6, left, bottom + 1, 0.2, 0.2, 0.2);
  fill_rect(img, left - 1, bottom, right, bottom + 1, 0.2, 0.2, 0.2);
  // horizontal gridlines with value labels
  for (int k = 0; k <= 4; ++k) {
    double v = vmin + (vmax - vmin) * k / 4.0;
    int y = to_y(v);
    for (int x = left; x < right; x += 3) put_pixel(img, x, y, 0.85, 0.85, 0.85);
    draw_text(img, 6, y - 3, fmt_value(v), 0.3, 0.3, 0.3, 1);
  }

  if (!bars.empty()) {
    int slot = (right - left) / static_cast<int>(bars.size());
    int bar_w = std::max(4, slot * 2 / 3);
    for (std::size_t i = 0; i < bars.size(); ++i) {
      const Bar& b = bars[i];
      Color c = kPalette[b.color % 6];
      int x0 = left + static_cast<int>(i) * slot + (slot - bar_w) / 2;
      int y0 = to_y(std::max(b.value, 0.0));
      int ybase = to_y(std::min(0.0, std::max(vmin, 0.0)));
      if (b.value < 0.0) std::swap(y0, ybase);
      fill_rect(img, x0, y0, x0 + bar_w, ybase, c.r, c.g, c.b);
      draw_text(img, x0, y0 - 10, fmt_value(b.value), 0.1, 0.1, 0.1, 1);
      // rotated labels are not worth the trouble; truncate instead
      std::string lab = b.label.size() > 14 ? b.label.substr(0, 14) : b.label;
      int lx = x0 + bar_w / 2 - static_cast<int>(lab.size()) * 3;
      draw_text(img, std::max(left, lx), bottom + 8 + (i % 2) * 12, lab, 0.15,
                0.15, 0.15, 1);
    }
  }
  return img;
}

}  // namespace preimage::cli

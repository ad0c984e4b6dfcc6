#pragma once

#include <string>
#include <vector>

#include "preimage/tensor.hpp"

namespace preimage::cli {

struct Bar {
  std::string label;
  double value = 0.0;
  int color = 0;  // palette index
};

// Minimal raster bar chart with a built-in 5x7 font, written as PPM.
preimage::Tensor render_bar_chart(const std::string& title,
                                  const std::vector<Bar>& bars, int width = 900,
                                  int height = 540);

void draw_text(preimage::Tensor& img, int x, int y, const std::string& text,
               double r, double g, double b, int scale = 1);

}  // namespace preimage::cli

#pragma once

#include <string>

#include "preimage/tensor.hpp"

namespace preimage {

// 8-bit binary PPM (color) and PGM (grayscale). Intensities map linearly
// between [0,1] and [0,255].

void write_ppm(const std::string& path, const Tensor& image);  // (1,3,H,W)
void write_pgm(const std::string& path, const Tensor& image);  // (1,1,H,W)

// Reads PPM or PGM by magic number; grayscale is replicated to 3 channels.
Tensor read_image(const std::string& path);

// Reads a PGM mask; values >= 128 become 1, the rest 0.
Tensor read_mask(const std::string& path);

}  // namespace preimage

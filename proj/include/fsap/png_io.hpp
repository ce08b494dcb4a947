#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fsap {

struct PngImage {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 or 3
  std::vector<uint8_t> pixels;  // row-major, interleaved
};

void write_png(const std::string& path, const PngImage& img);
PngImage read_png(const std::string& path);

}  // namespace fsap

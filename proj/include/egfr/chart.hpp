#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egfr/cohort.hpp"

namespace egfr {

struct Rgb {
  uint8_t r, g, b;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

  void fill(Rgb c);
  void set(int x, int y, Rgb c);
  Rgb at(int x, int y) const;
  std::string digest() const;  // sha256 over dimensions + pixels
};

struct ChartStyle {
  int width = 800;
  int height = 500;
  int margin_left = 70;
  int margin_right = 25;
  int margin_top = 40;
  int margin_bottom = 55;
  int marker_size = 3;  // half-width of the square marker
  int max_x_labels = 6;
};

struct ChartImage {
  Image image;
  std::string digest;
  std::string window_id;
};

// Pixel positions the renderer will use; exposed so tests can check
// marker placement without decoding pixels.
struct ChartLayout {
  std::vector<std::pair<int, int>> marker_xy;  // one per observed visit, date order
  double y_lo = 0, y_hi = 0;
};

ChartLayout chart_layout(const PredictionWindow& window, const ChartStyle& style = {});

// Renders the observed eGFR trajectory only; the target visit never
// influences any pixel.
ChartImage render_trajectory(const PredictionWindow& window, const ChartStyle& style = {});

// Text rendering with the embedded 5x7 font (used for axis labels).
void draw_text(Image& img, int x, int y, const std::string& utf8, Rgb color);
int text_width(const std::string& utf8);

// Lossless raster I/O (8-bit RGB PNG).
std::vector<uint8_t> encode_png(const Image& img);
Image decode_png(const std::vector<uint8_t>& bytes);
void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);

}  // namespace egfr

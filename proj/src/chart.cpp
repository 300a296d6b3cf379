#include "egfr/chart.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>

#include "egfr/digest.hpp"

namespace egfr {

void Image::fill(Rgb c) {
  for (int i = 0; i < width * height; ++i) {
    rgb[3 * i] = c.r;
    rgb[3 * i + 1] = c.g;
    rgb[3 * i + 2] = c.b;
  }
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  size_t i = size_t(y) * width + x;
  rgb[3 * i] = c.r;
  rgb[3 * i + 1] = c.g;
  rgb[3 * i + 2] = c.b;
}

Rgb Image::at(int x, int y) const {
  size_t i = size_t(y) * width + x;
  return {rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]};
}

std::string Image::digest() const {
  std::string head = std::to_string(width) + "x" + std::to_string(height) + ";";
  std::string data = head + std::string(reinterpret_cast<const char*>(rgb.data()),
                                        rgb.size());
  return sha256_hex(data);
}

namespace {

// 5x7 glyphs, one byte per row, low 5 bits used (MSB = leftmost column).
// Covers the characters the axis labels need; anything else renders as a box.
const std::map<unsigned, std::array<uint8_t, 7>>& font() {
  static const std::map<unsigned, std::array<uint8_t, 7>> f = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
      {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
      {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
      {'i', {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
      {'m', {0x00, 0x00, 0x1A, 0x15, 0x15, 0x15, 0x15}},
      {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
      {'t', {0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06}},
      {0xB2, {0x0C, 0x12, 0x04, 0x08, 0x1E, 0x00, 0x00}},  // superscript two
  };
  return f;
}

std::vector<unsigned> decode_utf8(const std::string& s) {
  std::vector<unsigned> cps;
  for (size_t i = 0; i < s.size();) {
    unsigned char c = s[i];
    if (c < 0x80) {
      cps.push_back(c);
      i += 1;
    } else if ((c & 0xE0) == 0xC0 && i + 1 < s.size()) {
      cps.push_back(((c & 0x1F) << 6) | (s[i + 1] & 0x3F));
      i += 2;
    } else {
      cps.push_back(0xFFFD);
      i += 1;
    }
  }
  return cps;
}

void draw_glyph(Image& img, int x, int y, unsigned cp, Rgb color) {
  const auto& f = font();
  auto it = f.find(cp);
  if (it == f.end()) {  // hollow box fallback
    for (int col = 0; col < 5; ++col) {
      img.set(x + col, y, color);
      img.set(x + col, y + 6, color);
    }
    for (int row = 0; row < 7; ++row) {
      img.set(x, y + row, color);
      img.set(x + 4, y + row, color);
    }
    return;
  }
  for (int row = 0; row < 7; ++row)
    for (int col = 0; col < 5; ++col)
      if (it->second[row] & (1 << (4 - col))) img.set(x + col, y + row, color);
}

void draw_line(Image& img, int x0, int y0, int x1, int y1, Rgb color) {
  int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    img.set(x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

constexpr Rgb kBlack{0, 0, 0};
constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kSeries{31, 90, 180};
constexpr Rgb kGrid{220, 220, 220};

}  // namespace

void draw_text(Image& img, int x, int y, const std::string& utf8, Rgb color) {
  int cx = x;
  for (unsigned cp : decode_utf8(utf8)) {
    draw_glyph(img, cx, y, cp, color);
    cx += 6;
  }
}

int text_width(const std::string& utf8) { return int(decode_utf8(utf8).size()) * 6; }

ChartLayout chart_layout(const PredictionWindow& window, const ChartStyle& style) {
  if (window.observed.size() < 2)
    throw RenderError("line chart needs at least 2 observed visits, window " +
                      window.id() + " has " + std::to_string(window.observed.size()));

  double lo = window.observed.front().egfr, hi = lo;
  for (const auto& v : window.observed) {
    lo = std::min(lo, v.egfr);
    hi = std::max(hi, v.egfr);
  }
  double pad = std::max((hi - lo) * 0.1, 1.0);
  ChartLayout layout;
  layout.y_lo = std::max(0.0, lo - pad);
  layout.y_hi = hi + pad;

  const Date d0 = window.observed.front().date;
  const double span = double(day_diff(window.observed.back().date, d0));
  const int px0 = style.margin_left;
  const int px1 = style.width - style.margin_right;
  const int py0 = style.margin_top;
  const int py1 = style.height - style.margin_bottom;

  for (const auto& v : window.observed) {
    double fx = span > 0 ? double(day_diff(v.date, d0)) / span : 0.0;
    double fy = (v.egfr - layout.y_lo) / (layout.y_hi - layout.y_lo);
    int x = px0 + int(std::lround(fx * (px1 - px0)));
    int y = py1 - int(std::lround(fy * (py1 - py0)));
    layout.marker_xy.emplace_back(x, y);
  }
  return layout;
}

ChartImage render_trajectory(const PredictionWindow& window, const ChartStyle& style) {
  ChartLayout layout = chart_layout(window, style);

  Image img;
  img.width = style.width;
  img.height = style.height;
  img.rgb.assign(size_t(3) * style.width * style.height, 0);
  img.fill(kWhite);

  const int px0 = style.margin_left;
  const int px1 = style.width - style.margin_right;
  const int py0 = style.margin_top;
  const int py1 = style.height - style.margin_bottom;

  // y gridlines + tick labels
  const int n_ticks = 5;
  for (int i = 0; i <= n_ticks; ++i) {
    double value = layout.y_lo + (layout.y_hi - layout.y_lo) * i / n_ticks;
    int y = py1 - int(std::lround(double(py1 - py0) * i / n_ticks));
    draw_line(img, px0, y, px1, y, kGrid);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", value);
    std::string label = buf;
    draw_text(img, px0 - 8 - text_width(label), y - 3, label, kBlack);
  }

  // axes
  draw_line(img, px0, py0, px0, py1, kBlack);
  draw_line(img, px0, py1, px1, py1, kBlack);

  // x tick labels: ISO dates, thinned to at most max_x_labels
  const int n = int(window.observed.size());
  int stride = std::max(1, (n + style.max_x_labels - 1) / style.max_x_labels);
  for (int i = 0; i < n; i += stride) {
    auto [x, y] = layout.marker_xy[i];
    draw_line(img, x, py1, x, py1 + 4, kBlack);
    std::string label = format_iso_date(window.observed[i].date);
    int lx = std::clamp(x - text_width(label) / 2, 0, style.width - text_width(label));
    draw_text(img, lx, py1 + 8, label, kBlack);
  }

  // axis titles
  draw_text(img, px0, py0 - 16, "eGFR (mL/min/1.73m²)", kBlack);
  std::string xlabel = "Date";
  draw_text(img, (px0 + px1) / 2 - text_width(xlabel) / 2,
            style.height - 14, xlabel, kBlack);

  // series: segments then markers
  for (size_t i = 1; i < layout.marker_xy.size(); ++i)
    draw_line(img, layout.marker_xy[i - 1].first, layout.marker_xy[i - 1].second,
              layout.marker_xy[i].first, layout.marker_xy[i].second, kSeries);
  for (auto [x, y] : layout.marker_xy)
    for (int dy = -style.marker_size; dy <= style.marker_size; ++dy)
      for (int dx = -style.marker_size; dx <= style.marker_size; ++dx)
        img.set(x + dx, y + dy, kSeries);

  ChartImage out;
  out.window_id = window.id();
  out.digest = img.digest();
  out.image = std::move(img);
  return out;
}

}  // namespace egfr

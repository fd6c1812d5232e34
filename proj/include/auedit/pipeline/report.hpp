#pragma once

// CSV tables and the PNG figures the commands emit.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "auedit/core/error.hpp"
#include "auedit/core/png.hpp"
#include "auedit/core/tensor.hpp"
#include "auedit/core/types.hpp"

namespace auedit::pipeline {

// Numbers use fmt's shortest round-trip form, which never depends on locale.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  template <class... Cells>
  void row(const Cells&... cells) {
    std::vector<std::string> r;
    (r.push_back(cell(cells)), ...);
    push(std::move(r));
  }

  void push(std::vector<std::string> r) {
    require(r.size() == header_.size(), ErrorKind::dimension,
            fmt::format("CSV row has {} cells, header has {}", r.size(), header_.size()));
    rows_.push_back(std::move(r));
  }

  std::size_t size() const { return rows_.size(); }

  std::string to_string() const {
    std::string out = join(header_);
    for (const auto& r : rows_) out += join(r);
    return out;
  }

  void save(const std::filesystem::path& path) const { auedit::detail::write_text_atomic(path, to_string()); }

  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return std::isnan(v) ? "nan" : fmt::format("{}", v); }
  template <class Int>
    requires std::is_integral_v<Int>
  static std::string cell(Int v) {
    return std::to_string(v);
  }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      require(cells[i].find_first_of(",\n\"") == std::string::npos, ErrorKind::format,
              "CSV cell needs quoting: " + cells[i]);
      line += (i ? "," : "") + cells[i];
    }
    return line + "\n";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline CsvTable matrix_csv(const Eigen::MatrixXd& m, const std::string& corner, const std::vector<std::string>& row_names,
                           const std::vector<std::string>& col_names) {
  require(static_cast<Eigen::Index>(row_names.size()) == m.rows() && static_cast<Eigen::Index>(col_names.size()) == m.cols(),
          ErrorKind::dimension, "matrix labels do not match its shape");
  std::vector<std::string> header{corner};
  header.insert(header.end(), col_names.begin(), col_names.end());
  CsvTable t(std::move(header));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<std::string> cells{row_names[static_cast<std::size_t>(r)]};
    for (Eigen::Index c = 0; c < m.cols(); ++c) cells.push_back(CsvTable::cell(m(r, c)));
    t.push(std::move(cells));
  }
  return t;
}

// ---- 3x5 bitmap font ----------------------------------------------------------

namespace detail {

inline const std::array<std::uint16_t, 5>* glyph(char ch) {
  // Each row is three bits, most significant bit on the left.
  static const std::array<std::uint16_t, 5> digits[10] = {
      {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
      {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 2, 2, 2}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7}};
  static const std::array<std::uint16_t, 5> letters[26] = {
      {2, 5, 7, 5, 5}, {6, 5, 6, 5, 6}, {3, 4, 4, 4, 3}, {6, 5, 5, 5, 6}, {7, 4, 6, 4, 7}, {7, 4, 6, 4, 4},
      {3, 4, 5, 5, 3}, {5, 5, 7, 5, 5}, {7, 2, 2, 2, 7}, {1, 1, 1, 5, 2}, {5, 5, 6, 5, 5}, {4, 4, 4, 4, 7},
      {5, 7, 7, 5, 5}, {6, 5, 5, 5, 5}, {2, 5, 5, 5, 2}, {6, 5, 6, 4, 4}, {2, 5, 5, 6, 3}, {6, 5, 6, 5, 5},
      {3, 4, 2, 1, 6}, {7, 2, 2, 2, 2}, {5, 5, 5, 5, 7}, {5, 5, 5, 5, 2}, {5, 5, 7, 7, 5}, {5, 5, 2, 5, 5},
      {5, 5, 2, 2, 2}, {7, 1, 2, 4, 7}};
  static const std::array<std::uint16_t, 5> dash = {0, 0, 7, 0, 0};
  static const std::array<std::uint16_t, 5> dot = {0, 0, 0, 0, 2};
  static const std::array<std::uint16_t, 5> colon = {0, 2, 0, 2, 0};
  static const std::array<std::uint16_t, 5> plus = {0, 2, 7, 2, 0};
  if (ch >= '0' && ch <= '9') return &digits[ch - '0'];
  const auto up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (up >= 'A' && up <= 'Z') return &letters[up - 'A'];
  if (ch == '-') return &dash;
  if (ch == '.') return &dot;
  if (ch == ':') return &colon;
  if (ch == '+') return &plus;
  return nullptr;
}

}  // namespace detail

inline constexpr std::size_t kGlyphAdvance = 4;
inline constexpr std::size_t kGlyphHeight = 5;

// Unknown characters render as blanks.
inline void draw_text(GrayCanvas& canvas, std::size_t top, std::size_t left, const std::string& text,
                      std::uint8_t ink = 0, std::size_t scale = 1) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto* g = detail::glyph(text[i]);
    if (!g) continue;
    for (std::size_t r = 0; r < kGlyphHeight * scale; ++r)
      for (std::size_t c = 0; c < 3 * scale; ++c) {
        if (!(((*g)[r / scale] >> (2 - c / scale)) & 1u)) continue;
        const auto y = top + r, x = left + (i * kGlyphAdvance) * scale + c;
        if (y < canvas.rows && x < canvas.cols) canvas.at(y, x) = ink;
      }
  }
}

// ---- figures -----------------------------------------------------------------------

// Images left to right, each with a caption above it.
inline GrayCanvas labeled_row(const std::vector<ImageTensor>& images, const std::vector<std::string>& labels,
                              std::size_t zoom = 2) {
  require(!images.empty() && images.size() == labels.size(), ErrorKind::invalid_argument,
          "one label per image required");
  const std::size_t gutter = 6, caption = kGlyphHeight + 4;
  std::size_t rows = 0, cols = gutter;
  for (const auto& im : images) {
    rows = std::max(rows, im.rows * zoom);
    cols += im.cols * zoom + gutter;
  }
  GrayCanvas canvas(rows + caption + 2 * gutter, cols, 255);
  std::size_t left = gutter;
  for (std::size_t i = 0; i < images.size(); ++i) {
    draw_text(canvas, gutter, left, labels[i]);
    canvas.blit(images[i], gutter + caption, left, 0.0, 1.0, zoom);
    left += images[i].cols * zoom + gutter;
  }
  return canvas;
}

inline GrayCanvas image_grid(const std::vector<ImageTensor>& images, std::size_t per_row, std::size_t zoom = 1) {
  require(!images.empty() && per_row > 0, ErrorKind::invalid_argument, "grid needs images");
  const std::size_t gutter = 2, h = images[0].rows * zoom, w = images[0].cols * zoom;
  const auto n_rows = (images.size() + per_row - 1) / per_row;
  GrayCanvas canvas(gutter + n_rows * (h + gutter), gutter + per_row * (w + gutter), 255);
  for (std::size_t i = 0; i < images.size(); ++i)
    canvas.blit(images[i], gutter + (i / per_row) * (h + gutter), gutter + (i % per_row) * (w + gutter), 0.0, 1.0, zoom);
  return canvas;
}

// Values in [lo, hi] map black to white; NaN cells are mid-gray and hatched.
inline GrayCanvas heatmap(const Eigen::MatrixXd& m, double lo, double hi, std::size_t cell = 16) {
  require(m.rows() > 0 && m.cols() > 0, ErrorKind::dimension, "empty heatmap");
  const std::size_t margin = 10;
  const auto R = static_cast<std::size_t>(m.rows()), C = static_cast<std::size_t>(m.cols());
  GrayCanvas canvas(margin + R * cell + 2, margin + C * cell + 2, 255);
  for (std::size_t r = 0; r < R; ++r) {
    draw_text(canvas, margin + r * cell + (cell - kGlyphHeight) / 2, 1, std::to_string(r));
    for (std::size_t c = 0; c < C; ++c) {
      const double v = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      for (std::size_t y = 0; y < cell - 1; ++y)
        for (std::size_t x = 0; x < cell - 1; ++x) {
          std::uint8_t px = 128;
          if (std::isnan(v)) px = ((x + y) % 4 == 0) ? 0 : 128;
          else px = GrayCanvas::to_byte((v - lo) / (hi - lo));
          canvas.at(margin + r * cell + y, margin + c * cell + x) = px;
        }
    }
  }
  for (std::size_t c = 0; c < C; ++c) draw_text(canvas, 2, margin + c * cell + (cell - 3) / 2, std::to_string(c));
  return canvas;
}

// Polyline of each series over a shared y range, x = index.
inline GrayCanvas line_plot(const std::vector<std::vector<double>>& series, std::size_t width = 320,
                            std::size_t height = 200) {
  const std::size_t margin = 12;
  GrayCanvas canvas(height, width, 255);
  for (std::size_t x = margin; x < width - margin; ++x) canvas.at(height - margin, x) = 0;
  for (std::size_t y = margin; y <= height - margin; ++y) canvas.at(y, margin) = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t longest = 0;
  for (const auto& s : series) {
    longest = std::max(longest, s.size());
    for (double v : s)
      if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  }
  if (longest == 0 || !std::isfinite(lo)) return canvas;
  if (hi <= lo) hi = lo + 1.0;
  const double pw = static_cast<double>(width - 2 * margin - 1), ph = static_cast<double>(height - 2 * margin - 1);
  auto to_xy = [&](std::size_t i, double v) {
    const double fx = longest > 1 ? static_cast<double>(i) / static_cast<double>(longest - 1) : 0.0;
    return std::pair{static_cast<long>(std::lround(static_cast<double>(margin) + 1 + fx * pw)),
                     static_cast<long>(std::lround(static_cast<double>(height - margin) - 1 - (v - lo) / (hi - lo) * ph))};
  };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const std::uint8_t ink = static_cast<std::uint8_t>(std::min<std::size_t>(160, 100 * k));
    const auto& s = series[k];
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (!std::isfinite(s[i]) || !std::isfinite(s[i + 1])) continue;
      auto [x0, y0] = to_xy(i, s[i]);
      auto [x1, y1] = to_xy(i + 1, s[i + 1]);
      const long steps = std::max({std::labs(x1 - x0), std::labs(y1 - y0), 1L});
      for (long t = 0; t <= steps; ++t) {
        const auto x = x0 + (x1 - x0) * t / steps, y = y0 + (y1 - y0) * t / steps;
        canvas.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = ink;
      }
    }
    if (s.size() == 1 && std::isfinite(s[0])) {
      auto [x, y] = to_xy(0, s[0]);
      canvas.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = ink;
    }
  }
  draw_text(canvas, 2, margin + 2, fmt::format("{:.3g}", hi));
  draw_text(canvas, height - margin + 3, margin + 2, fmt::format("{:.3g}", lo));
  return canvas;
}

// Each row: one region's channel maps, each tile scaled by its own max |a|.
inline GrayCanvas channel_montage(const std::vector<std::vector<ImageTensor>>& rows, const std::vector<std::string>& labels,
                                  std::size_t zoom = 4) {
  require(!rows.empty() && rows.size() == labels.size(), ErrorKind::invalid_argument, "one label per montage row");
  const std::size_t gutter = 3, label_w = 8 * kGlyphAdvance;
  std::size_t per_row = 0, th = 0, tw = 0;
  for (const auto& r : rows) {
    per_row = std::max(per_row, r.size());
    for (const auto& t : r) th = std::max(th, t.rows * zoom), tw = std::max(tw, t.cols * zoom);
  }
  GrayCanvas canvas(gutter + rows.size() * (th + gutter), label_w + gutter + per_row * (tw + gutter), 255);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto top = gutter + i * (th + gutter);
    draw_text(canvas, top + (th - kGlyphHeight) / 2, 2, labels[i]);
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      const auto& t = rows[i][j];
      double m = 0.0;
      for (double v : t.data) m = std::max(m, std::abs(v));
      canvas.blit(t, top, label_w + gutter + j * (tw + gutter), 0.0, m > 0.0 ? m : 1.0, zoom);
    }
  }
  return canvas;
}

inline ImageTensor mask_image(const BinaryMask& m) {
  ImageTensor im(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) im.data[i] = m.data[i] ? 1.0 : 0.0;
  return im;
}

}  // namespace auedit::pipeline

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lorenz/measure.hpp"

namespace lorenz {

namespace fs = std::filesystem;

namespace detail {

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ResourceError("cannot open '" + path.string() + "' for writing");
  return out;
}

// Binary PGM (P5), 8-bit. Row 0 of `pix` is the top of the image.
inline void write_p5(std::ostream& out, std::uint32_t w, std::uint32_t h, const std::vector<std::uint8_t>& pix) {
  out << "P5\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
}

}  // namespace detail

inline constexpr std::uint32_t kMaxRasterSide = 4096;

/// Raster of a cell set: 0 (black) where a cell is in the set, 255 elsewhere,
/// y increasing upwards. Grids wider than max_side are OR-downsampled by a
/// power of two.
inline void write_pgm(const fs::path& path, const CellSet& cells, std::uint32_t max_side = kMaxRasterSide) {
  std::uint32_t side = cells.side(), f = 1;
  while (side / f > max_side) f *= 2;
  const std::uint32_t n = side / f;
  std::vector<std::uint8_t> pix(static_cast<std::size_t>(n) * n, 255);
  cells.for_each_cell([&](std::uint32_t i, std::uint32_t j) {
    pix[static_cast<std::size_t>(n - 1 - j / f) * n + i / f] = 0;
  });
  auto out = detail::open_out(path);
  detail::write_p5(out, n, n, pix);
}

/// Cover as CSV, one line per maximal vertical run of cells.
inline void write_cells_csv(const fs::path& path, const Grid& grid, const CellSet& cells) {
  auto out = detail::open_out(path);
  out << "column,row_begin,row_end,x_lo,x_hi,y_lo,y_hi\n";
  for (const auto& sp : cells.spans()) {
    out << sp.col << ',' << sp.begin << ',' << sp.end << ',' << grid.x_edge(sp.col).to_decimal() << ','
        << grid.x_edge(sp.col + 1).to_decimal() << ',' << grid.y_edge(sp.begin).to_decimal() << ','
        << grid.y_edge(sp.end).to_decimal() << '\n';
  }
}

inline void write_points_csv(const fs::path& path, const std::vector<Point2>& pts) {
  auto out = detail::open_out(path);
  out << "x,y\n";
  for (const auto& p : pts) out << p.x.to_decimal() << ',' << p.y.to_decimal() << '\n';
}

inline void write_density_csv(const fs::path& path, const DensityApprox& d) {
  auto out = detail::open_out(path);
  out << "index,x_lo,x_hi,weight,weight_exact\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Dyadic w = d.weight(i);
    out << i << ',' << d.edge(static_cast<std::int64_t>(i)).to_decimal() << ','
        << d.edge(static_cast<std::int64_t>(i) + 1).to_decimal() << ',' << w.to_decimal() << ',' << w.to_string()
        << '\n';
  }
}

/// Nonzero cells of a planar measure.
inline void write_planar_csv(const fs::path& path, const PlanarMeasure& mu) {
  auto out = detail::open_out(path);
  out << "column,row,weight\n";
  for (std::uint32_t i = 0; i < mu.side(); ++i) {
    for (std::uint32_t j = 0; j < mu.side(); ++j) {
      if (mu.raw(i, j)) out << i << ',' << j << ',' << mu.weight(i, j).to_decimal() << '\n';
    }
  }
}

/// Heatmap of a planar measure: grey level from the log of the cell weight,
/// 255 on empty cells and 0 at the heaviest cell.
inline void write_planar_pgm(const fs::path& path, const PlanarMeasure& mu) {
  const std::uint32_t n = mu.side();
  double top = 0;
  for (auto v : mu.data()) top = std::max(top, static_cast<double>(v));
  std::vector<std::uint8_t> pix(static_cast<std::size_t>(n) * n, 255);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < n; ++j) {
      const auto v = mu.raw(i, j);
      if (!v) continue;
      const double t = std::log2(top / static_cast<double>(v));  // 0 at the top weight
      pix[static_cast<std::size_t>(n - 1 - j) * n + i] = static_cast<std::uint8_t>(std::min(254.0, t * 8));
    }
  }
  auto out = detail::open_out(path);
  detail::write_p5(out, n, n, pix);
}

/// mu* as (cell, slab, weight) rows with slabs of height 2^-m_s under the
/// roof. Columns touching D are skipped; their mass is returned.
inline Dyadic write_physical_csv(const fs::path& path, const Model& model, const PhysicalMeasure& pm, int m_s) {
  const Grid grid(model, pm.section.m);
  const PlanarMeasure& mu = pm.section.mu;
  const Dyadic h = Dyadic::pow2(-m_s);
  Dyadic skipped;
  auto out = detail::open_out(path);
  out << "column,row,slab,s_lo,s_hi,weight_lo,weight_hi\n";
  for (std::uint32_t i = 0; i < mu.side(); ++i) {
    for (std::uint32_t j = 0; j < mu.side(); ++j) {
      if (!mu.raw(i, j)) continue;
      if (pm.touches_D[i]) {
        skipped += mu.weight(i, j);
        continue;
      }
      const Dyadic top = model.roof(grid.cell_box(i, j).x).mid();
      const long slabs = top.ceil_scaled(m_s).get_si();
      for (long s = 0; s < slabs; ++s) {
        const Dyadic s0 = h * Dyadic(s), s1 = h * Dyadic(s + 1);
        const Interval wt = suspension_box_weight(model, pm, i, j, s0, s1);
        out << i << ',' << j << ',' << s << ',' << s0.to_decimal() << ',' << s1.to_decimal() << ','
            << wt.lo().to_double() << ',' << wt.hi().to_double() << '\n';
      }
    }
  }
  return skipped;
}

inline void write_tube_csv(const fs::path& path, const TubeCover& tube) {
  auto out = detail::open_out(path);
  const Grid& g = tube.grid();
  out << "column,row,slabs,x_lo,x_hi,y_lo,y_hi,s_top,truncated\n";
  for (const auto& c : tube.columns()) {
    out << c.i << ',' << c.j << ',' << c.slabs << ',' << g.x_edge(c.i).to_decimal() << ','
        << g.x_edge(c.i + 1).to_decimal() << ',' << g.y_edge(c.j).to_decimal() << ','
        << g.y_edge(c.j + 1).to_decimal() << ',' << c.s_top.to_decimal() << ',' << (c.truncated ? 1 : 0) << '\n';
  }
}

/// Layered PGM stack of a tube cover: one image per group of s-slabs,
/// concatenated in one file (bottom layer first). Images are OR-downsampled
/// to at most max_side pixels and at most max_layers layers.
inline void write_tube_pgm_stack(const fs::path& path, const TubeCover& tube, std::uint32_t max_side = 512,
                                 std::uint32_t max_layers = 64) {
  const std::uint32_t side = tube.grid().side();
  std::uint32_t f = 1;
  while (side / f > max_side) f *= 2;
  const std::uint32_t n = side / f;
  std::uint32_t slabs = 0;
  for (const auto& c : tube.columns()) slabs = std::max(slabs, c.slabs);
  std::uint32_t per = 1;
  while ((slabs + per - 1) / per > max_layers) per *= 2;
  const std::uint32_t layers = std::max<std::uint32_t>(1, (slabs + per - 1) / per);
  std::vector<std::vector<std::uint8_t>> img(layers, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * n, 255));
  for (const auto& c : tube.columns()) {
    const std::size_t px = static_cast<std::size_t>(n - 1 - c.j / f) * n + c.i / f;
    for (std::uint32_t L = 0; L * per < c.slabs; ++L) img[L][px] = 0;
  }
  auto out = detail::open_out(path);
  for (const auto& im : img) detail::write_p5(out, n, n, im);
}

/// Non-certified picture: each tube box centre (x, y, s) goes around a lobe
/// centred at sign(x) * 1.2 with angle 2 pi s / r(x) and radius 0.35 + 0.65 |x|,
/// coloured by y (blue at -y_half to red at +y_half). Binary PPM (P6).
inline void write_visualization_ppm(const fs::path& path, const Model& model, const TubeCover& tube,
                                    std::uint32_t width = 768, std::uint32_t height = 384) {
  std::vector<std::uint8_t> pix(static_cast<std::size_t>(width) * height * 3, 255);
  const double yh = model.y_half().to_double();
  const double rp = model.r_plus().to_double();
  const Grid& g = tube.grid();
  const double hs = std::ldexp(1.0, -tube.m_s());
  for (const auto& c : tube.columns()) {
    const Point2 ctr = g.cell_centre(c.i, c.j);
    const double x = ctr.x.to_double(), y = ctr.y.to_double();
    const double top = c.s_top.to_double();
    const double side = x < 0 ? -1.0 : 1.0;
    const double rho = 0.35 + 0.65 * std::abs(x) / rp;
    const double t = (y + yh) / (2 * yh);
    const auto red = static_cast<std::uint8_t>(255 * t), blue = static_cast<std::uint8_t>(255 * (1 - t));
    for (std::uint32_t s = 0; s < c.slabs; ++s) {
      const double theta = 2 * M_PI * std::min(1.0, (s + 0.5) * hs / top);
      const double X = side * 1.2 - side * rho * std::cos(theta);
      const double Y = rho * std::sin(theta);
      const long px = std::lround((X + 2.4) / 4.8 * (width - 1));
      const long py = std::lround((1.2 - Y) / 2.4 * (height - 1));
      if (px < 0 || py < 0 || px >= static_cast<long>(width) || py >= static_cast<long>(height)) continue;
      std::uint8_t* p = &pix[(static_cast<std::size_t>(py) * width + static_cast<std::size_t>(px)) * 3];
      p[0] = red;
      p[1] = 64;
      p[2] = blue;
    }
  }
  auto out = detail::open_out(path);
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

}  // namespace lorenz

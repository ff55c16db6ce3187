#pragma once

// Sampled functions on a uniform box grid. Cell c has lower corner
// origin + c * spacing and is represented by its center; values are stored
// row-major with the last axis fastest.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace surfconv {

class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(std::vector<double> origin, double spacing, std::vector<std::int64_t> extents)
      : origin_(std::move(origin)), spacing_(spacing), extents_(std::move(extents)) {
    if (origin_.size() != extents_.size() || origin_.empty())
      throw std::invalid_argument("GridFunction: origin/extents mismatch");
    if (!(spacing_ > 0.0)) throw std::invalid_argument("GridFunction: spacing must be positive");
    std::size_t n = 1;
    for (auto e : extents_) {
      if (e <= 0) throw std::invalid_argument("GridFunction: extents must be positive");
      n *= static_cast<std::size_t>(e);
    }
    values_.assign(n, 0.0);
  }

  /// Cube [-R, R]^dim with `cells` cells per axis.
  static GridFunction cube(std::size_t dim, double R, std::int64_t cells) {
    return {std::vector<double>(dim, -R), 2.0 * R / static_cast<double>(cells), std::vector<std::int64_t>(dim, cells)};
  }

  static GridFunction sampled(GridFunction grid, const std::function<double(std::span<const double>)>& fn) {
    std::vector<double> x(grid.dim());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      grid.center(i, x);
      grid.values_[i] = fn(x);
    }
    return grid;
  }

  std::size_t dim() const { return extents_.size(); }
  std::size_t size() const { return values_.size(); }
  double spacing() const { return spacing_; }
  double cell_volume() const { return std::pow(spacing_, static_cast<double>(dim())); }
  const std::vector<double>& origin() const { return origin_; }
  const std::vector<std::int64_t>& extents() const { return extents_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Upper corner of the box.
  double upper(std::size_t axis) const {
    return origin_[axis] + spacing_ * static_cast<double>(extents_[axis]);
  }

  void center(std::size_t flat, std::span<double> out) const {
    for (std::size_t a = dim(); a-- > 0;) {
      const auto e = static_cast<std::size_t>(extents_[a]);
      out[a] = origin_[a] + spacing_ * (static_cast<double>(flat % e) + 0.5);
      flat /= e;
    }
  }

  /// Flat index of the cell containing x, or -1 when x lies outside the box.
  std::int64_t locate(std::span<const double> x) const {
    std::int64_t flat = 0;
    for (std::size_t a = 0; a < dim(); ++a) {
      const double t = (x[a] - origin_[a]) / spacing_;
      if (!(t >= 0.0)) return -1;
      const auto c = static_cast<std::int64_t>(std::floor(t));
      if (c >= extents_[a]) return -1;
      flat = flat * extents_[a] + c;
    }
    return flat;
  }

  double integral() const {
    return cell_volume() * std::accumulate(values_.begin(), values_.end(), 0.0);
  }

  /// Multilinear interpolation between cell centers, zero-extended outside the grid.
  double interpolate(std::span<const double> x) const {
    const std::size_t n = dim();
    std::vector<std::int64_t> base(n);
    std::vector<double> frac(n);
    for (std::size_t a = 0; a < n; ++a) {
      const double t = (x[a] - origin_[a]) / spacing_ - 0.5;
      const double fl = std::floor(t);
      base[a] = static_cast<std::int64_t>(fl);
      frac[a] = t - fl;
    }
    double out = 0.0;
    for (std::uint32_t corner = 0; corner < (1u << n); ++corner) {
      double w = 1.0;
      std::int64_t flat = 0;
      bool inside = true;
      for (std::size_t a = 0; a < n; ++a) {
        const bool hi = (corner >> a) & 1u;
        const std::int64_t c = base[a] + (hi ? 1 : 0);
        if (c < 0 || c >= extents_[a]) {
          inside = false;
          break;
        }
        w *= hi ? frac[a] : 1.0 - frac[a];
        flat = flat * extents_[a] + c;
      }
      if (inside && w != 0.0) out += w * values_[static_cast<std::size_t>(flat)];
    }
    return out;
  }

  // -- dumps ---------------------------------------------------------------

  /// CSV: optional leading '#' comment lines, header rows dim / origin / spacing / extents, then a `values` row and
  /// one value per line in row-major order.
  void write_csv(std::ostream& os) const {
    os << std::setprecision(17);
    os << "dim," << dim() << "\norigin";
    for (double o : origin_) os << ',' << o;
    os << "\nspacing," << spacing_ << "\nextents";
    for (auto e : extents_) os << ',' << e;
    os << "\nvalues\n";
    for (double v : values_) os << v << '\n';
  }

  static GridFunction read_csv(std::istream& is) {
    auto row = [&](const std::string& key) {
      std::string line;
      do {
        if (!std::getline(is, line)) throw std::runtime_error("grid csv: truncated header");
      } while (!line.empty() && line.front() == '#');
      std::stringstream ss(line);
      std::string tok;
      std::getline(ss, tok, ',');
      if (tok != key) throw std::runtime_error("grid csv: expected '" + key + "' row");
      std::vector<std::string> out;
      while (std::getline(ss, tok, ',')) out.push_back(tok);
      return out;
    };
    const auto d = row("dim");
    const std::size_t dim = std::stoul(d.at(0));
    std::vector<double> origin;
    for (const auto& t : row("origin")) origin.push_back(std::stod(t));
    const double h = std::stod(row("spacing").at(0));
    std::vector<std::int64_t> ext;
    for (const auto& t : row("extents")) ext.push_back(std::stoll(t));
    if (origin.size() != dim || ext.size() != dim) throw std::runtime_error("grid csv: dimension mismatch");
    row("values");
    GridFunction g(origin, h, ext);
    std::string line;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::getline(is, line)) throw std::runtime_error("grid csv: truncated values");
      g.values_[i] = std::stod(line);
    }
    return g;
  }

  /// Binary: "SCGF", u32 version, u32 dim, f64 origin[dim], f64 spacing,
  /// i64 extents[dim], f64 values[] (little-endian host layout).
  void write_binary(std::ostream& os) const {
    auto put = [&](const void* p, std::size_t n) { os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); };
    const std::uint32_t version = 1, d = static_cast<std::uint32_t>(dim());
    put("SCGF", 4);
    put(&version, 4);
    put(&d, 4);
    put(origin_.data(), 8 * dim());
    put(&spacing_, 8);
    put(extents_.data(), 8 * dim());
    put(values_.data(), 8 * values_.size());
  }

  static GridFunction read_binary(std::istream& is) {
    auto get = [&](void* p, std::size_t n) {
      if (!is.read(static_cast<char*>(p), static_cast<std::streamsize>(n))) throw std::runtime_error("grid binary: truncated");
    };
    char magic[4];
    get(magic, 4);
    if (std::memcmp(magic, "SCGF", 4) != 0) throw std::runtime_error("grid binary: bad magic");
    std::uint32_t version = 0, d = 0;
    get(&version, 4);
    get(&d, 4);
    if (version != 1) throw std::runtime_error("grid binary: unsupported version");
    std::vector<double> origin(d);
    get(origin.data(), 8 * d);
    double h = 0;
    get(&h, 8);
    std::vector<std::int64_t> ext(d);
    get(ext.data(), 8 * d);
    GridFunction g(origin, h, ext);
    get(g.values_.data(), 8 * g.size());
    return g;
  }

 private:
  std::vector<double> origin_;
  double spacing_ = 1.0;
  std::vector<std::int64_t> extents_;
  std::vector<double> values_;
};

}  // namespace surfconv

#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>

#include "stgia/geo.hpp"

namespace stgia {

using CellId = std::int64_t;

/// Uniform G x G discretization of a bounding box. Cell ids are the class
/// labels of the next-location model; row-major, row 0 at min latitude.
struct GridIndex {
    double lat_min = 0.0, lat_max = 0.0;
    double lon_min = 0.0, lon_max = 0.0;
    int g = 2;  // cells per axis

    CellId cell_count() const { return static_cast<CellId>(g) * g; }
};

inline void validate(const GridIndex& grid) {
    if (grid.g < 2) throw std::invalid_argument("GridIndex: G must be >= 2");
    if (!(grid.lat_min < grid.lat_max) || !(grid.lon_min < grid.lon_max))
        throw std::invalid_argument("GridIndex: bbox is degenerate");
}

/// Row-major cell index of p; points outside the bbox clamp to boundary cells.
inline CellId grid_cell_of(const GeoPoint& p, const GridIndex& grid) {
    const double fr = (p.lat - grid.lat_min) / (grid.lat_max - grid.lat_min);
    const double fc = (p.lon - grid.lon_min) / (grid.lon_max - grid.lon_min);
    const int row = std::clamp(static_cast<int>(std::floor(fr * grid.g)), 0, grid.g - 1);
    const int col = std::clamp(static_cast<int>(std::floor(fc * grid.g)), 0, grid.g - 1);
    return static_cast<CellId>(row) * grid.g + col;
}

/// Centroid of a cell; inverse of grid_cell_of up to one cell diagonal.
inline GeoPoint grid_cell_center(CellId cell, const GridIndex& grid) {
    if (cell < 0 || cell >= grid.cell_count())
        throw std::invalid_argument("grid_cell_center: cell id out of range");
    const int row = static_cast<int>(cell / grid.g);
    const int col = static_cast<int>(cell % grid.g);
    GeoPoint c;
    c.lat = grid.lat_min + (row + 0.5) * (grid.lat_max - grid.lat_min) / grid.g;
    c.lon = grid.lon_min + (col + 0.5) * (grid.lon_max - grid.lon_min) / grid.g;
    return c;
}

/// Maps geo coordinates to the model's normalized input space: planar
/// projection about the bbox center, each axis scaled to [-1, 1] over the
/// bbox. Bijective inside the bbox; values outside simply exceed [-1, 1].
class CoordScaler {
public:
    CoordScaler() = default;
    explicit CoordScaler(const GridIndex& grid) {
        origin_ = GeoPoint{ (grid.lat_min + grid.lat_max) / 2.0,
                            (grid.lon_min + grid.lon_max) / 2.0 };
        const PlanarPoint lo = planar_project(GeoPoint{grid.lat_min, grid.lon_min}, origin_);
        const PlanarPoint hi = planar_project(GeoPoint{grid.lat_max, grid.lon_max}, origin_);
        half_x_ = (hi.x - lo.x) / 2.0;
        half_y_ = (hi.y - lo.y) / 2.0;
    }

    const GeoPoint& origin() const { return origin_; }

    /// Geo -> normalized (nx, ny) with the bbox mapping to [-1, 1]^2.
    void encode(const GeoPoint& p, double& nx, double& ny) const {
        const PlanarPoint q = planar_project(p, origin_);
        nx = q.x / half_x_;
        ny = q.y / half_y_;
    }

    GeoPoint decode(double nx, double ny) const {
        return planar_unproject(PlanarPoint{nx * half_x_, ny * half_y_}, origin_);
    }

    /// Meter length of one normalized unit along x / y (for displacement
    /// tolerances expressed in meters).
    double meters_per_unit_x() const { return half_x_; }
    double meters_per_unit_y() const { return half_y_; }

private:
    GeoPoint origin_;
    double half_x_ = 1.0;
    double half_y_ = 1.0;
};

}  // namespace stgia

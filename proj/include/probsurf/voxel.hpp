#pragma once

#include "probsurf/error.hpp"
#include "probsurf/mesh.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace probsurf {

/**
 * Axis-aligned voxel lattice. Voxel centres sit on integer multiples of the
 * spacing: voxel (ix, iy, iz) has centre (first + (ix, iy, iz)) * spacing. Two
 * grids with the same spacing are therefore always mutually aligned, and
 * translating a mesh by a whole number of voxels shifts its occupancy exactly.
 */
struct GridGeometry
{
    Eigen::Vector3i first = Eigen::Vector3i::Zero();
    Eigen::Vector3i dims = Eigen::Vector3i::Ones();
    double spacing = 1.0;

    std::size_t size() const
    {
        return static_cast<std::size_t>(dims.x()) * static_cast<std::size_t>(dims.y()) *
               static_cast<std::size_t>(dims.z());
    }

    Vec3 origin() const { return first.cast<double>() * spacing; }

    Vec3 center(int ix, int iy, int iz) const
    {
        return Vec3(first.x() + ix, first.y() + iy, first.z() + iz) * spacing;
    }

    bool operator==(const GridGeometry& o) const
    {
        return first == o.first && dims == o.dims && spacing == o.spacing;
    }
};

/// Smallest aligned grid covering the box [lo, hi] plus `padding` voxels on each side.
inline GridGeometry grid_covering(const Vec3& lo, const Vec3& hi, double spacing, int padding)
{
    require(spacing > 0.0 && std::isfinite(spacing), "voxel spacing must be positive");
    require(padding >= 0, "voxel padding must be non-negative");
    GridGeometry g;
    g.spacing = spacing;
    for (int a = 0; a < 3; ++a)
    {
        const int i0 = static_cast<int>(std::floor(lo[a] / spacing)) - padding;
        const int i1 = static_cast<int>(std::ceil(hi[a] / spacing)) + padding;
        g.first[a] = i0;
        g.dims[a] = i1 - i0 + 1;
    }
    return g;
}

inline void mesh_bounds(const Mesh& m, Vec3& lo, Vec3& hi)
{
    require(!m.vertices.empty(), "mesh has no vertices");
    lo = hi = m.vertices.front();
    for (const auto& v : m.vertices)
    {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
}

inline GridGeometry grid_for_mesh(const Mesh& m, double spacing, int padding)
{
    Vec3 lo, hi;
    mesh_bounds(m, lo, hi);
    return grid_covering(lo, hi, spacing, padding);
}

struct VoxelVolume
{
    GridGeometry grid;
    std::vector<std::uint8_t> occupancy; // x fastest, then y, then z

    std::size_t index(int ix, int iy, int iz) const
    {
        return (static_cast<std::size_t>(iz) * grid.dims.y() + iy) * grid.dims.x() + ix;
    }
    bool at(int ix, int iy, int iz) const { return occupancy[index(ix, iy, iz)] != 0; }

    std::size_t count() const
    {
        return static_cast<std::size_t>(std::count(occupancy.begin(), occupancy.end(), std::uint8_t{1}));
    }
    double volume_mm3() const { return static_cast<double>(count()) * std::pow(grid.spacing, 3); }
};

class NonWatertightError : public NumericError
{
public:
    using NumericError::NumericError;
};

namespace detail {

// Orientation of p relative to the directed edge a->b in the xy plane, with ties
// broken by simulating the perturbation p + (e, e^2). The edge is evaluated in a
// canonical endpoint order so that the two faces sharing an edge always agree.
inline int edge_side(const Vec3& a, const Vec3& b, double px, double py)
{
    const bool swap = (b.x() < a.x()) || (b.x() == a.x() && b.y() < a.y());
    const Vec3& p0 = swap ? b : a;
    const Vec3& p1 = swap ? a : b;
    const double e = (p1.x() - p0.x()) * (py - p0.y()) - (p1.y() - p0.y()) * (px - p0.x());
    int s;
    if (e != 0.0)
        s = e > 0.0 ? 1 : -1;
    else if (p1.y() != p0.y())
        s = (p1.y() - p0.y()) > 0.0 ? -1 : 1;
    else
        s = (p1.x() - p0.x()) > 0.0 ? 1 : -1;
    return swap ? -s : s;
}

/// If the vertical line through (px, py) crosses the triangle, returns true and the crossing height.
inline bool vertical_crossing(const Vec3& a, const Vec3& b, const Vec3& c, double px, double py, double& z)
{
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    if (area == 0.0)
        return false;
    const int s0 = edge_side(a, b, px, py);
    const int s1 = edge_side(b, c, px, py);
    const int s2 = edge_side(c, a, px, py);
    if (s0 != s1 || s1 != s2)
        return false;
    // barycentric weights from sub-areas
    const double wa = ((b.x() - px) * (c.y() - py) - (b.y() - py) * (c.x() - px)) / area;
    const double wb = ((c.x() - px) * (a.y() - py) - (c.y() - py) * (a.x() - px)) / area;
    const double wc = 1.0 - wa - wb;
    z = wa * a.z() + wb * b.z() + wc * c.z();
    return true;
}

} // namespace detail

/// Sorted heights at which the vertical line through (x, y) crosses the surface.
inline std::vector<double> column_crossings(const Mesh& m, double x, double y)
{
    std::vector<double> zs;
    for (const auto& f : m.faces)
    {
        const Vec3& a = m.vertices[f[0]];
        const Vec3& b = m.vertices[f[1]];
        const Vec3& c = m.vertices[f[2]];
        if (x < std::min({a.x(), b.x(), c.x()}) || x > std::max({a.x(), b.x(), c.x()}) ||
            y < std::min({a.y(), b.y(), c.y()}) || y > std::max({a.y(), b.y(), c.y()}))
            continue;
        double z;
        if (detail::vertical_crossing(a, b, c, x, y, z))
            zs.push_back(z);
    }
    std::sort(zs.begin(), zs.end());
    return zs;
}

/// Parity inside test for a single point (ray cast along +z).
inline bool point_inside(const Mesh& m, const Vec3& p, double nudge = 1e-9)
{
    const auto zs = column_crossings(m, p.x(), p.y());
    const double pz = p.z() + nudge;
    std::size_t above = 0;
    for (double z : zs)
        above += z > pz ? 1 : 0;
    return (above % 2) == 1;
}

/**
 * Occupancy of `grid`: a voxel is set iff its centre lies strictly inside the
 * closed surface. Inside-ness is decided by crossing parity along each z
 * scanline; a centre lying exactly on a crossing is treated as if raised by
 * 1e-9 * spacing. Throws NonWatertightError on an odd crossing count.
 */
inline VoxelVolume voxelize_on(const Mesh& m, const GridGeometry& grid)
{
    require(grid.spacing > 0.0, "voxel spacing must be positive");
    require(grid.dims.minCoeff() >= 1, "voxel grid dims must be >= 1");
    m.validate();
    VoxelVolume vol;
    vol.grid = grid;
    vol.occupancy.assign(grid.size(), 0);

    const int nx = grid.dims.x(), ny = grid.dims.y(), nz = grid.dims.z();
    const double s = grid.spacing;
    std::vector<std::vector<double>> columns(static_cast<std::size_t>(nx) * ny);

    for (const auto& f : m.faces)
    {
        const Vec3& a = m.vertices[f[0]];
        const Vec3& b = m.vertices[f[1]];
        const Vec3& c = m.vertices[f[2]];
        const double lox = std::min({a.x(), b.x(), c.x()}), hix = std::max({a.x(), b.x(), c.x()});
        const double loy = std::min({a.y(), b.y(), c.y()}), hiy = std::max({a.y(), b.y(), c.y()});
        const int ix0 = std::max(0, static_cast<int>(std::ceil(lox / s)) - grid.first.x());
        const int ix1 = std::min(nx - 1, static_cast<int>(std::floor(hix / s)) - grid.first.x());
        const int iy0 = std::max(0, static_cast<int>(std::ceil(loy / s)) - grid.first.y());
        const int iy1 = std::min(ny - 1, static_cast<int>(std::floor(hiy / s)) - grid.first.y());
        for (int iy = iy0; iy <= iy1; ++iy)
            for (int ix = ix0; ix <= ix1; ++ix)
            {
                const Vec3 ctr = grid.center(ix, iy, 0);
                double z;
                if (detail::vertical_crossing(a, b, c, ctr.x(), ctr.y(), z))
                    columns[static_cast<std::size_t>(iy) * nx + ix].push_back(z);
            }
    }

    const double nudge = 1e-9 * s;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix)
        {
            auto& zs = columns[static_cast<std::size_t>(iy) * nx + ix];
            if (zs.empty())
                continue;
            if (zs.size() % 2 != 0)
                throw NonWatertightError("mesh is not watertight: scanline (ix=" + std::to_string(ix) +
                                         ", iy=" + std::to_string(iy) + ") has " + std::to_string(zs.size()) +
                                         " surface crossings");
            std::sort(zs.begin(), zs.end());
            std::size_t below = 0;
            for (int iz = 0; iz < nz; ++iz)
            {
                const double cz = (grid.first.z() + iz) * s + nudge;
                while (below < zs.size() && zs[below] < cz)
                    ++below;
                if (below % 2 == 1)
                    vol.occupancy[vol.index(ix, iy, iz)] = 1;
            }
        }
    return vol;
}

inline VoxelVolume voxelize(const Mesh& m, double spacing, int padding = 1)
{
    return voxelize_on(m, grid_for_mesh(m, spacing, padding));
}

/// Centres of occupied voxels with at least one unoccupied 6-neighbour (or touching the grid boundary).
inline std::vector<Vec3> extract_surface_voxels(const VoxelVolume& vol)
{
    const auto& d = vol.grid.dims;
    std::vector<Vec3> pts;
    for (int iz = 0; iz < d.z(); ++iz)
        for (int iy = 0; iy < d.y(); ++iy)
            for (int ix = 0; ix < d.x(); ++ix)
            {
                if (!vol.at(ix, iy, iz))
                    continue;
                const bool boundary = ix == 0 || iy == 0 || iz == 0 || ix == d.x() - 1 || iy == d.y() - 1 ||
                                      iz == d.z() - 1;
                if (boundary || !vol.at(ix - 1, iy, iz) || !vol.at(ix + 1, iy, iz) || !vol.at(ix, iy - 1, iz) ||
                    !vol.at(ix, iy + 1, iz) || !vol.at(ix, iy, iz - 1) || !vol.at(ix, iy, iz + 1))
                    pts.push_back(vol.grid.center(ix, iy, iz));
            }
    if (pts.empty())
        throw ConfigError("cannot extract a surface from an empty voxel volume");
    return pts;
}

/// Smallest grid containing both grids; requires identical spacing.
inline GridGeometry union_grid(const GridGeometry& a, const GridGeometry& b)
{
    require(a.spacing == b.spacing, "cannot combine voxel grids with different spacing");
    GridGeometry g;
    g.spacing = a.spacing;
    for (int k = 0; k < 3; ++k)
    {
        g.first[k] = std::min(a.first[k], b.first[k]);
        const int last = std::max(a.first[k] + a.dims[k], b.first[k] + b.dims[k]);
        g.dims[k] = last - g.first[k];
    }
    return g;
}

/// Copies `vol` into the (aligned, enclosing) grid `target`. Exact: no interpolation.
inline VoxelVolume embed(const VoxelVolume& vol, const GridGeometry& target)
{
    require(vol.grid.spacing == target.spacing, "cannot embed into a grid with different spacing");
    const Eigen::Vector3i off = vol.grid.first - target.first;
    require(off.minCoeff() >= 0 && (off + vol.grid.dims - target.dims).maxCoeff() <= 0,
            "target grid does not enclose the volume");
    VoxelVolume out;
    out.grid = target;
    out.occupancy.assign(target.size(), 0);
    for (int iz = 0; iz < vol.grid.dims.z(); ++iz)
        for (int iy = 0; iy < vol.grid.dims.y(); ++iy)
            for (int ix = 0; ix < vol.grid.dims.x(); ++ix)
                out.occupancy[out.index(ix + off.x(), iy + off.y(), iz + off.z())] = vol.occupancy[vol.index(ix, iy, iz)];
    return out;
}

} // namespace probsurf

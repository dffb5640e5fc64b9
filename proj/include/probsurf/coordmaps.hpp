#pragma once

#include "probsurf/binary_io.hpp"
#include "probsurf/error.hpp"
#include "probsurf/mesh.hpp"
#include "probsurf/tensor.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace probsurf {

/**
 * One image plane. Pixel (row i, column j) maps to world millimetres through
 * affine * (j, i, 0, 1): the column index runs along the first affine column,
 * the row index along the second, and the origin is the centre of pixel (0, 0).
 */
struct Slice
{
    int height = 0;
    int width = 0;
    std::vector<float> intensity; // row-major, normalized to [0, 1]
    Eigen::Matrix4d affine = Eigen::Matrix4d::Identity();

    float at(int i, int j) const { return intensity[static_cast<std::size_t>(i) * width + j]; }

    Vec3 pixel_to_world(double i, double j) const
    {
        const Eigen::Vector4d p = affine * Eigen::Vector4d(j, i, 0.0, 1.0);
        return p.head<3>();
    }

    void validate() const
    {
        require(height >= 1 && width >= 1, "slice must have positive size");
        require(intensity.size() == static_cast<std::size_t>(height) * width, "slice intensity size mismatch");
        require(affine.row(3) == Eigen::RowVector4d(0, 0, 0, 1), "slice affine last row must be (0, 0, 0, 1)");
        Eigen::JacobiSVD<Eigen::Matrix3d> svd(affine.topLeftCorner<3, 3>());
        const Eigen::Vector3d sv = svd.singularValues();
        require(sv(1) > 1e-12 * std::max(sv(0), 1e-300), "slice affine does not span a plane");
    }
};

struct SliceStack
{
    std::array<Slice, 3> slices;

    void validate() const
    {
        for (const auto& s : slices)
            s.validate();
        for (const auto& s : slices)
            require(s.height == slices[0].height && s.width == slices[0].width, "slices in a stack must share H and W");
    }
};

/// World coordinates of every pixel centre: tensor [3, H, W] in mm. Exact affine image of integer indices.
inline Tensor coordinate_map(const Slice& s)
{
    Tensor out({3, s.height, s.width});
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    for (int i = 0; i < s.height; ++i)
        for (int j = 0; j < s.width; ++j)
        {
            const Vec3 w = s.pixel_to_world(i, j);
            const std::size_t idx = static_cast<std::size_t>(i) * s.width + j;
            for (int c = 0; c < 3; ++c)
                out[c * plane + idx] = w[c];
        }
    return out;
}

/// Dataset-level affine map of world coordinates into roughly [-1, 1].
struct CoordNormalization
{
    Vec3 centroid = Vec3::Zero();
    double half_extent = 1.0;

    Vec3 normalize(const Vec3& w) const { return (w - centroid) / half_extent; }
    Vec3 denormalize(const Vec3& n) const { return n * half_extent + centroid; }

    void validate() const
    {
        if (!(half_extent > 0.0 && std::isfinite(half_extent) && centroid.allFinite()))
            throw ConfigError("invalid coordinate normalization constants");
    }

    bool operator==(const CoordNormalization&) const = default;
};

/// Centroid and half of the largest axis extent over every pixel centre of every slice.
inline CoordNormalization fit_normalization(const std::vector<SliceStack>& stacks)
{
    require(!stacks.empty(), "cannot fit coordinate normalization on an empty set");
    Vec3 sum = Vec3::Zero();
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    std::size_t n = 0;
    for (const auto& st : stacks)
        for (const auto& s : st.slices)
            for (int i = 0; i < s.height; ++i)
                for (int j = 0; j < s.width; ++j)
                {
                    const Vec3 w = s.pixel_to_world(i, j);
                    sum += w;
                    lo = lo.cwiseMin(w);
                    hi = hi.cwiseMax(w);
                    ++n;
                }
    CoordNormalization norm;
    norm.centroid = sum / static_cast<double>(n);
    norm.half_extent = 0.5 * (hi - lo).maxCoeff();
    if (!(norm.half_extent > 0.0))
        norm.half_extent = 1.0;
    return norm;
}

/**
 * Per-branch network input [C, H, W]: channel 0 is intensity, channels 1..3
 * the normalized world coordinates (omitted when `with_coords` is false).
 */
inline std::array<Tensor, 3> stack_input(const SliceStack& stack, const CoordNormalization& norm, bool with_coords = true)
{
    stack.validate();
    norm.validate();
    std::array<Tensor, 3> out;
    for (int b = 0; b < 3; ++b)
    {
        const Slice& s = stack.slices[b];
        const int channels = with_coords ? 4 : 1;
        const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
        Tensor t({channels, s.height, s.width});
        for (std::size_t p = 0; p < plane; ++p)
            t[p] = s.intensity[p];
        if (with_coords)
        {
            const Tensor cm = coordinate_map(s);
            for (std::size_t p = 0; p < plane; ++p)
            {
                const Vec3 w(cm[p], cm[plane + p], cm[2 * plane + p]);
                const Vec3 nw = norm.normalize(w);
                for (int c = 0; c < 3; ++c)
                    t[(c + 1) * plane + p] = nw[c];
            }
        }
        out[b] = std::move(t);
    }
    return out;
}

// Stack container: "PMSS", u32 version, u32 record count (3); each record is
// u32 H, u32 W, H*W f32 intensities (row-major), 16 f64 affine entries (row-major).
inline constexpr std::uint32_t kStackVersion = 1;

inline void write_stack(std::ostream& os, const SliceStack& st)
{
    st.validate();
    binio::write_magic(os, "PMSS");
    binio::write_le<std::uint32_t>(os, kStackVersion);
    binio::write_le<std::uint32_t>(os, 3);
    for (const auto& s : st.slices)
    {
        binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.height));
        binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.width));
        for (float v : s.intensity)
            binio::write_le<float>(os, v);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                binio::write_le<double>(os, s.affine(r, c));
    }
}

inline SliceStack read_stack(std::istream& is)
{
    binio::expect_magic(is, "PMSS");
    if (binio::read_le<std::uint32_t>(is) != kStackVersion)
        throw IoError("unsupported slice stack version");
    if (binio::read_le<std::uint32_t>(is) != 3)
        throw IoError("slice stack must contain exactly 3 records");
    SliceStack st;
    for (auto& s : st.slices)
    {
        s.height = static_cast<int>(binio::read_le<std::uint32_t>(is));
        s.width = static_cast<int>(binio::read_le<std::uint32_t>(is));
        if (s.height <= 0 || s.width <= 0 || s.height > 65536 || s.width > 65536)
            throw IoError("slice dimensions out of range");
        s.intensity.resize(static_cast<std::size_t>(s.height) * s.width);
        for (float& v : s.intensity)
            v = binio::read_le<float>(is);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                s.affine(r, c) = binio::read_le<double>(is);
    }
    try
    {
        st.validate();
    }
    catch (const ConfigError& e)
    {
        throw IoError(std::string("invalid slice stack: ") + e.what());
    }
    return st;
}

inline void save_stack(const std::string& path, const SliceStack& st)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path + " for writing");
    write_stack(os, st);
    if (!os)
        throw IoError("write failed: " + path);
}

inline SliceStack load_stack(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path);
    return read_stack(is);
}

} // namespace probsurf

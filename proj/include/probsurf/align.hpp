#pragma once

#include "probsurf/error.hpp"
#include "probsurf/mesh.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace probsurf {

/**
 * Canonical pose of a single mesh: centroid at the origin and principal axes of
 * the vertex covariance along x, y, z in descending variance order.
 *
 * Axis signs: the first two axes are oriented so that the third central moment
 * of the vertex coordinates along them is positive (falling back to making the
 * largest-magnitude component positive when that moment vanishes); the third
 * axis completes a right-handed frame. The result is a proper rigid motion that
 * depends only on the shape, so rigidly moved copies align to the same pose.
 */
inline Eigen::Matrix3d principal_frame(const Mesh& m, Vec3& centroid)
{
    require(m.num_vertices() >= 3, "alignment needs at least 3 vertices");
    centroid = m.centroid();
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& v : m.vertices)
    {
        const Vec3 d = v - centroid;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(m.num_vertices());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    const Vec3 evals = es.eigenvalues(); // ascending
    if (!(evals(0) > 1e-12 * std::max(evals(2), 1e-300)))
        throw NumericError("degenerate vertex covariance (rank < 3); cannot align");

    Eigen::Matrix3d axes;
    for (int a = 0; a < 3; ++a)
        axes.col(a) = es.eigenvectors().col(2 - a);

    double scale = std::sqrt(evals(2));
    for (int a = 0; a < 2; ++a)
    {
        double m3 = 0.0;
        for (const auto& v : m.vertices)
            m3 += std::pow(axes.col(a).dot(v - centroid), 3);
        m3 /= static_cast<double>(m.num_vertices());
        bool flip;
        if (std::abs(m3) > 1e-9 * scale * scale * scale)
            flip = m3 < 0.0;
        else
        {
            Eigen::Index idx;
            axes.col(a).cwiseAbs().maxCoeff(&idx);
            flip = axes(idx, a) < 0.0;
        }
        if (flip)
            axes.col(a) = -axes.col(a);
    }
    axes.col(2) = axes.col(0).cross(axes.col(1));
    return axes;
}

inline Mesh align_pca(const Mesh& m)
{
    Vec3 c;
    const Eigen::Matrix3d axes = principal_frame(m, c);
    Mesh out = m;
    for (auto& v : out.vertices)
        v = axes.transpose() * (v - c);
    return out;
}

inline std::vector<Mesh> align_pca(const std::vector<Mesh>& meshes)
{
    require(meshes.size() >= 2, "align_pca needs at least two meshes");
    const std::size_t nv = meshes.front().num_vertices();
    std::vector<Mesh> out;
    out.reserve(meshes.size());
    for (const auto& m : meshes)
    {
        require(m.num_vertices() == nv, "align_pca: meshes differ in vertex count");
        out.push_back(align_pca(m));
    }
    return out;
}

} // namespace probsurf

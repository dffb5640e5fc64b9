#pragma once

#include "probsurf/mesh.hpp"
#include "probsurf/prob_model.hpp"
#include "probsurf/rng.hpp"
#include "probsurf/shape_prior.hpp"
#include "probsurf/synthdata.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace probsurf::testing {

/// Axis-aligned box with outward-facing triangles.
inline Mesh box_mesh(const Vec3& lo, const Vec3& hi)
{
    Mesh m;
    for (int i = 0; i < 8; ++i)
        m.vertices.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
    m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
               {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
    return m;
}

inline Eigen::Matrix3d random_rotation(Rng& rng)
{
    Eigen::Quaterniond q(standard_normal(rng), standard_normal(rng), standard_normal(rng), standard_normal(rng));
    return q.normalized().toRotationMatrix();
}

/// A star-shaped synthetic blob (generator frame, no pose).
inline Mesh blob(std::uint64_t seed, int subdivision = 2)
{
    GeneratorConfig cfg;
    cfg.subdivision = subdivision;
    const ShapeBasis sb = ShapeBasis::make(cfg);
    Rng rng(seed);
    Eigen::VectorXd c(cfg.num_modes);
    for (int j = 0; j < cfg.num_modes; ++j)
        c(j) = 0.5 * cfg.mode_scale(j) * standard_normal(rng);
    return Mesh::from_flat(sb.shape(c), sb.sphere.faces);
}

/// Generalized winding number of a closed oriented surface about `p` (signed solid angle / 4 pi).
inline double winding_number(const Mesh& m, const Vec3& p)
{
    double w = 0.0;
    for (const auto& f : m.faces)
    {
        const Vec3 a = m.vertices[f[0]] - p, b = m.vertices[f[1]] - p, c = m.vertices[f[2]] - p;
        const double la = a.norm(), lb = b.norm(), lc = c.norm();
        const double num = a.dot(b.cross(c));
        const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
        w += 2.0 * std::atan2(num, den);
    }
    return w / (4.0 * std::numbers::pi);
}

inline Eigen::MatrixXd random_orthonormal(Rng& rng, Eigen::Index rows, Eigen::Index cols)
{
    Eigen::MatrixXd a(rows, cols);
    for (Eigen::Index i = 0; i < a.size(); ++i)
        a.data()[i] = standard_normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

/// Prior with random orthonormal basis and descending variances; faces are left empty.
inline ShapePrior random_prior(Rng& rng, Eigen::Index num_vertices, Eigen::Index k)
{
    ShapePrior p;
    p.mean.resize(3 * num_vertices);
    for (Eigen::Index i = 0; i < p.mean.size(); ++i)
        p.mean(i) = 5.0 * standard_normal(rng);
    p.basis = random_orthonormal(rng, 3 * num_vertices, k);
    p.variances.resize(k);
    double v = 4.0 + uniform(rng, 0.0, 4.0);
    for (Eigen::Index j = 0; j < k; ++j)
    {
        p.variances(j) = v;
        v *= uniform(rng, 0.3, 0.9);
    }
    return p;
}

inline LatentGaussian random_latent(Rng& rng, Eigen::Index k, double shift_scale = 1.0)
{
    LatentGaussian g;
    g.mu.resize(k);
    g.chol = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
    {
        g.mu(i) = standard_normal(rng);
        g.chol(i, i) = uniform(rng, 0.3, 1.2);
        for (Eigen::Index j = 0; j < i; ++j)
            g.chol(i, j) = 0.3 * standard_normal(rng);
    }
    g.shift = Vec3(standard_normal(rng), standard_normal(rng), standard_normal(rng)) * shift_scale;
    return g;
}

} // namespace probsurf::testing

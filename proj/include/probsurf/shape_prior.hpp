#pragma once

#include "probsurf/binary_io.hpp"
#include "probsurf/error.hpp"
#include "probsurf/mesh.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace probsurf {

/**
 * Linear PCA shape model over flattened vertex coordinates (x1, y1, z1, x2, ...):
 *
 *     y = U * S^(1/2) * z + mean + shift
 *
 * `basis` (U) has orthonormal columns, `variances` (S) is sorted descending and
 * strictly positive. The face table is carried along so decoded vectors can be
 * turned back into meshes.
 */
struct ShapePrior
{
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis;
    Eigen::VectorXd variances;
    std::vector<Face> faces;

    Eigen::Index dim() const { return mean.size(); }
    Eigen::Index num_components() const { return variances.size(); }
    std::size_t num_vertices() const { return static_cast<std::size_t>(mean.size() / 3); }

    /// U * S^(1/2), the map from standardized latent scores to coordinate offsets.
    Eigen::MatrixXd scaled_basis() const { return basis * variances.cwiseSqrt().asDiagonal(); }

    /// Keeps the leading `k` components.
    ShapePrior truncated(Eigen::Index k) const
    {
        require(k >= 1 && k <= num_components(),
                "requested " + std::to_string(k) + " components but prior has " + std::to_string(num_components()));
        ShapePrior p;
        p.mean = mean;
        p.basis = basis.leftCols(k);
        p.variances = variances.head(k);
        p.faces = faces;
        return p;
    }
};

/// Adds `shift` to every vertex of a flattened coordinate vector.
inline void add_shift(Eigen::VectorXd& y, const Vec3& shift)
{
    for (Eigen::Index i = 0; i < y.size(); i += 3)
        y.segment<3>(i) += shift;
}

/**
 * Fits mean, principal vectors and variances (sample covariance, divisor N-1)
 * from training meshes. The eigenproblem is solved on the N x N Gram matrix,
 * which is cheap when 3V >> N.
 */
inline ShapePrior fit_prior(const std::vector<Mesh>& meshes, Eigen::Index k)
{
    const auto n = static_cast<Eigen::Index>(meshes.size());
    require(k >= 1, "number of components must be >= 1");
    require(n > k, "need more training meshes (" + std::to_string(n) + ") than components (" + std::to_string(k) + ")");
    const std::size_t nv = meshes.front().num_vertices();
    require(nv > 0, "training meshes have no vertices");
    const auto r = static_cast<Eigen::Index>(3 * nv);

    Eigen::MatrixXd x(n, r);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        require(meshes[i].num_vertices() == nv, "training meshes differ in vertex count");
        x.row(i) = meshes[i].flatten().transpose();
    }
    ShapePrior prior;
    prior.mean = x.colwise().mean().transpose();
    prior.faces = meshes.front().faces;
    x.rowwise() -= prior.mean.transpose();

    const Eigen::MatrixXd gram = (x * x.transpose()) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success)
        throw NumericError("eigendecomposition of the Gram matrix failed");

    const Eigen::VectorXd evals = es.eigenvalues().reverse();
    const Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();
    const double tol = std::max(1e-10 * std::max(evals(0), 0.0), 1e-20 * (prior.mean.squaredNorm() + 1.0));
    Eigen::Index rank = 0;
    while (rank < evals.size() && evals(rank) > tol)
        ++rank;
    if (rank < k)
        throw NumericError("training set supports at most " + std::to_string(rank) + " principal components, " +
                           std::to_string(k) + " requested");

    prior.variances = evals.head(k);
    prior.basis.resize(r, k);
    for (Eigen::Index j = 0; j < k; ++j)
    {
        Eigen::VectorXd u = x.transpose() * evecs.col(j);
        u /= std::sqrt(static_cast<double>(n - 1) * evals(j));
        Eigen::Index idx;
        u.cwiseAbs().maxCoeff(&idx);
        if (u(idx) < 0.0)
            u = -u;
        prior.basis.col(j) = u;
    }
    return prior;
}

inline Eigen::VectorXd decode_flat(const ShapePrior& prior, const Eigen::VectorXd& z, const Vec3& shift)
{
    require(z.size() == prior.num_components(), "latent vector has length " + std::to_string(z.size()) +
                                                    ", prior expects " + std::to_string(prior.num_components()));
    Eigen::VectorXd y = prior.basis * (prior.variances.cwiseSqrt().cwiseProduct(z)) + prior.mean;
    add_shift(y, shift);
    return y;
}

inline Mesh decode(const ShapePrior& prior, const Eigen::VectorXd& z, const Vec3& shift = Vec3::Zero())
{
    return Mesh::from_flat(decode_flat(prior, z, shift), prior.faces);
}

inline Eigen::VectorXd encode_flat(const ShapePrior& prior, const Eigen::VectorXd& y)
{
    require(y.size() == prior.dim(), "mesh dimension does not match prior");
    return (prior.basis.transpose() * (y - prior.mean)).cwiseQuotient(prior.variances.cwiseSqrt());
}

/// Standardized scores of the orthogonal projection of `mesh` onto the prior subspace.
inline Eigen::VectorXd encode(const ShapePrior& prior, const Mesh& mesh)
{
    return encode_flat(prior, mesh.flatten());
}

/**
 * RMS per-vertex distance (mm) between `mesh` and its least-squares fit by
 * decode(z, shift) over both z and the global shift, i.e. the distance to the
 * set of shapes the predictor can emit.
 */
inline double manifold_residual(const ShapePrior& prior, const Mesh& mesh)
{
    const Eigen::VectorXd y = mesh.flatten() - prior.mean;
    require(y.size() == prior.dim(), "mesh dimension does not match prior");
    const Eigen::Index k = prior.num_components();
    Eigen::MatrixXd a(y.size(), k + 3);
    a.leftCols(k) = prior.basis;
    a.rightCols(3).setZero();
    for (Eigen::Index i = 0; i < y.size(); i += 3)
        a.block<3, 3>(i, k).setIdentity();
    const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd res = y - a * coef;
    return std::sqrt(res.squaredNorm() / static_cast<double>(prior.num_vertices()));
}

// Binary container: "PMPR", u32 version, u32 layout (0 = xyz interleaved),
// u64 r, u64 k, then mean[r], S[k], U[r*k] row-major as little-endian f64,
// then u64 face count and 3 u32 indices per face.
inline constexpr std::uint32_t kPriorVersion = 1;

inline void write_prior(std::ostream& os, const ShapePrior& p)
{
    binio::write_magic(os, "PMPR");
    binio::write_le<std::uint32_t>(os, kPriorVersion);
    binio::write_le<std::uint32_t>(os, 0);
    binio::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(p.dim()));
    binio::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(p.num_components()));
    for (Eigen::Index i = 0; i < p.dim(); ++i)
        binio::write_le<double>(os, p.mean(i));
    for (Eigen::Index j = 0; j < p.num_components(); ++j)
        binio::write_le<double>(os, p.variances(j));
    for (Eigen::Index i = 0; i < p.dim(); ++i)
        for (Eigen::Index j = 0; j < p.num_components(); ++j)
            binio::write_le<double>(os, p.basis(i, j));
    binio::write_le<std::uint64_t>(os, p.faces.size());
    for (const auto& f : p.faces)
        for (int idx : f)
            binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(idx));
}

inline ShapePrior read_prior(std::istream& is)
{
    binio::expect_magic(is, "PMPR");
    if (binio::read_le<std::uint32_t>(is) != kPriorVersion)
        throw IoError("unsupported prior version");
    if (binio::read_le<std::uint32_t>(is) != 0)
        throw IoError("unsupported vertex layout in prior");
    const auto r = binio::read_le<std::uint64_t>(is);
    const auto k = binio::read_le<std::uint64_t>(is);
    if (r == 0 || r % 3 != 0 || k == 0 || r > (1ull << 28) || k > r)
        throw IoError("corrupt prior header");
    ShapePrior p;
    p.mean.resize(static_cast<Eigen::Index>(r));
    p.variances.resize(static_cast<Eigen::Index>(k));
    p.basis.resize(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < p.mean.size(); ++i)
        p.mean(i) = binio::read_le<double>(is);
    for (Eigen::Index j = 0; j < p.variances.size(); ++j)
        p.variances(j) = binio::read_le<double>(is);
    for (Eigen::Index i = 0; i < p.basis.rows(); ++i)
        for (Eigen::Index j = 0; j < p.basis.cols(); ++j)
            p.basis(i, j) = binio::read_le<double>(is);
    const auto nf = binio::read_le<std::uint64_t>(is);
    if (nf > (1ull << 28))
        throw IoError("corrupt prior face count");
    p.faces.resize(nf);
    for (auto& f : p.faces)
        for (int& idx : f)
        {
            idx = static_cast<int>(binio::read_le<std::uint32_t>(is));
            if (static_cast<std::uint64_t>(idx) >= r / 3)
                throw IoError("prior face index out of range");
        }
    return p;
}

inline void save_prior(const std::string& path, const ShapePrior& p)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path + " for writing");
    write_prior(os, p);
    if (!os)
        throw IoError("write failed: " + path);
}

inline ShapePrior load_prior(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path);
    return read_prior(is);
}

} // namespace probsurf

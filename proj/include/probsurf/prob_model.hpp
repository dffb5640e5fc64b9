#pragma once

#include "probsurf/error.hpp"
#include "probsurf/mesh.hpp"
#include "probsurf/rng.hpp"
#include "probsurf/shape_prior.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace probsurf {

/// Encoder output: p(z | x) = N(mu, chol * chol^T), plus a global shift in world mm.
struct LatentGaussian
{
    Eigen::VectorXd mu;
    Eigen::MatrixXd chol; // lower triangular, positive diagonal
    Vec3 shift = Vec3::Zero();

    Eigen::Index dim() const { return mu.size(); }

    Eigen::MatrixXd covariance() const { return chol * chol.transpose(); }

    void validate() const
    {
        const Eigen::Index k = mu.size();
        require(k >= 1, "latent dimension must be >= 1");
        require(chol.rows() == k && chol.cols() == k, "Cholesky factor must be k x k");
        for (Eigen::Index i = 0; i < k; ++i)
        {
            if (!(chol(i, i) > 0.0))
                throw NumericError("Cholesky factor has non-positive diagonal entry " + std::to_string(i));
            for (Eigen::Index j = i + 1; j < k; ++j)
                require(chol(i, j) == 0.0, "Cholesky factor must be lower triangular");
        }
    }

    static LatentGaussian standard(Eigen::Index k)
    {
        return {Eigen::VectorXd::Zero(k), Eigen::MatrixXd::Identity(k, k), Vec3::Zero()};
    }
};

struct ModelConfig
{
    double noise_var = 5e-2;      // sigma^2, mm^2
    int num_samples = 1;          // L, Monte-Carlo samples per item
    bool normalize_mixture = true; // 1/N weight on the batch mixture in the KLD term

    void validate() const
    {
        require(noise_var > 0.0 && std::isfinite(noise_var), "noise variance must be > 0");
        require(num_samples >= 1, "number of Monte-Carlo samples must be >= 1");
    }
};

/**
 * Marginal p(y | x) = N(mean, noise_var * I + factor * factor^T). The covariance
 * is only ever held in this factored form; per-vertex 3x3 blocks are cheap to
 * extract from consecutive row triples of `factor`.
 */
struct PosteriorSurface
{
    Mesh mean_mesh;
    Eigen::MatrixXd factor; // 3V x k, U * S^(1/2) * chol
    double noise_var = 0.0;

    std::size_t num_vertices() const { return mean_mesh.num_vertices(); }

    Eigen::Matrix3d vertex_covariance(std::size_t i) const
    {
        const auto rows = factor.middleRows(static_cast<Eigen::Index>(3 * i), 3);
        return noise_var * Eigen::Matrix3d::Identity() + rows * rows.transpose();
    }
};

inline PosteriorSurface posterior(const ShapePrior& prior, const LatentGaussian& lat, const ModelConfig& cfg)
{
    cfg.validate();
    lat.validate();
    require(lat.dim() == prior.num_components(), "latent dimension does not match prior");
    PosteriorSurface post;
    const Eigen::MatrixXd b = prior.scaled_basis();
    post.mean_mesh = Mesh::from_flat(decode_flat(prior, lat.mu, lat.shift), prior.faces);
    post.factor = b * lat.chol.triangularView<Eigen::Lower>();
    post.noise_var = cfg.noise_var;
    return post;
}

/// y = mean + factor * eps + sigma * eta, eps ~ N(0, I_k), eta ~ N(0, I_3V).
inline Mesh sample_surface(const PosteriorSurface& post, std::uint64_t seed)
{
    Rng rng(seed);
    const Eigen::Index k = post.factor.cols();
    Eigen::VectorXd eps(k);
    for (Eigen::Index j = 0; j < k; ++j)
        eps(j) = standard_normal(rng);
    Eigen::VectorXd y = post.mean_mesh.flatten() + post.factor * eps;
    const double sigma = std::sqrt(post.noise_var);
    for (Eigen::Index i = 0; i < y.size(); ++i)
        y(i) += sigma * standard_normal(rng);
    return Mesh::from_flat(y, post.mean_mesh.faces);
}

namespace detail {

/// log det of a symmetric positive definite 3x3 matrix via its Cholesky factor.
inline double logdet_spd3(const Eigen::Matrix3d& a)
{
    const double l00 = std::sqrt(a(0, 0));
    const double l10 = a(1, 0) / l00;
    const double l20 = a(2, 0) / l00;
    const double d11 = a(1, 1) - l10 * l10;
    const double l11 = std::sqrt(d11);
    const double l21 = (a(2, 1) - l20 * l10) / l11;
    const double d22 = a(2, 2) - l20 * l20 - l21 * l21;
    const double l22 = std::sqrt(d22);
    return 2.0 * (std::log(l00) + std::log(l11) + std::log(l22));
}

} // namespace detail

struct VertexUncertainty
{
    Eigen::VectorXd log_det;  // per vertex, log det Sigma_i
    Eigen::VectorXd rescaled; // (u - min) / (max - min); all zeros when constant
};

inline Eigen::VectorXd rescale_unit(const Eigen::VectorXd& u)
{
    if (u.size() == 0)
        return u;
    const double lo = u.minCoeff(), hi = u.maxCoeff();
    if (!(hi > lo))
        return Eigen::VectorXd::Zero(u.size());
    return (u.array() - lo) / (hi - lo);
}

inline VertexUncertainty vertex_uncertainty(const PosteriorSurface& post)
{
    VertexUncertainty out;
    out.log_det.resize(static_cast<Eigen::Index>(post.num_vertices()));
    for (std::size_t i = 0; i < post.num_vertices(); ++i)
    {
        const double ld = detail::logdet_spd3(post.vertex_covariance(i));
        if (!std::isfinite(ld))
            throw NumericError("non-finite log-determinant at vertex " + std::to_string(i));
        out.log_det(static_cast<Eigen::Index>(i)) = ld;
    }
    out.rescaled = rescale_unit(out.log_det);
    return out;
}

/**
 * Exact ln p(y | x) under the closed-form marginal, using a dense covariance.
 * Only meant as a reference on small instances (3V <= 600).
 */
inline double marginal_loglik_oracle(const ShapePrior& prior, const LatentGaussian& lat, const ModelConfig& cfg,
                                     const Mesh& y)
{
    require(prior.dim() <= 600, "dense marginal oracle is limited to 3V <= 600");
    const PosteriorSurface post = posterior(prior, lat, cfg);
    const Eigen::Index r = prior.dim();
    Eigen::MatrixXd cov = post.factor * post.factor.transpose();
    cov.diagonal().array() += cfg.noise_var;
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw NumericError("marginal covariance is not positive definite");
    const Eigen::VectorXd d = y.flatten() - post.mean_mesh.flatten();
    const Eigen::VectorXd w = llt.matrixL().solve(d);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(r) * std::log(2.0 * std::numbers::pi) + logdet + w.squaredNorm());
}

} // namespace probsurf

#pragma once

#include "probsurf/error.hpp"
#include "probsurf/prob_model.hpp"
#include "probsurf/rng.hpp"
#include "probsurf/shape_prior.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace probsurf {

/// ln N(y | a, sigma2 * I) for an r-dimensional y.
inline double gaussian_logpdf_iso(const Eigen::VectorXd& y, const Eigen::VectorXd& a, double sigma2)
{
    require(sigma2 > 0.0, "variance must be positive");
    require(y.size() == a.size(), "dimension mismatch in gaussian_logpdf_iso");
    const auto r = static_cast<double>(y.size());
    return -0.5 * (r * std::log(2.0 * std::numbers::pi) + r * std::log(sigma2) + (y - a).squaredNorm() / sigma2);
}

/// Gradient with respect to each field of a LatentGaussian; `chol` is zero above the diagonal.
struct LatentGrad
{
    Eigen::VectorXd mu;
    Eigen::MatrixXd chol;
    Vec3 shift = Vec3::Zero();

    static LatentGrad zero(Eigen::Index k)
    {
        return {Eigen::VectorXd::Zero(k), Eigen::MatrixXd::Zero(k, k), Vec3::Zero()};
    }
};

struct LossBreakdown
{
    double total = 0.0;
    double data_term = 0.0;
    double reg_term = 0.0;
    std::vector<double> per_sample_logliks; // n-major: item n, sample l at n * L + l

    bool operator==(const LossBreakdown&) const = default;
};

/// Latent draws z_{n,l} = mu_n + chol_n * eps_{n,l}; both kept for reuse and for gradients.
struct LatentSamples
{
    std::vector<std::vector<Eigen::VectorXd>> eps;
    std::vector<std::vector<Eigen::VectorXd>> z;
};

/// Item n draws from its own stream seeded by mix_seed(seed, n).
inline LatentSamples draw_latent_samples(const std::vector<LatentGaussian>& lats, int num_samples, std::uint64_t seed)
{
    LatentSamples s;
    s.eps.resize(lats.size());
    s.z.resize(lats.size());
    for (std::size_t n = 0; n < lats.size(); ++n)
    {
        Rng rng(mix_seed(seed, n));
        const Eigen::Index k = lats[n].dim();
        for (int l = 0; l < num_samples; ++l)
        {
            Eigen::VectorXd e(k);
            for (Eigen::Index j = 0; j < k; ++j)
                e(j) = standard_normal(rng);
            s.z[n].push_back(lats[n].mu + lats[n].chol.triangularView<Eigen::Lower>() * e);
            s.eps[n].push_back(std::move(e));
        }
    }
    return s;
}

struct DataTerm
{
    double value = 0.0;
    std::vector<double> per_sample;
    LatentSamples samples;
};

namespace detail {

inline void check_batch(const ShapePrior& prior, const std::vector<LatentGaussian>& lats, const std::vector<Mesh>& targets)
{
    require(!lats.empty(), "batch is empty");
    require(lats.size() == targets.size(), "batch has " + std::to_string(lats.size()) + " latents but " +
                                               std::to_string(targets.size()) + " targets");
    for (std::size_t n = 0; n < lats.size(); ++n)
    {
        lats[n].validate();
        require(lats[n].dim() == prior.num_components(), "latent dimension does not match prior");
        require(static_cast<Eigen::Index>(3 * targets[n].num_vertices()) == prior.dim(),
                "target mesh " + std::to_string(n) + " does not match prior dimension");
    }
}

// Data term and, optionally, d(data term)/d(latent fields) accumulated into grads with weight `scale`.
inline DataTerm data_term_impl(const ShapePrior& prior, const std::vector<LatentGaussian>& lats,
                               const std::vector<Mesh>& targets, const ModelConfig& cfg, std::uint64_t seed,
                               std::vector<LatentGrad>* grads, double scale)
{
    cfg.validate();
    check_batch(prior, lats, targets);
    DataTerm out;
    out.samples = draw_latent_samples(lats, cfg.num_samples, seed);
    const Eigen::MatrixXd b = prior.scaled_basis();
    const double inv_l = 1.0 / static_cast<double>(cfg.num_samples);
    for (std::size_t n = 0; n < lats.size(); ++n)
    {
        const Eigen::VectorXd y = targets[n].flatten();
        double item = 0.0;
        for (int l = 0; l < cfg.num_samples; ++l)
        {
            Eigen::VectorXd a = b * out.samples.z[n][l] + prior.mean;
            add_shift(a, lats[n].shift);
            const double ll = gaussian_logpdf_iso(y, a, cfg.noise_var);
            out.per_sample.push_back(ll);
            item += ll;
            if (grads)
            {
                const Eigen::VectorXd e = (y - a) / cfg.noise_var;
                const double w = scale * inv_l;
                const Eigen::VectorXd gz = w * (b.transpose() * e);
                auto& g = (*grads)[n];
                g.mu += gz;
                g.chol += (gz * out.samples.eps[n][l].transpose()).triangularView<Eigen::Lower>().toDenseMatrix();
                for (Eigen::Index i = 0; i < e.size(); i += 3)
                    g.shift += w * e.segment<3>(i);
            }
        }
        out.value += item * inv_l;
    }
    return out;
}

inline double log_sum_exp(const Eigen::VectorXd& v)
{
    const double m = v.maxCoeff();
    if (!std::isfinite(m))
        return m;
    return m + std::log((v.array() - m).exp().sum());
}

inline double kld_impl(const std::vector<LatentGaussian>& lats, const LatentSamples& samples, bool normalize,
                       std::vector<LatentGrad>* grads, double scale)
{
    require(!lats.empty(), "batch is empty");
    require(samples.z.size() == lats.size(), "one sample set per batch element is required");
    const Eigen::Index k = lats.front().dim();
    const auto n_comp = static_cast<Eigen::Index>(lats.size());
    for (const auto& lat : lats)
    {
        lat.validate();
        require(lat.dim() == k, "latent dimensions differ across the batch");
    }
    const double log2pi = std::log(2.0 * std::numbers::pi);
    Eigen::VectorXd log_diag_sum(n_comp);
    for (Eigen::Index m = 0; m < n_comp; ++m)
        log_diag_sum(m) = lats[m].chol.diagonal().array().log().sum();

    std::size_t count = 0;
    for (const auto& zs : samples.z)
        count += zs.size();
    require(count > 0, "no latent samples supplied");
    const double w = 1.0 / static_cast<double>(count);
    const double log_norm = normalize ? std::log(static_cast<double>(n_comp)) : 0.0;

    double total = 0.0;
    Eigen::VectorXd lg(n_comp);
    std::vector<Eigen::VectorXd> ws(n_comp), qs(n_comp);
    for (std::size_t n = 0; n < samples.z.size(); ++n)
        for (std::size_t l = 0; l < samples.z[n].size(); ++l)
        {
            const Eigen::VectorXd& z = samples.z[n][l];
            require(z.size() == k, "latent sample has wrong dimension");
            for (Eigen::Index m = 0; m < n_comp; ++m)
            {
                const auto chol = lats[m].chol.triangularView<Eigen::Lower>();
                ws[m] = chol.solve(z - lats[m].mu);
                lg(m) = -0.5 * static_cast<double>(k) * log2pi - log_diag_sum(m) - 0.5 * ws[m].squaredNorm();
            }
            const double lse = log_sum_exp(lg);
            const double lnp = lse - log_norm;
            const double lnq = -0.5 * (static_cast<double>(k) * log2pi + z.squaredNorm());
            total += lnp - lnq;

            if (grads)
            {
                const double sw = scale * w;
                Eigen::VectorXd gz = z; // from -lnq
                for (Eigen::Index m = 0; m < n_comp; ++m)
                {
                    const double gamma = std::exp(lg(m) - lse);
                    if (gamma == 0.0)
                        continue;
                    const auto chol = lats[m].chol.triangularView<Eigen::Lower>();
                    qs[m] = chol.transpose().solve(ws[m]);
                    gz -= gamma * qs[m];
                    auto& g = (*grads)[m];
                    g.mu += sw * gamma * qs[m];
                    Eigen::MatrixXd gc = (qs[m] * ws[m].transpose()).triangularView<Eigen::Lower>();
                    gc.diagonal() -= lats[m].chol.diagonal().cwiseInverse();
                    g.chol += sw * gamma * gc;
                }
                gz *= sw;
                auto& g = (*grads)[n];
                g.mu += gz;
                g.chol += (gz * samples.eps[n][l].transpose()).triangularView<Eigen::Lower>().toDenseMatrix();
            }
        }
    return total * w;
}

} // namespace detail

/**
 * Monte-Carlo lower bound sum_n (1/L) sum_l ln p(y_n | z_{n,l}, x_n), with the
 * reparametrized draws z = mu + chol * eps. Returns the draws for reuse by the
 * regularizer.
 */
inline DataTerm data_term(const ShapePrior& prior, const std::vector<LatentGaussian>& lats,
                          const std::vector<Mesh>& targets, const ModelConfig& cfg, std::uint64_t seed)
{
    return detail::data_term_impl(prior, lats, targets, cfg, seed, nullptr, 0.0);
}

/**
 * KLD(mixture of the batch posteriors || N(0, I)) estimated on the supplied
 * draws: mean over all draws of ln mix(z) - ln N(z | 0, I). The mixture carries
 * weight 1/N unless `normalize` is false (which adds ln N to every term).
 */
inline double kld_estimate(const std::vector<LatentGaussian>& lats, const LatentSamples& samples, bool normalize = true)
{
    return detail::kld_impl(lats, samples, normalize, nullptr, 0.0);
}

/**
 * total = lambda * reg_term - data_term, both terms evaluated on one shared set
 * of latent draws. When `grads` is given it receives d(total)/d(latent fields)
 * for every batch element.
 */
inline LossBreakdown total_loss(const ShapePrior& prior, const std::vector<LatentGaussian>& lats,
                                const std::vector<Mesh>& targets, const ModelConfig& cfg, double lambda,
                                std::uint64_t seed, std::vector<LatentGrad>* grads = nullptr)
{
    require(lambda > 0.0 && std::isfinite(lambda), "regularisation weight lambda must be > 0");
    if (grads)
    {
        grads->clear();
        for (const auto& lat : lats)
            grads->push_back(LatentGrad::zero(lat.dim()));
    }
    DataTerm dt = detail::data_term_impl(prior, lats, targets, cfg, seed, grads, -1.0);
    if (!std::isfinite(dt.value))
        throw NumericError("non-finite data term");
    const double reg = detail::kld_impl(lats, dt.samples, cfg.normalize_mixture, grads, lambda);
    if (!std::isfinite(reg))
        throw NumericError("non-finite KLD regularisation term");
    LossBreakdown out;
    out.data_term = dt.value;
    out.reg_term = reg;
    out.total = lambda * reg - dt.value;
    out.per_sample_logliks = std::move(dt.per_sample);
    if (!std::isfinite(out.total))
        throw NumericError("non-finite total loss");
    return out;
}

/**
 * Squared-error objective of the deterministic baseline: the encoder's mean is
 * regressed onto encode(target) and its shift onto the mean translation left
 * over after projection, both in units where the shift is divided by
 * `shift_scale`. Chol entries receive no gradient.
 */
inline double deterministic_loss(const ShapePrior& prior, const std::vector<LatentGaussian>& lats,
                                 const std::vector<Mesh>& targets, double shift_scale,
                                 std::vector<LatentGrad>* grads = nullptr)
{
    require(shift_scale > 0.0, "shift scale must be positive");
    require(!lats.empty() && lats.size() == targets.size(), "batch size mismatch");
    if (grads)
    {
        grads->clear();
        for (const auto& lat : lats)
            grads->push_back(LatentGrad::zero(lat.dim()));
    }
    double total = 0.0;
    for (std::size_t n = 0; n < lats.size(); ++n)
    {
        const Eigen::VectorXd y = targets[n].flatten();
        const Eigen::VectorXd zt = encode_flat(prior, y);
        const Eigen::VectorXd res = y - decode_flat(prior, zt, Vec3::Zero());
        Vec3 st = Vec3::Zero();
        for (Eigen::Index i = 0; i < res.size(); i += 3)
            st += res.segment<3>(i);
        st /= static_cast<double>(prior.num_vertices());
        const Eigen::VectorXd dz = lats[n].mu - zt;
        const Vec3 ds = (lats[n].shift - st) / shift_scale;
        total += dz.squaredNorm() + ds.squaredNorm();
        if (grads)
        {
            (*grads)[n].mu = 2.0 * dz;
            (*grads)[n].shift = 2.0 * ds / shift_scale;
        }
    }
    if (!std::isfinite(total))
        throw NumericError("non-finite deterministic loss");
    return total;
}

} // namespace probsurf

#pragma once

#include "probsurf/binary_io.hpp"
#include "probsurf/coordmaps.hpp"
#include "probsurf/error.hpp"
#include "probsurf/loss.hpp"
#include "probsurf/prob_model.hpp"
#include "probsurf/rng.hpp"
#include "probsurf/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace probsurf {

/**
 * Architecture of the three-branch encoder. Each branch is a chain of 3x3
 * "same" convolutions (stride 1) followed by ReLU, with a 2x2 stride-2 max pool
 * after the layers listed in `pool_after` (1-based). The flattened branch
 * outputs are concatenated and passed through dense+ReLU and a final dense head
 * of size k + k(k+1)/2 + 3.
 */
struct EncoderSpec
{
    int height = 32;
    int width = 32;
    int in_channels = 4; // intensity + 3 coordinate channels; 1 without coordinate maps
    int latent_dim = 8;
    std::vector<int> channels{8, 8, 16, 16, 16, 32, 32, 32, 32};
    std::vector<int> pool_after{3, 6, 9};
    int hidden = 64;

    int head_size() const { return latent_dim + latent_dim * (latent_dim + 1) / 2 + 3; }
    int num_conv() const { return static_cast<int>(channels.size()); }
    bool pools_after(int layer) const
    {
        return std::find(pool_after.begin(), pool_after.end(), layer + 1) != pool_after.end();
    }

    int branch_features() const
    {
        int h = height, w = width;
        for (int l = 0; l < num_conv(); ++l)
            if (pools_after(l))
                h /= 2, w /= 2;
        return channels.back() * h * w;
    }

    void validate() const
    {
        require(height >= 1 && width >= 1, "encoder input size must be positive");
        require(in_channels >= 1, "encoder needs at least one input channel");
        require(latent_dim >= 1, "latent dimension must be >= 1");
        require(!channels.empty(), "encoder needs at least one convolution layer");
        require(hidden >= 1, "hidden width must be >= 1");
        for (int c : channels)
            require(c >= 1, "channel counts must be >= 1");
        int h = height, w = width;
        for (int l = 0; l < num_conv(); ++l)
            if (pools_after(l))
            {
                require(h % 2 == 0 && w % 2 == 0, "input size must be divisible by 2 at every pooling stage");
                h /= 2, w /= 2;
            }
        for (int p : pool_after)
            require(p >= 1 && p <= num_conv(), "pooling position out of range");
    }

    bool operator==(const EncoderSpec&) const = default;
};

/// Named parameter tensors in a fixed order (branch convs, dense1, dense2; weight before bias).
struct EncoderParams
{
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    std::size_t count() const
    {
        std::size_t n = 0;
        for (const auto& t : tensors)
            n += t.size();
        return n;
    }

    EncoderParams zeros_like() const
    {
        EncoderParams g;
        g.names = names;
        for (const auto& t : tensors)
            g.tensors.emplace_back(t.shape, 0.0);
        return g;
    }

    void add(const EncoderParams& o)
    {
        for (std::size_t i = 0; i < tensors.size(); ++i)
            for (std::size_t j = 0; j < tensors[i].size(); ++j)
                tensors[i][j] += o.tensors[i][j];
    }

    bool operator==(const EncoderParams&) const = default;
};

namespace detail {

inline std::size_t conv_index(int branch, int layer, int num_conv) { return 2 * (branch * num_conv + layer); }

} // namespace detail

inline constexpr double kInitCholDiag = 0.1;

inline EncoderParams init_params(const EncoderSpec& spec, std::uint64_t seed)
{
    spec.validate();
    Rng rng(seed);
    EncoderParams p;
    auto add = [&](const std::string& name, std::vector<int> shape, int fan_in, double gain) {
        Tensor w(shape);
        const double bound = gain * std::sqrt(3.0 / fan_in);
        for (auto& v : w.data)
            v = uniform(rng, -bound, bound);
        p.names.push_back(name + ".weight");
        p.tensors.push_back(std::move(w));
        p.names.push_back(name + ".bias");
        p.tensors.emplace_back(std::vector<int>{shape[0]}, 0.0);
    };
    for (int b = 0; b < 3; ++b)
    {
        int cin = spec.in_channels;
        for (int l = 0; l < spec.num_conv(); ++l)
        {
            const int cout = spec.channels[l];
            add("branch" + std::to_string(b) + ".conv" + std::to_string(l), {cout, cin, 3, 3}, cin * 9,
                std::sqrt(2.0));
            cin = cout;
        }
    }
    const int feat = 3 * spec.branch_features();
    add("dense1", {spec.hidden, feat}, feat, std::sqrt(2.0));
    add("dense2", {spec.head_size(), spec.hidden}, spec.hidden, 0.1);
    // Start with a narrow posterior so early single-draw loss estimates are not dominated by sampling noise.
    const int k = spec.latent_dim;
    const double diag_bias = std::log(std::expm1(kInitCholDiag));
    for (int i = 0; i < k; ++i)
        p.tensors.back()[static_cast<std::size_t>(k + k * (k - 1) / 2 + i)] = diag_bias;
    return p;
}

/// Activations kept from a forward pass for the backward pass.
struct ForwardCache
{
    struct Branch
    {
        std::vector<Tensor> inputs;              // input of conv layer l
        std::vector<Tensor> pre;                 // conv output before ReLU
        std::vector<std::vector<int>> argmax;    // pool routing (flat index into the pooled-from tensor)
        std::vector<std::vector<int>> pool_dims; // {C, H, W} of the tensor that was pooled
        Tensor output;                           // branch output fed to the dense layers
    };
    std::array<Branch, 3> branches;
    std::vector<double> features;
    std::vector<double> hidden_pre;
    std::vector<double> hidden;
    std::vector<double> head;
};

namespace detail {

inline void conv3x3_forward(const Tensor& in, const Tensor& w, const Tensor& b, Tensor& out)
{
    const int cin = in.shape[0], h = in.shape[1], wd = in.shape[2];
    const int cout = w.shape[0];
    out = Tensor({cout, h, wd});
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    for (int co = 0; co < cout; ++co)
    {
        double* o = out.ptr() + co * plane;
        std::fill(o, o + plane, b[co]);
        for (int ci = 0; ci < cin; ++ci)
        {
            const double* src = in.ptr() + ci * plane;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx)
                {
                    const double wt = w[((static_cast<std::size_t>(co) * cin + ci) * 3 + ky) * 3 + kx];
                    const int dy = ky - 1, dx = kx - 1;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
                    for (int y = y0; y < y1; ++y)
                    {
                        double* orow = o + static_cast<std::size_t>(y) * wd;
                        const double* irow = src + static_cast<std::size_t>(y + dy) * wd + dx;
                        for (int x = x0; x < x1; ++x)
                            orow[x] += wt * irow[x];
                    }
                }
        }
    }
}

inline void conv3x3_backward(const Tensor& in, const Tensor& w, const Tensor& gout, Tensor& gw, Tensor& gb,
                             Tensor* gin)
{
    const int cin = in.shape[0], h = in.shape[1], wd = in.shape[2];
    const int cout = w.shape[0];
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    if (gin)
        *gin = Tensor(in.shape);
    for (int co = 0; co < cout; ++co)
    {
        const double* g = gout.ptr() + co * plane;
        double sb = 0.0;
        for (std::size_t p = 0; p < plane; ++p)
            sb += g[p];
        gb[co] += sb;
        for (int ci = 0; ci < cin; ++ci)
        {
            const double* src = in.ptr() + ci * plane;
            double* dst = gin ? gin->ptr() + ci * plane : nullptr;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx)
                {
                    const std::size_t widx = ((static_cast<std::size_t>(co) * cin + ci) * 3 + ky) * 3 + kx;
                    const double wt = w[widx];
                    const int dy = ky - 1, dx = kx - 1;
                    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y)
                    {
                        const double* grow = g + static_cast<std::size_t>(y) * wd;
                        const double* irow = src + static_cast<std::size_t>(y + dy) * wd + dx;
                        for (int x = x0; x < x1; ++x)
                            acc += grow[x] * irow[x];
                        if (dst)
                        {
                            double* drow = dst + static_cast<std::size_t>(y + dy) * wd + dx;
                            for (int x = x0; x < x1; ++x)
                                drow[x] += wt * grow[x];
                        }
                    }
                    gw[widx] += acc;
                }
        }
    }
}

// 2x2 stride-2 max pool; ties go to the first element in row-major window order.
inline Tensor maxpool2_forward(const Tensor& in, std::vector<int>& argmax)
{
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int ho = h / 2, wo = w / 2;
    Tensor out({c, ho, wo});
    argmax.assign(out.size(), 0);
    std::size_t o = 0;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < ho; ++y)
            for (int x = 0; x < wo; ++x, ++o)
            {
                int best = (ch * h + 2 * y) * w + 2 * x;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                    {
                        const int idx = (ch * h + 2 * y + dy) * w + 2 * x + dx;
                        if (in[idx] > in[best])
                            best = idx;
                    }
                out[o] = in[best];
                argmax[o] = best;
            }
    return out;
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void check_finite(const Tensor& t, const std::string& layer)
{
    for (double v : t.data)
        if (!std::isfinite(v))
            throw NumericError("non-finite activation in layer " + layer);
}

} // namespace detail

/// Floor added to the softplus-parametrized Cholesky diagonal.
inline constexpr double kCholDiagFloor = 1e-6;

/**
 * Encoder plus the settings needed to interpret its input and output: the
 * coordinate normalization used to build inputs and to scale the shift head.
 */
struct Encoder
{
    EncoderSpec spec;
    CoordNormalization norm;
    EncoderParams params;
    std::string mode = "prob"; // "prob" or "det"

    bool uses_coords() const { return spec.in_channels == 4; }

    std::array<Tensor, 3> prepare(const SliceStack& stack) const { return stack_input(stack, norm, uses_coords()); }

    /// Decodes the raw head vector into a LatentGaussian.
    LatentGaussian interpret_head(const std::vector<double>& head) const
    {
        const int k = spec.latent_dim;
        LatentGaussian lat;
        lat.mu.resize(k);
        lat.chol = Eigen::MatrixXd::Zero(k, k);
        int o = 0;
        for (int i = 0; i < k; ++i)
            lat.mu(i) = head[o++];
        for (int i = 1; i < k; ++i)
            for (int j = 0; j < i; ++j)
                lat.chol(i, j) = head[o++];
        for (int i = 0; i < k; ++i)
            lat.chol(i, i) = detail::softplus(head[o++]) + kCholDiagFloor;
        for (int c = 0; c < 3; ++c)
            lat.shift(c) = head[o++] * norm.half_extent;
        return lat;
    }

    LatentGaussian forward(const std::array<Tensor, 3>& input, ForwardCache* cache = nullptr) const
    {
        ForwardCache local;
        ForwardCache& fc = cache ? *cache : local;
        const int nc = spec.num_conv();
        fc.features.clear();
        for (int b = 0; b < 3; ++b)
        {
            const Tensor& x = input[b];
            if (x.shape != std::vector<int>{spec.in_channels, spec.height, spec.width})
                throw ConfigError("branch " + std::to_string(b) + " input has shape " + x.shape_string() +
                                  ", encoder expects [" + std::to_string(spec.in_channels) + "," +
                                  std::to_string(spec.height) + "," + std::to_string(spec.width) + "]");
            auto& br = fc.branches[b];
            br.inputs.assign(nc, Tensor());
            br.pre.assign(nc, Tensor());
            br.argmax.assign(nc, {});
            br.pool_dims.assign(nc, {});
            Tensor cur = x;
            for (int l = 0; l < nc; ++l)
            {
                const std::size_t pi = detail::conv_index(b, l, nc);
                br.inputs[l] = cur;
                detail::conv3x3_forward(cur, params.tensors[pi], params.tensors[pi + 1], br.pre[l]);
                detail::check_finite(br.pre[l], params.names[pi]);
                cur = br.pre[l];
                for (auto& v : cur.data)
                    v = v > 0.0 ? v : 0.0;
                if (spec.pools_after(l))
                {
                    br.pool_dims[l] = cur.shape;
                    cur = detail::maxpool2_forward(cur, br.argmax[l]);
                }
            }
            br.output = cur;
            fc.features.insert(fc.features.end(), cur.data.begin(), cur.data.end());
        }

        const std::size_t d1 = 2 * 3 * static_cast<std::size_t>(nc);
        const Tensor& w1 = params.tensors[d1];
        const Tensor& b1 = params.tensors[d1 + 1];
        const Tensor& w2 = params.tensors[d1 + 2];
        const Tensor& b2 = params.tensors[d1 + 3];
        const std::size_t nf = fc.features.size();
        fc.hidden_pre.assign(spec.hidden, 0.0);
        fc.hidden.assign(spec.hidden, 0.0);
        for (int h = 0; h < spec.hidden; ++h)
        {
            double acc = b1[h];
            const double* row = w1.ptr() + static_cast<std::size_t>(h) * nf;
            for (std::size_t f = 0; f < nf; ++f)
                acc += row[f] * fc.features[f];
            fc.hidden_pre[h] = acc;
            fc.hidden[h] = acc > 0.0 ? acc : 0.0;
        }
        fc.head.assign(spec.head_size(), 0.0);
        for (int o = 0; o < spec.head_size(); ++o)
        {
            double acc = b2[o];
            const double* row = w2.ptr() + static_cast<std::size_t>(o) * spec.hidden;
            for (int h = 0; h < spec.hidden; ++h)
                acc += row[h] * fc.hidden[h];
            if (!std::isfinite(acc))
                throw NumericError("non-finite activation in layer dense2");
            fc.head[o] = acc;
        }
        return interpret_head(fc.head);
    }

    LatentGaussian forward(const SliceStack& stack) const { return forward(prepare(stack)); }

    /// Reverse pass: parameter gradients given d(loss)/d(LatentGaussian fields); accumulates into `grads`.
    void backward(const ForwardCache& fc, const LatentGrad& up, EncoderParams& grads) const
    {
        const int k = spec.latent_dim;
        const int nc = spec.num_conv();
        if (fc.head.size() != static_cast<std::size_t>(spec.head_size()) || fc.branches[0].pre.size() != static_cast<std::size_t>(nc))
            throw ConfigError("forward cache does not match encoder");
        if (up.mu.size() != k || up.chol.rows() != k || up.chol.cols() != k)
            throw ConfigError("upstream gradient does not match latent dimension");

        std::vector<double> ghead(spec.head_size(), 0.0);
        int o = 0;
        for (int i = 0; i < k; ++i)
            ghead[o++] = up.mu(i);
        for (int i = 1; i < k; ++i)
            for (int j = 0; j < i; ++j)
                ghead[o++] = up.chol(i, j);
        for (int i = 0; i < k; ++i, ++o)
            ghead[o] = up.chol(i, i) * detail::sigmoid(fc.head[o]);
        for (int c = 0; c < 3; ++c)
            ghead[o++] = up.shift(c) * norm.half_extent;

        const std::size_t d1 = 2 * 3 * static_cast<std::size_t>(nc);
        const Tensor& w1 = params.tensors[d1];
        const Tensor& w2 = params.tensors[d1 + 2];
        const std::size_t nf = fc.features.size();

        std::vector<double> ghid(spec.hidden, 0.0);
        for (int oo = 0; oo < spec.head_size(); ++oo)
        {
            const double g = ghead[oo];
            grads.tensors[d1 + 3][oo] += g;
            const double* row = w2.ptr() + static_cast<std::size_t>(oo) * spec.hidden;
            double* grow = grads.tensors[d1 + 2].ptr() + static_cast<std::size_t>(oo) * spec.hidden;
            for (int h = 0; h < spec.hidden; ++h)
            {
                grow[h] += g * fc.hidden[h];
                ghid[h] += g * row[h];
            }
        }
        std::vector<double> gfeat(nf, 0.0);
        for (int h = 0; h < spec.hidden; ++h)
        {
            const double g = fc.hidden_pre[h] > 0.0 ? ghid[h] : 0.0;
            if (g == 0.0)
                continue;
            grads.tensors[d1 + 1][h] += g;
            const double* row = w1.ptr() + static_cast<std::size_t>(h) * nf;
            double* grow = grads.tensors[d1].ptr() + static_cast<std::size_t>(h) * nf;
            for (std::size_t f = 0; f < nf; ++f)
            {
                grow[f] += g * fc.features[f];
                gfeat[f] += g * row[f];
            }
        }

        std::size_t offset = 0;
        for (int b = 0; b < 3; ++b)
        {
            const auto& br = fc.branches[b];
            Tensor g(br.output.shape);
            std::copy(gfeat.begin() + static_cast<std::ptrdiff_t>(offset),
                      gfeat.begin() + static_cast<std::ptrdiff_t>(offset + g.size()), g.data.begin());
            offset += g.size();
            for (int l = nc - 1; l >= 0; --l)
            {
                if (spec.pools_after(l))
                {
                    Tensor up_pool(br.pool_dims[l]);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        up_pool[br.argmax[l][i]] += g[i];
                    g = std::move(up_pool);
                }
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (!(br.pre[l][i] > 0.0))
                        g[i] = 0.0;
                const std::size_t pi = detail::conv_index(b, l, nc);
                Tensor gin;
                detail::conv3x3_backward(br.inputs[l], params.tensors[pi], g, grads.tensors[pi], grads.tensors[pi + 1],
                                         l > 0 ? &gin : nullptr);
                g = std::move(gin);
            }
        }
    }
};

inline Encoder make_encoder(const EncoderSpec& spec, const CoordNormalization& norm, std::uint64_t seed,
                            std::string mode = "prob")
{
    spec.validate();
    norm.validate();
    require(mode == "prob" || mode == "det", "mode must be 'prob' or 'det'");
    return Encoder{spec, norm, init_params(spec, seed), std::move(mode)};
}

// ---------------------------------------------------------------------------
// RMS-Prop

struct OptimizerState
{
    std::vector<Tensor> mean_square;
    double learning_rate = 1e-4;
    double decay = 0.9;
    double epsilon = 1e-8;
    std::uint64_t step = 0;

    static OptimizerState for_params(const EncoderParams& p, double lr, double decay = 0.9, double eps = 1e-8)
    {
        OptimizerState s;
        for (const auto& t : p.tensors)
            s.mean_square.emplace_back(t.shape, 0.0);
        s.learning_rate = lr;
        s.decay = decay;
        s.epsilon = eps;
        return s;
    }
};

/**
 * acc <- decay * acc + (1 - decay) * g^2;  p <- p - lr * g / sqrt(acc + eps).
 * All-or-nothing: on a non-finite update neither params nor state change.
 */
inline void rmsprop_step(EncoderParams& params, const EncoderParams& grads, OptimizerState& state)
{
    require(params.tensors.size() == grads.tensors.size() && state.mean_square.size() == params.tensors.size(),
            "optimizer shapes do not match parameters");
    std::vector<Tensor> new_acc = state.mean_square;
    std::vector<Tensor> new_params = params.tensors;
    for (std::size_t t = 0; t < params.tensors.size(); ++t)
    {
        require(params.tensors[t].shape == grads.tensors[t].shape, "gradient shape mismatch for " + params.names[t]);
        for (std::size_t i = 0; i < params.tensors[t].size(); ++i)
        {
            const double g = grads.tensors[t][i];
            double& a = new_acc[t][i];
            a = state.decay * a + (1.0 - state.decay) * g * g;
            double& p = new_params[t][i];
            p -= state.learning_rate * g / std::sqrt(a + state.epsilon);
            if (!std::isfinite(p) || !std::isfinite(a))
                throw NumericError("non-finite RMS-Prop update for " + params.names[t]);
        }
    }
    params.tensors = std::move(new_params);
    state.mean_square = std::move(new_acc);
    ++state.step;
}

// ---------------------------------------------------------------------------
// Weights container: "PMWT", u32 version, spec, mode, normalization, then
// u32 tensor count and per tensor: name, u32 rank, u64 dims, f64 data (all LE).

inline constexpr std::uint32_t kWeightsVersion = 1;

inline void write_encoder(std::ostream& os, const Encoder& enc)
{
    using namespace binio;
    write_magic(os, "PMWT");
    write_le<std::uint32_t>(os, kWeightsVersion);
    const auto& s = enc.spec;
    for (int v : {s.height, s.width, s.in_channels, s.latent_dim, s.hidden})
        write_le<std::int32_t>(os, v);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.channels.size()));
    for (int c : s.channels)
        write_le<std::int32_t>(os, c);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.pool_after.size()));
    for (int p : s.pool_after)
        write_le<std::int32_t>(os, p);
    write_string(os, enc.mode);
    for (int c = 0; c < 3; ++c)
        write_le<double>(os, enc.norm.centroid(c));
    write_le<double>(os, enc.norm.half_extent);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(enc.params.tensors.size()));
    for (std::size_t t = 0; t < enc.params.tensors.size(); ++t)
    {
        const auto& ten = enc.params.tensors[t];
        write_string(os, enc.params.names[t]);
        write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ten.shape.size()));
        for (int d : ten.shape)
            write_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
        for (double v : ten.data)
            write_le<double>(os, v);
    }
}

inline Encoder read_encoder(std::istream& is)
{
    using namespace binio;
    expect_magic(is, "PMWT");
    if (read_le<std::uint32_t>(is) != kWeightsVersion)
        throw IoError("unsupported weights version");
    Encoder enc;
    auto& s = enc.spec;
    s.height = read_le<std::int32_t>(is);
    s.width = read_le<std::int32_t>(is);
    s.in_channels = read_le<std::int32_t>(is);
    s.latent_dim = read_le<std::int32_t>(is);
    s.hidden = read_le<std::int32_t>(is);
    const auto nconv = read_le<std::uint32_t>(is);
    if (nconv == 0 || nconv > 1024)
        throw IoError("corrupt weights header");
    s.channels.resize(nconv);
    for (int& c : s.channels)
        c = read_le<std::int32_t>(is);
    const auto npool = read_le<std::uint32_t>(is);
    if (npool > nconv)
        throw IoError("corrupt weights header");
    s.pool_after.resize(npool);
    for (int& p : s.pool_after)
        p = read_le<std::int32_t>(is);
    enc.mode = read_string(is);
    for (int c = 0; c < 3; ++c)
        enc.norm.centroid(c) = read_le<double>(is);
    enc.norm.half_extent = read_le<double>(is);
    try
    {
        s.validate();
        enc.norm.validate();
    }
    catch (const ConfigError& e)
    {
        throw IoError(std::string("invalid weights header: ") + e.what());
    }
    if (enc.mode != "prob" && enc.mode != "det")
        throw IoError("invalid mode in weights file");

    const EncoderParams expected = init_params(s, 0);
    const auto ntens = read_le<std::uint32_t>(is);
    if (ntens != expected.tensors.size())
        throw IoError("weights file has " + std::to_string(ntens) + " tensors, architecture needs " +
                      std::to_string(expected.tensors.size()));
    for (std::uint32_t t = 0; t < ntens; ++t)
    {
        const std::string name = read_string(is);
        if (name != expected.names[t])
            throw IoError("unexpected tensor '" + name + "', expected '" + expected.names[t] + "'");
        const auto rank = read_le<std::uint32_t>(is);
        std::vector<int> shape(rank);
        for (int& d : shape)
            d = static_cast<int>(read_le<std::uint64_t>(is));
        if (shape != expected.tensors[t].shape)
            throw IoError("tensor '" + name + "' has unexpected shape");
        Tensor ten(shape);
        for (double& v : ten.data)
            v = read_le<double>(is);
        enc.params.names.push_back(name);
        enc.params.tensors.push_back(std::move(ten));
    }
    return enc;
}

inline void save_encoder(const std::string& path, const Encoder& enc)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path + " for writing");
    write_encoder(os, enc);
    if (!os)
        throw IoError("write failed: " + path);
}

inline Encoder load_encoder(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path);
    return read_encoder(is);
}

} // namespace probsurf

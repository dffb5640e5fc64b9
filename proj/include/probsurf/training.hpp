#pragma once

#include "probsurf/config.hpp"
#include "probsurf/encoder.hpp"
#include "probsurf/loss.hpp"
#include "probsurf/prob_model.hpp"
#include "probsurf/shape_prior.hpp"
#include "probsurf/synthdata.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <ostream>
#include <thread>
#include <vector>

namespace probsurf {

/// Runs fn(0..n-1) on up to `threads` workers. Each index is handled by exactly one worker.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn)
{
    if (threads <= 1 || n <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    const auto nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    for (std::size_t t = 0; t < nt; ++t)
        pool.emplace_back([&, t] {
            try
            {
                for (std::size_t i = t; i < n; i += nt)
                    fn(i);
            }
            catch (...)
            {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool)
        th.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

struct StepLog
{
    int step = 0;
    double data_term = 0.0; // per-item mean over the batch
    double reg_term = 0.0;
    double total = 0.0;     // per-item mean over the batch
};

inline ModelConfig model_config(const RunConfig& rc)
{
    ModelConfig mc;
    mc.noise_var = rc.sigma2;
    mc.num_samples = rc.mc_samples;
    mc.normalize_mixture = rc.normalize_mixture;
    return mc;
}

inline EncoderSpec encoder_spec(const RunConfig& rc, const Dataset& ds)
{
    EncoderSpec spec;
    const auto& s0 = ds.samples.front().stack.slices[0];
    spec.height = s0.height;
    spec.width = s0.width;
    spec.in_channels = rc.coord_maps ? 4 : 1;
    spec.latent_dim = rc.k;
    spec.channels = rc.channels;
    spec.hidden = rc.hidden;
    return spec;
}

/// Loss of one batch (sum over items, as optimized) and, if requested, its parameter gradient.
struct BatchEval
{
    LossBreakdown loss;
    EncoderParams grads;
};

inline BatchEval evaluate_batch(const Encoder& enc, const ShapePrior& prior, const RunConfig& rc,
                                const std::vector<const std::array<Tensor, 3>*>& inputs,
                                const std::vector<const Mesh*>& targets, std::uint64_t seed, bool with_grad)
{
    const std::size_t n = inputs.size();
    std::vector<ForwardCache> caches(n);
    std::vector<LatentGaussian> lats(n);
    parallel_for(n, rc.threads, [&](std::size_t i) { lats[i] = enc.forward(*inputs[i], &caches[i]); });

    std::vector<Mesh> tg;
    tg.reserve(n);
    for (const auto* m : targets)
        tg.push_back(*m);

    BatchEval out;
    std::vector<LatentGrad> up;
    if (rc.mode == "det")
    {
        const double v = deterministic_loss(prior, lats, tg, enc.norm.half_extent, with_grad ? &up : nullptr);
        out.loss.total = v;
        out.loss.data_term = -v;
    }
    else
    {
        out.loss = total_loss(prior, lats, tg, model_config(rc), rc.lambda, seed, with_grad ? &up : nullptr);
    }
    if (!with_grad)
        return out;

    std::vector<EncoderParams> per(n);
    parallel_for(n, rc.threads, [&](std::size_t i) {
        per[i] = enc.params.zeros_like();
        enc.backward(caches[i], up[i], per[i]);
    });
    out.grads = enc.params.zeros_like();
    for (const auto& g : per) // fixed index order keeps the sum deterministic
        out.grads.add(g);
    return out;
}

struct TrainResult
{
    Encoder encoder;
    std::vector<StepLog> history;
    std::vector<double> val_loss; // per epoch, per-item mean total loss on the validation split
};

/**
 * RMS-Prop training over the train split. When `out_dir` is non-empty, the
 * loss log (loss.log), per-epoch validation losses (val.log), checkpoints
 * (weights.epochNNN) and the final weights (weights.final) are written there.
 */
inline TrainResult train(const RunConfig& rc, const Dataset& ds, const ShapePrior& full_prior,
                         const std::string& out_dir = {}, std::ostream* progress = nullptr)
{
    namespace fs = std::filesystem;
    rc.validate();
    require(rc.k <= full_prior.num_components(), "k = " + std::to_string(rc.k) + " exceeds the prior's " +
                                                     std::to_string(full_prior.num_components()) + " components");
    const ShapePrior prior = full_prior.truncated(rc.k);
    const auto train_set = ds.split("train");
    const auto val_set = ds.split("val");
    require(train_set.size() >= static_cast<std::size_t>(rc.batch_size), "training split smaller than one batch");

    std::vector<SliceStack> train_stacks;
    for (const auto* s : train_set)
        train_stacks.push_back(s->stack);
    Encoder enc = make_encoder(encoder_spec(rc, ds), fit_normalization(train_stacks), mix_seed(rc.seed, 0xE11C), rc.mode);

    std::vector<std::array<Tensor, 3>> train_in, val_in;
    for (const auto* s : train_set)
        train_in.push_back(enc.prepare(s->stack));
    for (const auto* s : val_set)
        val_in.push_back(enc.prepare(s->stack));

    OptimizerState opt = OptimizerState::for_params(enc.params, rc.learning_rate);
    const std::size_t per_epoch = train_set.size() / static_cast<std::size_t>(rc.batch_size);
    const int total_steps = rc.steps > 0 ? rc.steps : rc.epochs * static_cast<int>(per_epoch);

    std::ofstream loss_log, val_log;
    if (!out_dir.empty())
    {
        fs::create_directories(out_dir);
        loss_log.open(fs::path(out_dir) / "loss.log");
        val_log.open(fs::path(out_dir) / "val.log");
        if (!loss_log || !val_log)
            throw IoError("cannot write logs in " + out_dir);
        loss_log << "step data_term reg_term total\n";
        val_log << "epoch val_total\n";
    }

    TrainResult result;
    std::vector<std::size_t> order(train_set.size());
    std::vector<std::string> checkpoints;
    std::string last_checkpoint;
    int epoch = 0;
    std::size_t cursor = order.size(); // forces a shuffle before the first batch

    auto end_epoch = [&]() {
        ++epoch;
        if (!val_in.empty())
        {
            std::vector<const std::array<Tensor, 3>*> in;
            std::vector<const Mesh*> tg;
            for (std::size_t i = 0; i < val_in.size(); ++i)
            {
                in.push_back(&val_in[i]);
                tg.push_back(&val_set[i]->mesh);
            }
            const auto ev = evaluate_batch(enc, prior, rc, in, tg, mix_seed(rc.seed, 0x7A1), false);
            const double v = ev.loss.total / static_cast<double>(in.size());
            result.val_loss.push_back(v);
            if (val_log)
                val_log << epoch << ' ' << format_real(v) << '\n';
        }
        if (!out_dir.empty())
        {
            char name[32];
            std::snprintf(name, sizeof(name), "weights.epoch%03d", epoch);
            const std::string path = (fs::path(out_dir) / name).string();
            save_encoder(path, enc);
            last_checkpoint = path;
            checkpoints.push_back(path);
            if (rc.keep_checkpoints > 0 && checkpoints.size() > static_cast<std::size_t>(rc.keep_checkpoints))
            {
                fs::remove(checkpoints.front());
                checkpoints.erase(checkpoints.begin());
            }
        }
    };

    for (int step = 0; step < total_steps; ++step)
    {
        if (cursor + static_cast<std::size_t>(rc.batch_size) > order.size())
        {
            if (step > 0)
                end_epoch();
            std::iota(order.begin(), order.end(), 0);
            Rng shuffle_rng(mix_seed(rc.seed, 0x5EED0000ULL + static_cast<std::uint64_t>(epoch)));
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            cursor = 0;
        }
        std::vector<const std::array<Tensor, 3>*> in;
        std::vector<const Mesh*> tg;
        for (int b = 0; b < rc.batch_size; ++b, ++cursor)
        {
            in.push_back(&train_in[order[cursor]]);
            tg.push_back(&train_set[order[cursor]]->mesh);
        }
        BatchEval ev;
        try
        {
            ev = evaluate_batch(enc, prior, rc, in, tg, mix_seed(rc.seed, 0x10000000ULL + static_cast<std::uint64_t>(step)),
                                true);
            rmsprop_step(enc.params, ev.grads, opt);
        }
        catch (const NumericError& e)
        {
            throw NumericError(std::string("training aborted at step ") + std::to_string(step) + ": " + e.what() +
                               (last_checkpoint.empty() ? "" : "; last checkpoint " + last_checkpoint));
        }
        const double nb = static_cast<double>(rc.batch_size);
        StepLog sl{step, ev.loss.data_term / nb, ev.loss.reg_term, ev.loss.total / nb};
        result.history.push_back(sl);
        if (loss_log)
            loss_log << sl.step << ' ' << format_real(sl.data_term) << ' ' << format_real(sl.reg_term) << ' '
                     << format_real(sl.total) << '\n';
        if (progress && (step % 100 == 0 || step + 1 == total_steps))
            *progress << "step " << step << " total/item " << sl.total << " reg " << sl.reg_term << std::endl;
    }
    end_epoch();
    if (!out_dir.empty())
        save_encoder((fs::path(out_dir) / "weights.final").string(), enc);
    result.encoder = std::move(enc);
    return result;
}

struct Prediction
{
    LatentGaussian latent;
    PosteriorSurface posterior;
    VertexUncertainty uncertainty;

    /// Mean mesh coloured by the rescaled per-vertex log-determinant.
    Mesh heatmap() const
    {
        Mesh m = posterior.mean_mesh;
        m.colors.clear();
        for (Eigen::Index i = 0; i < uncertainty.rescaled.size(); ++i)
            m.colors.push_back(heat_color(uncertainty.rescaled(i)));
        return m;
    }
};

inline Prediction predict(const Encoder& enc, const ShapePrior& full_prior, double sigma2, const SliceStack& stack)
{
    const ShapePrior prior = full_prior.truncated(enc.spec.latent_dim);
    ModelConfig mc;
    mc.noise_var = sigma2;
    Prediction p;
    p.latent = enc.forward(stack);
    p.posterior = posterior(prior, p.latent, mc);
    p.uncertainty = vertex_uncertainty(p.posterior);
    return p;
}

} // namespace probsurf

// probsurf: generate synthetic data, fit the shape prior, train the slice
// encoder, and predict / sample / evaluate surfaces.

#include "probsurf/config.hpp"
#include "probsurf/metrics.hpp"
#include "probsurf/synthdata.hpp"
#include "probsurf/training.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using namespace probsurf;

namespace {

/// Config sources for one verb: an optional key=value file, repeated --set overrides, then named flags.
struct ConfigSources
{
    std::string file;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App* app, const std::vector<std::string>& keys)
    {
        app->add_option("--config", file, "flat key=value config file");
        app->add_option("--set", sets, "override a config key (key=value), repeatable");
        for (const auto& k : keys)
        {
            std::string flag = k;
            std::replace(flag.begin(), flag.end(), '_', '-');
            options[k] = app->add_option("--" + flag, flags[k], "config key '" + k + "'");
        }
    }

    KeyValues resolve() const
    {
        KeyValues kv;
        if (!file.empty())
            kv = load_kv(file);
        for (const auto& s : sets)
        {
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got '" + s + "'");
            kv[s.substr(0, eq)] = s.substr(eq + 1);
        }
        for (const auto& [k, opt] : options)
            if (opt->count() > 0)
                kv[k] = flags.at(k);
        return kv;
    }
};

std::vector<std::string> keys_of(const KeyValues& kv)
{
    std::vector<std::string> out;
    for (const auto& [k, v] : kv)
        out.push_back(k);
    return out;
}

void write_resolved(const std::string& dir, const KeyValues& kv)
{
    fs::create_directories(dir);
    std::ofstream os(fs::path(dir) / "run.config");
    if (!os)
        throw IoError("cannot write " + (fs::path(dir) / "run.config").string());
    write_kv(os, kv);
}

void require_path(const std::string& what, const std::string& path)
{
    require(!path.empty(), "config key '" + what + "' is required");
    if (!fs::exists(path))
        throw IoError(what + " path does not exist: " + path);
}

void write_mesh_file(const fs::path& p, const Mesh& m)
{
    save_mesh(p.string(), m);
}

int cmd_generate(const ConfigSources& src)
{
    KeyValues kv = src.resolve();
    const auto known = GeneratorConfig{}.to_kv();
    std::string out;
    if (auto it = kv.find("out"); it != kv.end())
    {
        out = it->second;
        kv.erase(it);
    }
    for (const auto& [k, v] : kv)
        if (!known.count(k))
            throw ConfigError("unknown config key '" + k + "'");
    require(!out.empty(), "config key 'out' is required");
    const GeneratorConfig cfg = GeneratorConfig::from_kv(kv);
    cfg.validate();
    const Dataset ds = generate_dataset(cfg);
    save_dataset(out, ds);
    KeyValues resolved = cfg.to_kv();
    resolved["out"] = out;
    write_resolved(out, resolved);
    for (const auto& w : ds.warnings)
        std::cerr << "warning: " << w << '\n';
    std::cout << "wrote " << ds.samples.size() << " samples to " << out << '\n';
    return 0;
}

int cmd_fit_prior(const RunConfig& rc)
{
    require_path("dataset", rc.dataset);
    require(!rc.out.empty(), "config key 'out' is required");
    const Dataset ds = load_dataset(rc.dataset);
    std::vector<Mesh> meshes;
    for (const auto* s : ds.split("train"))
        meshes.push_back(s->mesh);
    const ShapePrior prior = fit_prior(meshes, rc.k);
    fs::create_directories(rc.out);
    save_prior((fs::path(rc.out) / "prior").string(), prior);
    write_resolved(rc.out, rc.to_kv());
    std::cout << "prior: r=" << prior.dim() << " k=" << prior.num_components() << " -> "
              << (fs::path(rc.out) / "prior").string() << '\n';
    return 0;
}

int cmd_train(const RunConfig& rc)
{
    require_path("dataset", rc.dataset);
    require_path("prior", rc.prior);
    require(!rc.out.empty(), "config key 'out' is required");
    rc.validate();
    const Dataset ds = load_dataset(rc.dataset);
    const ShapePrior prior = load_prior(rc.prior);
    write_resolved(rc.out, rc.to_kv());
    const auto res = train(rc, ds, prior, rc.out, &std::cerr);
    std::cout << "trained " << res.history.size() << " steps; final weights "
              << (fs::path(rc.out) / "weights.final").string() << '\n';
    return 0;
}

struct NamedStack
{
    std::string name;
    SliceStack stack;
};

std::vector<NamedStack> gather_stacks(const RunConfig& rc, const std::vector<std::string>& files,
                                      const std::string& split)
{
    std::vector<NamedStack> out;
    for (const auto& f : files)
        out.push_back({fs::path(f).filename().string(), load_stack(f)});
    if (out.empty())
    {
        require_path("dataset", rc.dataset);
        const Dataset ds = load_dataset(rc.dataset);
        for (std::size_t i = 0; i < ds.samples.size(); ++i)
            if (ds.samples[i].split == split)
                out.push_back({index_name(i), ds.samples[i].stack});
    }
    require(!out.empty(), "no input stacks given");
    return out;
}

int cmd_predict(const RunConfig& rc, const std::vector<std::string>& files, const std::string& split)
{
    require_path("weights", rc.weights);
    require_path("prior", rc.prior);
    require(!rc.out.empty(), "config key 'out' is required");
    const Encoder enc = load_encoder(rc.weights);
    const ShapePrior prior = load_prior(rc.prior);
    const auto stacks = gather_stacks(rc, files, split);
    write_resolved(rc.out, rc.to_kv());
    for (const auto& ns : stacks)
    {
        const Prediction p = predict(enc, prior, rc.sigma2, ns.stack);
        const fs::path base = fs::path(rc.out) / ns.name;
        write_mesh_file(base.string() + ".mean.mesh", p.posterior.mean_mesh);
        write_mesh_file(base.string() + ".heat.mesh", p.heatmap());
        std::ofstream os(base.string() + ".logdet");
        if (!os)
            throw IoError("cannot write " + base.string() + ".logdet");
        os << "vertex log_det rescaled\n";
        for (Eigen::Index i = 0; i < p.uncertainty.log_det.size(); ++i)
            os << i << ' ' << format_real(p.uncertainty.log_det(i)) << ' ' << format_real(p.uncertainty.rescaled(i))
               << '\n';
    }
    std::cout << "predicted " << stacks.size() << " case(s) into " << rc.out << '\n';
    return 0;
}

int cmd_sample(const RunConfig& rc, const std::string& stack_file, int count)
{
    require(count >= 0, "count must be >= 0");
    require(!rc.out.empty(), "config key 'out' is required");
    write_resolved(rc.out, rc.to_kv());
    if (count == 0)
        return 0;
    require_path("weights", rc.weights);
    require_path("prior", rc.prior);
    require_path("stack", stack_file);
    const Encoder enc = load_encoder(rc.weights);
    const ShapePrior prior = load_prior(rc.prior);
    const Prediction p = predict(enc, prior, rc.sigma2, load_stack(stack_file));
    for (int i = 0; i < count; ++i)
    {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04d.mesh", i);
        write_mesh_file(fs::path(rc.out) / name,
                        sample_surface(p.posterior, mix_seed(rc.seed, static_cast<std::uint64_t>(i))));
    }
    std::cout << "wrote " << count << " samples to " << rc.out << '\n';
    return 0;
}

int cmd_evaluate(const RunConfig& rc, std::vector<std::string> preds, std::vector<std::string> refs,
                 const std::string& pred_dir, bool with_pair)
{
    require(!rc.out.empty(), "config key 'out' is required");
    double spacing = rc.eval_spacing;
    if (!pred_dir.empty())
    {
        require_path("dataset", rc.dataset);
        const Dataset ds = load_dataset(rc.dataset);
        if (spacing == 0.0)
            spacing = ds.config.pixel_size;
        for (std::size_t i = 0; i < ds.samples.size(); ++i)
        {
            const fs::path p = fs::path(pred_dir) / (index_name(i) + ".mean.mesh");
            if (ds.samples[i].split == "test" && fs::exists(p))
            {
                preds.push_back(p.string());
                refs.push_back((fs::path(rc.dataset) / "meshes" / index_name(i)).string());
            }
        }
    }
    require(!preds.empty(), "no predictions to evaluate");
    require(preds.size() == refs.size(), "number of predictions and references differ");
    require(spacing > 0.0, "eval_spacing must be set when no dataset is given");

    EvalReport report;
    report.spacing = spacing;
    std::vector<Mesh> pred_meshes;
    for (std::size_t i = 0; i < preds.size(); ++i)
    {
        pred_meshes.push_back(load_mesh(preds[i]));
        std::string name = fs::path(preds[i]).filename().string();
        if (const auto dot = name.find('.'); dot != std::string::npos)
            name = name.substr(0, dot);
        report.cases.push_back(evaluate_case(pred_meshes.back(), load_mesh(refs[i]), spacing, name));
    }
    if (with_pair && pred_meshes.size() >= 2)
        report.dice_pair = dice_pair(pred_meshes, spacing);

    write_resolved(rc.out, rc.to_kv());
    std::ofstream csv(fs::path(rc.out) / "report.csv");
    std::ofstream txt(fs::path(rc.out) / "report.txt");
    if (!csv || !txt)
        throw IoError("cannot write report in " + rc.out);
    write_report_csv(csv, report);
    write_report_table(txt, report);
    write_report_table(std::cout, report);
    return 0;
}

int cmd_degrade_sweep(const RunConfig& rc, const std::vector<double>& levels)
{
    require_path("weights", rc.weights);
    require_path("prior", rc.prior);
    require_path("dataset", rc.dataset);
    require(!rc.out.empty(), "config key 'out' is required");
    require(!levels.empty(), "at least one degradation level is required");
    const Encoder enc = load_encoder(rc.weights);
    const ShapePrior prior = load_prior(rc.prior);
    const Dataset ds = load_dataset(rc.dataset);
    const double spacing = rc.eval_spacing > 0.0 ? rc.eval_spacing : ds.config.pixel_size;
    const ShapePrior used = prior.truncated(enc.spec.latent_dim);

    write_resolved(rc.out, rc.to_kv());
    std::ofstream csv(fs::path(rc.out) / "sweep.csv");
    if (!csv)
        throw IoError("cannot write sweep.csv in " + rc.out);
    csv << "level,case,mean_log_det,manifold_residual_mm,dice,assd_mm\n";
    std::cout << "level  mean_log_det  dice    assd_mm\n";
    for (double level : levels)
    {
        std::vector<double> ld, di, as;
        for (std::size_t i = 0; i < ds.samples.size(); ++i)
        {
            const auto& s = ds.samples[i];
            if (s.split != "test")
                continue;
            const Prediction p = predict(enc, prior, rc.sigma2, degrade(s.stack, level));
            const double mld = p.uncertainty.log_det.mean();
            const double res = manifold_residual(used, p.posterior.mean_mesh);
            const CaseMetrics cm = evaluate_case(p.posterior.mean_mesh, s.mesh, spacing, index_name(i));
            csv << format_real(level) << ',' << cm.name << ',' << format_real(mld) << ',' << format_real(res) << ','
                << format_real(cm.dice) << ',' << format_real(cm.assd) << '\n';
            ld.push_back(mld);
            di.push_back(cm.dice);
            as.push_back(cm.assd);
        }
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-6.3g %12.4f  %6.4f  %7.3f\n", level, mean_std(ld).mean, mean_std(di).mean,
                      mean_std(as).mean);
        std::cout << buf;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Probabilistic surface reconstruction from sparse slices"};
    app.require_subcommand(1);

    const auto run_keys = keys_of(RunConfig{}.to_kv());
    auto gen_keys = keys_of(GeneratorConfig{}.to_kv());
    gen_keys.push_back("out");

    ConfigSources gen_src, fit_src, train_src, pred_src, sample_src, eval_src, sweep_src;
    auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
    gen_src.attach(gen, gen_keys);
    auto* fit = app.add_subcommand("fit-prior", "fit the PCA shape prior on the training split");
    fit_src.attach(fit, run_keys);
    auto* trn = app.add_subcommand("train", "train the slice encoder");
    train_src.attach(trn, run_keys);

    auto* prd = app.add_subcommand("predict", "predict mean meshes, uncertainty heatmaps and log-det tables");
    pred_src.attach(prd, run_keys);
    std::vector<std::string> pred_stacks;
    std::string pred_split = "test";
    prd->add_option("stacks", pred_stacks, "slice stack files (default: a split of --dataset)");
    prd->add_option("--split", pred_split, "dataset split used when no stack files are given");

    auto* smp = app.add_subcommand("sample", "draw surfaces from the predictive distribution");
    sample_src.attach(smp, run_keys);
    std::string sample_stack;
    int sample_count = 10;
    smp->add_option("--stack", sample_stack, "slice stack file");
    smp->add_option("--count", sample_count, "number of samples");

    auto* evl = app.add_subcommand("evaluate", "DICE, HD, ASSD and RAVD of predictions against references");
    eval_src.attach(evl, run_keys);
    std::vector<std::string> eval_preds, eval_refs;
    std::string eval_pred_dir;
    bool eval_pair = false;
    evl->add_option("--pred", eval_preds, "predicted mesh files");
    evl->add_option("--ref", eval_refs, "reference mesh files, same order as --pred");
    evl->add_option("--pred-dir", eval_pred_dir, "directory of NNNN.mean.mesh predictions for the test split of --dataset");
    evl->add_flag("--dice-pair", eval_pair, "also report DICE_pair over the predictions");

    auto* swp = app.add_subcommand("degrade-sweep", "predict on progressively blacked-out test slices");
    sweep_src.attach(swp, run_keys);
    std::vector<double> sweep_levels{0.0, 0.25, 0.5, 0.75, 1.0};
    swp->add_option("--levels", sweep_levels, "degradation levels in [0, 1]")->delimiter(',');

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return 2;
    }

    try
    {
        auto run_config = [](const ConfigSources& s) { return RunConfig::from_kv(s.resolve()); };
        if (gen->parsed())
            return cmd_generate(gen_src);
        if (fit->parsed())
            return cmd_fit_prior(run_config(fit_src));
        if (trn->parsed())
            return cmd_train(run_config(train_src));
        if (prd->parsed())
            return cmd_predict(run_config(pred_src), pred_stacks, pred_split);
        if (smp->parsed())
            return cmd_sample(run_config(sample_src), sample_stack, sample_count);
        if (evl->parsed())
            return cmd_evaluate(run_config(eval_src), eval_preds, eval_refs, eval_pred_dir, eval_pair);
        if (swp->parsed())
            return cmd_degrade_sweep(run_config(sweep_src), sweep_levels);
    }
    catch (const ConfigError& e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    catch (const NumericError& e)
    {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    }
    catch (const IoError& e)
    {
        std::cerr << "I/O error: " << e.what() << '\n';
        return 4;
    }
    catch (const fs::filesystem_error& e)
    {
        std::cerr << "I/O error: " << e.what() << '\n';
        return 4;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

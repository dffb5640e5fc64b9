#pragma once

#include "probsurf/error.hpp"
#include "probsurf/mesh.hpp"
#include "probsurf/synthdata.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace probsurf {

using KeyValues = std::map<std::string, std::string>;

/// Parses flat "key=value" text; blank lines and lines starting with '#' are skipped.
inline KeyValues parse_kv(std::istream& is, const std::string& source = "config")
{
    KeyValues kv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line))
    {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

inline KeyValues load_kv(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open config file " + path);
    return parse_kv(is, path);
}

inline void write_kv(std::ostream& os, const KeyValues& kv)
{
    for (const auto& [k, v] : kv)
        os << k << '=' << v << '\n';
}

/// Settings of one training / prediction / evaluation run.
struct RunConfig
{
    std::string dataset;
    std::string prior;
    std::string weights;
    std::string out;
    int k = 8;
    double sigma2 = 5e-2;
    double lambda = 1e3;
    int mc_samples = 1;
    double learning_rate = 1e-4;
    int batch_size = 5;
    int epochs = 0;
    int steps = 2000; // takes precedence over epochs when > 0
    std::uint64_t seed = 1;
    std::string mode = "prob";
    bool coord_maps = true;
    bool normalize_mixture = true;
    int threads = 1;
    int hidden = 64;
    std::vector<int> channels{8, 8, 16, 16, 16, 32, 32, 32, 32};
    double eval_spacing = 0.0; // 0: use the dataset pixel size
    int keep_checkpoints = 3;  // 0 keeps all

    void validate() const
    {
        require(k >= 1, "k must be >= 1");
        require(sigma2 > 0.0, "sigma2 must be > 0");
        require(lambda > 0.0, "lambda must be > 0");
        require(mc_samples >= 1, "mc_samples must be >= 1");
        require(learning_rate > 0.0, "learning_rate must be > 0");
        require(batch_size >= 1, "batch_size must be >= 1");
        require(steps > 0 || epochs > 0, "either steps or epochs must be > 0");
        require(mode == "prob" || mode == "det", "mode must be 'prob' or 'det'");
        require(threads >= 1, "threads must be >= 1");
        require(hidden >= 1, "hidden must be >= 1");
        require(eval_spacing >= 0.0, "eval_spacing must be >= 0");
        require(keep_checkpoints >= 0, "keep_checkpoints must be >= 0");
    }

    KeyValues to_kv() const
    {
        std::string ch;
        for (std::size_t i = 0; i < channels.size(); ++i)
            ch += (i ? "," : "") + std::to_string(channels[i]);
        return {{"dataset", dataset},
                {"prior", prior},
                {"weights", weights},
                {"out", out},
                {"k", std::to_string(k)},
                {"sigma2", format_real(sigma2)},
                {"lambda", format_real(lambda)},
                {"mc_samples", std::to_string(mc_samples)},
                {"learning_rate", format_real(learning_rate)},
                {"batch_size", std::to_string(batch_size)},
                {"epochs", std::to_string(epochs)},
                {"steps", std::to_string(steps)},
                {"seed", std::to_string(seed)},
                {"mode", mode},
                {"coord_maps", coord_maps ? "on" : "off"},
                {"normalize_mixture", normalize_mixture ? "on" : "off"},
                {"threads", std::to_string(threads)},
                {"hidden", std::to_string(hidden)},
                {"channels", ch},
                {"eval_spacing", format_real(eval_spacing)},
                {"keep_checkpoints", std::to_string(keep_checkpoints)}};
    }

    static bool parse_bool(const std::string& key, const std::string& v)
    {
        if (v == "on" || v == "true" || v == "1" || v == "yes")
            return true;
        if (v == "off" || v == "false" || v == "0" || v == "no")
            return false;
        throw ConfigError("config key '" + key + "' expects on/off, got '" + v + "'");
    }

    /// Overlays `kv` onto `base`. Unknown keys are a configuration error.
    static RunConfig from_kv(const KeyValues& kv, RunConfig base)
    {
        using namespace detail;
        RunConfig c = std::move(base);
        for (const auto& [key, v] : kv)
        {
            if (key == "dataset") c.dataset = v;
            else if (key == "prior") c.prior = v;
            else if (key == "weights") c.weights = v;
            else if (key == "out") c.out = v;
            else if (key == "k") c.k = static_cast<int>(parse_int(key, v));
            else if (key == "sigma2") c.sigma2 = parse_real(key, v);
            else if (key == "lambda") c.lambda = parse_real(key, v);
            else if (key == "mc_samples") c.mc_samples = static_cast<int>(parse_int(key, v));
            else if (key == "learning_rate") c.learning_rate = parse_real(key, v);
            else if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(key, v));
            else if (key == "epochs") c.epochs = static_cast<int>(parse_int(key, v));
            else if (key == "steps") c.steps = static_cast<int>(parse_int(key, v));
            else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, v));
            else if (key == "mode") c.mode = v;
            else if (key == "coord_maps") c.coord_maps = parse_bool(key, v);
            else if (key == "normalize_mixture") c.normalize_mixture = parse_bool(key, v);
            else if (key == "threads") c.threads = static_cast<int>(parse_int(key, v));
            else if (key == "hidden") c.hidden = static_cast<int>(parse_int(key, v));
            else if (key == "channels")
            {
                c.channels.clear();
                for (double x : parse_reals(key, v))
                    c.channels.push_back(static_cast<int>(x));
            }
            else if (key == "eval_spacing") c.eval_spacing = parse_real(key, v);
            else if (key == "keep_checkpoints") c.keep_checkpoints = static_cast<int>(parse_int(key, v));
            else
                throw ConfigError("unknown config key '" + key + "'");
        }
        return c;
    }

    static RunConfig from_kv(const KeyValues& kv) { return from_kv(kv, RunConfig{}); }
};

} // namespace probsurf

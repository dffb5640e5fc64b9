#pragma once

#include "probsurf/coordmaps.hpp"
#include "probsurf/error.hpp"
#include "probsurf/icosphere.hpp"
#include "probsurf/mesh.hpp"
#include "probsurf/rng.hpp"
#include "probsurf/voxel.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace probsurf {

/**
 * Synthetic stand-in for a cardiac slice dataset: star-shaped blobs built as
 * an ellipsoid plus radial low-order harmonic patterns (linear in their
 * coefficients), a random rigid pose, and three tilted, roughly orthogonal
 * image planes through the shape centroid.
 */
struct GeneratorConfig
{
    int subdivision = 2;
    Vec3 radii{16.0, 13.0, 11.0};
    Vec3 world_center{10.0, -5.0, 20.0};
    int num_modes = 4;
    std::vector<double> mode_scales{3.0, 2.5, 2.0, 2.0};
    double translation_range = 12.0; // mm, uniform per axis
    double rotation_max = 10.0;      // degrees
    int height = 32;
    int width = 32;
    double pixel_size = 1.8269;
    double noise_std = 0.05;
    double blur_sigma = 1.0;  // pixels
    double tilt_max = 10.0;   // degrees
    double plane_jitter = 3.0; // mm, in-plane offset of the slice centre
    int num_train = 200;
    int num_val = 40;
    int num_test = 40;
    std::uint64_t seed = 7;

    double mode_scale(int j) const
    {
        if (mode_scales.empty())
            return 0.0;
        return j < static_cast<int>(mode_scales.size()) ? mode_scales[j] : mode_scales.back();
    }

    void validate() const
    {
        require(num_modes >= 1, "num_modes must be >= 1");
        require(num_modes <= 13, "num_modes must be <= 13");
        require(subdivision >= 0 && subdivision <= 5, "subdivision must be in [0, 5]");
        require(radii.minCoeff() > 0.0, "radii must be positive");
        require(pixel_size > 0.0, "pixel_size must be > 0");
        require(height >= 1 && width >= 1, "slice height and width must be >= 1");
        require(num_train >= 1 && num_val >= 1 && num_test >= 1, "dataset sizes must be >= 1");
        require(noise_std >= 0.0 && blur_sigma >= 0.0, "noise_std and blur_sigma must be >= 0");
        require(translation_range >= 0.0 && rotation_max >= 0.0 && tilt_max >= 0.0 && plane_jitter >= 0.0,
                "pose ranges must be >= 0");
        for (double s : mode_scales)
            require(s >= 0.0, "mode_scales must be >= 0");
    }

    bool degenerate() const
    {
        bool zero_amp = true;
        for (int j = 0; j < num_modes; ++j)
            zero_amp = zero_amp && mode_scale(j) == 0.0;
        return zero_amp && translation_range == 0.0 && rotation_max == 0.0;
    }

    int total() const { return num_train + num_val + num_test; }

    std::map<std::string, std::string> to_kv() const;
    static GeneratorConfig from_kv(const std::map<std::string, std::string>& kv);
};

namespace detail {

inline std::string join_reals(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + format_real(v[i]);
    return s;
}

inline std::vector<double> parse_reals(const std::string& key, const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
    {
        try
        {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size())
                throw std::invalid_argument(item);
        }
        catch (const std::exception&)
        {
            throw ConfigError("config key '" + key + "': cannot parse '" + item + "' as a number");
        }
    }
    return out;
}

inline double parse_real(const std::string& key, const std::string& s)
{
    const auto v = parse_reals(key, s);
    if (v.size() != 1)
        throw ConfigError("config key '" + key + "' expects a single number");
    return v[0];
}

inline long long parse_int(const std::string& key, const std::string& s)
{
    try
    {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size())
            throw std::invalid_argument(s);
        return v;
    }
    catch (const std::exception&)
    {
        throw ConfigError("config key '" + key + "': cannot parse '" + s + "' as an integer");
    }
}

inline Vec3 parse_vec3(const std::string& key, const std::string& s)
{
    const auto v = parse_reals(key, s);
    if (v.size() != 3)
        throw ConfigError("config key '" + key + "' expects three comma-separated numbers");
    return {v[0], v[1], v[2]};
}

} // namespace detail

inline std::map<std::string, std::string> GeneratorConfig::to_kv() const
{
    using detail::join_reals;
    return {{"subdivision", std::to_string(subdivision)},
            {"radii", join_reals({radii.x(), radii.y(), radii.z()})},
            {"world_center", join_reals({world_center.x(), world_center.y(), world_center.z()})},
            {"num_modes", std::to_string(num_modes)},
            {"mode_scales", join_reals(mode_scales)},
            {"translation_range", format_real(translation_range)},
            {"rotation_max", format_real(rotation_max)},
            {"height", std::to_string(height)},
            {"width", std::to_string(width)},
            {"pixel_size", format_real(pixel_size)},
            {"noise_std", format_real(noise_std)},
            {"blur_sigma", format_real(blur_sigma)},
            {"tilt_max", format_real(tilt_max)},
            {"plane_jitter", format_real(plane_jitter)},
            {"num_train", std::to_string(num_train)},
            {"num_val", std::to_string(num_val)},
            {"num_test", std::to_string(num_test)},
            {"seed", std::to_string(seed)}};
}

/// Applies recognised keys on top of the defaults; unknown keys are ignored by this function.
inline GeneratorConfig GeneratorConfig::from_kv(const std::map<std::string, std::string>& kv)
{
    using namespace detail;
    GeneratorConfig c;
    for (const auto& [k, v] : kv)
    {
        if (k == "subdivision") c.subdivision = static_cast<int>(parse_int(k, v));
        else if (k == "radii") c.radii = parse_vec3(k, v);
        else if (k == "world_center") c.world_center = parse_vec3(k, v);
        else if (k == "num_modes") c.num_modes = static_cast<int>(parse_int(k, v));
        else if (k == "mode_scales") c.mode_scales = parse_reals(k, v);
        else if (k == "translation_range") c.translation_range = parse_real(k, v);
        else if (k == "rotation_max") c.rotation_max = parse_real(k, v);
        else if (k == "height") c.height = static_cast<int>(parse_int(k, v));
        else if (k == "width") c.width = static_cast<int>(parse_int(k, v));
        else if (k == "pixel_size") c.pixel_size = parse_real(k, v);
        else if (k == "noise_std") c.noise_std = parse_real(k, v);
        else if (k == "blur_sigma") c.blur_sigma = parse_real(k, v);
        else if (k == "tilt_max") c.tilt_max = parse_real(k, v);
        else if (k == "plane_jitter") c.plane_jitter = parse_real(k, v);
        else if (k == "num_train") c.num_train = static_cast<int>(parse_int(k, v));
        else if (k == "num_val") c.num_val = static_cast<int>(parse_int(k, v));
        else if (k == "num_test") c.num_test = static_cast<int>(parse_int(k, v));
        else if (k == "seed") c.seed = static_cast<std::uint64_t>(parse_int(k, v));
    }
    return c;
}

/// Radial harmonic pattern j evaluated at a unit direction (low-order real spherical harmonics, unnormalized).
inline double mode_pattern(int j, const Vec3& d)
{
    const double x = d.x(), y = d.y(), z = d.z();
    switch (j)
    {
    case 0: return 1.0;
    case 1: return 0.5 * (3.0 * z * z - 1.0);
    case 2: return x * x - y * y;
    case 3: return 2.0 * x * z;
    case 4: return 2.0 * y * z;
    case 5: return 2.0 * x * y;
    case 6: return 0.5 * (5.0 * z * z * z - 3.0 * z);
    case 7: return x * (5.0 * z * z - 1.0);
    case 8: return y * (5.0 * z * z - 1.0);
    case 9: return z * (x * x - y * y);
    case 10: return 4.0 * x * y * z;
    case 11: return x * (x * x - 3.0 * y * y);
    case 12: return y * (3.0 * x * x - y * y);
    default: throw ConfigError("mode index out of range");
    }
}

/// The generator's shape model in its own frame: base radial function and per-mode radial patterns.
struct ShapeBasis
{
    Mesh sphere;                       // unit directions and connectivity
    Eigen::VectorXd base;              // flattened ellipsoid, 3V
    std::vector<Eigen::VectorXd> modes; // flattened radial displacement per unit coefficient

    static ShapeBasis make(const GeneratorConfig& cfg)
    {
        ShapeBasis sb;
        sb.sphere = make_icosphere(cfg.subdivision);
        const auto nv = static_cast<Eigen::Index>(sb.sphere.num_vertices());
        sb.base.resize(3 * nv);
        sb.modes.assign(cfg.num_modes, Eigen::VectorXd(3 * nv));
        for (Eigen::Index i = 0; i < nv; ++i)
        {
            const Vec3& d = sb.sphere.vertices[i];
            const double rho = 1.0 / d.cwiseQuotient(cfg.radii).norm();
            sb.base.segment<3>(3 * i) = rho * d;
            for (int j = 0; j < cfg.num_modes; ++j)
                sb.modes[j].segment<3>(3 * i) = mode_pattern(j, d) * d;
        }
        return sb;
    }

    /// Smallest radial distance of the shape with coefficients `c`.
    double min_radius(const Eigen::VectorXd& c) const
    {
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < sphere.num_vertices(); ++i)
        {
            const auto ii = static_cast<Eigen::Index>(i);
            double r = base.segment<3>(3 * ii).norm();
            for (std::size_t j = 0; j < modes.size(); ++j)
                r += c(static_cast<Eigen::Index>(j)) * mode_pattern(static_cast<int>(j), sphere.vertices[i]);
            lo = std::min(lo, r);
        }
        return lo;
    }

    Eigen::VectorXd shape(const Eigen::VectorXd& c) const
    {
        Eigen::VectorXd y = base;
        for (std::size_t j = 0; j < modes.size(); ++j)
            y += c(static_cast<Eigen::Index>(j)) * modes[j];
        return y;
    }
};

struct Sample
{
    std::string split; // "train", "val" or "test"
    Mesh mesh;
    SliceStack stack;
    Eigen::VectorXd coeffs;
    Vec3 translation = Vec3::Zero();
    Vec3 rotation = Vec3::Zero(); // axis * angle, radians
};

struct Dataset
{
    GeneratorConfig config;
    std::vector<Sample> samples;
    std::vector<std::string> warnings;

    std::vector<const Sample*> split(const std::string& name) const
    {
        std::vector<const Sample*> out;
        for (const auto& s : samples)
            if (s.split == name)
                out.push_back(&s);
        return out;
    }
};

namespace detail {

inline Eigen::Matrix3d random_rotation(Rng& rng, double max_angle_rad, Vec3* axis_angle = nullptr)
{
    Vec3 axis(standard_normal(rng), standard_normal(rng), standard_normal(rng));
    if (axis.norm() < 1e-12)
        axis = Vec3::UnitZ();
    axis.normalize();
    const double angle = uniform(rng, 0.0, 1.0) * max_angle_rad;
    if (axis_angle)
        *axis_angle = axis * angle;
    return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

inline std::vector<double> gaussian_kernel(double sigma)
{
    if (sigma <= 0.0)
        return {1.0};
    const int rad = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * rad + 1);
    double sum = 0.0;
    for (int i = -rad; i <= rad; ++i)
        sum += k[i + rad] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k)
        v /= sum;
    return k;
}

// Separable blur with replicated borders.
inline std::vector<double> blur(const std::vector<double>& img, int h, int w, double sigma)
{
    const auto k = gaussian_kernel(sigma);
    const int rad = static_cast<int>(k.size() / 2);
    std::vector<double> tmp(img.size()), out(img.size());
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
        {
            double acc = 0.0;
            for (int t = -rad; t <= rad; ++t)
                acc += k[t + rad] * img[static_cast<std::size_t>(i) * w + std::clamp(j + t, 0, w - 1)];
            tmp[static_cast<std::size_t>(i) * w + j] = acc;
        }
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
        {
            double acc = 0.0;
            for (int t = -rad; t <= rad; ++t)
                acc += k[t + rad] * tmp[static_cast<std::size_t>(std::clamp(i + t, 0, h - 1)) * w + j];
            out[static_cast<std::size_t>(i) * w + j] = acc;
        }
    return out;
}

} // namespace detail

/// Renders one slice: blurred inside-indicator of `mesh` on the plane, plus noise, clamped to [0, 1].
inline Slice render_slice(const Mesh& mesh, const Eigen::Matrix4d& affine, int h, int w, double blur_sigma,
                          double noise_std, Rng& rng)
{
    Slice s;
    s.height = h;
    s.width = w;
    s.affine = affine;
    std::vector<double> ind(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            ind[static_cast<std::size_t>(i) * w + j] = point_inside(mesh, s.pixel_to_world(i, j)) ? 1.0 : 0.0;
    const auto b = detail::blur(ind, h, w, blur_sigma);
    s.intensity.resize(b.size());
    for (std::size_t p = 0; p < b.size(); ++p)
    {
        const double v = b[p] + (noise_std > 0.0 ? noise_std * standard_normal(rng) : 0.0);
        s.intensity[p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return s;
}

inline Sample generate_sample(const GeneratorConfig& cfg, const ShapeBasis& basis, std::size_t index)
{
    Rng rng(mix_seed(cfg.seed, index));
    Sample s;
    s.split = static_cast<int>(index) < cfg.num_train                 ? "train"
              : static_cast<int>(index) < cfg.num_train + cfg.num_val ? "val"
                                                                       : "test";
    const double min_allowed = 0.25 * cfg.radii.minCoeff();
    s.coeffs.resize(cfg.num_modes);
    for (int attempt = 0;; ++attempt)
    {
        for (int j = 0; j < cfg.num_modes; ++j)
            s.coeffs(j) = cfg.mode_scale(j) * standard_normal(rng);
        if (basis.min_radius(s.coeffs) > min_allowed)
            break;
        if (attempt > 1000)
            throw ConfigError("mode_scales too large: cannot generate star-shaped meshes");
    }
    const Eigen::Matrix3d rot = detail::random_rotation(rng, cfg.rotation_max * std::numbers::pi / 180.0, &s.rotation);
    for (int a = 0; a < 3; ++a)
        s.translation(a) = cfg.translation_range > 0.0 ? uniform(rng, -cfg.translation_range, cfg.translation_range) : 0.0;

    const Eigen::VectorXd local = basis.shape(s.coeffs);
    s.mesh = Mesh::from_flat(local, basis.sphere.faces);
    for (auto& v : s.mesh.vertices)
        v = rot * v + s.translation + cfg.world_center;

    const Vec3 centroid = s.mesh.centroid();
    const std::array<std::pair<Vec3, Vec3>, 3> planes{{{Vec3::UnitX(), Vec3::UnitY()},
                                                      {Vec3::UnitY(), Vec3::UnitZ()},
                                                      {Vec3::UnitX(), Vec3::UnitZ()}}};
    for (int b = 0; b < 3; ++b)
    {
        const Eigen::Matrix3d tilt = detail::random_rotation(rng, cfg.tilt_max * std::numbers::pi / 180.0);
        const Vec3 u = tilt * planes[b].first;
        const Vec3 v = tilt * planes[b].second;
        const Vec3 n = u.cross(v);
        const double ju = cfg.plane_jitter > 0.0 ? uniform(rng, -cfg.plane_jitter, cfg.plane_jitter) : 0.0;
        const double jv = cfg.plane_jitter > 0.0 ? uniform(rng, -cfg.plane_jitter, cfg.plane_jitter) : 0.0;
        const Vec3 center = centroid + ju * u + jv * v;
        const double px = cfg.pixel_size;
        Eigen::Matrix4d aff = Eigen::Matrix4d::Identity();
        aff.block<3, 1>(0, 0) = px * u;
        aff.block<3, 1>(0, 1) = px * v;
        aff.block<3, 1>(0, 2) = px * n;
        aff.block<3, 1>(0, 3) = center - 0.5 * (cfg.width - 1) * px * u - 0.5 * (cfg.height - 1) * px * v;
        s.stack.slices[b] = render_slice(s.mesh, aff, cfg.height, cfg.width, cfg.blur_sigma, cfg.noise_std, rng);
    }
    return s;
}

inline Dataset generate_dataset(const GeneratorConfig& cfg)
{
    cfg.validate();
    Dataset ds;
    ds.config = cfg;
    if (cfg.degenerate())
        ds.warnings.push_back("degenerate config: zero mode amplitudes and zero pose range; PCA prior will be rank deficient");
    const ShapeBasis basis = ShapeBasis::make(cfg);
    for (int i = 0; i < cfg.total(); ++i)
        ds.samples.push_back(generate_sample(cfg, basis, static_cast<std::size_t>(i)));
    return ds;
}

/// Scales intensities by (1 - level); level 1 gives black slices. Affines are untouched.
inline SliceStack degrade(const SliceStack& stack, double level)
{
    require(level >= 0.0 && level <= 1.0, "degradation level must be in [0, 1]");
    SliceStack out = stack;
    const auto f = static_cast<float>(1.0 - level);
    for (auto& s : out.slices)
        for (auto& v : s.intensity)
            v *= f;
    return out;
}

// ---------------------------------------------------------------------------
// On-disk layout: manifest, coeffs, meshes/NNNN, stacks/NNNN

inline std::string index_name(std::size_t i)
{
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04zu", i);
    return buf;
}

inline void save_dataset(const std::string& dir, const Dataset& ds)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "meshes", ec);
    fs::create_directories(fs::path(dir) / "stacks", ec);
    if (ec)
        throw IoError("cannot create dataset directory " + dir + ": " + ec.message());

    std::ofstream man(fs::path(dir) / "manifest");
    std::ofstream co(fs::path(dir) / "coeffs");
    if (!man || !co)
        throw IoError("cannot write manifest in " + dir);
    man << "seed " << ds.config.seed << '\n';
    for (const auto& [k, v] : ds.config.to_kv())
        man << "config " << k << '=' << v << '\n';
    for (const auto& w : ds.warnings)
        man << "warning " << w << '\n';
    co << "index split";
    for (int j = 0; j < ds.config.num_modes; ++j)
        co << " c" << j + 1;
    co << " tx ty tz rx ry rz\n";
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
    {
        const auto& s = ds.samples[i];
        const std::string name = index_name(i);
        save_mesh((fs::path(dir) / "meshes" / name).string(), s.mesh);
        save_stack((fs::path(dir) / "stacks" / name).string(), s.stack);
        man << "file " << name << ' ' << s.split << " meshes/" << name << " stacks/" << name << "\n";
        co << name << ' ' << s.split;
        for (Eigen::Index j = 0; j < s.coeffs.size(); ++j)
            co << ' ' << format_real(s.coeffs(j));
        for (int a = 0; a < 3; ++a)
            co << ' ' << format_real(s.translation(a));
        for (int a = 0; a < 3; ++a)
            co << ' ' << format_real(s.rotation(a));
        co << '\n';
    }
    if (!man || !co)
        throw IoError("write failed in " + dir);
}

/// Loads meshes and stacks listed in a dataset manifest (coefficients are not reloaded).
inline Dataset load_dataset(const std::string& dir)
{
    namespace fs = std::filesystem;
    std::ifstream man(fs::path(dir) / "manifest");
    if (!man)
        throw IoError("cannot open manifest in " + dir);
    Dataset ds;
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(man, line))
    {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "config")
        {
            std::string rest;
            ls >> rest;
            const auto eq = rest.find('=');
            if (eq == std::string::npos)
                throw IoError("malformed config line in manifest: " + line);
            kv[rest.substr(0, eq)] = rest.substr(eq + 1);
        }
        else if (tag == "warning")
        {
            ds.warnings.push_back(line.substr(8));
        }
        else if (tag == "file")
        {
            std::string name, split, mpath, spath;
            if (!(ls >> name >> split >> mpath >> spath))
                throw IoError("malformed file line in manifest: " + line);
            Sample s;
            s.split = split;
            s.mesh = load_mesh((fs::path(dir) / mpath).string());
            s.stack = load_stack((fs::path(dir) / spath).string());
            ds.samples.push_back(std::move(s));
        }
    }
    ds.config = GeneratorConfig::from_kv(kv);
    return ds;
}

} // namespace probsurf

#pragma once

#include "probsurf/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace probsurf {

using Vec3 = Eigen::Vector3d;
using Face = std::array<int, 3>;

/**
 * Triangular surface with fixed connectivity. Vertex coordinates are world
 * millimetres. Within a dataset every mesh shares the same face table, so the
 * flattened coordinate vector (x1, y1, z1, x2, ...) of length 3V is the unit the
 * shape model works on.
 */
struct Mesh
{
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    /// Optional per-vertex RGB in [0,1]; empty or one entry per vertex.
    std::vector<Vec3> colors;

    std::size_t num_vertices() const { return vertices.size(); }

    Eigen::VectorXd flatten() const
    {
        Eigen::VectorXd y(3 * vertices.size());
        for (std::size_t i = 0; i < vertices.size(); ++i)
            y.segment<3>(3 * i) = vertices[i];
        return y;
    }

    static Mesh from_flat(const Eigen::VectorXd& y, std::vector<Face> faces)
    {
        require(y.size() % 3 == 0, "flattened mesh length must be a multiple of 3");
        Mesh m;
        m.vertices.resize(static_cast<std::size_t>(y.size() / 3));
        for (std::size_t i = 0; i < m.vertices.size(); ++i)
            m.vertices[i] = y.segment<3>(3 * i);
        m.faces = std::move(faces);
        return m;
    }

    Vec3 centroid() const
    {
        Vec3 c = Vec3::Zero();
        for (const auto& v : vertices)
            c += v;
        return vertices.empty() ? c : Vec3(c / static_cast<double>(vertices.size()));
    }

    void translate(const Vec3& d)
    {
        for (auto& v : vertices)
            v += d;
    }

    /// Throws if any face references a vertex out of range.
    void validate() const
    {
        const int nv = static_cast<int>(vertices.size());
        for (std::size_t f = 0; f < faces.size(); ++f)
            for (int idx : faces[f])
                if (idx < 0 || idx >= nv)
                    throw ConfigError("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                                      " but mesh has " + std::to_string(nv) + " vertices");
        if (!colors.empty() && colors.size() != vertices.size())
            throw ConfigError("color count does not match vertex count");
    }
};

/// Signed enclosed volume (divergence theorem); positive for outward-oriented faces.
inline double signed_volume(const Mesh& m)
{
    double vol = 0.0;
    for (const auto& f : m.faces)
        vol += m.vertices[f[0]].dot(m.vertices[f[1]].cross(m.vertices[f[2]]));
    return vol / 6.0;
}

// Text mesh format: "v x y z", optional "c r g b" (one per vertex, in order),
// "f i j k" with 1-based indices. Reals are written with 9 significant digits.

inline std::string format_real(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

inline void write_mesh(std::ostream& os, const Mesh& m)
{
    m.validate();
    for (const auto& v : m.vertices)
        os << "v " << format_real(v.x()) << ' ' << format_real(v.y()) << ' ' << format_real(v.z()) << '\n';
    for (const auto& c : m.colors)
        os << "c " << format_real(c.x()) << ' ' << format_real(c.y()) << ' ' << format_real(c.z()) << '\n';
    for (const auto& f : m.faces)
        os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

inline Mesh read_mesh(std::istream& is)
{
    Mesh m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line))
    {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v" || tag == "c")
        {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z()))
                throw IoError("malformed '" + tag + "' record on line " + std::to_string(lineno));
            (tag == "v" ? m.vertices : m.colors).push_back(p);
        }
        else if (tag == "f")
        {
            Face f;
            if (!(ls >> f[0] >> f[1] >> f[2]))
                throw IoError("malformed face record on line " + std::to_string(lineno));
            for (int& i : f)
                --i;
            m.faces.push_back(f);
        }
        else
        {
            throw IoError("unknown record '" + tag + "' on line " + std::to_string(lineno));
        }
    }
    try
    {
        m.validate();
    }
    catch (const ConfigError& e)
    {
        throw IoError(e.what());
    }
    return m;
}

inline void save_mesh(const std::string& path, const Mesh& m)
{
    std::ofstream os(path);
    if (!os)
        throw IoError("cannot open " + path + " for writing");
    write_mesh(os, m);
    if (!os)
        throw IoError("write failed: " + path);
}

inline Mesh load_mesh(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open " + path);
    return read_mesh(is);
}

/// Blue (0) through white (0.5) to red (1).
inline Vec3 heat_color(double t)
{
    t = std::clamp(t, 0.0, 1.0);
    if (t < 0.5)
        return {2.0 * t, 2.0 * t, 1.0};
    return {1.0, 2.0 * (1.0 - t), 2.0 * (1.0 - t)};
}

} // namespace probsurf

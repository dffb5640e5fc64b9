#pragma once

#include "probsurf/error.hpp"
#include "probsurf/mesh.hpp"

#include <cmath>
#include <map>
#include <utility>

namespace probsurf {

/// Unit icosphere with outward-facing (counter-clockwise) triangles; level 0 is the icosahedron.
inline Mesh make_icosphere(int level)
{
    require(level >= 0 && level <= 7, "icosphere subdivision level must be in [0, 7]");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    Mesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : m.vertices)
        v.normalize();
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
               {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
               {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int it = 0; it < level; ++it)
    {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto found = midpoint.find(key);
            if (found != midpoint.end())
                return found->second;
            const int idx = static_cast<int>(m.vertices.size());
            m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<Face> next;
        next.reserve(m.faces.size() * 4);
        for (const auto& f : m.faces)
        {
            const int a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
            next.push_back({f[0], a, c});
            next.push_back({f[1], b, a});
            next.push_back({f[2], c, b});
            next.push_back({a, b, c});
        }
        m.faces = std::move(next);
    }
    return m;
}

} // namespace probsurf

#pragma once

#include "probsurf/align.hpp"
#include "probsurf/error.hpp"
#include "probsurf/mesh.hpp"
#include "probsurf/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace probsurf {

/// Static 3-d tree for nearest-neighbour distance queries.
class KdTree
{
public:
    explicit KdTree(std::vector<Vec3> pts) : points_(std::move(pts))
    {
        require(!points_.empty(), "cannot build a search tree on an empty point set");
        order_.resize(points_.size());
        std::iota(order_.begin(), order_.end(), 0);
        nodes_.reserve(points_.size());
        root_ = build(0, points_.size(), 0);
    }

    double nearest_distance(const Vec3& q) const
    {
        double best = std::numeric_limits<double>::infinity();
        search(root_, q, best);
        return std::sqrt(best);
    }

private:
    struct Node
    {
        int point;
        int axis;
        int left = -1;
        int right = -1;
    };

    int build(std::size_t lo, std::size_t hi, int depth)
    {
        if (lo >= hi)
            return -1;
        const int axis = depth % 3;
        const std::size_t mid = (lo + hi) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(hi),
                         [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back({order_[mid], axis});
        const int l = build(lo, mid, depth + 1);
        const int r = build(mid + 1, hi, depth + 1);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    void search(int id, const Vec3& q, double& best) const
    {
        if (id < 0)
            return;
        const Node& n = nodes_[id];
        const Vec3& p = points_[n.point];
        best = std::min(best, (p - q).squaredNorm());
        const double diff = q[n.axis] - p[n.axis];
        const int near = diff < 0.0 ? n.left : n.right;
        const int far = diff < 0.0 ? n.right : n.left;
        search(near, q, best);
        if (diff * diff < best)
            search(far, q, best);
    }

    std::vector<Vec3> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

namespace detail {

inline std::vector<double> directed_distances(const std::vector<Vec3>& from, const std::vector<Vec3>& to)
{
    const KdTree tree(to);
    std::vector<double> d(from.size());
    for (std::size_t i = 0; i < from.size(); ++i)
        d[i] = tree.nearest_distance(from[i]);
    return d;
}

} // namespace detail

/// Symmetric Hausdorff distance between two point sets (mm).
inline double hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b)
{
    require(!a.empty() && !b.empty(), "Hausdorff distance needs two non-empty point sets");
    const auto dab = detail::directed_distances(a, b);
    const auto dba = detail::directed_distances(b, a);
    return std::max(*std::max_element(dab.begin(), dab.end()), *std::max_element(dba.begin(), dba.end()));
}

/// Average symmetric surface distance (mm).
inline double assd(const std::vector<Vec3>& a, const std::vector<Vec3>& b)
{
    require(!a.empty() && !b.empty(), "ASSD needs two non-empty point sets");
    const auto dab = detail::directed_distances(a, b);
    const auto dba = detail::directed_distances(b, a);
    const double sum = std::accumulate(dab.begin(), dab.end(), 0.0) + std::accumulate(dba.begin(), dba.end(), 0.0);
    return sum / static_cast<double>(a.size() + b.size());
}

struct DiceResult
{
    double value = 0.0;
    bool both_empty = false;
};

/// 2|A & B| / (|A| + |B|) on identical grids; both empty is reported as 1 with a flag.
inline DiceResult dice_checked(const VoxelVolume& a, const VoxelVolume& b)
{
    if (!(a.grid == b.grid))
        throw ConfigError("DICE requires identical grid geometry; resample with dice_resampled()");
    std::size_t inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.occupancy.size(); ++i)
    {
        na += a.occupancy[i];
        nb += b.occupancy[i];
        inter += a.occupancy[i] & b.occupancy[i];
    }
    if (na + nb == 0)
        return {1.0, true};
    return {2.0 * static_cast<double>(inter) / static_cast<double>(na + nb), false};
}

inline double dice(const VoxelVolume& a, const VoxelVolume& b) { return dice_checked(a, b).value; }

/// DICE after embedding both volumes in their union grid (same spacing required).
inline double dice_resampled(const VoxelVolume& a, const VoxelVolume& b)
{
    const GridGeometry g = union_grid(a.grid, b.grid);
    return dice(embed(a, g), embed(b, g));
}

/// Signed relative volume difference in percent: 100 (|pred| - |ref|) / |ref|.
inline double ravd(const VoxelVolume& pred, const VoxelVolume& ref)
{
    const std::size_t nr = ref.count();
    if (nr == 0)
        throw ConfigError("RAVD is undefined for an empty reference volume");
    const double vp = pred.volume_mm3();
    const double vr = ref.volume_mm3();
    return 100.0 * (vp - vr) / vr;
}

struct MeanStd
{
    double mean = 0.0;
    double std = 0.0; // sample standard deviation (n - 1); 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& v)
{
    MeanStd out;
    if (v.empty())
        return out;
    out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1)
    {
        double ss = 0.0;
        for (double x : v)
            ss += (x - out.mean) * (x - out.mean);
        out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return out;
}

/**
 * Mean and spread of pairwise DICE across shapes: every mesh is put in its
 * canonical principal-axis pose, all are voxelized on one grid covering the
 * union of their bounds, and DICE is averaged over all unordered pairs.
 */
inline MeanStd dice_pair(const std::vector<Mesh>& meshes, double spacing)
{
    require(meshes.size() >= 2, "DICE_pair needs at least two meshes");
    const auto aligned = align_pca(meshes);
    Vec3 lo, hi, l, h;
    mesh_bounds(aligned.front(), lo, hi);
    for (const auto& m : aligned)
    {
        mesh_bounds(m, l, h);
        lo = lo.cwiseMin(l);
        hi = hi.cwiseMax(h);
    }
    const GridGeometry grid = grid_covering(lo, hi, spacing, 1);
    std::vector<VoxelVolume> vols;
    vols.reserve(aligned.size());
    for (const auto& m : aligned)
        vols.push_back(voxelize_on(m, grid));
    std::vector<double> d;
    for (std::size_t i = 0; i < vols.size(); ++i)
        for (std::size_t j = i + 1; j < vols.size(); ++j)
            d.push_back(dice(vols[i], vols[j]));
    return mean_std(d);
}

struct CaseMetrics
{
    std::string name;
    double dice = 0.0;
    double hd = 0.0;   // mm
    double assd = 0.0; // mm
    double ravd = 0.0; // percent, signed
};

/// Volumetric and surface metrics for one prediction against its reference, on a shared grid.
inline CaseMetrics evaluate_case(const Mesh& pred, const Mesh& ref, double spacing, std::string name = {})
{
    const GridGeometry grid = union_grid(grid_for_mesh(pred, spacing, 1), grid_for_mesh(ref, spacing, 1));
    const VoxelVolume vp = voxelize_on(pred, grid);
    const VoxelVolume vr = voxelize_on(ref, grid);
    CaseMetrics c;
    c.name = std::move(name);
    c.dice = dice(vp, vr);
    const auto sp = extract_surface_voxels(vp);
    const auto sr = extract_surface_voxels(vr);
    c.hd = hausdorff(sp, sr);
    c.assd = assd(sp, sr);
    c.ravd = ravd(vp, vr);
    return c;
}

struct EvalReport
{
    std::vector<CaseMetrics> cases;
    double spacing = 0.0;
    std::optional<MeanStd> dice_pair;

    MeanStd aggregate(double CaseMetrics::*field) const
    {
        std::vector<double> v;
        for (const auto& c : cases)
            v.push_back(c.*field);
        return mean_std(v);
    }
};

/// Column order of the delimited report.
inline constexpr const char* kReportColumns = "case,dice,hd_mm,assd_mm,ravd_pct";

inline void write_report_csv(std::ostream& os, const EvalReport& r)
{
    os << kReportColumns << '\n';
    for (const auto& c : r.cases)
        os << c.name << ',' << format_real(c.dice) << ',' << format_real(c.hd) << ',' << format_real(c.assd) << ','
           << format_real(c.ravd) << '\n';
}

inline void write_report_table(std::ostream& os, const EvalReport& r)
{
    char buf[256];
    os << "voxel spacing: " << format_real(r.spacing) << " mm (union bounding-box grid per case)\n";
    std::snprintf(buf, sizeof(buf), "%-12s %8s %10s %10s %10s\n", "case", "DICE", "HD(mm)", "ASSD(mm)", "RAVD(%)");
    os << buf;
    for (const auto& c : r.cases)
    {
        std::snprintf(buf, sizeof(buf), "%-12s %8.4f %10.3f %10.3f %10.2f\n", c.name.c_str(), c.dice, c.hd, c.assd,
                      c.ravd);
        os << buf;
    }
    const auto d = r.aggregate(&CaseMetrics::dice), h = r.aggregate(&CaseMetrics::hd),
               a = r.aggregate(&CaseMetrics::assd), v = r.aggregate(&CaseMetrics::ravd);
    std::snprintf(buf, sizeof(buf), "%-12s %.4f+-%.4f  %.3f+-%.3f  %.3f+-%.3f  %.2f+-%.2f\n", "mean+-std", d.mean, d.std,
                  h.mean, h.std, a.mean, a.std, v.mean, v.std);
    os << buf;
    if (r.dice_pair)
    {
        std::snprintf(buf, sizeof(buf), "DICE_pair    %.4f+-%.4f\n", r.dice_pair->mean, r.dice_pair->std);
        os << buf;
    }
}

} // namespace probsurf

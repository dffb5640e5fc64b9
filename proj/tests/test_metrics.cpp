#include "probsurf/metrics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <sstream>

using namespace probsurf;
using probsurf::testing::blob;
using probsurf::testing::box_mesh;
using probsurf::testing::random_rotation;

namespace {

std::vector<Vec3> random_points(Rng& rng, int n, double scale = 10.0)
{
    std::vector<Vec3> p;
    for (int i = 0; i < n; ++i)
        p.emplace_back(scale * standard_normal(rng), scale * standard_normal(rng), scale * standard_normal(rng));
    return p;
}

std::vector<double> brute_directed(const std::vector<Vec3>& from, const std::vector<Vec3>& to)
{
    std::vector<double> d;
    for (const auto& a : from)
    {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : to)
            best = std::min(best, (a - b).norm());
        d.push_back(best);
    }
    return d;
}

double brute_hd(const std::vector<Vec3>& a, const std::vector<Vec3>& b)
{
    const auto ab = brute_directed(a, b), ba = brute_directed(b, a);
    return std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba.begin(), ba.end()));
}

double brute_assd(const std::vector<Vec3>& a, const std::vector<Vec3>& b)
{
    double s = 0.0;
    for (double d : brute_directed(a, b))
        s += d;
    for (double d : brute_directed(b, a))
        s += d;
    return s / static_cast<double>(a.size() + b.size());
}

Mesh translated(Mesh m, const Vec3& t)
{
    for (auto& v : m.vertices)
        v += t;
    return m;
}

Mesh transformed(Mesh m, const Eigen::Matrix3d& r, const Vec3& t)
{
    for (auto& v : m.vertices)
        v = r * v + t;
    return m;
}

} // namespace

TEST(SurfaceDistance, MatchesBruteForce)
{
    Rng rng(1);
    for (int trial = 0; trial < 40; ++trial)
    {
        const int na = 1 + static_cast<int>(rng() % 200), nb = 1 + static_cast<int>(rng() % 200);
        auto a = random_points(rng, na);
        auto b = random_points(rng, nb, 5.0);
        if (trial % 5 == 0)
            a.insert(a.end(), a.begin(), a.begin() + na / 2); // duplicates
        if (trial % 7 == 0)
            for (auto& p : b)
                p.z() = 0.0; // coplanar
        EXPECT_NEAR(hausdorff(a, b), brute_hd(a, b), 1e-12) << "trial " << trial;
        EXPECT_NEAR(assd(a, b), brute_assd(a, b), 1e-12) << "trial " << trial;
    }
}

TEST(SurfaceDistance, LatticePointsWithManyTies)
{
    std::vector<Vec3> a, b;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            for (int k = 0; k < 6; ++k)
            {
                a.emplace_back(i, j, k);
                b.emplace_back(i + 0.5, j + 0.5, k);
            }
    EXPECT_NEAR(hausdorff(a, b), brute_hd(a, b), 1e-12);
    EXPECT_NEAR(assd(a, b), brute_assd(a, b), 1e-12);
}

TEST(SurfaceDistance, KnownValues)
{
    const std::vector<Vec3> a{Vec3::Zero()}, b{Vec3(3.0, 4.0, 0.0)};
    EXPECT_DOUBLE_EQ(hausdorff(a, b), 5.0);
    EXPECT_DOUBLE_EQ(assd(a, b), 5.0);
    const std::vector<Vec3> c{Vec3::Zero(), Vec3(10.0, 0.0, 0.0)}, d{Vec3::Zero()};
    EXPECT_DOUBLE_EQ(hausdorff(c, d), 10.0);
    EXPECT_DOUBLE_EQ(assd(c, d), 10.0 / 3.0);
    EXPECT_THROW(hausdorff({}, d), ConfigError);
    EXPECT_THROW(assd(c, {}), ConfigError);
}

TEST(SurfaceDistance, SymmetricAndHausdorffBoundsAssd)
{
    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial)
    {
        const auto a = random_points(rng, 50), b = random_points(rng, 80);
        EXPECT_DOUBLE_EQ(hausdorff(a, b), hausdorff(b, a));
        EXPECT_NEAR(assd(a, b), assd(b, a), 1e-12);
        EXPECT_GE(hausdorff(a, b), assd(a, b));
        EXPECT_EQ(hausdorff(a, a), 0.0);
        EXPECT_EQ(assd(a, a), 0.0);
    }
}

TEST(SurfaceDistance, InvariantUnderRigidMotion)
{
    Rng rng(3);
    const auto a = random_points(rng, 60), b = random_points(rng, 70);
    const Eigen::Matrix3d r = random_rotation(rng);
    const Vec3 t(4.0, -9.0, 2.5);
    std::vector<Vec3> ra, rb;
    for (const auto& p : a)
        ra.push_back(r * p + t);
    for (const auto& p : b)
        rb.push_back(r * p + t);
    EXPECT_NEAR(hausdorff(ra, rb), hausdorff(a, b), 1e-9);
    EXPECT_NEAR(assd(ra, rb), assd(a, b), 1e-9);
}

TEST(Dice, HalfOverlappingBoxes)
{
    // Faces on half-integers: each box covers exactly 10 voxel centres per axis.
    const Mesh a = box_mesh(Vec3(0.5, 0.5, 0.5), Vec3(10.5, 10.5, 10.5));
    const Mesh b = box_mesh(Vec3(5.5, 0.5, 0.5), Vec3(15.5, 10.5, 10.5));
    const CaseMetrics m = evaluate_case(b, a, 1.0, "shifted");
    EXPECT_DOUBLE_EQ(m.dice, 0.5);
    EXPECT_DOUBLE_EQ(m.ravd, 0.0);
    EXPECT_EQ(m.name, "shifted");
    const CaseMetrics same = evaluate_case(a, a, 1.0);
    EXPECT_EQ(same.dice, 1.0);
    EXPECT_EQ(same.hd, 0.0);
    EXPECT_EQ(same.assd, 0.0);
    EXPECT_EQ(same.ravd, 0.0);
}

TEST(Dice, DisjointAndEmptyAndGridMismatch)
{
    VoxelVolume a;
    a.grid.dims = Eigen::Vector3i(4, 4, 4);
    a.occupancy.assign(a.grid.size(), 0);
    VoxelVolume b = a;
    const DiceResult both = dice_checked(a, b);
    EXPECT_EQ(both.value, 1.0);
    EXPECT_TRUE(both.both_empty);
    a.occupancy[0] = 1;
    b.occupancy[5] = 1;
    EXPECT_EQ(dice(a, b), 0.0);
    EXPECT_FALSE(dice_checked(a, b).both_empty);

    VoxelVolume c = a;
    c.grid.first = Eigen::Vector3i(1, 0, 0);
    EXPECT_THROW(dice(a, c), ConfigError);
    // a voxel (0,0,0) at x=0; c voxel (0,0,0) at x=1: no overlap after resampling.
    EXPECT_EQ(dice_resampled(a, c), 0.0);
    VoxelVolume d = a;
    d.grid.first = Eigen::Vector3i(-2, 0, 0);
    d.grid.dims = Eigen::Vector3i(6, 4, 4);
    d.occupancy.assign(d.grid.size(), 0);
    d.occupancy[d.index(2, 0, 0)] = 1;
    EXPECT_EQ(dice_resampled(a, d), 1.0);
}

TEST(Ravd, SignsAndValues)
{
    const Mesh ref = box_mesh(Vec3(0.5, 0.5, 0.5), Vec3(10.5, 10.5, 10.5));
    const Mesh big = box_mesh(Vec3(0.5, 0.5, 0.5), Vec3(10.5, 10.5, 12.5));
    const Mesh small = box_mesh(Vec3(0.5, 0.5, 0.5), Vec3(10.5, 10.5, 8.5));
    EXPECT_NEAR(evaluate_case(big, ref, 1.0).ravd, 20.0, 1e-12);
    EXPECT_NEAR(evaluate_case(small, ref, 1.0).ravd, -20.0, 1e-12);
    VoxelVolume empty;
    empty.occupancy.assign(1, 0);
    EXPECT_THROW(ravd(empty, empty), ConfigError);
}

TEST(CaseMetricsTest, SymmetricExceptRavd)
{
    const Mesh a = blob(4), b = translated(blob(5), Vec3(0.7, -0.3, 0.2));
    const CaseMetrics ab = evaluate_case(a, b, 1.0), ba = evaluate_case(b, a, 1.0);
    EXPECT_DOUBLE_EQ(ab.dice, ba.dice);
    EXPECT_DOUBLE_EQ(ab.hd, ba.hd);
    EXPECT_NEAR(ab.assd, ba.assd, 1e-12);
    EXPECT_GE(ab.hd, ab.assd);
    EXPECT_GT(ab.dice, 0.0);
    EXPECT_LT(ab.dice, 1.0);
    // (|a| - |b|) / |b| and (|b| - |a|) / |a| have opposite signs.
    EXPECT_LT(ab.ravd * ba.ravd, 0.0);
}

TEST(CaseMetricsTest, WholeVoxelTranslationIsExact)
{
    const Mesh a = blob(6), b = blob(7);
    const Vec3 t(3.0, -2.0, 5.0);
    const CaseMetrics m = evaluate_case(a, b, 1.0);
    const CaseMetrics mt = evaluate_case(translated(a, t), translated(b, t), 1.0);
    EXPECT_EQ(m.dice, mt.dice);
    EXPECT_NEAR(m.hd, mt.hd, 1e-12);
    EXPECT_NEAR(m.assd, mt.assd, 1e-12);
    EXPECT_EQ(m.ravd, mt.ravd);
}

TEST(CaseMetricsTest, ApproximatelyInvariantUnderRigidMotion)
{
    Rng rng(8);
    const Mesh a = blob(6), b = translated(blob(7), Vec3(1.0, 0.5, 0.0));
    const CaseMetrics m = evaluate_case(a, b, 0.5);
    for (int trial = 0; trial < 3; ++trial)
    {
        const Eigen::Matrix3d r = random_rotation(rng);
        const Vec3 t(uniform(rng, -20, 20), uniform(rng, -20, 20), uniform(rng, -20, 20));
        const CaseMetrics mt = evaluate_case(transformed(a, r, t), transformed(b, r, t), 0.5);
        EXPECT_NEAR(mt.dice, m.dice, 0.02);
        EXPECT_NEAR(mt.assd, m.assd, 0.25);
        EXPECT_NEAR(mt.ravd, m.ravd, 2.0);
    }
}

TEST(MeanStdTest, SampleStandardDeviation)
{
    const MeanStd a = mean_std({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(a.mean, 2.5);
    EXPECT_DOUBLE_EQ(a.std, std::sqrt(5.0 / 3.0));
    const MeanStd one = mean_std({7.0});
    EXPECT_EQ(one.mean, 7.0);
    EXPECT_EQ(one.std, 0.0);
    const MeanStd none = mean_std({});
    EXPECT_EQ(none.mean, 0.0);
}

TEST(EvalReportTest, AggregatesAndCsvLayout)
{
    EvalReport r;
    r.spacing = 1.5;
    r.cases.push_back({"a", 0.8, 4.0, 1.0, 5.0});
    r.cases.push_back({"b", 0.6, 6.0, 2.0, -15.0});
    EXPECT_DOUBLE_EQ(r.aggregate(&CaseMetrics::dice).mean, 0.7);
    EXPECT_DOUBLE_EQ(r.aggregate(&CaseMetrics::hd).std, std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(r.aggregate(&CaseMetrics::ravd).mean, -5.0);
    std::ostringstream csv;
    write_report_csv(csv, r);
    EXPECT_EQ(csv.str(), "case,dice,hd_mm,assd_mm,ravd_pct\na,0.8,4,1,5\nb,0.6,6,2,-15\n");
    r.dice_pair = MeanStd{0.9, 0.01};
    std::ostringstream table;
    write_report_table(table, r);
    EXPECT_NE(table.str().find("mean+-std    0.7000+-0.1414"), std::string::npos) << table.str();
    EXPECT_NE(table.str().find("DICE_pair    0.9000+-0.0100"), std::string::npos);
}

TEST(DicePair, IdenticalShapesScoreOne)
{
    const Mesh m = blob(9);
    const MeanStd same = dice_pair({m, m, m}, 1.0);
    EXPECT_EQ(same.mean, 1.0);
    EXPECT_EQ(same.std, 0.0);

    Rng rng(10);
    const Mesh moved = transformed(m, random_rotation(rng), Vec3(30.0, -4.0, 11.0));
    EXPECT_GT(dice_pair({m, moved}, 1.0).mean, 0.97);
    EXPECT_THROW(dice_pair({m}, 1.0), ConfigError);
}

TEST(DicePair, DifferentShapesScoreBelowOne)
{
    const MeanStd d = dice_pair({blob(1), blob(2), blob(3)}, 1.0);
    EXPECT_LT(d.mean, 1.0);
    EXPECT_GT(d.mean, 0.5);
    EXPECT_GT(d.std, 0.0);
}

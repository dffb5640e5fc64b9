#include "probsurf/config.hpp"
#include "probsurf/mesh.hpp"
#include "probsurf/prob_model.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <sys/wait.h>

using namespace probsurf;
namespace fs = std::filesystem;

namespace {

struct RunResult
{
    int code = -1;
    std::string err;
};

const fs::path& root()
{
    static const fs::path p = [] {
        fs::path d = fs::temp_directory_path() / "probsurf_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

RunResult cli(const std::string& args)
{
    const fs::path err = root() / "stderr.txt";
    const std::string cmd = std::string("\"") + PROBSURF_CLI_PATH + "\" " + args + " > /dev/null 2> \"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

std::string dir(const std::string& name) { return (root() / name).string(); }

// Shared small pipeline: dataset, prior and a briefly trained encoder.
class CliPipeline : public ::testing::Test
{
protected:
    static void SetUpTestSuite()
    {
        ASSERT_EQ(cli("generate --out " + dir("data") + " --num-train 12 --num-val 2 --num-test 3 --height 16 --width 16 "
                      "--pixel-size 3.6538")
                      .code,
                  0);
        ASSERT_EQ(cli("fit-prior --dataset " + dir("data") + " --out " + dir("prior") + " --k 4").code, 0);
        ASSERT_EQ(cli("train --dataset " + dir("data") + " --prior " + dir("prior") + "/prior --out " + dir("model") +
                      " --k 4 --steps 30 --learning-rate 1e-3")
                      .code,
                  0);
    }

    static std::string model_args()
    {
        return "--weights " + dir("model") + "/weights.final --prior " + dir("prior") + "/prior";
    }
};

double spearman(const std::vector<double>& a, const std::vector<double>& b)
{
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
            r[idx[i]] = static_cast<double>(i);
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n - 1.0) / 2.0;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i)
    {
        sab += (ra[i] - mean) * (rb[i] - mean);
        saa += (ra[i] - mean) * (ra[i] - mean);
        sbb += (rb[i] - mean) * (rb[i] - mean);
    }
    return sab / std::sqrt(saa * sbb);
}

} // namespace

TEST(Cli, InvalidModeCountIsConfigError)
{
    const RunResult r = cli("generate --out " + dir("bad") + " --num-modes 0");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("num_modes"), std::string::npos) << r.err;
}

TEST(Cli, UnknownKeyAndMissingVerb)
{
    EXPECT_EQ(cli("generate --out " + dir("bad") + " --set colour=blue").code, 2);
    EXPECT_EQ(cli("").code, 2);
    EXPECT_EQ(cli("train --dataset " + dir("data") + " --steps many").code, 2);
}

TEST(Cli, MissingInputIsIoError)
{
    const RunResult r = cli("fit-prior --dataset " + dir("does_not_exist") + " --out " + dir("p2"));
    EXPECT_EQ(r.code, 4);
    EXPECT_NE(r.err.find("does_not_exist"), std::string::npos) << r.err;
}

TEST(Cli, ConfigFileAndOverrides)
{
    const fs::path cfg = root() / "gen.config";
    std::ofstream(cfg) << "# tiny\nnum_train=2\nnum_val=1\nnum_test=1\nheight=8\nwidth=8\nseed=3\n";
    ASSERT_EQ(cli("generate --config " + cfg.string() + " --set seed=4 --out " + dir("cfgdata")).code, 0);
    const KeyValues kv = load_kv(dir("cfgdata") + "/run.config");
    EXPECT_EQ(kv.at("seed"), "4");
    EXPECT_EQ(kv.at("num_train"), "2");
    EXPECT_EQ(kv.at("height"), "8");
    EXPECT_EQ(kv.at("out"), dir("cfgdata"));
}

TEST(Cli, GenerateIsReproducible)
{
    const std::string args = " --num-train 3 --num-val 1 --num-test 1 --height 8 --width 8 --seed 11";
    ASSERT_EQ(cli("generate --out " + dir("g1") + args).code, 0);
    ASSERT_EQ(cli("generate --out " + dir("g2") + args).code, 0);
    EXPECT_EQ(slurp(dir("g1") + "/manifest"), slurp(dir("g2") + "/manifest"));
    EXPECT_EQ(slurp(dir("g1") + "/coeffs"), slurp(dir("g2") + "/coeffs"));
    EXPECT_EQ(slurp(dir("g1") + "/stacks/0004"), slurp(dir("g2") + "/stacks/0004"));
}

TEST_F(CliPipeline, EveryOutputDirectoryHasRunConfig)
{
    for (const char* d : {"data", "prior", "model"})
        EXPECT_TRUE(fs::exists(root() / d / "run.config")) << d;
    const KeyValues kv = load_kv(dir("model") + "/run.config");
    EXPECT_EQ(kv.at("steps"), "30");
    EXPECT_EQ(kv.at("k"), "4");
    EXPECT_NO_THROW(RunConfig::from_kv(kv).validate());
    EXPECT_TRUE(fs::exists(root() / "model" / "loss.log"));
}

TEST_F(CliPipeline, PredictWritesMeshesAndLogDet)
{
    ASSERT_EQ(cli("predict " + model_args() + " --dataset " + dir("data") + " --out " + dir("pred")).code, 0);
    EXPECT_TRUE(fs::exists(root() / "pred" / "run.config"));
    for (const char* c : {"0014", "0015", "0016"})
    {
        const Mesh mean = load_mesh(dir("pred") + "/" + c + ".mean.mesh");
        const Mesh heat = load_mesh(dir("pred") + "/" + c + ".heat.mesh");
        EXPECT_EQ(mean.num_vertices(), heat.num_vertices());
        EXPECT_EQ(heat.colors.size(), heat.num_vertices());
        std::ifstream ld(dir("pred") + "/" + c + ".logdet");
        std::string header;
        std::getline(ld, header);
        EXPECT_EQ(header, "vertex log_det rescaled");
    }
    ASSERT_EQ(cli("predict " + model_args() + " " + dir("data") + "/stacks/0000 --out " + dir("pred_one")).code, 0);
    EXPECT_TRUE(fs::exists(root() / "pred_one" / "0000.mean.mesh"));
}

TEST_F(CliPipeline, EvaluateSelfScoresPerfectly)
{
    const std::string ref = dir("data") + "/meshes/0015";
    ASSERT_EQ(cli("evaluate --pred " + ref + " --ref " + ref + " --eval-spacing 1.5 --out " + dir("self")).code, 0);
    std::ifstream csv(dir("self") + "/report.csv");
    std::string header, row;
    std::getline(csv, header);
    std::getline(csv, row);
    EXPECT_EQ(header, "case,dice,hd_mm,assd_mm,ravd_pct");
    EXPECT_EQ(row, "0015,1,0,0,0");
    EXPECT_TRUE(fs::exists(root() / "self" / "report.txt"));
    EXPECT_TRUE(fs::exists(root() / "self" / "run.config"));
}

TEST_F(CliPipeline, EvaluatePredictionDirectory)
{
    ASSERT_EQ(cli("predict " + model_args() + " --dataset " + dir("data") + " --out " + dir("pred_eval")).code, 0);
    ASSERT_EQ(cli("evaluate --dataset " + dir("data") + " --pred-dir " + dir("pred_eval") + " --dice-pair --out " +
                  dir("eval"))
                  .code,
              0);
    std::ifstream csv(dir("eval") + "/report.csv");
    int rows = -1;
    for (std::string l; std::getline(csv, l);)
        ++rows;
    EXPECT_EQ(rows, 3);
    EXPECT_NE(slurp(dir("eval") + "/report.txt").find("DICE_pair"), std::string::npos);
    EXPECT_EQ(cli("evaluate --pred " + dir("data") + "/meshes/0000 --out " + dir("eval_bad")).code, 2);
}

TEST_F(CliPipeline, SampleCountZeroWritesNothing)
{
    ASSERT_EQ(cli("sample " + model_args() + " --stack " + dir("data") + "/stacks/0014 --count 0 --out " + dir("s0")).code,
              0);
    std::size_t meshes = 0;
    for (const auto& e : fs::directory_iterator(root() / "s0"))
        meshes += e.path().extension() == ".mesh";
    EXPECT_EQ(meshes, 0u);
    EXPECT_EQ(cli("sample " + model_args() + " --stack x --count -1 --out " + dir("s1")).code, 2);
}

TEST_F(CliPipeline, SampleSpreadTracksPredictedLogDet)
{
    const int n = 1000;
    ASSERT_EQ(cli("sample " + model_args() + " --stack " + dir("data") + "/stacks/0014 --count " + std::to_string(n) +
                  " --seed 9 --out " + dir("samples"))
                  .code,
              0);
    ASSERT_EQ(cli("predict " + model_args() + " " + dir("data") + "/stacks/0014 --out " + dir("pred_s")).code, 0);
    std::vector<Mesh> draws;
    for (int i = 0; i < n; ++i)
    {
        char name[32];
        std::snprintf(name, sizeof(name), "/sample_%04d.mesh", i);
        draws.push_back(load_mesh(dir("samples") + name));
    }
    const std::size_t nv = draws[0].num_vertices();
    std::vector<double> empirical, predicted;
    for (std::size_t v = 0; v < nv; ++v)
    {
        Vec3 m = Vec3::Zero();
        for (const auto& d : draws)
            m += d.vertices[v];
        m /= n;
        Eigen::Matrix3d c = Eigen::Matrix3d::Zero();
        for (const auto& d : draws)
            c += (d.vertices[v] - m) * (d.vertices[v] - m).transpose();
        c /= n - 1;
        empirical.push_back(std::log(c.determinant()));
    }
    std::ifstream ld(dir("pred_s") + "/0014.logdet");
    std::string header;
    std::getline(ld, header);
    for (std::size_t v = 0; v < nv; ++v)
    {
        int idx;
        double value, rescaled;
        ld >> idx >> value >> rescaled;
        predicted.push_back(value);
    }
    const double rho = spearman(empirical, predicted);
    EXPECT_GT(rho, 0.8);
    // Different seeds give different draws; the same seed reproduces them.
    ASSERT_EQ(cli("sample " + model_args() + " --stack " + dir("data") + "/stacks/0014 --count 2 --seed 9 --out " +
                  dir("samples_again"))
                  .code,
              0);
    EXPECT_EQ(slurp(dir("samples") + "/sample_0001.mesh"), slurp(dir("samples_again") + "/sample_0001.mesh"));
    EXPECT_NE(slurp(dir("samples") + "/sample_0000.mesh"), slurp(dir("samples") + "/sample_0001.mesh"));
}

TEST_F(CliPipeline, DegradeSweepTable)
{
    ASSERT_EQ(cli("degrade-sweep " + model_args() + " --dataset " + dir("data") + " --levels 0,1 --out " + dir("sweep"))
                  .code,
              0);
    std::ifstream csv(dir("sweep") + "/sweep.csv");
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "level,case,mean_log_det,manifold_residual_mm,dice,assd_mm");
    int rows = 0;
    for (std::string l; std::getline(csv, l);)
    {
        ++rows;
        std::stringstream ss(l);
        std::vector<std::string> cols;
        for (std::string c; std::getline(ss, c, ',');)
            cols.push_back(c);
        ASSERT_EQ(cols.size(), 6u);
        EXPECT_LT(std::stod(cols[3]), 1e-6);
    }
    EXPECT_EQ(rows, 6);
    EXPECT_EQ(cli("degrade-sweep " + model_args() + " --dataset " + dir("data") + " --levels 2 --out " + dir("sweep2"))
                  .code,
              2);
}

TEST_F(CliPipeline, TrainRejectsTooManyComponents)
{
    const RunResult r = cli("train --dataset " + dir("data") + " --prior " + dir("prior") + "/prior --out " +
                            dir("model_bad") + " --k 9 --steps 1");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("k = 9"), std::string::npos) << r.err;
}

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string kCli = QCFOLD_CLI_PATH;
const std::string kConfigs = std::string(QCFOLD_SOURCE_DIR) + "/configs/";

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("qcfold_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    return p;
}

int run(const std::string& args, const std::string& env = "") {
    std::string cmd = env + (env.empty() ? "" : " ") + kCli + " " + args + " > /dev/null 2>&1";
    int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string value_of(const std::string& report, const std::string& key) {
    std::istringstream in(report);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(key + " = ", 0) == 0) return line.substr(key.size() + 3);
    return "";
}

void expect_same_tree(const fs::path& a, const fs::path& b) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
    ASSERT_FALSE(names.empty());
    for (const auto& n : names) {
        ASSERT_TRUE(fs::exists(b / n)) << n;
        EXPECT_EQ(slurp(a / n), slurp(b / n)) << n;
    }
}

}  // namespace

TEST(Cli, VerifyDiskMapsExample) {
    auto out = scratch("vdm");
    ASSERT_EQ(run("verify-disk-maps --config " + kConfigs + "verify_disk_maps.cfg --out " + out.string()), 0);
    std::string rep = slurp(out / "verify-disk-maps.txt");
    EXPECT_LT(std::stod(value_of(rep, "max_dilatation")), 0.8);
    EXPECT_TRUE(fs::exists(out / "verify-disk-maps.csv"));
    EXPECT_NE(slurp(out / "verify-disk-maps.log").find("result = PASS"), std::string::npos);
}

TEST(Cli, SolveBeltramiRadialOracle) {
    auto out = scratch("sb");
    ASSERT_EQ(run("solve-beltrami --config " + kConfigs + "radial_oracle.cfg --out " + out.string()), 0);
    std::string rep = slurp(out / "solve-beltrami.txt");
    ASSERT_FALSE(value_of(rep, "sup_error").empty());
    EXPECT_LE(std::stod(value_of(rep, "sup_error")), 1e-3);
}

TEST(Cli, ConstructToyThreeLevels) {
    auto out = scratch("con");
    ASSERT_EQ(run("construct --config " + kConfigs + "construct_toy.cfg --out " + out.string()), 0);
    std::istringstream csv(slurp(out / "construct.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "k,n,p,C,m1,m2,m3,inclusion,exclusion,permissible");
    int rows = 0;
    while (std::getline(csv, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        ASSERT_EQ(f.size(), 10u) << line;
        for (int c : {4, 5, 6}) {
            EXPECT_NE(f[c][0], '-') << line;
            EXPECT_NE(f[c], "0") << line;
        }
        EXPECT_EQ(f[7], "1");
        EXPECT_EQ(f[8], "1");
        ++rows;
    }
    EXPECT_EQ(rows, 2);
}

// one passing run, one induced check failure and one config error per command
TEST(Cli, ExitStatusContract) {
    auto out = scratch("contract").string();
    struct Case {
        std::string args;
        int expected;
    };
    const std::vector<Case> cases = {
        {"verify-disk-maps", 0},
        {"verify-disk-maps --set disk.m=3 --set disk.delta=0.5", 2},
        {"verify-disk-maps --set disk.m=1", 1},
        {"verify-disk-maps --set disk.grid=100", 1},
        {"solve-beltrami --set beltrami.N=256 --set beltrami.oracle_tol=1e-2", 0},
        {"solve-beltrami --set beltrami.N=128 --set beltrami.oracle_tol=1e-9", 2},
        {"solve-beltrami --set beltrami.N=100", 1},
        {"budget", 0},
        {"budget --set lambda=abc", 1},
        {"budget --set budget.n_max=0", 1},
        {"construct --set disp_grid=128", 0},
        {"construct --set disp_grid=128 --set dist_override=1e3", 2},
        {"construct --set mode=fast", 1},
        {"audit --set disp_grid=128", 0},
        {"audit --set disp_grid=128 --set levels=2", 2},
        {"audit --set disp_ms=", 1},
        {"render --set render.width=40 --set render.height=30", 0},
        {"render --set render.x1=-5", 1},
        {"budget --set unknown.key=1", 1},
        {"budget --set version=2", 1},
        {"budget --set lambda", 1},
        {"budget --config /nonexistent/file.cfg", 1},
        {"no-such-command", 1},
        {"", 1},
    };
    for (const auto& c : cases)
        EXPECT_EQ(run(c.args + (c.args.empty() || c.args == "no-such-command" ? "" : " --out " + out)), c.expected)
            << c.args;
}

TEST(Cli, RandomUnknownKeysAreRejected) {
    std::mt19937_64 rng(7);
    const std::string alphabet = "abcdefghijklmnopqrstuvwxyz._";
    for (int t = 0; t < 20; ++t) {
        std::string key = "x";
        int len = 3 + int(rng() % 10);
        for (int i = 0; i < len; ++i) key += alphabet[rng() % alphabet.size()];
        auto out = scratch("unknown");
        fs::create_directories(out);
        std::ofstream(out / "c.cfg") << "lambda = 20\n" << key << " = 1\n";
        EXPECT_EQ(run("budget --config " + (out / "c.cfg").string() + " --out " + out.string()), 1) << key;
    }
}

TEST(Cli, RandomCertifiedDiskParametersPass) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    auto out = scratch("randdisk").string();
    for (int t = 0; t < 6; ++t) {
        long long m = (long long)std::llround(std::exp(std::log(100.0) + u(rng) * std::log(100.0)));
        double delta = std::exp(std::log(1e-4) + u(rng) * std::log(600.0));
        std::ostringstream args;
        args.precision(17);
        args << "verify-disk-maps --out " << out << " --set disk.m=" << m << " --set disk.delta=" << delta
             << " --set disk.fd_points=200 --set disk.grid=256";
        EXPECT_EQ(run(args.str()), 0) << args.str();
    }
}

TEST(Cli, RerunsAreByteIdentical) {
    const std::string cmds[] = {
        "render --config " + kConfigs + "render.cfg --set render.width=160 --set render.height=120",
        "construct --set disp_grid=128",
        "budget --set budget.n_max=30",
        "verify-disk-maps --set disk.fd_points=300",
    };
    for (const auto& c : cmds) {
        auto a = scratch("rerun_a"), b = scratch("rerun_b"), t1 = scratch("rerun_t1");
        ASSERT_EQ(run(c + " --out " + a.string()), 0) << c;
        ASSERT_EQ(run(c + " --out " + b.string()), 0) << c;
        ASSERT_EQ(run(c + " --out " + t1.string(), "QCFOLD_THREADS=1"), 0) << c;
        expect_same_tree(a, b);
        expect_same_tree(a, t1);
    }
}

TEST(Cli, RenderWritesPortablePixmap) {
    auto out = scratch("ppm");
    ASSERT_EQ(run("render --set render.width=31 --set render.height=17 --out " + out.string()), 0);
    std::string img = slurp(out / "render.ppm");
    const std::string header = "P6\n31 17\n255\n";
    ASSERT_EQ(img.substr(0, header.size()), header);
    EXPECT_EQ(img.size(), header.size() + 31u * 17u * 3u);
}

TEST(Cli, ConfigReferenceListsEveryKey) {
    auto out = scratch("ref");
    fs::create_directories(out);
    std::string cmd = kCli + " --config-reference > " + (out / "ref.md").string();
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    std::string ref = slurp(out / "ref.md");
    for (const char* k : {"`seed`", "`disk.m`", "`beltrami.N`", "`mode`", "`render.bailout`", "`disp_ms`"})
        EXPECT_NE(ref.find(k), std::string::npos) << k;
    EXPECT_EQ(ref, slurp(std::string(QCFOLD_SOURCE_DIR) + "/docs/config_reference.md"));
}

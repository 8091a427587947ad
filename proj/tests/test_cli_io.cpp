#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>
#include <vector>

#include "kolambert/cli_app.hpp"
#include "kolambert/model_cache.hpp"
#include "kolambert/scenario.hpp"
#include "kolambert/svg_plot.hpp"

using namespace kolambert;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("kolambert_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string str(const std::string& leaf = "") const {
        return leaf.empty() ? path.string() : (path / leaf).string();
    }
};

std::string write_file(const TempDir& dir, const std::string& name, const std::string& text) {
    const std::string p = dir.str(name);
    std::ofstream out(p);
    out << text;
    return p;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int run(std::vector<std::string> args) {
    std::vector<char*> argv;
    args.insert(args.begin(), "kolambert");
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

const char* kCurtisConfig =
    "[gravity]\n"
    "j2_enabled = false\n"
    "[problem]\n"
    "r0 = 5000 10000 2100\n"
    "rf = -14600 2500 7000\n"
    "tof = 3600\n";

}  // namespace

TEST_CASE("config parsing") {
    SUBCASE("defaults and fields") {
        const ScenarioConfig cfg = parse_config_text(kCurtisConfig);
        CHECK(cfg.gravity.mu == doctest::Approx(398600.4418));
        CHECK_FALSE(cfg.gravity.j2_enabled);
        CHECK(cfg.effective_order() == 1);
        CHECK((*cfg.r0 - Vector3d(5000, 10000, 2100)).norm() == 0.0);
        CHECK(*cfg.tof == 3600.0);
        ScenarioConfig j2 = cfg;
        j2.gravity.j2_enabled = true;
        CHECK(j2.effective_order() == 3);
    }
    SUBCASE("missing required field is named") {
        ScenarioConfig cfg = parse_config_text("[problem]\nr0 = 1 2 3\ntof = 10\n");
        try {
            cfg.problem();
            FAIL("expected UsageError");
        } catch (const UsageError& e) {
            CHECK(std::string(e.what()).find("rf") != std::string::npos);
        }
    }
    SUBCASE("unknown keys are rejected") {
        CHECK_THROWS_AS(parse_config_text("[problem]\nwarp_factor = 9\n"), UsageError);
    }
    SUBCASE("flag overrides win over file values") {
        ScenarioConfig cfg = parse_config_text(kCurtisConfig);
        cli::Overrides ov;
        ov.j2 = "on";
        ov.order = 2;
        ov.revolutions = 1;
        cli::apply(cfg, ov);
        CHECK(cfg.gravity.j2_enabled);
        CHECK(cfg.effective_order() == 2);
        CHECK(cfg.revolutions == 1);
    }
    SUBCASE("hash changes with the configuration") {
        const ScenarioConfig a = parse_config_text(kCurtisConfig);
        ScenarioConfig b = a;
        b.gravity.j2_enabled = true;
        CHECK(config_hash(a) != config_hash(b));
        CHECK(config_hash(a) == config_hash(parse_config_text(kCurtisConfig)));
    }
}

TEST_CASE("propagation samples export as CSV") {
    TempDir dir;
    GravityModel g;
    const CartesianState state{Vector3d(8000.0, 0.0, 2000.0), Vector3d(0.5, 6.9, 1.0)};
    const PropagationResult res = propagate_numeric(state, 600.0, g, IntegratorConfig{}, true);
    REQUIRE(res.samples.size() > 2);
    const CsvTable table = samples_to_csv_table(res.samples);
    CHECK(table.header.front() == "t_s");
    CHECK(table.rows.size() == res.samples.size());
    const std::string path = dir.str("samples.csv");
    write_csv(path, table, "# test");
    const std::string text = read_file(path);
    CHECK(text.find("t_s,x_km") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') ==
          static_cast<long>(res.samples.size()) + 2);
}

TEST_CASE("model cache round trip is exact") {
    TempDir dir;
    const ScenarioConfig cfg = parse_config_text(kCurtisConfig);
    const DomainBox box = cfg.domain_box();
    const KoopmanModel model = build_element_model(cfg.gravity, 1, box);
    const std::uint64_t key = model_cache_key(cfg, box);
    const std::string path = dir.str("model.kolm");
    save_model(model, key, path);
    const KoopmanModel loaded = load_model(key, path);
    CHECK((loaded.K - model.K).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.P - model.P).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.A - model.A).cwiseAbs().maxCoeff() == 0.0);
    CHECK(loaded.diagonalizable == model.diagonalizable);
    // identical solve results through the cache
    const LambertProblem problem = cfg.problem();
    const TransferSolution a = solve(problem, model);
    const TransferSolution b = solve(problem, loaded);
    CHECK((a.v0 - b.v0).norm() <= 1e-12);
    // corruption is detected
    {
        std::ofstream out(path, std::ios::binary | std::ios::in);
        out.seekp(3);
        out.put('X');
    }
    CHECK_THROWS_AS(load_model(key, path), CacheError);
    CHECK_THROWS_AS(load_model(key + 1, dir.str("missing.kolm")), CacheError);
}

TEST_CASE("solve command writes reports and is byte-deterministic") {
    TempDir dir;
    const std::string out1 = dir.str("a");
    const std::string out2 = dir.str("b");
    const std::string config = write_file(
        dir, "case.cfg", std::string(kCurtisConfig) + "[output]\ndirectory = " + out1 + "\n");
    setenv("KOLAMBERT_CACHE_DIR", dir.str("cache").c_str(), 1);
    CHECK(run({"solve", "--config", config}) == 0);
    CHECK(fs::exists(out1 + "/solution.csv"));
    CHECK(fs::exists(out1 + "/trajectory.csv"));
    // a second run, cache warm, different directory: identical CSV bytes
    CHECK(run({"solve", "--config", config, "--out", out2}) == 0);
    CHECK(read_file(out1 + "/solution.csv") == read_file(out2 + "/solution.csv"));
    CHECK(read_file(out1 + "/trajectory.csv") == read_file(out2 + "/trajectory.csv"));
    const std::string solution = read_file(out1 + "/solution.csv");
    CHECK(solution.rfind("# kolambert", 0) == 0);  // provenance comment first
    CHECK(solution.find("tof_s,revolutions") != std::string::npos);
    CHECK(solution.find(",1\n") != std::string::npos);  // converged flag
    unsetenv("KOLAMBERT_CACHE_DIR");
}

TEST_CASE("build-model caches and reuses the model") {
    TempDir dir;
    const std::string config = write_file(
        dir, "case.cfg",
        std::string(kCurtisConfig) + "[output]\ndirectory = " + dir.str("out") + "\n");
    setenv("KOLAMBERT_CACHE_DIR", dir.str("cache").c_str(), 1);
    const auto builds_before = koopman_build_counter().load();
    CHECK(run({"build-model", "--config", config}) == 0);
    CHECK(koopman_build_counter().load() == builds_before + 1);
    CHECK(run({"build-model", "--config", config}) == 0);
    CHECK(koopman_build_counter().load() == builds_before + 1);  // cache hit
    CHECK(fs::exists(dir.str("out") + "/eigenvalues.csv"));
    // m = 9 for the order-1 model: provenance + header + 9 rows
    const std::string eig = read_file(dir.str("out") + "/eigenvalues.csv");
    CHECK(std::count(eig.begin(), eig.end(), '\n') == 11);
    unsetenv("KOLAMBERT_CACHE_DIR");
}

TEST_CASE("usage and resource-cap exit codes") {
    TempDir dir;
    setenv("KOLAMBERT_CACHE_DIR", dir.str("cache").c_str(), 1);
    SUBCASE("missing rf in the config file") {
        const std::string config =
            write_file(dir, "bad.cfg", "[problem]\nr0 = 1 2 3\ntof = 10\n");
        CHECK(run({"solve", "--config", config}) == kExitUsage);
    }
    SUBCASE("unknown flag value") {
        const std::string config = write_file(dir, "case.cfg", kCurtisConfig);
        CHECK(run({"solve", "--config", config, "--j2", "sideways"}) == kExitUsage);
    }
    SUBCASE("large model is refused without the flag") {
        const std::string config = write_file(
            dir, "case.cfg",
            std::string(kCurtisConfig) +
                "[basis]\norder = 7\ncap = 10000\n[output]\ndirectory = " + dir.str("out") + "\n");
        CHECK(run({"build-model", "--config", config}) == kExitResourceCap);
    }
    unsetenv("KOLAMBERT_CACHE_DIR");
}

TEST_CASE("scan command emits a complete CSV and a well-formed plot") {
    TempDir dir;
    const std::string out = dir.str("out");
    const std::string config = write_file(
        dir, "scan.cfg", std::string(kCurtisConfig) + "[output]\ndirectory = " + out + "\n");
    setenv("KOLAMBERT_CACHE_DIR", dir.str("cache").c_str(), 1);
    CHECK(run({"scan", "--config", config, "--tof-min", "3000", "--tof-max", "4200", "--steps",
               "5"}) == 0);
    const std::string csv = read_file(out + "/scan.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2 + 5);  // provenance + header + 5 rows
    const std::string svg = read_file(out + "/scan.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.rfind("</svg>") != std::string::npos);
    // one polyline per series
    std::size_t polylines = 0, at = 0;
    while ((at = svg.find("<polyline", at)) != std::string::npos) {
        ++polylines;
        at += 9;
    }
    CHECK(polylines == 1);
    // marker present on the argmin
    CHECK(svg.find("<circle") != std::string::npos);
    unsetenv("KOLAMBERT_CACHE_DIR");
}

TEST_CASE("compare command reproduces the miss-distance ladder") {
    TempDir dir;
    const std::string out = dir.str("out");
    const std::string config = write_file(
        dir, "cmp.cfg", std::string(kCurtisConfig) + "[output]\ndirectory = " + out + "\n");
    setenv("KOLAMBERT_CACHE_DIR", dir.str("cache").c_str(), 1);
    CHECK(run({"compare", "--config", config}) == 0);
    const std::string csv = read_file(out + "/compare.csv");
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // provenance
    std::getline(in, line);  // header
    double miss[4] = {0, 0, 0, 0};
    for (int i = 0; i < 4; ++i) {
        REQUIRE(std::getline(in, line).good());
        std::istringstream row(line);
        std::string source, world, value;
        std::getline(row, source, ',');
        std::getline(row, world, ',');
        std::getline(row, value, ',');
        miss[i] = std::stod(value);
    }
    CHECK(miss[0] <= 1e-9);                                       // universal, two-body world
    CHECK(miss[1] == doctest::Approx(7.81).epsilon(0.5 / 7.81));  // universal, J2 world
    CHECK(miss[2] <= 0.01);                                       // spectral two-body solution
    CHECK(miss[3] < miss[1]);                                     // J2-aware spectral beats it
    unsetenv("KOLAMBERT_CACHE_DIR");
}

#include <cstdlib>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "ribreg/io.hpp"
#include "ribreg/registration.hpp"
#include "test_helpers.hpp"

using namespace ribreg;
using testutil::TempDir;

namespace {

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& args, const TempDir& scratch) {
    const std::string out_path = scratch.file("stdout.txt");
    const std::string err_path = scratch.file("stderr.txt");
    const std::string cmd =
        std::string(RIBREG_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
    const int rc = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = io::read_file(out_path);
    r.err = io::read_file(err_path);
    return r;
}

// The default configuration, written out so runs also exercise --config.
std::string write_default_config(const TempDir& dir) {
    const std::string path = dir.file("run.cfg");
    io::write_config(io::RunConfig{}, path);
    return path;
}

}  // namespace

TEST_CASE("cli synth is deterministic for a fixed seed") {
    TempDir dir("cli_synth");
    const auto a = run_cli("synth --seed 7 --out " + dir.file("a"), dir);
    REQUIRE(a.exit_code == 0);
    const auto b = run_cli("synth --seed 7 --out " + dir.file("b"), dir);
    REQUIRE(b.exit_code == 0);
    for (const char* name : {"cage.ply", "deformed.ply", "manifest.json"})
        CHECK(io::read_file(dir.file("a/") + name) == io::read_file(dir.file("b/") + name));
}

TEST_CASE("cli synth rejects out-of-range deformation scales") {
    TempDir dir("cli_synth_bad");
    const auto r = run_cli("synth --scale-x 2.0 --out " + dir.file("out"), dir);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("scale") != std::string::npos);
}

TEST_CASE("cli synth emits five labeled bands") {
    TempDir dir("cli_synth_bands");
    REQUIRE(run_cli("synth --seed 3 --out " + dir.file("out"), dir).exit_code == 0);
    const PointCloud cage = io::read_point_cloud(dir.file("out/cage.ply"));
    REQUIRE(cage.has_labels());
    std::array<int, 6> counts{};
    for (int lab : cage.labels) ++counts[lab];
    CHECK(counts[geometry::kLabelSternum] > 0);
    for (int level = 2; level <= 5; ++level) CHECK(counts[level] > 0);
}

TEST_CASE("cli downsample writes the requested count") {
    TempDir dir("cli_down");
    REQUIRE(run_cli("synth --seed 5 --out " + dir.file("s"), dir).exit_code == 0);
    const auto r = run_cli("downsample --in " + dir.file("s/cage.ply") + " --count 200 --out " +
                               dir.file("d"),
                           dir);
    REQUIRE(r.exit_code == 0);
    CHECK(io::read_point_cloud(dir.file("d/downsampled.ply")).size() == 200);
}

TEST_CASE("cli skeleton produces the documented default stage sizes") {
    TempDir dir("cli_skel");
    REQUIRE(run_cli("synth --seed 11 --out " + dir.file("s"), dir).exit_code == 0);
    const auto r =
        run_cli("skeleton --in " + dir.file("s/cage.ply") + " --out " + dir.file("k"), dir);
    REQUIRE(r.exit_code == 0);
    CHECK(io::read_point_cloud(dir.file("k/som_stage1.ply")).size() == 400);
    CHECK(io::read_point_cloud(dir.file("k/som_stage2.ply")).size() == 40);
    const std::string edges = io::read_file(dir.file("k/mst_edges.csv"));
    CHECK(std::count(edges.begin(), edges.end(), '\n') == 40);  // header + 39 edges
    CHECK(io::read_point_cloud(dir.file("k/resampled.ply")).size() == 30);
}

TEST_CASE("cli skeleton warns and caps the grid on tiny clouds") {
    TempDir dir("cli_skel_tiny");
    REQUIRE(run_cli("synth --seed 2 --out " + dir.file("s"), dir).exit_code == 0);
    REQUIRE(run_cli("downsample --in " + dir.file("s/cage.ply") + " --count 20 --out " +
                        dir.file("d"),
                    dir)
                .exit_code == 0);
    const auto r = run_cli(
        "skeleton --in " + dir.file("d/downsampled.ply") + " --out " + dir.file("k"), dir);
    CHECK(r.err.find("capped") != std::string::npos);
    CHECK((r.exit_code == 0 || r.exit_code == 3));
}

TEST_CASE("cli skeleton on an unreadable path exits 2") {
    TempDir dir("cli_skel_bad");
    const auto r = run_cli("skeleton --in /no/such/file.ply --out " + dir.file("k"), dir);
    CHECK(r.exit_code == 2);
}

TEST_CASE("cli register graph of a cloud onto itself is exact and deterministic") {
    TempDir dir("cli_reg_self");
    const std::string cfg = write_default_config(dir);
    REQUIRE(run_cli("synth --seed 13 --out " + dir.file("s"), dir).exit_code == 0);
    const std::string cage = dir.file("s/cage.ply");

    const auto a = run_cli("register --source " + cage + " --target " + cage +
                               " --method graph --config " + cfg + " --out " + dir.file("a"),
                           dir);
    REQUIRE(a.exit_code == 0);
    const std::string report = io::read_file(dir.file("a/report.json"));
    CHECK(report.find("\"method\": \"graph\"") != std::string::npos);
    const double ed = std::stod(report.substr(report.find("ed_mean_mm") + 12));
    CHECK(ed < 1e-6);

    const auto b = run_cli("register --source " + cage + " --target " + cage +
                               " --method graph --config " + cfg + " --out " + dir.file("b"),
                           dir);
    REQUIRE(b.exit_code == 0);
    for (const char* name :
         {"warped.ply", "report.json", "correspondence.csv", "manifest.json"})
        CHECK(io::read_file(dir.file("a/") + name) == io::read_file(dir.file("b/") + name));
}

TEST_CASE("cli register icp and graph write comparable reports") {
    TempDir dir("cli_reg_both");
    const std::string cfg = write_default_config(dir);
    REQUIRE(run_cli("synth --seed 17 --deform-seed 4 --out " + dir.file("s"), dir).exit_code == 0);
    const std::string src = dir.file("s/cage.ply");
    const std::string tgt = dir.file("s/deformed.ply");

    const auto icp = run_cli("register --source " + src + " --target " + tgt +
                                 " --method icp --plot-csv --out " + dir.file("icp"),
                             dir);
    REQUIRE(icp.exit_code == 0);
    const auto graph = run_cli("register --source " + src + " --target " + tgt +
                                   " --method graph --config " + cfg + " --plot-csv --out " +
                                   dir.file("graph"),
                               dir);
    REQUIRE(graph.exit_code == 0);

    for (const char* sub : {"icp", "graph"}) {
        const std::string report = io::read_file(dir.file(std::string(sub) + "/report.json"));
        for (const char* key : {"ed_mean_mm", "ed_stddev_mm", "hausdorff_mm", "point_count"})
            CHECK(report.find(key) != std::string::npos);
        const std::string plot = io::read_file(dir.file(std::string(sub) + "/plot.csv"));
        CHECK(plot.rfind("method,distance_mm", 0) == 0);
    }
    CHECK(io::read_file(dir.file("icp/manifest.json")).find("transform.json") !=
          std::string::npos);
}

TEST_CASE("cli register rejects unknown methods") {
    TempDir dir("cli_reg_bad");
    REQUIRE(run_cli("synth --seed 19 --out " + dir.file("s"), dir).exit_code == 0);
    const auto r = run_cli("register --source " + dir.file("s/cage.ply") + " --target " +
                               dir.file("s/cage.ply") + " --method nope --out " + dir.file("o"),
                           dir);
    CHECK(r.exit_code == 2);
}

TEST_CASE("cli evaluate reports zero on identical clouds") {
    TempDir dir("cli_eval");
    REQUIRE(run_cli("synth --seed 23 --out " + dir.file("s"), dir).exit_code == 0);
    const auto r = run_cli("evaluate --moved " + dir.file("s/cage.ply") + " --target " +
                               dir.file("s/cage.ply") + " --out " + dir.file("e"),
                           dir);
    REQUIRE(r.exit_code == 0);
    const std::string report = io::read_file(dir.file("e/report.json"));
    CHECK(report.find("\"ed_mean_mm\": 0.0") != std::string::npos);
}

TEST_CASE("cli transfer: identity, ground-truth errors, missing correspondence") {
    TempDir dir("cli_transfer");
    const std::string cfg = write_default_config(dir);
    REQUIRE(run_cli("synth --seed 29 --deform-seed 6 --out " + dir.file("s"), dir).exit_code == 0);
    const std::string cage = dir.file("s/cage.ply");

    // Identity correspondence from registering the cage onto itself.
    REQUIRE(run_cli("register --source " + cage + " --target " + cage +
                        " --method graph --config " + cfg + " --out " + dir.file("self"),
                    dir)
                .exit_code == 0);
    const auto identity = run_cli("transfer --waypoints " + dir.file("self/waypoints_source.csv") +
                                      " --correspondence " + dir.file("self/correspondence.csv") +
                                      " --out " + dir.file("t1"),
                                  dir);
    REQUIRE(identity.exit_code == 0);
    const auto before = registration::read_waypoints_csv(dir.file("self/waypoints_source.csv"));
    const auto after = registration::read_waypoints_csv(dir.file("t1/waypoints_transferred.csv"));
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < after.size(); ++i)
        CHECK((after[i].position - before[i].position).norm() < 1e-5);

    // Against the deformed cage with ground truth: a 10-row error table.
    REQUIRE(run_cli("register --source " + cage + " --target " + dir.file("s/deformed.ply") +
                        " --method graph --config " + cfg + " --out " + dir.file("pair"),
                    dir)
                .exit_code == 0);
    const auto with_truth =
        run_cli("transfer --waypoints " + dir.file("pair/waypoints_source.csv") +
                    " --correspondence " + dir.file("pair/correspondence.csv") + " --truth-field " +
                    dir.file("s/deform_field.json") + " --out " + dir.file("t2"),
                dir);
    REQUIRE(with_truth.exit_code == 0);
    const std::string errors = io::read_file(dir.file("t2/waypoint_errors.csv"));
    CHECK(std::count(errors.begin(), errors.end(), '\n') == 11);  // header + 10 waypoints

    // Missing correspondence file is a pipeline failure.
    const auto missing = run_cli("transfer --waypoints " + dir.file("pair/waypoints_source.csv") +
                                     " --correspondence /no/such/corr.csv --out " + dir.file("t3"),
                                 dir);
    CHECK(missing.exit_code == 3);
}

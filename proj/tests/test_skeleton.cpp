#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "ribreg/io.hpp"
#include "ribreg/rng.hpp"
#include "ribreg/skeleton.hpp"
#include "ribreg/synth.hpp"
#include "test_helpers.hpp"

using namespace ribreg;
using namespace ribreg::skeleton;
using testutil::oracle::brute_force_hull;
using testutil::oracle::kruskal_total_weight;
using testutil::oracle::sorted_sum;

namespace {

// Decode a Pruefer sequence into tree edges (labels 0..n-1).
std::vector<std::pair<int, int>> pruefer_decode(const std::vector<int>& seq, int n) {
    std::vector<int> degree(n, 1);
    for (int v : seq) ++degree[v];
    std::vector<std::pair<int, int>> edges;
    std::set<int> leaves;
    for (int v = 0; v < n; ++v)
        if (degree[v] == 1) leaves.insert(v);
    std::vector<int> rest = seq;
    for (int v : rest) {
        const int leaf = *leaves.begin();
        leaves.erase(leaves.begin());
        edges.emplace_back(leaf, v);
        if (--degree[v] == 1) leaves.insert(v);
    }
    const int a = *leaves.begin();
    const int b = *std::next(leaves.begin());
    edges.emplace_back(a, b);
    return edges;
}

// Minimum spanning tree weight by enumerating every labeled tree.
double enumerate_all_trees_min_weight(const PointCloud& pts) {
    const int n = static_cast<int>(pts.size());
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> seq(n - 2, 0);
    while (true) {
        std::vector<double> ws;
        for (const auto& [a, b] : pruefer_decode(seq, n))
            ws.push_back((pts.points[a] - pts.points[b]).norm());
        best = std::min(best, sorted_sum(ws));
        int pos = n - 3;
        while (pos >= 0 && seq[pos] == n - 1) seq[pos--] = 0;
        if (pos < 0) break;
        ++seq[pos];
    }
    return best;
}

std::vector<int> dfs_path_oracle(const SkeletonGraph& g, int a, int b) {
    std::vector<int> path{a};
    std::vector<char> seen(g.vertices.size(), 0);
    seen[a] = 1;
    while (path.back() != b) {
        bool advanced = false;
        for (int w : g.adjacency[path.back()]) {
            if (seen[w]) continue;
            // Advance only along the branch that still reaches b.
            std::vector<char> mark = seen;
            std::vector<int> stack{w};
            mark[w] = 1;
            bool reaches = false;
            while (!stack.empty()) {
                const int v = stack.back();
                stack.pop_back();
                if (v == b) {
                    reaches = true;
                    break;
                }
                for (int u : g.adjacency[v])
                    if (!mark[u]) {
                        mark[u] = 1;
                        stack.push_back(u);
                    }
            }
            if (reaches) {
                seen[w] = 1;
                path.push_back(w);
                advanced = true;
                break;
            }
        }
        REQUIRE(advanced);
    }
    return path;
}

double turn_angle_deg(const Point3& a, const Point3& b, const Point3& c) {
    const Point3 u = b - a, v = c - b;
    const double cosv = std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0);
    return std::acos(cosv) * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("build_mst minimal cases") {
    PointCloud two;
    two.append(Point3(0, 0, 0));
    two.append(Point3(1, 1, 1));
    const SkeletonGraph g = build_mst(two);
    REQUIRE(g.edges.size() == 1);
    CHECK(g.edges[0].weight == doctest::Approx(std::sqrt(3.0)));

    PointCloud one;
    one.append(Point3::Zero());
    CHECK_THROWS_AS(build_mst(one), TooFewPoints);
}

TEST_CASE("build_mst collinear chain vs full tree enumeration") {
    PointCloud pts;
    for (double x : {0.0, 1.0, 2.0, 4.0}) pts.append(Point3(x, 0, 0));
    const SkeletonGraph g = build_mst(pts);
    REQUIRE(g.edges.size() == 3);

    std::multiset<double> weights;
    for (const auto& e : g.edges) weights.insert(e.weight);
    CHECK(weights == std::multiset<double>{1.0, 1.0, 2.0});
    CHECK(g.total_weight() == doctest::Approx(4.0));

    CHECK(enumerate_all_trees_min_weight(pts) == doctest::Approx(4.0));
}

TEST_CASE("build_mst equals the Kruskal oracle on random instances") {
    auto eng = rng::make_engine(41);
    for (int round = 0; round < 20; ++round) {
        PointCloud pts = testutil::random_cloud(40, eng);
        const SkeletonGraph g = build_mst(pts);
        std::vector<double> ws;
        for (const auto& e : g.edges) ws.push_back(e.weight);
        CHECK(sorted_sum(ws) == kruskal_total_weight(pts));
    }
}

TEST_CASE("build_mst total weight is invariant under input permutation") {
    auto eng = rng::make_engine(42);
    PointCloud pts = testutil::random_cloud(35, eng);
    std::vector<double> base;
    for (const auto& e : build_mst(pts).edges) base.push_back(e.weight);

    std::vector<int> perm(pts.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (int round = 0; round < 5; ++round) {
        rng::shuffle(perm, eng);
        PointCloud shuffled;
        for (int idx : perm) shuffled.append(pts.points[idx]);
        std::vector<double> ws;
        for (const auto& e : build_mst(shuffled).edges) ws.push_back(e.weight);
        CHECK(sorted_sum(ws) == sorted_sum(base));
    }
}

TEST_CASE("convex hull of a tetrahedron plus centroid") {
    PointCloud pts;
    pts.append(Point3(0, 0, 0));
    pts.append(Point3(10, 0, 0));
    pts.append(Point3(0, 10, 0));
    pts.append(Point3(0, 0, 10));
    pts.append(Point3(2.5, 2.5, 2.5));  // centroid, interior
    CHECK(convex_hull_vertices(pts) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("convex hull of a cube with interior points") {
    PointCloud pts;
    for (int i = 0; i < 8; ++i)
        pts.append(Point3(i & 1 ? 10 : 0, i & 2 ? 10 : 0, i & 4 ? 10 : 0));
    auto eng = rng::make_engine(43);
    for (int i = 0; i < 10; ++i)
        pts.append(Point3(rng::uniform(eng, 1, 9), rng::uniform(eng, 1, 9),
                          rng::uniform(eng, 1, 9)));
    CHECK(convex_hull_vertices(pts) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("convex hull equals the brute-force oracle on random instances") {
    auto eng = rng::make_engine(44);
    for (int round = 0; round < 15; ++round) {
        PointCloud pts = testutil::random_cloud(10 + static_cast<int>(rng::below(eng, 31)), eng);
        CHECK(convex_hull_vertices(pts) == brute_force_hull(pts));
    }
}

TEST_CASE("convex hull planar fallback and collinear error") {
    auto eng = rng::make_engine(45);
    PointCloud flat;
    flat.append(Point3(0, 0, 5));
    flat.append(Point3(10, 0, 5));
    flat.append(Point3(10, 10, 5));
    flat.append(Point3(0, 10, 5));
    for (int i = 0; i < 12; ++i)
        flat.append(Point3(rng::uniform(eng, 1, 9), rng::uniform(eng, 1, 9), 5));
    CHECK(convex_hull_vertices(flat) == std::vector<int>{0, 1, 2, 3});

    PointCloud line;
    for (int i = 0; i < 8; ++i) line.append(Point3(i, 2 * i, 3 * i));
    CHECK_THROWS_AS(convex_hull_vertices(line), DegenerateInput);
}

TEST_CASE("pair_endpoints identity") {
    const EndpointTemplate tmpl = synth::generate_cage(synth::CageSpec{}).second.endpoints;
    PointCloud candidate;
    for (const auto& e : tmpl.endpoints) candidate.append(e.position);

    const EndpointPairs pairs = pair_endpoints(candidate, tmpl);
    for (int level = 2; level <= 5; ++level) {
        const auto& got = pairs.level(level);
        const Point3 left = tmpl.find(level, geometry::Side::Left).position;
        const Point3 right = tmpl.find(level, geometry::Side::Right).position;
        CHECK((candidate.points[got.left] - left).norm() < 1e-9);
        CHECK((candidate.points[got.right] - right).norm() < 1e-9);
    }
}

TEST_CASE("pair_endpoints recovers labels under a rigid transform with spurious vertices") {
    const EndpointTemplate tmpl = synth::generate_cage(synth::CageSpec{}).second.endpoints;
    auto eng = rng::make_engine(46);
    const RigidTransform t = testutil::random_rigid(eng, 30.0);

    PointCloud candidate;
    for (const auto& e : tmpl.endpoints) candidate.append(t(e.position));
    // Two spurious hull vertices, well separated from every endpoint.
    candidate.append(t(Point3(0, 90, 60)));
    candidate.append(t(Point3(0, 95, -60)));

    const EndpointPairs pairs = pair_endpoints(candidate, tmpl);
    for (int level = 2; level <= 5; ++level) {
        const auto& got = pairs.level(level);
        CHECK((candidate.points[got.left] - t(tmpl.find(level, geometry::Side::Left).position))
                  .norm() < 1e-6);
        CHECK((candidate.points[got.right] - t(tmpl.find(level, geometry::Side::Right).position))
                  .norm() < 1e-6);
    }
}

TEST_CASE("pair_endpoints with a missing endpoint region is ambiguous") {
    const EndpointTemplate tmpl = synth::generate_cage(synth::CageSpec{}).second.endpoints;
    PointCloud candidate;
    for (std::size_t i = 0; i + 1 < tmpl.endpoints.size(); ++i)
        candidate.append(tmpl.endpoints[i].position);
    candidate.append(Point3(0, 200, 0));  // stand-in far from the lost region
    CHECK_THROWS_AS(pair_endpoints(candidate, tmpl), AmbiguousPairing);
}

TEST_CASE("pair_endpoints labeling is equivariant under rigid motion") {
    const EndpointTemplate tmpl = synth::generate_cage(synth::CageSpec{}).second.endpoints;
    PointCloud candidate;
    for (const auto& e : tmpl.endpoints) candidate.append(e.position);
    candidate.append(Point3(0, 80, 70));
    candidate.append(Point3(0, 85, -75));

    const EndpointPairs base = pair_endpoints(candidate, tmpl);
    auto eng = rng::make_engine(47);
    for (int round = 0; round < 5; ++round) {
        const PointCloud moved = geometry::apply_transform(testutil::random_rigid(eng), candidate);
        const EndpointPairs got = pair_endpoints(moved, tmpl);
        for (int level = 2; level <= 5; ++level) {
            CHECK(got.level(level).left == base.level(level).left);
            CHECK(got.level(level).right == base.level(level).right);
        }
    }
}

TEST_CASE("tree_path basics and oracle") {
    PointCloud chain;
    for (int i = 0; i < 4; ++i) chain.append(Point3(i, 0, 0));
    const SkeletonGraph g = build_mst(chain);
    CHECK(tree_path(g, 2, 2) == std::vector<int>{2});
    CHECK(tree_path(g, 0, 3) == std::vector<int>{0, 1, 2, 3});

    auto eng = rng::make_engine(48);
    PointCloud pts = testutil::random_cloud(30, eng);
    const SkeletonGraph tree = build_mst(pts);
    for (int round = 0; round < 20; ++round) {
        const int a = static_cast<int>(rng::below(eng, pts.size()));
        const int b = static_cast<int>(rng::below(eng, pts.size()));
        CHECK(tree_path(tree, a, b) == dfs_path_oracle(tree, a, b));
    }
}

TEST_CASE("continuity filter hand-traced example") {
    const std::vector<Point3> path = {Point3(0, 0, 0), Point3(1, 0, 0), Point3(2, 0, 0),
                                      Point3(2, 1, 0), Point3(3, 0, 0)};
    const auto out = continuity_filter(path, 60.0);
    REQUIRE(out.size() == 4);
    CHECK(out[0] == path[0]);
    CHECK(out[1] == path[1]);
    CHECK(out[2] == path[2]);
    CHECK(out[3] == path[4]);  // the 90 degree detour is dropped
}

TEST_CASE("continuity filter trivial thresholds") {
    std::vector<Point3> straight;
    for (int i = 0; i < 7; ++i) straight.emplace_back(3.0 * i, 0, 0);
    CHECK(continuity_filter(straight, 60.0).size() == straight.size());

    auto eng = rng::make_engine(49);
    std::vector<Point3> wild;
    for (int i = 0; i < 12; ++i)
        wild.emplace_back(rng::uniform(eng, 0, 50), rng::uniform(eng, 0, 50),
                          rng::uniform(eng, 0, 50));
    CHECK(continuity_filter(wild, 180.0).size() == wild.size());
}

TEST_CASE("continuity filter output properties") {
    auto eng = rng::make_engine(50);
    for (int round = 0; round < 25; ++round) {
        std::vector<Point3> path;
        Point3 p = Point3::Zero();
        for (int i = 0; i < 20; ++i) {
            p += Point3(rng::uniform(eng, 2, 6), rng::uniform(eng, -4, 4),
                        rng::uniform(eng, -4, 4));
            path.push_back(p);
        }
        const double t_theta = rng::uniform(eng, 20.0, 120.0);
        const auto out = continuity_filter(path, t_theta);

        // Subsequence of the input.
        std::size_t cursor = 0;
        for (const Point3& q : out) {
            while (cursor < path.size() && (path[cursor] - q).norm() > 0) ++cursor;
            REQUIRE(cursor < path.size());
        }
        CHECK(out.front() == path.front());

        // Every consecutive triplet turns by at most the threshold.
        for (std::size_t i = 2; i < out.size(); ++i)
            CHECK(turn_angle_deg(out[i - 2], out[i - 1], out[i]) <= t_theta + 1e-9);

        // Idempotent.
        const auto twice = continuity_filter(out, t_theta);
        REQUIRE(twice.size() == out.size());
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(twice[i] == out[i]);
    }
}

namespace {

// Hand-built 4-rib ladder: chains along x at four heights, optionally with
// extra vertices. Returns the graph and the endpoint pairs.
std::pair<SkeletonGraph, EndpointPairs> ladder_skeleton(const std::vector<Point3>& extra) {
    PointCloud pts;
    EndpointPairs pairs;
    const double zs[4] = {45, 15, -12, -38};
    for (int rib = 0; rib < 4; ++rib) {
        const int first = static_cast<int>(pts.size());
        for (int i = 0; i < 7; ++i) pts.append(Point3(12.0 * i, 0, zs[rib]));
        pairs.by_level[rib] = {first, first + 6};
    }
    for (const Point3& p : extra) pts.append(p);
    return {build_mst(pts), pairs};
}

}  // namespace

TEST_CASE("extract_rib_paths returns clean chains unfiltered") {
    const auto [graph, pairs] = ladder_skeleton({});
    const RibPathSet paths = extract_rib_paths(graph, pairs, 60.0);
    for (int rib = 0; rib < 4; ++rib) {
        CHECK(paths.raw[rib].size() == 7);
        CHECK(paths.filtered[rib] == paths.raw[rib]);
        CHECK_FALSE(paths.heavy_filter_warning[rib]);
    }
}

TEST_CASE("extract_rib_paths excludes spur vertices") {
    // A spur next to rib 3's third vertex (rib slot 1): close enough that
    // the MST attaches it as a dead end off the chain.
    const auto [graph, pairs] = ladder_skeleton({Point3(24, 5, 15)});
    const RibPathSet paths = extract_rib_paths(graph, pairs, 60.0);
    const int spur_index = 28;  // appended after the 4x7 chain vertices
    for (int rib = 0; rib < 4; ++rib)
        for (int v : paths.raw[rib]) CHECK(v != spur_index);
    CHECK(paths.raw[1].size() == 7);
}

TEST_CASE("extract_rib_paths filters kinks beyond the angular threshold") {
    PointCloud pts;
    EndpointPairs pairs;
    // Rib 2 with a sharp kink mid-path; three clean ribs below.
    const int first = static_cast<int>(pts.size());
    pts.append(Point3(0, 0, 45));
    pts.append(Point3(10, 0, 45));
    pts.append(Point3(13, 8, 45));  // kink vertex: 69 degree turn on entry
    pts.append(Point3(26, 0, 45));
    pts.append(Point3(36, 0, 45));
    pairs.by_level[0] = {first, first + 4};
    const double zs[3] = {15, -12, -38};
    for (int rib = 0; rib < 3; ++rib) {
        const int base = static_cast<int>(pts.size());
        for (int i = 0; i < 4; ++i) pts.append(Point3(12.0 * i, 0, zs[rib]));
        pairs.by_level[rib + 1] = {base, base + 3};
    }
    const SkeletonGraph graph = build_mst(pts);
    const RibPathSet paths = extract_rib_paths(graph, pairs, 60.0);
    REQUIRE(paths.raw[0].size() == 5);
    CHECK(paths.filtered[0].size() == 4);
    for (int v : paths.filtered[0]) CHECK(v != first + 2);
}

TEST_CASE("skeleton edge list serialization") {
    auto eng = rng::make_engine(51);
    PointCloud pts = testutil::random_cloud(12, eng);
    const SkeletonGraph g = build_mst(pts);
    testutil::TempDir dir("skel_edges");
    write_edge_list_csv(g, dir.file("edges.csv"));
    const std::string body = io::read_file(dir.file("edges.csv"));
    CHECK(body.rfind("i,j,weight_mm\n", 0) == 0);
    CHECK(std::count(body.begin(), body.end(), '\n') == 12);  // header + 11 edges
}

TEST_CASE("endpoint template round trip") {
    const EndpointTemplate tmpl = synth::generate_cage(synth::CageSpec{}).second.endpoints;
    testutil::TempDir dir("skel_tmpl");
    write_endpoint_template_csv(tmpl, dir.file("endpoints.csv"));
    const EndpointTemplate back = read_endpoint_template_csv(dir.file("endpoints.csv"));
    REQUIRE(back.endpoints.size() == 8);
    for (int level = 2; level <= 5; ++level)
        for (auto side : {geometry::Side::Left, geometry::Side::Right})
            CHECK((back.find(level, side).position - tmpl.find(level, side).position).norm() <
                  1e-5);
}

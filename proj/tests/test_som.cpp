#include <cstring>

#include "doctest.h"
#include "ribreg/rng.hpp"
#include "ribreg/som.hpp"
#include "ribreg/synth.hpp"
#include "test_helpers.hpp"

using namespace ribreg;
using namespace ribreg::som;

TEST_CASE("init_grid stays in the data plane") {
    auto eng = rng::make_engine(31);
    PointCloud c;
    for (int i = 0; i < 200; ++i)
        c.append(Point3(rng::uniform(eng, -50, 50), rng::uniform(eng, -20, 20), 7.5));
    SomGrid grid = init_grid(c, 6, 9, 0);
    for (const Point3& w : grid.weights) CHECK(w.z() == doctest::Approx(7.5).epsilon(1e-9));
}

TEST_CASE("init_grid 1x1 is the centroid") {
    PointCloud c;
    c.append(Point3(1, 2, 3));
    c.append(Point3(3, 2, 1));
    SomGrid grid = init_grid(c, 1, 1, 0);
    REQUIRE(grid.weights.size() == 1);
    CHECK((grid.weights[0] - Point3(2, 2, 2)).norm() < 1e-12);
}

TEST_CASE("init_grid is deterministic and rejects degenerate clouds") {
    auto eng = rng::make_engine(32);
    PointCloud c = testutil::random_cloud(100, eng);
    SomGrid a = init_grid(c, 5, 8, 1);
    SomGrid b = init_grid(c, 5, 8, 1);
    REQUIRE(a.weights.size() == b.weights.size());
    for (std::size_t i = 0; i < a.weights.size(); ++i) CHECK(a.weights[i] == b.weights[i]);

    PointCloud line;
    for (int i = 0; i < 10; ++i) line.append(Point3(i, 0, 0));
    CHECK_THROWS_AS(init_grid(line, 4, 4, 0), DegenerateCloud);
}

TEST_CASE("update with unit learning rate maps the BMU onto the sample") {
    auto eng = rng::make_engine(33);
    PointCloud helper = testutil::random_cloud(50, eng);
    SomGrid grid = init_grid(helper, 4, 4, 0);

    PointCloud one;
    const Point3 sample(12.5, -3.25, 8.0);
    one.append(sample);

    SomParams p;
    p.initial_learning_rate = 1.0;
    p.learning_rate_tau = std::numeric_limits<double>::infinity();
    p.initial_radius = 0.8;
    p.radius_tau = std::numeric_limits<double>::infinity();
    p.epochs = 1;

    // Find the BMU before training; after one unit-rate step it must sit
    // exactly on the sample.
    int bmu = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid.node_count(); ++i) {
        const double d = (grid.weights[i] - sample).squaredNorm();
        if (d < best) {
            best = d;
            bmu = i;
        }
    }
    const std::vector<Point3> before = grid.weights;
    SomGrid after = train(grid, one, p);
    CHECK((after.weights[bmu] - sample).norm() < 1e-12);

    // Each weight moved toward the sample by no more than its distance.
    for (int i = 0; i < after.node_count(); ++i) {
        const double moved = (after.weights[i] - before[i]).norm();
        CHECK(moved <= (sample - before[i]).norm() + 1e-12);
    }
}

TEST_CASE("training on copies of one point collapses the grid onto it") {
    auto eng = rng::make_engine(34);
    PointCloud helper = testutil::random_cloud(60, eng);
    SomGrid grid = init_grid(helper, 5, 5, 0);

    const Point3 attractor(4, 4, 4);
    PointCloud copies;
    for (int i = 0; i < 50; ++i) copies.append(attractor);

    SomParams p = SomParams::standard(5, 5, 500, copies.size(), 0.5, 9);
    SomGrid trained = train(grid, copies, p);
    for (const Point3& w : trained.weights) CHECK((w - attractor).norm() < 1e-3);
}

TEST_CASE("1x1 grid settles near the cloud centroid") {
    auto eng = rng::make_engine(35);
    PointCloud c;
    const Point3 center(20, -10, 5);
    for (int i = 0; i < 100; ++i) {
        Point3 dir(rng::normal(eng), rng::normal(eng), rng::normal(eng));
        dir.normalize();
        c.append(center + rng::uniform(eng, 0.0, 10.0) * dir);
    }
    SomGrid grid;
    grid.rows = grid.cols = 1;
    grid.weights = {c.points[0]};
    SomParams p = SomParams::standard(1, 1, 200, c.size(), 0.5, 5);
    SomGrid trained = train(grid, c, p);
    CHECK((trained.weights[0] - c.centroid()).norm() < 1.0);
}

TEST_CASE("training is bitwise deterministic") {
    auto [cloud, truth] = synth::generate_cage(synth::CageSpec{});
    SomGrid grid = init_grid(cloud, 8, 8, 3);
    SomParams p = SomParams::standard(8, 8, 10, cloud.size(), 0.5, 3);
    SomGrid a = train(grid, cloud, p);
    SomGrid b = train(grid, cloud, p);
    REQUIRE(a.weights.size() == b.weights.size());
    CHECK(std::memcmp(a.weights.data(), b.weights.data(),
                      a.weights.size() * sizeof(Point3)) == 0);
}

TEST_CASE("quantization error halves and decays near-monotonically") {
    auto [cloud, truth] = synth::generate_cage(synth::CageSpec{});
    SomGrid grid = init_grid(cloud, 20, 20, 1);
    const double initial_qe = quantization_error(grid, cloud);

    std::vector<double> qe_per_epoch;
    SomParams p = SomParams::standard(20, 20, 200, cloud.size(), 0.5, 1);
    SomGrid trained = train(grid, cloud, p, [&](int, const SomGrid& g) {
        qe_per_epoch.push_back(quantization_error(g, cloud));
    });

    REQUIRE(qe_per_epoch.size() == 200);
    CHECK(qe_per_epoch.back() <= 0.5 * initial_qe);
    CHECK(qe_per_epoch.back() < qe_per_epoch.front());

    // Stochastic per-sample updates keep epoch-boundary QE noisy while the
    // learning rate is large; the converged tail must be monotone.
    int late_violations = 0;
    for (std::size_t i = 1; i < qe_per_epoch.size(); ++i)
        if (qe_per_epoch[i] > qe_per_epoch[i - 1] + 1e-12 && i + 10 >= qe_per_epoch.size())
            ++late_violations;
    CHECK(late_violations <= 1);
}

TEST_CASE("extract_key_points sizes") {
    auto eng = rng::make_engine(36);
    PointCloud c = testutil::random_cloud(500, eng);
    CHECK(extract_key_points(train(init_grid(c, 5, 8, 0), c,
                                   SomParams::standard(5, 8, 2, c.size(), 0.5, 0)))
              .size() == 40);
    CHECK(extract_key_points(init_grid(c, 20, 20, 0)).size() == 400);
    SomGrid tiny;
    tiny.rows = tiny.cols = 1;
    tiny.weights = {Point3::Zero()};
    CHECK(extract_key_points(tiny).size() == 1);
}

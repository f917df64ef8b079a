#include <cmath>
#include <cstring>

#include "doctest.h"
#include "ribreg/registration.hpp"
#include "ribreg/rng.hpp"
#include "ribreg/synth.hpp"
#include "test_helpers.hpp"

using namespace ribreg;
using namespace ribreg::synth;

TEST_CASE("noise-free zero-radius cage lies exactly on the centerlines") {
    CageSpec spec;
    spec.tube_radius_mm = 0.0;
    spec.noise_sigma_mm = 0.0;
    spec.sternum_points = 0;
    const auto [cloud, truth] = generate_cage(spec);
    REQUIRE(cloud.has_labels());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const int level = cloud.labels[i];
        const RibShape& rib = spec.rib(level);
        const double t = cloud.points[i].x() / (0.5 * rib.span_mm);
        CHECK((cloud.points[i] - rib.centerline(t)).norm() < 1e-9);
    }
}

TEST_CASE("default cage has five labeled bands and is deterministic") {
    const auto [a, truth_a] = generate_cage(CageSpec{});
    const auto [b, truth_b] = generate_cage(CageSpec{});
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.points.data(), b.points.data(), a.size() * sizeof(Point3)) == 0);

    std::array<int, 6> label_counts{};
    for (int lab : a.labels) ++label_counts[lab];
    CHECK(label_counts[geometry::kLabelSternum] > 0);
    for (int level = 2; level <= 5; ++level) CHECK(label_counts[level] > 0);
}

TEST_CASE("intercostal gaps at the midline follow the spec") {
    CageSpec spec;
    for (int i = 0; i < 4; ++i) {
        spec.ribs[i].span_mm = 100.0;
        spec.ribs[i].z_offset_mm = 37.5 - 25.0 * i;
    }
    const auto [cloud, truth] = generate_cage(spec);
    for (int i = 0; i + 1 < 4; ++i) {
        const Point3 upper = truth.centerlines[i][50];    // t = 0
        const Point3 lower = truth.centerlines[i + 1][50];
        const double gap = upper.z() - lower.z();
        CHECK(gap >= 24.0);
        CHECK(gap <= 26.0);
    }
}

TEST_CASE("cage spec validation") {
    CageSpec bad;
    bad.ribs[1].z_offset_mm = bad.ribs[0].z_offset_mm;  // levels intersect
    CHECK_THROWS_AS(generate_cage(bad), InvalidSpec);

    CageSpec negative;
    negative.ribs[2].span_mm = -1.0;
    CHECK_THROWS_AS(generate_cage(negative), InvalidSpec);
}

TEST_CASE("identity deformation returns the input") {
    const auto [cloud, truth] = generate_cage(CageSpec{});
    const DeformResult out = deform(cloud, truth, DeformationSpec{});
    REQUIRE(out.cloud.size() == cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
        CHECK((out.cloud.points[i] - cloud.points[i]).norm() == 0.0);
    CHECK(out.cloud.labels == cloud.labels);
}

TEST_CASE("pure rigid deformation is recovered by icp") {
    const auto [cloud, truth] = generate_cage(CageSpec{});
    DeformationSpec spec;
    spec.rigid = geometry::axis_angle(Point3(0, 0, 1), 6.0 * M_PI / 180.0);
    spec.rigid.translation = Point3(8, -5, 4);
    const DeformResult out = deform(cloud, truth, spec);
    const auto [fit, report] = registration::icp_rigid(cloud, out.cloud);
    CHECK(report.ed_mean < 1e-3);
}

TEST_CASE("anisotropic scale displaces rib tips by the analytic amount") {
    CageSpec cage;
    cage.tube_radius_mm = 0.0;
    cage.noise_sigma_mm = 0.0;
    for (int i = 0; i < 4; ++i) cage.ribs[i].span_mm = 100.0;
    const auto [cloud, truth] = generate_cage(cage);

    DeformationSpec spec;
    spec.scale = Eigen::Vector3d(1.1, 1.0, 1.0);
    const DeformResult out = deform(cloud, truth, spec);

    const double cx = cloud.centroid().x();
    double worst = 0.0;
    for (const auto& e : truth.endpoints.endpoints) {
        const Point3 moved = out.field.apply(e.position);
        const double displacement = (moved - e.position).norm();
        const double expected = 0.1 * std::abs(e.position.x() - cx);
        CHECK(displacement == doctest::Approx(expected).epsilon(1e-9));
        worst = std::max(worst, displacement);
    }
    // nominal 5 mm, give or take the sampled centroid offset
    CHECK(worst == doctest::Approx(5.0).epsilon(0.05));
}

TEST_CASE("deformation field inverse is exact") {
    const auto [cloud, truth] = generate_cage(CageSpec{});
    const DeformationSpec spec = sample_deformation(17, 0.15, 12.0);
    const DeformResult out = deform(cloud, truth, spec);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK((out.field.inverse(out.cloud.points[i]) - cloud.points[i]).norm() < 1e-9);
        CHECK((out.field.apply(cloud.points[i]) - out.cloud.points[i]).norm() == 0.0);
    }
    CHECK(out.cloud.labels == cloud.labels);
}

TEST_CASE("sampled deformations are deterministic and in range") {
    for (std::uint64_t seed : {1ULL, 7ULL, 42ULL}) {
        const DeformationSpec a = sample_deformation(seed, 0.1, 10.0);
        const DeformationSpec b = sample_deformation(seed, 0.1, 10.0);
        CHECK(a.scale == b.scale);
        CHECK(a.bend_amplitude_mm == b.bend_amplitude_mm);
        CHECK((a.rigid.translation - b.rigid.translation).norm() == 0.0);
        for (int i = 0; i < 3; ++i) {
            CHECK(a.scale(i) >= 0.9);
            CHECK(a.scale(i) <= 1.1);
        }
        CHECK(a.bend_amplitude_mm <= 10.0);
    }
}

TEST_CASE("deformation spec validation") {
    DeformationSpec spec;
    spec.scale = Eigen::Vector3d(2.0, 1.0, 1.0);
    CHECK_THROWS_AS(spec.validate(), InvalidSpec);
    spec.scale = Eigen::Vector3d(1.0, 1.0, 1.0);
    spec.bend_amplitude_mm = 20.0;
    CHECK_THROWS_AS(spec.validate(), InvalidSpec);
}

TEST_CASE("deformation field serialization round trip") {
    const auto [cloud, truth] = generate_cage(CageSpec{});
    const DeformResult out = deform(cloud, truth, sample_deformation(5, 0.1, 8.0));
    testutil::TempDir dir("synth_field");
    write_deformation_field_json(out.field, dir.file("field.json"));
    const DeformationField back = read_deformation_field_json(dir.file("field.json"));
    auto eng = rng::make_engine(90);
    for (int i = 0; i < 20; ++i) {
        const Point3 p(rng::uniform(eng, -80, 80), rng::uniform(eng, -10, 40),
                       rng::uniform(eng, -60, 60));
        CHECK((back.apply(p) - out.field.apply(p)).norm() < 1e-12);
    }
}

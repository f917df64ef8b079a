#include "ribreg/synth.hpp"

#include <algorithm>

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ribreg/io.hpp"
#include "ribreg/rng.hpp"

namespace ribreg::synth {

using json = nlohmann::ordered_json;

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

Point3 RibShape::centerline(double t) const {
    return {0.5 * span_mm * t, sag_mm * (1.0 - t * t), z_offset_mm + lift_mm * t * t * t};
}

void CageSpec::validate() const {
    for (const RibShape& r : ribs) {
        if (r.span_mm <= 0.0) throw InvalidSpec("cage spec: rib span must be > 0");
        if (r.sag_mm < 0.0) throw InvalidSpec("cage spec: rib sag must be >= 0");
    }
    for (int i = 0; i + 1 < 4; ++i)
        if (ribs[i].z_offset_mm <= ribs[i + 1].z_offset_mm)
            throw InvalidSpec("cage spec: rib vertical offsets must strictly decrease with level");
    if (sternum_width_mm <= 0.0) throw InvalidSpec("cage spec: sternum width must be > 0");
    if (sternum_overshoot_mm < 0.0) throw InvalidSpec("cage spec: sternum overshoot must be >= 0");
    if (tube_radius_mm < 0.0) throw InvalidSpec("cage spec: tube radius must be >= 0");
    if (points_per_rib < 1) throw InvalidSpec("cage spec: points per rib must be >= 1");
    if (sternum_points < 0) throw InvalidSpec("cage spec: sternum points must be >= 0");
    if (noise_sigma_mm < 0.0) throw InvalidSpec("cage spec: noise sigma must be >= 0");
}

void DeformationSpec::validate() const {
    for (int i = 0; i < 3; ++i)
        if (scale(i) < 0.8 || scale(i) > 1.25)
            throw InvalidSpec("deformation spec: scale factors must lie in [0.8, 1.25]");
    if (bend_amplitude_mm < 0.0 || bend_amplitude_mm > 15.0)
        throw InvalidSpec("deformation spec: bend amplitude must lie in [0, 15] mm");
    if (bend_wavelength_mm <= 0.0) throw InvalidSpec("deformation spec: bend wavelength must be > 0");
    if (!rigid.is_rigid(1e-6)) throw InvalidSpec("deformation spec: offset is not a rigid motion");
}

DeformationSpec sample_deformation(std::uint64_t seed, double max_scale_dev,
                                   double max_bend_amplitude_mm) {
    auto eng = rng::make_engine(seed);
    DeformationSpec spec;
    spec.seed = seed;
    // Deviations follow a clipped normal: typical anatomies differ
    // moderately, extremes stay bounded by the given limits.
    for (int i = 0; i < 3; ++i)
        spec.scale(i) = 1.0 + std::clamp(0.4 * max_scale_dev * rng::normal(eng), -max_scale_dev,
                                         max_scale_dev);
    spec.bend_amplitude_mm =
        std::clamp(0.4 * max_bend_amplitude_mm * std::abs(rng::normal(eng)), 0.0,
                   max_bend_amplitude_mm);
    spec.bend_wavelength_mm = rng::uniform(eng, 250.0, 400.0);

    // Residual misalignment between scans; the shape change itself comes
    // from the scale and bend terms.
    const double deg = kTwoPi / 360.0;
    const RigidTransform rx = geometry::axis_angle(Eigen::Vector3d::UnitX(),
                                                   rng::uniform(eng, -4.0, 4.0) * deg);
    const RigidTransform ry = geometry::axis_angle(Eigen::Vector3d::UnitY(),
                                                   rng::uniform(eng, -4.0, 4.0) * deg);
    const RigidTransform rz = geometry::axis_angle(Eigen::Vector3d::UnitZ(),
                                                   rng::uniform(eng, -4.0, 4.0) * deg);
    spec.rigid = rz.compose(ry.compose(rx));
    for (int i = 0; i < 3; ++i) spec.rigid.translation(i) = rng::uniform(eng, -8.0, 8.0);
    spec.validate();
    return spec;
}

std::pair<PointCloud, GroundTruth> generate_cage(const CageSpec& spec) {
    spec.validate();
    auto eng = rng::make_engine(spec.seed);

    PointCloud cloud;
    GroundTruth truth;

    auto sample_band = [&](const RibShape& shape, int count, int label) {
        for (int i = 0; i < count; ++i) {
            const double t = rng::uniform(eng, -1.0, 1.0);
            Point3 p = shape.centerline(t);
            if (spec.tube_radius_mm > 0.0) {
                // Scatter in the plane orthogonal to the local tangent.
                Eigen::Vector3d tangent(0.5 * shape.span_mm, -2.0 * shape.sag_mm * t,
                                        3.0 * shape.lift_mm * t * t);
                tangent.normalize();
                int k = 0;
                tangent.cwiseAbs().minCoeff(&k);
                Eigen::Vector3d n1 =
                    (Eigen::Vector3d::Unit(k) - Eigen::Vector3d::Unit(k).dot(tangent) * tangent)
                        .normalized();
                const Eigen::Vector3d n2 = tangent.cross(n1);
                const double phi = rng::uniform(eng, 0.0, kTwoPi);
                const double rho = spec.tube_radius_mm * std::sqrt(rng::uniform01(eng));
                p += rho * (std::cos(phi) * n1 + std::sin(phi) * n2);
            }
            if (spec.noise_sigma_mm > 0.0)
                p += spec.noise_sigma_mm *
                     Point3(rng::normal(eng), rng::normal(eng), rng::normal(eng));
            cloud.append(p, label);
        }
    };

    for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level) {
        const RibShape& rib = spec.rib(level);
        sample_band(rib, spec.points_per_rib, level);

        auto& line = truth.centerlines[level - geometry::kRibLevelMin];
        line.reserve(101);
        for (int i = 0; i <= 100; ++i) line.push_back(rib.centerline(-1.0 + 0.02 * i));

        truth.endpoints.endpoints.push_back({rib.centerline(-1.0), level, geometry::Side::Left});
        truth.endpoints.endpoints.push_back({rib.centerline(1.0), level, geometry::Side::Right});
    }

    // Sternum band: a vertical strip joining the medial rib sections,
    // running a little past ribs 2 and 5 (manubrium above, xiphoid below).
    const double z_top = spec.rib(geometry::kRibLevelMin).z_offset_mm + spec.sternum_overshoot_mm;
    const double z_bottom =
        spec.rib(geometry::kRibLevelMax).z_offset_mm - spec.sternum_overshoot_mm;
    const double y_front = spec.rib(geometry::kRibLevelMin).sag_mm;
    for (int i = 0; i < spec.sternum_points; ++i) {
        Point3 p(rng::uniform(eng, -0.5 * spec.sternum_width_mm, 0.5 * spec.sternum_width_mm),
                 y_front, rng::uniform(eng, z_bottom, z_top));
        if (spec.tube_radius_mm > 0.0)
            p.y() += rng::uniform(eng, -spec.tube_radius_mm, spec.tube_radius_mm);
        if (spec.noise_sigma_mm > 0.0)
            p += spec.noise_sigma_mm * Point3(rng::normal(eng), rng::normal(eng), rng::normal(eng));
        cloud.append(p, geometry::kLabelSternum);
    }

    return {std::move(cloud), std::move(truth)};
}

namespace {

inline bool is_identity_rigid(const RigidTransform& t) {
    return t.rotation == Eigen::Matrix3d::Identity() && t.translation == Eigen::Vector3d::Zero();
}

}  // namespace

Point3 DeformationField::apply(const Point3& p) const {
    // No-op stages are skipped so an identity field returns its input
    // bit for bit.
    Point3 q = p;
    if (scale != Eigen::Vector3d::Ones())
        q = scale_center + (q - scale_center).cwiseProduct(scale);
    if (bend_amplitude_mm != 0.0)
        q.z() += bend_amplitude_mm * std::sin(kTwoPi * q.x() / bend_wavelength_mm);
    if (!is_identity_rigid(rigid)) q = rigid(q);
    return q;
}

Point3 DeformationField::inverse(const Point3& p) const {
    Point3 q = p;
    if (!is_identity_rigid(rigid)) q = rigid.inverse()(q);
    if (bend_amplitude_mm != 0.0)
        q.z() -= bend_amplitude_mm * std::sin(kTwoPi * q.x() / bend_wavelength_mm);
    if (scale != Eigen::Vector3d::Ones())
        q = scale_center + (q - scale_center).cwiseQuotient(scale);
    return q;
}

DeformResult deform(const PointCloud& cloud, const GroundTruth& truth,
                    const DeformationSpec& spec) {
    spec.validate();
    if (cloud.empty()) throw EmptyCloud("deform: empty cloud");

    DeformResult result;
    result.field.scale = spec.scale;
    result.field.scale_center = cloud.centroid();
    result.field.bend_amplitude_mm = spec.bend_amplitude_mm;
    result.field.bend_wavelength_mm = spec.bend_wavelength_mm;
    result.field.rigid = spec.rigid;

    result.cloud.points.reserve(cloud.size());
    result.cloud.labels = cloud.labels;
    for (const Point3& p : cloud.points) result.cloud.points.push_back(result.field.apply(p));

    result.truth = truth;
    for (auto& line : result.truth.centerlines)
        for (Point3& p : line) p = result.field.apply(p);
    for (auto& e : result.truth.endpoints.endpoints) e.position = result.field.apply(e.position);

    return result;
}

void write_centerlines_csv(const GroundTruth& truth, const std::string& path) {
    std::ostringstream out;
    out << "rib_level,x,y,z\n";
    char buf[128];
    for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level) {
        for (const Point3& p : truth.centerlines[level - geometry::kRibLevelMin]) {
            std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f\n", level, p.x(), p.y(), p.z());
            out << buf;
        }
    }
    io::write_file_atomic(path, out.str());
}

void write_truth_correspondence_csv(const PointCloud& original, const PointCloud& deformed,
                                    const std::string& path) {
    if (original.size() != deformed.size())
        throw SizeMismatch("truth correspondence: clouds differ in size");
    std::ostringstream out;
    out << "index,x,y,z,x_deformed,y_deformed,z_deformed\n";
    char buf[256];
    for (std::size_t i = 0; i < original.size(); ++i) {
        const Point3& a = original.points[i];
        const Point3& b = deformed.points[i];
        std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", i, a.x(), a.y(),
                      a.z(), b.x(), b.y(), b.z());
        out << buf;
    }
    io::write_file_atomic(path, out.str());
}

void write_deformation_field_json(const DeformationField& field, const std::string& path) {
    json j;
    j["scale"] = {field.scale(0), field.scale(1), field.scale(2)};
    j["scale_center_mm"] = {field.scale_center(0), field.scale_center(1), field.scale_center(2)};
    j["bend_amplitude_mm"] = field.bend_amplitude_mm;
    j["bend_wavelength_mm"] = field.bend_wavelength_mm;
    j["rotation"] = json::array();
    for (int r = 0; r < 3; ++r)
        j["rotation"].push_back(
            {field.rigid.rotation(r, 0), field.rigid.rotation(r, 1), field.rigid.rotation(r, 2)});
    j["translation_mm"] = {field.rigid.translation(0), field.rigid.translation(1),
                           field.rigid.translation(2)};
    io::write_file_atomic(path, j.dump(2) + "\n");
}

DeformationField read_deformation_field_json(const std::string& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("deformation field json: ") + e.what(), 1);
    }
    DeformationField f;
    for (int i = 0; i < 3; ++i) {
        f.scale(i) = j.at("scale").at(i).get<double>();
        f.scale_center(i) = j.at("scale_center_mm").at(i).get<double>();
        f.rigid.translation(i) = j.at("translation_mm").at(i).get<double>();
    }
    f.bend_amplitude_mm = j.at("bend_amplitude_mm").get<double>();
    f.bend_wavelength_mm = j.at("bend_wavelength_mm").get<double>();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) f.rigid.rotation(r, c) = j.at("rotation").at(r).at(c).get<double>();
    return f;
}

}  // namespace ribreg::synth

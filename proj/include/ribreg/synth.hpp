#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ribreg/geometry.hpp"
#include "ribreg/skeleton.hpp"

namespace ribreg::synth {

/// One rib-cartilage centerline: a parabolic arc in the x-y plane lifted by
/// a cubic vertical profile, parameterized by t in [-1, 1].
///   x = (span/2) t,  y = sag (1 - t^2),  z = z_offset + lift t^3
struct RibShape {
    double span_mm = 140.0;
    double sag_mm = 30.0;
    double z_offset_mm = 0.0;
    double lift_mm = 8.0;

    Point3 centerline(double t) const;
};

/// Synthetic rib cage: four cartilage bands (levels 2..5) plus a sternum
/// band, with surface scatter and optional Gaussian noise.
struct CageSpec {
    std::array<RibShape, 4> ribs{RibShape{140, 30, 48, 8}, RibShape{152, 30, 16, 10},
                                 RibShape{164, 30, -16, 12}, RibShape{176, 30, -48, 14}};
    double sternum_width_mm = 22.0;
    double sternum_overshoot_mm = 18.0;  // band extends past ribs 2 and 5
    double tube_radius_mm = 1.5;
    int points_per_rib = 350;
    int sternum_points = 140;
    double noise_sigma_mm = 0.0;
    std::uint64_t seed = 1;

    const RibShape& rib(int level) const { return ribs[level - geometry::kRibLevelMin]; }
    RibShape& rib(int level) { return ribs[level - geometry::kRibLevelMin]; }

    void validate() const;  // throws InvalidSpec
};

/// Smooth synthetic deformation: anisotropic scale about the cloud centroid,
/// then a sinusoidal vertical bend, then a rigid offset.
struct DeformationSpec {
    Eigen::Vector3d scale{1.0, 1.0, 1.0};  // each factor in [0.8, 1.25]
    double bend_amplitude_mm = 0.0;        // <= 15
    double bend_wavelength_mm = 300.0;
    RigidTransform rigid;
    std::uint64_t seed = 0;

    void validate() const;  // throws InvalidSpec
};

/// Deformation parameters drawn deterministically from a seed, bounded by
/// the given scale deviation and bend amplitude; includes a small rigid
/// offset.
DeformationSpec sample_deformation(std::uint64_t seed, double max_scale_dev,
                                   double max_bend_amplitude_mm);

/// Known geometry behind a generated cage.
struct GroundTruth {
    std::array<std::vector<Point3>, 4> centerlines;  // dense, rib levels 2..5
    skeleton::EndpointTemplate endpoints;
};

/// Closed-form deformation map (with its exact inverse) for any point.
struct DeformationField {
    Eigen::Vector3d scale{1.0, 1.0, 1.0};
    Point3 scale_center = Point3::Zero();
    double bend_amplitude_mm = 0.0;
    double bend_wavelength_mm = 300.0;
    RigidTransform rigid;

    Point3 apply(const Point3& p) const;
    Point3 inverse(const Point3& p) const;
};

std::pair<PointCloud, GroundTruth> generate_cage(const CageSpec& spec);

struct DeformResult {
    PointCloud cloud;
    GroundTruth truth;
    DeformationField field;
};

/// Deform a cloud and its ground truth; the returned field maps any original
/// point to its deformed position exactly.
DeformResult deform(const PointCloud& cloud, const GroundTruth& truth,
                    const DeformationSpec& spec);

// --- artifact serialization ---

void write_centerlines_csv(const GroundTruth& truth, const std::string& path);
void write_truth_correspondence_csv(const PointCloud& original, const PointCloud& deformed,
                                    const std::string& path);
void write_deformation_field_json(const DeformationField& field, const std::string& path);
DeformationField read_deformation_field_json(const std::string& path);

}  // namespace ribreg::synth

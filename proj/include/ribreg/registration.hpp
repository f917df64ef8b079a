#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ribreg/geometry.hpp"
#include "ribreg/resample.hpp"

namespace ribreg::registration {

struct RegistrationReport {
    std::vector<double> distances;  // moved point -> nearest target, mm
    double ed_mean = 0.0;
    double ed_stddev = 0.0;
    double hausdorff = 0.0;
    double runtime_seconds = 0.0;  // informational; never serialized
    std::string method;
};

enum class GapLabel { Gap23, Gap34, Gap45 };

std::string to_string(GapLabel gap);
std::string to_string(geometry::Side side);

/// Scan waypoint in an intercostal gap.
struct Waypoint {
    Point3 position = Point3::Zero();
    GapLabel gap = GapLabel::Gap23;
    geometry::Side side = geometry::Side::Left;
};

/// Locally rigid warp: each source point is moved by the rigid transform
/// fitted over its n_r nearest source-side key points and their paired
/// targets. With n_r equal to the total key count this is a single global
/// rigid registration.
PointCloud warp_nonrigid(const PointCloud& source, const resample::Correspondence& corr, int n_r);

/// Warp one position with the same local rule as warp_nonrigid.
Point3 warp_point(const Point3& p, const resample::Correspondence& corr, int n_r);

/// Classical rigid ICP of source onto target. Without an explicit initial
/// transform, centroid + principal-axes pre-alignments (all four proper sign
/// choices) are tried and the best result kept. The reported mean
/// nearest-neighbor distance never increases across iterations.
std::pair<RigidTransform, RegistrationReport> icp_rigid(
    const PointCloud& source, const PointCloud& target, int max_iter = 100, double tol = 1e-4,
    const std::optional<RigidTransform>& init = {});

/// Euclidean-distance and Hausdorff metrics of moved against target.
RegistrationReport evaluate(const PointCloud& moved, const PointCloud& target);

/// Ten intercostal waypoints: averages of resampled key points of
/// neighboring ribs. Gaps 2-3 and 3-4 contribute three waypoints each
/// (near-left, midline, near-right; the midline one averages the two middle
/// keys for even sample counts), gap 4-5 contributes four (two per side).
std::vector<Waypoint> plan_waypoints(const resample::ResampledSkeleton& skel);

/// Warp waypoints with the warp_nonrigid point rule; labels preserved.
std::vector<Waypoint> transfer_waypoints(const std::vector<Waypoint>& waypoints,
                                         const resample::Correspondence& corr, int n_r);

// --- artifact serialization ---

void write_report_json(const RegistrationReport& report, const std::string& path);
void write_distances_csv(const std::vector<double>& distances, const std::string& path);
void write_transform_json(const RigidTransform& t, const std::string& path);
RigidTransform read_transform_json(const std::string& path);
void write_correspondence_csv(const resample::Correspondence& corr, const std::string& path);
resample::Correspondence read_correspondence_csv(const std::string& path);
void write_waypoints_csv(const std::vector<Waypoint>& waypoints, const std::string& path);
std::vector<Waypoint> read_waypoints_csv(const std::string& path);

}  // namespace ribreg::registration

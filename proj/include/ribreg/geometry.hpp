#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

#include "ribreg/errors.hpp"

namespace ribreg::geometry {

/// 3D point or vector, coordinates in millimeters.
using Point3 = Eigen::Vector3d;

// Per-point labels. Rib levels keep their anatomical number (2..5).
inline constexpr int kLabelUnknown = 0;
inline constexpr int kLabelSternum = 1;
inline constexpr int kRibLevelMin = 2;
inline constexpr int kRibLevelMax = 5;

enum class Side { Left, Right };

/// Ordered set of 3D points with an optional label per point.
/// Point order carries no meaning unless an operation states otherwise.
struct PointCloud {
    std::vector<Point3> points;
    std::vector<int> labels;  // empty, or one entry per point

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_labels() const { return !labels.empty(); }

    int label(std::size_t i) const { return labels.empty() ? kLabelUnknown : labels[i]; }

    void append(const Point3& p) { points.push_back(p); }
    void append(const Point3& p, int lab) {
        if (labels.size() != points.size()) labels.resize(points.size(), kLabelUnknown);
        points.push_back(p);
        labels.push_back(lab);
    }

    Point3 centroid() const;
};

/// Proper rigid motion p -> rotation * p + translation.
struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static RigidTransform identity() { return {}; }

    Point3 operator()(const Point3& p) const { return rotation * p + translation; }

    RigidTransform inverse() const {
        RigidTransform r;
        r.rotation = rotation.transpose();
        r.translation = -(r.rotation * translation);
        return r;
    }

    /// Composition: result(p) = (*this)(inner(p)).
    RigidTransform compose(const RigidTransform& inner) const {
        RigidTransform r;
        r.rotation = rotation * inner.rotation;
        r.translation = rotation * inner.translation + translation;
        return r;
    }

    /// Rotation orthonormal with determinant +1 within tol.
    bool is_rigid(double tol = 1e-9) const;
};

/// Rotation by angle (radians) about a unit axis, as a rigid transform.
RigidTransform axis_angle(const Eigen::Vector3d& axis, double angle_rad);

struct NnStats {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
    std::vector<double> distances;
};

/// Apply a rigid transform to every point; labels carry over.
PointCloud apply_transform(const RigidTransform& t, const PointCloud& c);

/// Least-squares rigid alignment of index-paired point sets (SVD based,
/// reflection corrected). Throws SizeMismatch or DegenerateConfiguration.
RigidTransform kabsch_fit(const PointCloud& source, const PointCloud& target);

/// k reference points closest to query, ascending distance, ties broken
/// by lower index. Throws KTooLarge if k exceeds the reference size.
std::vector<std::pair<int, double>> nearest_neighbors(const Point3& query,
                                                      const PointCloud& reference, int k);

/// Mean distance from each moved point to its nearest target point,
/// plus the per-point distances and their standard deviation.
NnStats mean_nn_distance(const PointCloud& moved, const PointCloud& target);

/// Symmetric Hausdorff distance max(max_a min_b, max_b min_a).
double hausdorff_distance(const PointCloud& a, const PointCloud& b);

/// Directed Hausdorff distance max_{a in from} min_{b in to} d(a, b).
double directed_hausdorff(const PointCloud& from, const PointCloud& to);

/// Spatially uniform subset of target_count points (greedy dart throwing
/// with radius relaxation). Deterministic for a fixed seed.
PointCloud downsample(const PointCloud& c, int target_count, std::uint64_t seed);

}  // namespace ribreg::geometry

namespace ribreg {
using geometry::Point3;
using geometry::PointCloud;
using geometry::RigidTransform;
}  // namespace ribreg

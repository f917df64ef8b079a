#pragma once

#include <array>
#include <optional>
#include <vector>

#include "ribreg/geometry.hpp"

namespace ribreg::resample {

/// Cubic space curve for one rib, expressed in a local frame: the two
/// transverse coordinates are cubic polynomials of the abscissa. The
/// polynomial coefficients live on the normalized abscissa u in [-1, 1].
struct RibCurve {
    int rib_level = 0;
    Point3 origin = Point3::Zero();
    Eigen::Vector3d axis = Eigen::Vector3d::UnitX();    // abscissa direction
    Eigen::Vector3d axis_y = Eigen::Vector3d::UnitY();  // transverse
    Eigen::Vector3d axis_z = Eigen::Vector3d::UnitZ();  // transverse
    std::array<double, 4> coef_y{0, 0, 0, 0};  // c0 + c1 u + c2 u^2 + c3 u^3
    std::array<double, 4> coef_z{0, 0, 0, 0};
    double x_min = 0.0;
    double x_max = 0.0;

    Point3 point_at(double x) const;
};

/// Fixed-count key points per rib level 2..5, ordered along each rib.
struct ResampledSkeleton {
    std::array<std::vector<Point3>, 4> ribs;

    const std::vector<Point3>& rib(int level) const { return ribs[level - geometry::kRibLevelMin]; }
    std::vector<Point3>& rib(int level) { return ribs[level - geometry::kRibLevelMin]; }
    std::array<int, 4> counts() const;
    int total() const;
};

/// Index-paired key points between the source and target skeletons.
struct Correspondence {
    struct Pair {
        Point3 source;
        Point3 target;
        int rib_level = 0;
        int index = 0;
    };
    std::vector<Pair> pairs;

    PointCloud source_keys() const;
    PointCloud target_keys() const;
};

/// Least-squares cubic fit of a rib path. The abscissa is the path's first
/// principal axis unless `axis_hint` overrides it; either way the axis is
/// oriented from the first path point toward the last. Throws TooFewPoints
/// (need >= 5) or IllConditioned (abscissa spread < 1 mm).
RibCurve fit_rib_curve(const std::vector<Point3>& path, int rib_level,
                       const std::optional<Eigen::Vector3d>& axis_hint = {});

/// n points at equal abscissa spacing over [x_min, x_max], n >= 2.
std::vector<Point3> resample_curve(const RibCurve& curve, int n);

/// Pair source and target key points by (rib level, index). Throws
/// CountMismatch when per-rib counts differ.
Correspondence build_correspondence(const ResampledSkeleton& source,
                                    const ResampledSkeleton& target);

}  // namespace ribreg::resample

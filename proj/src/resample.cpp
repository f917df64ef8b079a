#include "ribreg/resample.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace ribreg::resample {

namespace {

double eval_cubic(const std::array<double, 4>& c, double u) {
    return c[0] + u * (c[1] + u * (c[2] + u * c[3]));
}

}  // namespace

Point3 RibCurve::point_at(double x) const {
    const double span = x_max - x_min;
    const double u = span > 0.0 ? 2.0 * (x - x_min) / span - 1.0 : 0.0;
    return origin + x * axis + eval_cubic(coef_y, u) * axis_y + eval_cubic(coef_z, u) * axis_z;
}

std::array<int, 4> ResampledSkeleton::counts() const {
    std::array<int, 4> out;
    for (int i = 0; i < 4; ++i) out[i] = static_cast<int>(ribs[i].size());
    return out;
}

int ResampledSkeleton::total() const {
    int t = 0;
    for (const auto& r : ribs) t += static_cast<int>(r.size());
    return t;
}

PointCloud Correspondence::source_keys() const {
    PointCloud out;
    out.points.reserve(pairs.size());
    out.labels.reserve(pairs.size());
    for (const Pair& p : pairs) out.append(p.source, p.rib_level);
    return out;
}

PointCloud Correspondence::target_keys() const {
    PointCloud out;
    out.points.reserve(pairs.size());
    out.labels.reserve(pairs.size());
    for (const Pair& p : pairs) out.append(p.target, p.rib_level);
    return out;
}

RibCurve fit_rib_curve(const std::vector<Point3>& path, int rib_level,
                       const std::optional<Eigen::Vector3d>& axis_hint) {
    const std::size_t n = path.size();
    if (n < 5) throw TooFewPoints("fit_rib_curve: need at least 5 points, got " + std::to_string(n));

    RibCurve curve;
    curve.rib_level = rib_level;

    Point3 centroid = Point3::Zero();
    for (const Point3& p : path) centroid += p;
    centroid /= static_cast<double>(n);
    curve.origin = centroid;

    Eigen::Vector3d axis;
    if (axis_hint) {
        axis = axis_hint->normalized();
    } else {
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (const Point3& p : path) {
            const Point3 d = p - centroid;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        axis = eig.eigenvectors().col(2);  // largest variance
    }
    // Orient along the path so resampled points keep the path's direction.
    if ((path.back() - path.front()).dot(axis) < 0.0) axis = -axis;
    curve.axis = axis;

    int k = 0;
    axis.cwiseAbs().minCoeff(&k);
    Eigen::Vector3d ey = Eigen::Vector3d::Unit(k) - Eigen::Vector3d::Unit(k).dot(axis) * axis;
    ey.normalize();
    curve.axis_y = ey;
    curve.axis_z = axis.cross(ey);

    Eigen::VectorXd xs(n), ys(n), zs(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Point3 d = path[i] - curve.origin;
        xs(i) = d.dot(curve.axis);
        ys(i) = d.dot(curve.axis_y);
        zs(i) = d.dot(curve.axis_z);
    }
    curve.x_min = xs.minCoeff();
    curve.x_max = xs.maxCoeff();
    const double span = curve.x_max - curve.x_min;
    if (span < 1.0)
        throw IllConditioned("fit_rib_curve: abscissa spread " + std::to_string(span) + " mm < 1 mm");

    Eigen::MatrixXd vand(n, 4);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = 2.0 * (xs(i) - curve.x_min) / span - 1.0;
        vand(i, 0) = 1.0;
        vand(i, 1) = u;
        vand(i, 2) = u * u;
        vand(i, 3) = u * u * u;
    }
    const auto qr = vand.colPivHouseholderQr();
    const Eigen::Vector4d cy = qr.solve(ys);
    const Eigen::Vector4d cz = qr.solve(zs);
    for (int i = 0; i < 4; ++i) {
        curve.coef_y[i] = cy(i);
        curve.coef_z[i] = cz(i);
    }
    return curve;
}

std::vector<Point3> resample_curve(const RibCurve& curve, int n) {
    if (n < 2) throw InvalidSpec("resample_curve: need n >= 2");
    std::vector<Point3> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double x = curve.x_min + (curve.x_max - curve.x_min) * i / (n - 1);
        out.push_back(curve.point_at(x));
    }
    return out;
}

Correspondence build_correspondence(const ResampledSkeleton& source,
                                    const ResampledSkeleton& target) {
    Correspondence corr;
    for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level) {
        const auto& src = source.rib(level);
        const auto& tgt = target.rib(level);
        if (src.size() != tgt.size())
            throw CountMismatch("build_correspondence: rib " + std::to_string(level) + " has " +
                                std::to_string(src.size()) + " source vs " +
                                std::to_string(tgt.size()) + " target samples");
        for (std::size_t k = 0; k < src.size(); ++k)
            corr.pairs.push_back({src[k], tgt[k], level, static_cast<int>(k)});
    }
    return corr;
}

}  // namespace ribreg::resample

#include "ribreg/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "ribreg/kdtree.hpp"
#include "ribreg/rng.hpp"

namespace ribreg::geometry {

Point3 PointCloud::centroid() const {
    Point3 c = Point3::Zero();
    for (const Point3& p : points) c += p;
    if (!points.empty()) c /= static_cast<double>(points.size());
    return c;
}

bool RigidTransform::is_rigid(double tol) const {
    Eigen::Matrix3d gram = rotation.transpose() * rotation;
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(rotation.determinant() - 1.0) <= tol;
}

RigidTransform axis_angle(const Eigen::Vector3d& axis, double angle_rad) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
    return t;
}

PointCloud apply_transform(const RigidTransform& t, const PointCloud& c) {
    PointCloud out;
    out.points.reserve(c.size());
    for (const Point3& p : c.points) out.points.push_back(t(p));
    out.labels = c.labels;
    return out;
}

RigidTransform kabsch_fit(const PointCloud& source, const PointCloud& target) {
    if (source.size() != target.size())
        throw SizeMismatch("kabsch_fit: paired clouds differ in size (" +
                           std::to_string(source.size()) + " vs " +
                           std::to_string(target.size()) + ")");
    const std::size_t n = source.size();
    if (n == 0) throw EmptyCloud("kabsch_fit: empty input");

    const Point3 cs = source.centroid();
    const Point3 ct = target.centroid();

    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < n; ++i)
        h += (source.points[i] - cs) * (target.points[i] - ct).transpose();

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d sigma = svd.singularValues();
    if (sigma(1) <= 1e-12 * std::max(sigma(0), 1e-300))
        throw DegenerateConfiguration("kabsch_fit: cross-covariance rank < 2 (collinear input)");

    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;

    RigidTransform t;
    t.rotation = svd.matrixV() * d * svd.matrixU().transpose();
    t.translation = ct - t.rotation * cs;
    return t;
}

std::vector<std::pair<int, double>> nearest_neighbors(const Point3& query,
                                                      const PointCloud& reference, int k) {
    if (k < 0 || static_cast<std::size_t>(k) > reference.size())
        throw KTooLarge("nearest_neighbors: k=" + std::to_string(k) + " exceeds reference size " +
                        std::to_string(reference.size()));
    std::vector<std::pair<double, int>> by_dist;
    by_dist.reserve(reference.size());
    for (std::size_t i = 0; i < reference.size(); ++i)
        by_dist.emplace_back((reference.points[i] - query).squaredNorm(), static_cast<int>(i));
    std::partial_sort(by_dist.begin(), by_dist.begin() + k, by_dist.end());
    std::vector<std::pair<int, double>> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) out.emplace_back(by_dist[i].second, std::sqrt(by_dist[i].first));
    return out;
}

NnStats mean_nn_distance(const PointCloud& moved, const PointCloud& target) {
    if (moved.empty() || target.empty()) throw EmptyCloud("mean_nn_distance: empty cloud");
    KdTree3 tree(target.points);
    NnStats stats;
    stats.distances.reserve(moved.size());
    double sum = 0.0;
    for (const Point3& p : moved.points) {
        double d = tree.nearest(p).second;
        stats.distances.push_back(d);
        sum += d;
    }
    stats.mean = sum / static_cast<double>(moved.size());
    double var = 0.0;
    for (double d : stats.distances) var += (d - stats.mean) * (d - stats.mean);
    stats.stddev = std::sqrt(var / static_cast<double>(moved.size()));
    return stats;
}

double directed_hausdorff(const PointCloud& from, const PointCloud& to) {
    if (from.empty() || to.empty()) throw EmptyCloud("directed_hausdorff: empty cloud");
    KdTree3 tree(to.points);
    double worst = 0.0;
    for (const Point3& p : from.points) worst = std::max(worst, tree.nearest(p).second);
    return worst;
}

double hausdorff_distance(const PointCloud& a, const PointCloud& b) {
    return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

namespace {

// Hash grid with cell size r used by the dart-throwing loop below.
class NeighborGrid {
public:
    NeighborGrid(double cell, const Point3& origin) : cell_(cell), origin_(origin) {}

    void insert(const Point3& p, int idx) { cells_[key(p)].push_back(idx); }

    bool has_point_within(const Point3& p, double r, const std::vector<Point3>& pts) const {
        if (cell_ <= 0.0) return false;
        const double r2 = r * r;
        const auto [cx, cy, cz] = coords(p);
        for (long long dx = -1; dx <= 1; ++dx)
            for (long long dy = -1; dy <= 1; ++dy)
                for (long long dz = -1; dz <= 1; ++dz) {
                    auto it = cells_.find(pack(cx + dx, cy + dy, cz + dz));
                    if (it == cells_.end()) continue;
                    for (int idx : it->second)
                        if ((pts[idx] - p).squaredNorm() < r2) return true;
                }
        return false;
    }

private:
    std::tuple<long long, long long, long long> coords(const Point3& p) const {
        return {static_cast<long long>(std::floor((p.x() - origin_.x()) / cell_)),
                static_cast<long long>(std::floor((p.y() - origin_.y()) / cell_)),
                static_cast<long long>(std::floor((p.z() - origin_.z()) / cell_))};
    }
    static std::uint64_t pack(long long x, long long y, long long z) {
        auto h = [](long long v) { return static_cast<std::uint64_t>(v + (1LL << 20)); };
        return (h(x) << 42) ^ (h(y) << 21) ^ h(z);
    }
    std::uint64_t key(const Point3& p) const {
        auto [x, y, z] = coords(p);
        return pack(x, y, z);
    }

    double cell_;
    Point3 origin_;
    std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

double ideal_spacing(const PointCloud& c, int target_count) {
    Point3 lo = c.points.front(), hi = c.points.front();
    for (const Point3& p : c.points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    Eigen::Vector3d extent = hi - lo;
    const double emax = extent.maxCoeff();
    if (emax <= 0.0) return 0.0;
    // Count only extents that actually contribute volume; a flat or linear
    // cloud gets a 2D or 1D spacing estimate.
    double measure = 1.0;
    int dims = 0;
    for (int i = 0; i < 3; ++i) {
        if (extent(i) > 1e-9 * emax) {
            measure *= extent(i);
            ++dims;
        }
    }
    return std::pow(measure / static_cast<double>(target_count), 1.0 / static_cast<double>(dims));
}

}  // namespace

PointCloud downsample(const PointCloud& c, int target_count, std::uint64_t seed) {
    if (target_count < 0 || static_cast<std::size_t>(target_count) > c.size())
        throw TargetTooLarge("downsample: target " + std::to_string(target_count) +
                             " exceeds cloud size " + std::to_string(c.size()));
    if (static_cast<std::size_t>(target_count) == c.size()) return c;

    PointCloud out;
    if (target_count == 0) return out;

    std::vector<int> order(c.size());
    std::iota(order.begin(), order.end(), 0);
    auto eng = rng::make_engine(seed);
    rng::shuffle(order, eng);

    double radius = ideal_spacing(c, target_count);
    std::vector<char> taken(c.size(), 0);
    std::vector<int> chosen;
    chosen.reserve(target_count);

    while (static_cast<int>(chosen.size()) < target_count) {
        NeighborGrid grid(radius > 0.0 ? radius : 1.0, c.points[order[0]]);
        for (int idx : chosen) grid.insert(c.points[idx], idx);
        for (int idx : order) {
            if (taken[idx]) continue;
            if (radius > 0.0 && grid.has_point_within(c.points[idx], radius, c.points)) continue;
            taken[idx] = 1;
            chosen.push_back(idx);
            grid.insert(c.points[idx], idx);
            if (static_cast<int>(chosen.size()) == target_count) break;
        }
        radius *= 0.9;
        if (radius < 1e-12) {
            for (int idx : order) {
                if (taken[idx]) continue;
                taken[idx] = 1;
                chosen.push_back(idx);
                if (static_cast<int>(chosen.size()) == target_count) break;
            }
        }
    }

    out.points.reserve(chosen.size());
    if (c.has_labels()) out.labels.reserve(chosen.size());
    for (int idx : chosen) {
        out.points.push_back(c.points[idx]);
        if (c.has_labels()) out.labels.push_back(c.labels[idx]);
    }
    return out;
}

}  // namespace ribreg::geometry

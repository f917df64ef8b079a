#pragma once

#include <utility>
#include <vector>

#include "ribreg/geometry.hpp"

namespace ribreg::geometry {

/// Static kd-tree over 3D points for nearest-neighbor queries.
/// Build order is deterministic, so queries are reproducible.
class KdTree3 {
public:
    explicit KdTree3(const std::vector<Point3>& points);

    /// Index and Euclidean distance of the nearest point. Tree must be non-empty.
    std::pair<int, double> nearest(const Point3& query) const;

    std::size_t size() const { return pts_.size(); }

private:
    struct Node {
        int point = -1;    // index into pts_
        int axis = 0;
        int left = -1;
        int right = -1;
    };

    int build(int begin, int end);
    void search(int node, const Point3& q, int& best, double& best_d2) const;

    std::vector<Point3> pts_;
    std::vector<int> order_;  // scratch during build
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace ribreg::geometry

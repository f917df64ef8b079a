#include "ribreg/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace ribreg::geometry {

KdTree3::KdTree3(const std::vector<Point3>& points) : pts_(points) {
    order_.resize(pts_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(pts_.size());
    if (!pts_.empty()) root_ = build(0, static_cast<int>(pts_.size()));
    order_.clear();
    order_.shrink_to_fit();
}

int KdTree3::build(int begin, int end) {
    Point3 lo = pts_[order_[begin]], hi = lo;
    for (int i = begin; i < end; ++i) {
        lo = lo.cwiseMin(pts_[order_[i]]);
        hi = hi.cwiseMax(pts_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);

    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                         if (pts_[a](axis) != pts_[b](axis)) return pts_[a](axis) < pts_[b](axis);
                         return a < b;
                     });

    const int node_id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{order_[mid], axis, -1, -1});
    if (mid > begin) {
        int l = build(begin, mid);
        nodes_[node_id].left = l;
    }
    if (mid + 1 < end) {
        int r = build(mid + 1, end);
        nodes_[node_id].right = r;
    }
    return node_id;
}

void KdTree3::search(int node, const Point3& q, int& best, double& best_d2) const {
    const Node& n = nodes_[node];
    const double d2 = (pts_[n.point] - q).squaredNorm();
    if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) {
        best_d2 = d2;
        best = n.point;
    }
    const double delta = q(n.axis) - pts_[n.point](n.axis);
    const int near = delta < 0.0 ? n.left : n.right;
    const int far = delta < 0.0 ? n.right : n.left;
    if (near >= 0) search(near, q, best, best_d2);
    if (far >= 0 && delta * delta <= best_d2) search(far, q, best, best_d2);
}

std::pair<int, double> KdTree3::nearest(const Point3& query) const {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    if (root_ >= 0) search(root_, query, best, best_d2);
    return {best, std::sqrt(best_d2)};
}

}  // namespace ribreg::geometry

#include "ribreg/skeleton.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "ribreg/io.hpp"
#include "ribreg/registration.hpp"

namespace ribreg::skeleton {

double SkeletonGraph::total_weight() const {
    double w = 0.0;
    for (const Edge& e : edges) w += e.weight;
    return w;
}

SkeletonGraph build_mst(const PointCloud& points) {
    const int n = static_cast<int>(points.size());
    if (n < 2) throw TooFewPoints("build_mst: need at least 2 points");

    SkeletonGraph g;
    g.vertices = points;
    g.adjacency.assign(n, {});

    std::vector<char> in_tree(n, 0);
    std::vector<double> best_dist(n, std::numeric_limits<double>::infinity());
    std::vector<int> best_src(n, -1);

    in_tree[0] = 1;
    for (int j = 1; j < n; ++j) {
        best_dist[j] = (points.points[j] - points.points[0]).norm();
        best_src[j] = 0;
    }

    for (int step = 1; step < n; ++step) {
        int next = -1;
        double d = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (in_tree[j]) continue;
            if (best_dist[j] < d) {  // strict: ties keep the lowest index
                d = best_dist[j];
                next = j;
            }
        }
        in_tree[next] = 1;
        g.edges.push_back({best_src[next], next, d});
        g.adjacency[best_src[next]].push_back(next);
        g.adjacency[next].push_back(best_src[next]);
        for (int j = 0; j < n; ++j) {
            if (in_tree[j]) continue;
            const double dj = (points.points[j] - points.points[next]).norm();
            if (dj < best_dist[j]) {
                best_dist[j] = dj;
                best_src[j] = next;
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Convex hull
// ---------------------------------------------------------------------------

namespace {

struct HullFrame {
    std::vector<Point3> pts;  // centered copy
    double eps_orient = 0.0;
    double tol_line = 0.0;

    double orient(int a, int b, int c, int d) const {
        return (pts[b] - pts[a]).cross(pts[c] - pts[a]).dot(pts[d] - pts[a]);
    }
};

// 2D wrap used for planar clouds and for face polygons: strict hull
// vertices of 2D points, counter-clockwise, starting from the
// lexicographic minimum.
std::vector<int> hull_2d(const std::vector<Eigen::Vector2d>& pts, double eps_cross) {
    const int n = static_cast<int>(pts.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (pts[a].x() != pts[b].x()) return pts[a].x() < pts[b].x();
        if (pts[a].y() != pts[b].y()) return pts[a].y() < pts[b].y();
        return a < b;
    });

    auto cross = [&](int o, int a, int b) {
        const Eigen::Vector2d u = pts[a] - pts[o];
        const Eigen::Vector2d v = pts[b] - pts[o];
        return u.x() * v.y() - u.y() * v.x();
    };

    std::vector<int> chain(2 * n);
    int k = 0;
    for (int i = 0; i < n; ++i) {  // lower chain
        while (k >= 2 && cross(chain[k - 2], chain[k - 1], idx[i]) <= eps_cross) --k;
        chain[k++] = idx[i];
    }
    for (int i = n - 2, lower = k + 1; i >= 0; --i) {  // upper chain
        while (k >= lower && cross(chain[k - 2], chain[k - 1], idx[i]) <= eps_cross) --k;
        chain[k++] = idx[i];
    }
    chain.resize(std::max(k - 1, 1));
    return chain;
}

// Pivot around directed hull edge (a, b): the point c such that all others
// lie on the non-positive side of plane (a, b, c).
int pivot_edge(const HullFrame& f, int a, int b, const std::vector<int>& candidates) {
    const Point3 edge = f.pts[b] - f.pts[a];
    int c = -1;
    for (int d : candidates) {
        if (d == a || d == b) continue;
        const double line_dist = edge.cross(f.pts[d] - f.pts[a]).norm() / edge.norm();
        if (line_dist <= f.tol_line) continue;  // on the edge line
        if (c < 0) {
            c = d;
            continue;
        }
        if (f.orient(a, b, c, d) > f.eps_orient) c = d;
    }
    if (c < 0) throw DegenerateInput("convex hull: all points collinear with a hull edge");
    return c;
}

}  // namespace

namespace {

struct HullData {
    std::vector<int> vertices;  // ascending
    bool planar = false;
    // 3D case: supporting face planes in centered coordinates.
    std::vector<std::pair<Point3, Eigen::Vector3d>> faces;  // point on face, unit outward normal
    // Planar case: hull polygon in centered in-plane coordinates, in order.
    Eigen::Vector3d plane_e1, plane_e2;
    std::vector<Eigen::Vector2d> polygon;
    Point3 centroid = Point3::Zero();
};

HullData compute_hull(const PointCloud& points) {
    const int n = static_cast<int>(points.size());
    if (n < 3) throw DegenerateInput("convex_hull_vertices: need at least 3 points");

    HullData out;
    HullFrame f;
    out.centroid = points.centroid();
    f.pts.reserve(n);
    for (const Point3& p : points.points) f.pts.push_back(p - out.centroid);

    Point3 lo = f.pts[0], hi = f.pts[0];
    for (const Point3& p : f.pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double diag = (hi - lo).norm();
    if (diag <= 0.0) throw DegenerateInput("convex_hull_vertices: all points coincide");
    f.tol_line = 1e-9 * diag;
    f.eps_orient = 1e-10 * diag * diag * diag;

    // Rank of the cloud via principal directions.
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const Point3& p : f.pts) cov += p * p.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const Eigen::Vector3d dir_min = eig.eigenvectors().col(0);
    const Eigen::Vector3d dir_max = eig.eigenvectors().col(2);

    double off_line = 0.0, off_plane = 0.0;
    for (const Point3& p : f.pts) {
        off_line = std::max(off_line, dir_max.cross(p).norm());
        off_plane = std::max(off_plane, std::abs(dir_min.dot(p)));
    }
    if (off_line <= f.tol_line)
        throw DegenerateInput("convex_hull_vertices: all points collinear");

    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);

    if (off_plane <= f.tol_line) {
        // Planar cloud: wrap in the best-fit plane.
        out.planar = true;
        out.plane_e1 = eig.eigenvectors().col(2);
        out.plane_e2 = eig.eigenvectors().col(1);
        std::vector<Eigen::Vector2d> flat(n);
        for (int i = 0; i < n; ++i)
            flat[i] = Eigen::Vector2d(out.plane_e1.dot(f.pts[i]), out.plane_e2.dot(f.pts[i]));
        out.vertices = hull_2d(flat, 1e-10 * diag * diag);
        for (int v : out.vertices) out.polygon.push_back(flat[v]);
        std::sort(out.vertices.begin(), out.vertices.end());
        return out;
    }

    // Initial hull vertex: lexicographic minimum.
    int p0 = 0;
    for (int i = 1; i < n; ++i) {
        const Point3 &a = f.pts[i], &b = f.pts[p0];
        if (a.x() != b.x() ? a.x() < b.x() : (a.y() != b.y() ? a.y() < b.y() : a.z() < b.z()))
            p0 = i;
    }

    // Initial hull edge: the point with the smallest elevation above the
    // supporting plane x = x(p0); compare sin^2 by cross-multiplication.
    int p1 = -1;
    double best_num = 0.0, best_r2 = 0.0;
    for (int i = 0; i < n; ++i) {
        if (i == p0) continue;
        const Point3 d = f.pts[i] - f.pts[p0];
        const double r2 = d.squaredNorm();
        if (r2 <= f.tol_line * f.tol_line) continue;
        const double num = d.x() * d.x();  // (elevation)^2 * r2
        if (p1 < 0 || num * best_r2 < best_num * r2 ||
            (num * best_r2 == best_num * r2 && r2 > best_r2)) {
            p1 = i;
            best_num = num;
            best_r2 = r2;
        }
    }
    if (p1 < 0) throw DegenerateInput("convex_hull_vertices: all points coincide");

    std::set<int> hull_vertices;
    std::set<std::pair<int, int>> visited;
    std::deque<std::pair<int, int>> queue;
    queue.emplace_back(p0, p1);

    const int max_faces = 8 * n + 16;
    int processed = 0;
    while (!queue.empty()) {
        const auto [a, b] = queue.front();
        queue.pop_front();
        if (visited.count({a, b})) continue;
        if (++processed > max_faces)
            throw Error("convex_hull_vertices: face walk failed to terminate");

        const int c = pivot_edge(f, a, b, all);

        // Everything within tolerance of the face plane belongs to this face.
        Eigen::Vector3d normal = (f.pts[b] - f.pts[a]).cross(f.pts[c] - f.pts[a]);
        std::vector<int> face_members;
        for (int d : all)
            if (std::abs(f.orient(a, b, c, d)) <= f.eps_orient) face_members.push_back(d);

        const Eigen::Vector3d e1 = (f.pts[b] - f.pts[a]).normalized();
        const Eigen::Vector3d e2 = normal.normalized().cross(e1);
        std::vector<Eigen::Vector2d> flat;
        flat.reserve(face_members.size());
        double extent2 = 0.0;
        for (int d : face_members) {
            flat.emplace_back(e1.dot(f.pts[d] - f.pts[a]), e2.dot(f.pts[d] - f.pts[a]));
            extent2 = std::max(extent2, flat.back().squaredNorm());
        }
        const std::vector<int> poly_local = hull_2d(flat, 1e-10 * extent2);

        std::vector<int> poly;
        poly.reserve(poly_local.size());
        for (int li : poly_local) poly.push_back(face_members[li]);

        out.faces.emplace_back(f.pts[a], normal.normalized());
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const int u = poly[i];
            const int v = poly[(i + 1) % poly.size()];
            hull_vertices.insert(u);
            visited.insert({u, v});
            if (!visited.count({v, u})) queue.emplace_back(v, u);
        }
    }

    out.vertices.assign(hull_vertices.begin(), hull_vertices.end());
    return out;
}

double distance_to_segment_2d(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b) {
    const Eigen::Vector2d ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

}  // namespace

std::vector<int> convex_hull_vertices(const PointCloud& points) {
    return compute_hull(points).vertices;
}

std::vector<int> near_hull_indices(const PointCloud& points, double tolerance_mm) {
    const HullData hull = compute_hull(points);
    std::set<int> out(hull.vertices.begin(), hull.vertices.end());
    for (int i = 0; i < static_cast<int>(points.size()); ++i) {
        if (out.count(i)) continue;
        const Point3 centered = points.points[i] - hull.centroid;
        if (hull.planar) {
            const Eigen::Vector2d flat(hull.plane_e1.dot(centered), hull.plane_e2.dot(centered));
            double boundary = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < hull.polygon.size(); ++k)
                boundary = std::min(boundary,
                                    distance_to_segment_2d(flat, hull.polygon[k],
                                                           hull.polygon[(k + 1) % hull.polygon.size()]));
            if (boundary <= tolerance_mm) out.insert(i);
        } else {
            // Interior distance to the boundary equals the smallest distance
            // to a supporting face plane.
            double signed_max = -std::numeric_limits<double>::infinity();
            for (const auto& [face_point, normal] : hull.faces)
                signed_max = std::max(signed_max, normal.dot(centered - face_point));
            if (signed_max >= -tolerance_mm) out.insert(i);
        }
    }
    return {out.begin(), out.end()};
}

// ---------------------------------------------------------------------------
// Endpoint pairing
// ---------------------------------------------------------------------------

void EndpointTemplate::validate() const {
    if (endpoints.size() != 8)
        throw InvalidSpec("endpoint template must have exactly 8 entries, got " +
                          std::to_string(endpoints.size()));
    for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level)
        for (geometry::Side side : {geometry::Side::Left, geometry::Side::Right}) {
            int count = 0;
            for (const auto& e : endpoints)
                if (e.rib_level == level && e.side == side) ++count;
            if (count != 1)
                throw InvalidSpec("endpoint template needs exactly one entry for rib " +
                                  std::to_string(level) + " side " +
                                  registration::to_string(side));
        }
}

const LabeledEndpoint& EndpointTemplate::find(int rib_level, geometry::Side side) const {
    for (const auto& e : endpoints)
        if (e.rib_level == rib_level && e.side == side) return e;
    throw InvalidSpec("endpoint template is missing rib " + std::to_string(rib_level));
}

double EndpointTemplate::min_pairwise_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < endpoints.size(); ++i)
        for (std::size_t j = i + 1; j < endpoints.size(); ++j)
            best = std::min(best, (endpoints[i].position - endpoints[j].position).norm());
    return best;
}

double EndpointTemplate::min_rib_length() const {
    double best = std::numeric_limits<double>::infinity();
    for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level)
        best = std::min(best, (find(level, geometry::Side::Left).position -
                               find(level, geometry::Side::Right).position)
                                  .norm());
    return best;
}

EndpointPairs pair_endpoints(const PointCloud& vertices, const std::vector<int>& hull,
                             const EndpointTemplate& tmpl,
                             const std::optional<RigidTransform>& init) {
    tmpl.validate();
    if (hull.size() < 8)
        throw TooFewPoints("pair_endpoints: candidate hull has " + std::to_string(hull.size()) +
                           " vertices, need >= 8");

    PointCloud hull_cloud;
    hull_cloud.points.reserve(hull.size());
    for (int idx : hull) hull_cloud.points.push_back(vertices.points[idx]);

    PointCloud template_cloud;
    template_cloud.points.reserve(8);
    for (const auto& e : tmpl.endpoints) template_cloud.points.push_back(e.position);

    // An explicit init is a trusted external alignment: start the transfer
    // from it directly. Otherwise find one with rigid ICP from
    // principal-axes pre-alignments.
    RigidTransform transform;
    if (init)
        transform = *init;
    else
        transform = registration::icp_rigid(template_cloud, hull_cloud, 100, 1e-9).first;
    PointCloud aligned = geometry::apply_transform(transform, template_cloud);

    // Greedy transfer by ascending match distance, no vertex reused.
    struct Match {
        double dist;
        int tmpl_idx;
        int hull_pos;
    };
    std::vector<int> assignment(8, -1);
    double worst = 0.0;
    auto transfer_labels = [&]() {
        std::vector<Match> matches;
        matches.reserve(aligned.size() * hull.size());
        for (std::size_t t = 0; t < aligned.size(); ++t)
            for (std::size_t h = 0; h < hull.size(); ++h)
                matches.push_back({(aligned.points[t] - hull_cloud.points[h]).norm(),
                                   static_cast<int>(t), static_cast<int>(h)});
        std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
            if (a.dist != b.dist) return a.dist < b.dist;
            if (a.tmpl_idx != b.tmpl_idx) return a.tmpl_idx < b.tmpl_idx;
            return a.hull_pos < b.hull_pos;
        });
        std::fill(assignment.begin(), assignment.end(), -1);
        std::vector<char> tmpl_done(8, 0), hull_done(hull.size(), 0);
        worst = 0.0;
        int assigned = 0;
        PointCloud picked;
        picked.points.resize(8);
        for (const Match& m : matches) {
            if (assigned == 8) break;
            if (tmpl_done[m.tmpl_idx] || hull_done[m.hull_pos]) continue;
            tmpl_done[m.tmpl_idx] = 1;
            hull_done[m.hull_pos] = 1;
            assignment[m.tmpl_idx] = hull[m.hull_pos];
            picked.points[m.tmpl_idx] = hull_cloud.points[m.hull_pos];
            worst = std::max(worst, m.dist);
            ++assigned;
        }
        return picked;
    };

    // Plain nearest-neighbor ICP drifts when the hull has extra vertices;
    // refitting on the 1:1 assignment tightens the alignment, so run the
    // transfer a few rounds until it stabilizes.
    PointCloud matched = transfer_labels();
    for (int round = 0; round < 3; ++round) {
        RigidTransform refit;
        try {
            refit = geometry::kabsch_fit(template_cloud, matched);
        } catch (const DegenerateConfiguration&) {
            break;  // keep the last alignment; the distance guard decides
        }
        aligned = geometry::apply_transform(refit, template_cloud);
        const std::vector<int> previous = assignment;
        matched = transfer_labels();
        if (assignment == previous) break;
    }

    // Matches farther than half the shortest rib mean the transfer lost
    // track of the anatomy; smaller offsets are expected inter-subject
    // variation and are resolved by the rib-order checks downstream.
    const double limit = 0.5 * tmpl.min_rib_length();
    if (worst > limit) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%.3f mm exceeds limit %.3f mm", worst, limit);
        throw AmbiguousPairing(std::string("pair_endpoints: worst endpoint match of ") + buf);
    }

    EndpointPairs pairs;
    for (std::size_t t = 0; t < tmpl.endpoints.size(); ++t) {
        const auto& e = tmpl.endpoints[t];
        if (e.side == geometry::Side::Left)
            pairs.level(e.rib_level).left = assignment[t];
        else
            pairs.level(e.rib_level).right = assignment[t];
    }
    return pairs;
}

EndpointPairs pair_endpoints(const PointCloud& candidate_hull, const EndpointTemplate& tmpl) {
    std::vector<int> all(candidate_hull.size());
    std::iota(all.begin(), all.end(), 0);
    return pair_endpoints(candidate_hull, all, tmpl);
}

EndpointTemplate template_from_pairs(const PointCloud& vertices, const EndpointPairs& pairs) {
    EndpointTemplate tmpl;
    for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level) {
        const auto& pair = pairs.level(level);
        tmpl.endpoints.push_back({vertices.points[pair.left], level, geometry::Side::Left});
        tmpl.endpoints.push_back({vertices.points[pair.right], level, geometry::Side::Right});
    }
    tmpl.validate();
    return tmpl;
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

std::vector<int> tree_path(const SkeletonGraph& graph, int a, int b) {
    const int n = static_cast<int>(graph.vertices.size());
    if (a < 0 || a >= n || b < 0 || b >= n)
        throw InvalidSpec("tree_path: vertex index out of range");
    if (a == b) return {a};

    std::vector<int> parent(n, -2);
    std::deque<int> frontier{a};
    parent[a] = -1;
    while (!frontier.empty()) {
        const int v = frontier.front();
        frontier.pop_front();
        if (v == b) break;
        for (int w : graph.adjacency[v]) {
            if (parent[w] != -2) continue;
            parent[w] = v;
            frontier.push_back(w);
        }
    }
    if (parent[b] == -2) throw Error("tree_path: vertices are not connected");

    std::vector<int> path;
    for (int v = b; v != -1; v = parent[v]) path.push_back(v);
    std::reverse(path.begin(), path.end());
    return path;
}

namespace {

// Shared filter core over an index sequence with a point accessor.
template <typename GetPoint>
std::vector<int> filter_core(int count, const GetPoint& point, double t_theta_deg) {
    std::vector<int> kept;
    if (count == 0) return kept;
    kept.push_back(0);
    if (count == 1) return kept;

    const double cos_limit = std::cos(t_theta_deg * M_PI / 180.0);
    int last = 0;
    int before_last = -1;
    for (int j = 1; j < count; ++j) {
        const Point3 step = point(j) - point(last);
        const double step_norm = step.norm();
        if (step_norm <= 1e-12) continue;  // duplicate of the last kept point
        if (before_last < 0) {
            // Second point is kept unconditionally: the turn test needs two
            // retained predecessors.
            before_last = last;
            last = j;
            kept.push_back(j);
            continue;
        }
        const Point3 prev = point(last) - point(before_last);
        const double cos_angle = prev.dot(step) / (prev.norm() * step_norm);
        if (cos_angle >= cos_limit - 1e-12) {
            before_last = last;
            last = j;
            kept.push_back(j);
        }
    }
    return kept;
}

}  // namespace

std::vector<Point3> continuity_filter(const std::vector<Point3>& path, double t_theta_deg) {
    if (path.size() < 2) throw TooFewPoints("continuity_filter: need at least 2 points");
    const auto kept = filter_core(static_cast<int>(path.size()),
                                  [&](int i) { return path[i]; }, t_theta_deg);
    std::vector<Point3> out;
    out.reserve(kept.size());
    for (int i : kept) out.push_back(path[i]);
    return out;
}

RibPathSet extract_rib_paths(const SkeletonGraph& graph, const EndpointPairs& pairs,
                             double t_theta_deg) {
    RibPathSet out;
    for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level) {
        const auto& pair = pairs.level(level);
        const std::vector<int> raw = tree_path(graph, pair.left, pair.right);
        const auto kept = filter_core(static_cast<int>(raw.size()),
                                      [&](int i) { return graph.vertices.points[raw[i]]; },
                                      t_theta_deg);
        std::vector<int> filtered;
        filtered.reserve(kept.size());
        for (int i : kept) filtered.push_back(raw[i]);

        const int slot = level - geometry::kRibLevelMin;
        out.heavy_filter_warning[slot] = filtered.size() * 2 < raw.size();
        out.raw[slot] = raw;
        out.filtered[slot] = std::move(filtered);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void write_edge_list_csv(const SkeletonGraph& graph, const std::string& path) {
    std::ostringstream out;
    out << "i,j,weight_mm\n";
    char buf[96];
    for (const auto& e : graph.edges) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.6f\n", e.a, e.b, e.weight);
        out << buf;
    }
    io::write_file_atomic(path, out.str());
}

void write_endpoint_template_csv(const EndpointTemplate& tmpl, const std::string& path) {
    std::ostringstream out;
    out << "x,y,z,rib_level,side\n";
    char buf[160];
    for (const auto& e : tmpl.endpoints) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%d,%s\n", e.position.x(), e.position.y(),
                      e.position.z(), e.rib_level, registration::to_string(e.side).c_str());
        out << buf;
    }
    io::write_file_atomic(path, out.str());
}

EndpointTemplate read_endpoint_template_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    EndpointTemplate tmpl;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.rfind("x,", 0) == 0) continue;
        LabeledEndpoint e;
        char side[8] = {0};
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%d,%7s", &e.position.x(), &e.position.y(),
                        &e.position.z(), &e.rib_level, side) != 5)
            throw ParseError("expected x,y,z,rib_level,side", lineno);
        if (side[0] == 'L')
            e.side = geometry::Side::Left;
        else if (side[0] == 'R')
            e.side = geometry::Side::Right;
        else
            throw ParseError("side must be L or R", lineno);
        tmpl.endpoints.push_back(e);
    }
    tmpl.validate();
    return tmpl;
}

}  // namespace ribreg::skeleton

#include "ribreg/registration.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ribreg/io.hpp"
#include "ribreg/kdtree.hpp"

namespace ribreg::registration {

using json = nlohmann::ordered_json;

std::string to_string(GapLabel gap) {
    switch (gap) {
        case GapLabel::Gap23: return "2-3";
        case GapLabel::Gap34: return "3-4";
        case GapLabel::Gap45: return "4-5";
    }
    return "?";
}

std::string to_string(geometry::Side side) {
    return side == geometry::Side::Left ? "L" : "R";
}

namespace {

GapLabel gap_from_string(const std::string& s, int line) {
    if (s == "2-3") return GapLabel::Gap23;
    if (s == "3-4") return GapLabel::Gap34;
    if (s == "4-5") return GapLabel::Gap45;
    throw ParseError("unknown gap label '" + s + "'", line);
}

geometry::Side side_from_string(const std::string& s, int line) {
    if (s == "L") return geometry::Side::Left;
    if (s == "R") return geometry::Side::Right;
    throw ParseError("unknown side '" + s + "'", line);
}

RigidTransform local_fit(const Point3& p, const resample::Correspondence& corr,
                         const PointCloud& keys, int n_r) {
    const auto nn = geometry::nearest_neighbors(p, keys, n_r);
    PointCloud src, tgt;
    src.points.reserve(n_r);
    tgt.points.reserve(n_r);
    for (const auto& [idx, dist] : nn) {
        src.points.push_back(corr.pairs[idx].source);
        tgt.points.push_back(corr.pairs[idx].target);
    }
    return geometry::kabsch_fit(src, tgt);
}

void check_warp_args(const resample::Correspondence& corr, int n_r) {
    if (n_r < 3) throw InvalidSpec("warp_nonrigid: n_r must be >= 3");
    if (static_cast<std::size_t>(n_r) > corr.pairs.size())
        throw KTooLarge("warp_nonrigid: n_r=" + std::to_string(n_r) + " exceeds key count " +
                        std::to_string(corr.pairs.size()));
}

}  // namespace

Point3 warp_point(const Point3& p, const resample::Correspondence& corr, int n_r) {
    check_warp_args(corr, n_r);
    const PointCloud keys = corr.source_keys();
    return local_fit(p, corr, keys, n_r)(p);
}

PointCloud warp_nonrigid(const PointCloud& source, const resample::Correspondence& corr, int n_r) {
    if (source.empty()) throw EmptyCloud("warp_nonrigid: empty source");
    check_warp_args(corr, n_r);
    const PointCloud keys = corr.source_keys();
    PointCloud out;
    out.points.reserve(source.size());
    out.labels = source.labels;
    for (const Point3& p : source.points) out.points.push_back(local_fit(p, corr, keys, n_r)(p));
    return out;
}

RegistrationReport evaluate(const PointCloud& moved, const PointCloud& target) {
    if (moved.empty() || target.empty()) throw EmptyCloud("evaluate: empty cloud");
    RegistrationReport report;
    const auto stats = geometry::mean_nn_distance(moved, target);
    report.distances = stats.distances;
    report.ed_mean = stats.mean;
    report.ed_stddev = stats.stddev;
    const double forward = *std::max_element(stats.distances.begin(), stats.distances.end());
    report.hausdorff = std::max(forward, geometry::directed_hausdorff(target, moved));
    return report;
}

namespace {

struct IcpRun {
    RigidTransform transform;
    double mean_nn = std::numeric_limits<double>::infinity();
};

IcpRun icp_from(const PointCloud& source, const PointCloud& target,
                const geometry::KdTree3& target_tree, const RigidTransform& init, int max_iter,
                double tol) {
    IcpRun run;
    run.transform = init;
    double prev_mean = std::numeric_limits<double>::infinity();
    RigidTransform prev_transform = init;

    for (int it = 0; it <= max_iter; ++it) {
        PointCloud matched;
        matched.points.reserve(source.size());
        double sum = 0.0;
        for (const Point3& p : source.points) {
            const Point3 moved = run.transform(p);
            const auto [idx, dist] = target_tree.nearest(moved);
            matched.points.push_back(target.points[idx]);
            sum += dist;
        }
        const double mean = sum / static_cast<double>(source.size());
        if (mean > prev_mean) {  // keep the metric non-increasing
            run.transform = prev_transform;
            run.mean_nn = prev_mean;
            return run;
        }
        run.mean_nn = mean;
        if (prev_mean - mean < tol || it == max_iter) return run;
        prev_mean = mean;
        prev_transform = run.transform;
        try {
            run.transform = geometry::kabsch_fit(source, matched);
        } catch (const DegenerateConfiguration&) {
            return run;  // matching collapsed; keep the last transform
        }
    }
    return run;
}

// Centroid + principal-axes pre-alignments; all four proper sign choices.
std::vector<RigidTransform> pca_prealignments(const PointCloud& source, const PointCloud& target) {
    auto frame = [](const PointCloud& c) {
        const Point3 centroid = c.centroid();
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (const Point3& p : c.points) {
            const Point3 d = p - centroid;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        Eigen::Matrix3d axes;
        axes.col(0) = eig.eigenvectors().col(2);
        axes.col(1) = eig.eigenvectors().col(1);
        axes.col(2) = axes.col(0).cross(axes.col(1));
        return std::make_pair(centroid, axes);
    };
    const auto [cs, vs] = frame(source);
    const auto [ct, vt] = frame(target);

    const double signs[4][3] = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
    std::vector<RigidTransform> inits;
    for (const auto& s : signs) {
        Eigen::Matrix3d flip = Eigen::Vector3d(s[0], s[1], s[2]).asDiagonal();
        RigidTransform t;
        t.rotation = vt * flip * vs.transpose();
        t.translation = ct - t.rotation * cs;
        inits.push_back(t);
    }
    return inits;
}

}  // namespace

std::pair<RigidTransform, RegistrationReport> icp_rigid(const PointCloud& source,
                                                        const PointCloud& target, int max_iter,
                                                        double tol,
                                                        const std::optional<RigidTransform>& init) {
    if (source.empty() || target.empty()) throw EmptyCloud("icp_rigid: empty cloud");
    const auto t0 = std::chrono::steady_clock::now();

    geometry::KdTree3 target_tree(target.points);
    std::vector<RigidTransform> inits;
    if (init)
        inits.push_back(*init);
    else
        inits = pca_prealignments(source, target);

    IcpRun best;
    for (const RigidTransform& start : inits) {
        IcpRun run = icp_from(source, target, target_tree, start, max_iter, tol);
        if (run.mean_nn < best.mean_nn) best = run;
    }

    RegistrationReport report = evaluate(geometry::apply_transform(best.transform, source), target);
    report.method = "icp";
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {best.transform, report};
}

namespace {

// Key point of a rib at a symmetric slot: an exact resampled point, or the
// mean of the two middle points for the midline slot when the count is even.
Point3 rib_slot(const std::vector<Point3>& rib, double fraction, bool midline) {
    const int n = static_cast<int>(rib.size());
    if (midline) return 0.5 * (rib[(n - 1) / 2] + rib[n / 2]);
    const int idx = static_cast<int>(std::lround(fraction * (n - 1)));
    return rib[std::clamp(idx, 0, n - 1)];
}

}  // namespace

std::vector<Waypoint> plan_waypoints(const resample::ResampledSkeleton& skel) {
    for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level)
        if (skel.rib(level).empty())
            throw MissingRib("plan_waypoints: rib " + std::to_string(level) + " has no key points");
    for (int level = geometry::kRibLevelMin; level <= geometry::kRibLevelMax; ++level)
        if (skel.rib(level).size() < 4)
            throw InvalidSpec("plan_waypoints: rib " + std::to_string(level) +
                              " needs at least 4 key points");

    std::vector<Waypoint> out;
    auto add = [&](int upper_level, GapLabel gap, double fraction, bool midline,
                   geometry::Side side) {
        const auto& a = skel.rib(upper_level);
        const auto& b = skel.rib(upper_level + 1);
        // Slots are taken per rib (counts may differ), then averaged.
        auto slot = [&](const std::vector<Point3>& rib) {
            if (midline) return rib_slot(rib, 0.5, true);
            const int n = static_cast<int>(rib.size());
            // fraction < 0.5 means "index 1", otherwise "index n-2"
            return rib[fraction < 0.5 ? 1 : n - 2];
        };
        out.push_back({0.5 * (slot(a) + slot(b)), gap, side});
    };

    add(2, GapLabel::Gap23, 0.0, false, geometry::Side::Left);
    add(2, GapLabel::Gap23, 0.5, true, geometry::Side::Left);
    add(2, GapLabel::Gap23, 1.0, false, geometry::Side::Right);

    add(3, GapLabel::Gap34, 0.0, false, geometry::Side::Left);
    add(3, GapLabel::Gap34, 0.5, true, geometry::Side::Left);
    add(3, GapLabel::Gap34, 1.0, false, geometry::Side::Right);

    // Gap 4-5: two waypoints per side at symmetric interior slots.
    {
        const auto& a = skel.rib(4);
        const auto& b = skel.rib(5);
        auto at = [&](const std::vector<Point3>& rib, int which) {
            const int n = static_cast<int>(rib.size());
            switch (which) {
                case 0: return rib[1];
                case 1: return rib[n / 3];
                case 2: return rib[n - 1 - n / 3];
                default: return rib[n - 2];
            }
        };
        for (int w = 0; w < 4; ++w) {
            const geometry::Side side = w < 2 ? geometry::Side::Left : geometry::Side::Right;
            out.push_back({0.5 * (at(a, w) + at(b, w)), GapLabel::Gap45, side});
        }
    }
    return out;
}

std::vector<Waypoint> transfer_waypoints(const std::vector<Waypoint>& waypoints,
                                         const resample::Correspondence& corr, int n_r) {
    check_warp_args(corr, n_r);
    const PointCloud keys = corr.source_keys();
    std::vector<Waypoint> out;
    out.reserve(waypoints.size());
    for (const Waypoint& wp : waypoints) {
        Waypoint moved = wp;
        moved.position = local_fit(wp.position, corr, keys, n_r)(wp.position);
        out.push_back(moved);
    }
    return out;
}

// --- artifact serialization ---

void write_report_json(const RegistrationReport& report, const std::string& path) {
    // runtime_seconds deliberately left out: report files must be
    // byte-identical across reruns with the same seed.
    json j;
    j["method"] = report.method;
    j["point_count"] = report.distances.size();
    j["ed_mean_mm"] = report.ed_mean;
    j["ed_stddev_mm"] = report.ed_stddev;
    j["hausdorff_mm"] = report.hausdorff;
    io::write_file_atomic(path, j.dump(2) + "\n");
}

void write_distances_csv(const std::vector<double>& distances, const std::string& path) {
    std::ostringstream out;
    out << "index,distance_mm\n";
    char buf[64];
    for (std::size_t i = 0; i < distances.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", i, distances[i]);
        out << buf;
    }
    io::write_file_atomic(path, out.str());
}

void write_transform_json(const RigidTransform& t, const std::string& path) {
    json j;
    j["rotation"] = json::array();
    for (int r = 0; r < 3; ++r)
        j["rotation"].push_back({t.rotation(r, 0), t.rotation(r, 1), t.rotation(r, 2)});
    j["translation_mm"] = {t.translation(0), t.translation(1), t.translation(2)};
    io::write_file_atomic(path, j.dump(2) + "\n");
}

RigidTransform read_transform_json(const std::string& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("transform json: ") + e.what(), 1);
    }
    RigidTransform t;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) t.rotation(r, c) = j.at("rotation").at(r).at(c).get<double>();
    for (int i = 0; i < 3; ++i) t.translation(i) = j.at("translation_mm").at(i).get<double>();
    if (!t.is_rigid(1e-6)) throw SchemaError("transform json: rotation is not a proper rotation");
    return t;
}

void write_correspondence_csv(const resample::Correspondence& corr, const std::string& path) {
    std::ostringstream out;
    out << "rib_level,index,sx,sy,sz,tx,ty,tz\n";
    char buf[256];
    for (const auto& p : corr.pairs) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", p.rib_level,
                      p.index, p.source.x(), p.source.y(), p.source.z(), p.target.x(),
                      p.target.y(), p.target.z());
        out << buf;
    }
    io::write_file_atomic(path, out.str());
}

resample::Correspondence read_correspondence_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    resample::Correspondence corr;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.rfind("rib_level", 0) == 0) continue;
        resample::Correspondence::Pair p;
        double sx, sy, sz, tx, ty, tz;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf,%lf,%lf", &p.rib_level, &p.index, &sx,
                        &sy, &sz, &tx, &ty, &tz) != 8)
            throw ParseError("expected 8 comma-separated values", lineno);
        p.source = Point3(sx, sy, sz);
        p.target = Point3(tx, ty, tz);
        corr.pairs.push_back(p);
    }
    if (corr.pairs.empty()) throw EmptyFile("correspondence file contains no pairs");
    return corr;
}

void write_waypoints_csv(const std::vector<Waypoint>& waypoints, const std::string& path) {
    std::ostringstream out;
    out << "x,y,z,gap,side\n";
    char buf[160];
    for (const Waypoint& wp : waypoints) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%s,%s\n", wp.position.x(),
                      wp.position.y(), wp.position.z(), to_string(wp.gap).c_str(),
                      to_string(wp.side).c_str());
        out << buf;
    }
    io::write_file_atomic(path, out.str());
}

std::vector<Waypoint> read_waypoints_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<Waypoint> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.rfind("x,", 0) == 0) continue;
        char gap[16] = {0}, side[8] = {0};
        Waypoint wp;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%15[^,],%7s", &wp.position.x(),
                        &wp.position.y(), &wp.position.z(), gap, side) != 5)
            throw ParseError("expected x,y,z,gap,side", lineno);
        wp.gap = gap_from_string(gap, lineno);
        wp.side = side_from_string(side, lineno);
        out.push_back(wp);
    }
    if (out.empty()) throw EmptyFile("waypoint file contains no rows");
    return out;
}

}  // namespace ribreg::registration
